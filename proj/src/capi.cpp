#include "tandem/tandem.h"

#include <cstring>
#include <string>

#include "tandem/runner.hpp"

using tandem::Errc;
using tandem::Error;

struct tandem_config {
    tandem::config::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

tandem_status status_for(Errc code) {
    switch (code) {
        case Errc::ok: return TANDEM_OK;
        case Errc::usage_error: return TANDEM_ERR_USAGE;
        case Errc::config_error: return TANDEM_ERR_CONFIG;
        case Errc::io_error: return TANDEM_ERR_IO;
        case Errc::parse_error:
        case Errc::schema_mismatch:
        case Errc::unknown_format: return TANDEM_ERR_PARSE;
        case Errc::transport_error: return TANDEM_ERR_TRANSPORT;
        case Errc::capability_error:
        case Errc::grader_unavailable: return TANDEM_ERR_CAPABILITY;
        case Errc::budget_exceeded:
        case Errc::stage_out_of_order:
        case Errc::missing_stage_boundary: return TANDEM_ERR_STATE;
        case Errc::empty_input:
        case Errc::invalid_distribution:
        case Errc::dimension_mismatch:
        case Errc::single_class_data:
        case Errc::empty_data:
        case Errc::empty_stage:
        case Errc::classifier_missing:
        case Errc::missing_price:
        case Errc::missing_stage_data:
        case Errc::missing_grades: return TANDEM_ERR_DATA;
    }
    return TANDEM_ERR_INTERNAL;
}

template <typename Fn>
tandem_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return TANDEM_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_for(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return TANDEM_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return TANDEM_ERR_INTERNAL;
    }
}

tandem_status require(bool ok, const char* message) {
    if (ok) return TANDEM_OK;
    g_last_error = message;
    return TANDEM_ERR_USAGE;
}

} // namespace

extern "C" {

const char* tandem_version(void) { return "0.1.0"; }

const char* tandem_last_error(void) { return g_last_error.c_str(); }

tandem_status tandem_config_load(const char* path, tandem_config** out) {
    if (auto st = require(path && out, "tandem_config_load: null argument")) return st;
    return guarded([&] { *out = new tandem_config{tandem::config::load_config_file(path)}; });
}

tandem_status tandem_config_loads(const char* text, tandem_config** out) {
    if (auto st = require(text && out, "tandem_config_loads: null argument")) return st;
    return guarded([&] { *out = new tandem_config{tandem::config::parse_config_text(text)}; });
}

tandem_status tandem_config_set(tandem_config* cfg, const char* dotted_key, const char* json_value) {
    if (auto st = require(cfg && dotted_key && json_value, "tandem_config_set: null argument")) return st;
    return guarded([&] { tandem::config::apply_override(cfg->cfg, dotted_key, json_value); });
}

tandem_status tandem_config_dump(const tandem_config* cfg, char** out_text) {
    if (auto st = require(cfg && out_text, "tandem_config_dump: null argument")) return st;
    return guarded([&] {
        const std::string text = tandem::config::dump_config(cfg->cfg);
        *out_text = new char[text.size() + 1];
        std::memcpy(*out_text, text.c_str(), text.size() + 1);
    });
}

void tandem_config_free(tandem_config* cfg) { delete cfg; }

void tandem_string_free(char* text) { delete[] text; }

tandem_status tandem_record(const tandem_config* cfg, int parallel, long* episodes_out) {
    if (auto st = require(cfg != nullptr, "tandem_record: null config")) return st;
    return guarded([&] {
        long episodes = tandem::runner::cmd_record(cfg->cfg, parallel > 0 ? parallel : cfg->cfg.parallel);
        if (episodes_out) *episodes_out = episodes;
    });
}

tandem_status tandem_train(const tandem_config* cfg) {
    if (auto st = require(cfg != nullptr, "tandem_train: null config")) return st;
    return guarded([&] { tandem::runner::cmd_train(cfg->cfg); });
}

tandem_status tandem_tune(const tandem_config* cfg, const char* grid_spec) {
    if (auto st = require(cfg != nullptr, "tandem_tune: null config")) return st;
    return guarded([&] { tandem::runner::cmd_tune(cfg->cfg, grid_spec ? grid_spec : ""); });
}

tandem_status tandem_run(const tandem_config* cfg, const char* policy, int parallel, double* accuracy_out) {
    if (auto st = require(cfg && policy, "tandem_run: null argument")) return st;
    return guarded([&] {
        auto metrics =
            tandem::runner::cmd_run(cfg->cfg, policy, parallel > 0 ? parallel : cfg->cfg.parallel);
        if (accuracy_out) *accuracy_out = metrics.accuracy;
    });
}

tandem_status tandem_replay(const tandem_config* cfg, const char* policy, int parallel,
                            double* accuracy_out) {
    if (auto st = require(cfg && policy, "tandem_replay: null argument")) return st;
    return guarded([&] {
        auto metrics =
            tandem::runner::cmd_replay(cfg->cfg, policy, parallel > 0 ? parallel : cfg->cfg.parallel);
        if (accuracy_out) *accuracy_out = metrics.accuracy;
    });
}

tandem_status tandem_report(const tandem_config* cfg, const char* results_path) {
    if (auto st = require(cfg != nullptr, "tandem_report: null config")) return st;
    return guarded([&] { tandem::runner::cmd_report(cfg->cfg, results_path ? results_path : ""); });
}

double tandem_cost_tflops(long long mentor_tokens, long long intern_tokens, long long theta_mentor,
                          long long theta_intern) {
    try {
        return tandem::cascade::compute_cost(mentor_tokens, intern_tokens, theta_mentor, theta_intern);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return -1.0;
    }
}

int tandem_grade_answer(const char* answer, const char* gold, const char* grader, const char* external_cmd) {
    if (!answer || !gold || !grader) {
        g_last_error = "tandem_grade_answer: null argument";
        return -static_cast<int>(TANDEM_ERR_USAGE);
    }
    int grade = -1;
    auto st = guarded([&] {
        grade = tandem::harness::grade_answer(answer, gold, tandem::harness::grader_from_name(grader),
                                              external_cmd ? external_cmd : "");
    });
    return st == TANDEM_OK ? grade : -static_cast<int>(st);
}

} // extern "C"
