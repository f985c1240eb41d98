// Operator CLI for the tandem cascade. Thin by design: argument parsing
// here, everything else behind the C API in tandem/tandem.h.

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <tandem/tandem.h>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct ConfigDeleter {
    void operator()(tandem_config* cfg) const { tandem_config_free(cfg); }
};
using ConfigPtr = std::unique_ptr<tandem_config, ConfigDeleter>;

int fail_runtime(const char* what) {
    std::fprintf(stderr, "tandem: %s failed: %s\n", what, tandem_last_error());
    return kExitRuntime;
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides; // dotted key -> json value
};

ConfigPtr load_config(const CommonArgs& args, int& exit_code) {
    exit_code = kExitOk;
    std::string path = args.config_path;
    // TANDEM_CONFIG overrides --config so one environment can pin the
    // experiment file for every invocation.
    if (const char* env = std::getenv("TANDEM_CONFIG"); env && *env) path = env;

    tandem_config* raw = nullptr;
    tandem_status st = path.empty() ? tandem_config_loads("", &raw) : tandem_config_load(path.c_str(), &raw);
    if (st != TANDEM_OK) {
        std::fprintf(stderr, "tandem: cannot load config: %s\n", tandem_last_error());
        exit_code = kExitRuntime;
        return nullptr;
    }
    ConfigPtr cfg(raw);
    for (const auto& [key, value] : args.overrides) {
        if (tandem_config_set(cfg.get(), key.c_str(), value.c_str()) != TANDEM_OK) {
            std::fprintf(stderr, "tandem: bad override %s: %s\n", key.c_str(), tandem_last_error());
            exit_code = kExitRuntime;
            return nullptr;
        }
    }
    return cfg;
}

void add_path_override(CommonArgs& args, const std::string& key, const std::string& value) {
    args.overrides.emplace_back(key, "\"" + value + "\"");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mentor-intern cascade: record traces, train/tune the sufficiency classifier, "
                 "run policies, replay, report"};
    app.require_subcommand(1);
    app.fallthrough(false);

    CommonArgs common;
    app.add_option("--config", common.config_path, "config file (dotted-key format)");

    std::string dataset, traces, model_file, report_dir, results;
    std::string policy = "tandem";
    std::string grid;
    int parallel = 0;
    long limit = -1;
    bool no_all_stages = false;
    bool on_validation = false;

    auto add_common_paths = [&](CLI::App* cmd) {
        cmd->add_option("--dataset", dataset, "dataset JSONL path");
        cmd->add_option("--traces", traces, "trace file path (.jsonl or .jsonl.gz)");
        cmd->add_option("--model-file", model_file, "classifier model file");
        cmd->add_option("--report-dir", report_dir, "output directory for results and reports");
        cmd->add_option("--limit", limit, "use only the first N questions");
    };

    auto* record = app.add_subcommand("record", "collect all-stage episodes into a trace file");
    add_common_paths(record);
    record->add_option("--parallel", parallel, "concurrent episodes (default 1)");
    record->add_flag("--no-all-stages", no_all_stages, "record only the policy path");

    auto* train = app.add_subcommand("train", "train the sufficiency classifier from traces");
    add_common_paths(train);

    auto* tune = app.add_subcommand("tune", "grid-search per-stage thresholds into the model file");
    add_common_paths(tune);
    tune->add_option("--grid", grid, "threshold grid lo:hi:step (default 0.05:0.95:0.05)");
    tune->add_flag("--on-validation", on_validation, "tune on the validation split");

    auto* run = app.add_subcommand("run", "live policy execution plus metrics");
    add_common_paths(run);
    run->add_option("--policy", policy, "tandem | fixed_stage:T | single:intern | single:mentor | "
                                        "budget_forcing:B | one_shot_router");
    run->add_option("--parallel", parallel, "concurrent episodes (default 1)");

    auto* replay = app.add_subcommand("replay", "offline policy evaluation from traces");
    add_common_paths(replay);
    replay->add_option("--policy", policy, "policy to replay");
    replay->add_option("--parallel", parallel, "concurrent replays (default 1)");

    auto* report = app.add_subcommand("report", "emit table.txt/table.json from a results file");
    add_common_paths(report);
    report->add_option("--results", results, "results.jsonl from run/replay");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (!dataset.empty()) add_path_override(common, "paths.dataset", dataset);
    if (!traces.empty()) add_path_override(common, "paths.traces", traces);
    if (!model_file.empty()) add_path_override(common, "paths.model_file", model_file);
    if (!report_dir.empty()) add_path_override(common, "paths.report_dir", report_dir);
    if (limit >= 0) common.overrides.emplace_back("limit", std::to_string(limit));
    if (no_all_stages) common.overrides.emplace_back("flags.all_stage_recording", "false");
    if (on_validation) common.overrides.emplace_back("classifier.tune_on_validation", "true");

    int exit_code = kExitOk;
    ConfigPtr cfg = load_config(common, exit_code);
    if (!cfg) return exit_code;

    if (record->parsed()) {
        long episodes = 0;
        if (tandem_record(cfg.get(), parallel, &episodes) != TANDEM_OK) return fail_runtime("record");
        std::printf("recorded %ld episodes\n", episodes);
        return kExitOk;
    }
    if (train->parsed()) {
        if (tandem_train(cfg.get()) != TANDEM_OK) return fail_runtime("train");
        std::printf("model trained\n");
        return kExitOk;
    }
    if (tune->parsed()) {
        if (tandem_tune(cfg.get(), grid.empty() ? nullptr : grid.c_str()) != TANDEM_OK)
            return fail_runtime("tune");
        std::printf("thresholds tuned\n");
        return kExitOk;
    }
    if (run->parsed()) {
        double accuracy = 0;
        if (tandem_run(cfg.get(), policy.c_str(), parallel, &accuracy) != TANDEM_OK)
            return fail_runtime("run");
        std::printf("policy %s accuracy %.2f%%\n", policy.c_str(), accuracy);
        return kExitOk;
    }
    if (replay->parsed()) {
        double accuracy = 0;
        if (tandem_replay(cfg.get(), policy.c_str(), parallel, &accuracy) != TANDEM_OK)
            return fail_runtime("replay");
        std::printf("policy %s accuracy %.2f%%\n", policy.c_str(), accuracy);
        return kExitOk;
    }
    if (report->parsed()) {
        if (tandem_report(cfg.get(), results.empty() ? nullptr : results.c_str()) != TANDEM_OK)
            return fail_runtime("report");
        std::printf("report written\n");
        return kExitOk;
    }
    return kExitUsage;
}
