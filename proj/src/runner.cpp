#include "tandem/runner.hpp"

#include <atomic>
#include <charconv>
#include <filesystem>
#include <mutex>
#include <thread>

#include "tandem/traces.hpp"

namespace tandem::runner {

using config::RunConfig;

namespace {

void require_path(const std::string& path, const char* what) {
    if (path.empty()) fail(Errc::config_error, std::string("paths.") + what + " is not configured");
}

void require_existing(const std::string& path, const char* what) {
    require_path(path, what);
    if (!std::filesystem::exists(path))
        fail(Errc::config_error, std::string("paths.") + what + " '" + path + "' does not exist");
}

core::PromptTemplate template_or_default(const std::string& path, const core::PromptTemplate& fallback) {
    return path.empty() ? fallback : core::PromptTemplate::from_file(path);
}

cascade::CascadeConfig cascade_config(const RunConfig& cfg) {
    cascade::CascadeConfig out;
    out.ladder = cfg.ladder();
    out.insight_template = template_or_default(cfg.insight_template_path, core::default_insight_template());
    out.answer_template = template_or_default(cfg.answer_template_path, core::default_answer_template());
    out.allow_stage0_exit = cfg.allow_stage0_exit;
    out.router_threshold = cfg.router_threshold;
    return out;
}

cascade::Models make_models(const RunConfig& cfg) {
    cascade::Models models;
    models.mentor = cfg.mentor;
    models.intern = cfg.intern;
    models.mentor_backend = backend::make_backend(cfg.mentor, cfg.top_k);
    models.intern_backend = backend::make_backend(cfg.intern, cfg.top_k);
    return models;
}

std::vector<core::Question> load_questions(const RunConfig& cfg) {
    require_existing(cfg.dataset_path, "dataset");
    auto questions = harness::load_dataset(cfg.dataset_path, core::dataset_from_name(cfg.dataset_format));
    if (cfg.limit > 0 && static_cast<long>(questions.size()) > cfg.limit)
        questions.resize(static_cast<size_t>(cfg.limit));
    if (questions.empty()) fail(Errc::empty_input, "dataset '" + cfg.dataset_path + "' holds no questions");
    return questions;
}

harness::Grader resolve_grader(const RunConfig& cfg, core::Dataset dataset) {
    if (cfg.grader == "auto") return harness::default_grader(dataset);
    return harness::grader_from_name(cfg.grader);
}

// Bounded worker pool; the first failure wins and cancels remaining work.
void parallel_for(size_t count, int workers, const std::function<void(size_t)>& fn) {
    if (workers <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (!failed.load()) {
            const size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(workers, static_cast<int>(count));
    pool.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::optional<classifier::ClassifierBundle> try_load_bundle(const RunConfig& cfg) {
    if (cfg.model_file.empty() || !std::filesystem::exists(cfg.model_file)) return std::nullopt;
    return classifier::load_classifier(cfg.model_file);
}

cascade::Judge judge_for(const classifier::ClassifierBundle* bundle, const RunConfig& cfg,
                         const std::string& subject) {
    cascade::Judge judge;
    if (bundle) {
        const auto& mt = bundle->resolve(subject);
        judge.model = &mt.first;
        // Config-level thresholds override the ones stored in the model file.
        judge.thresholds = cfg.thresholds ? &*cfg.thresholds : &mt.second;
    }
    return judge;
}

} // namespace

long cmd_record(const RunConfig& cfg, int parallel) {
    require_path(cfg.traces_path, "traces");
    auto questions = load_questions(cfg);
    auto models = make_models(cfg);
    auto ccfg = cascade_config(cfg);
    ccfg.all_stage_answers = cfg.all_stage_recording;
    const auto grader = resolve_grader(cfg, core::dataset_from_name(cfg.dataset_format));
    auto bundle = try_load_bundle(cfg);

    const cascade::Policy policy = bundle ? cascade::Policy::tandem() : cascade::Policy::fixed(3);
    traces::TraceWriter writer(cfg.traces_path);

    parallel_for(questions.size(), parallel, [&](size_t i) {
        const auto& q = questions[i];
        cascade::EpisodeRaw raw;
        auto judge = judge_for(bundle ? &*bundle : nullptr, cfg, q.subject);
        auto result = cascade::run_episode(q, policy, models, judge, ccfg, &raw);

        std::map<int, int> grades;
        for (const auto& stage : result.stages)
            if (stage.answer)
                grades[stage.stage.index] = harness::grade_answer(*stage.answer, q.gold_answer, grader,
                                                                  cfg.grader_cmd);
        std::optional<int> final_grade;
        if (auto it = grades.find(result.selected_stage); it != grades.end()) final_grade = it->second;

        writer.write(traces::make_trace_record(q, models, cfg.budgets, result, raw, grades, final_grade,
                                               ccfg.all_stage_answers));
    });
    writer.flush();
    return static_cast<long>(questions.size());
}

void cmd_train(const RunConfig& cfg) {
    require_existing(cfg.traces_path, "traces");
    require_path(cfg.model_file, "model_file");
    const auto records = traces::read_traces(cfg.traces_path);
    if (records.empty()) fail(Errc::empty_data, "no trace records in '" + cfg.traces_path + "'");
    const auto examples = harness::build_training_set(records);

    std::map<std::string, std::vector<classifier::LabeledExample>> grouped;
    if (cfg.grouping == "per_subject") {
        for (const auto& ex : examples)
            grouped[ex.subject.empty() ? classifier::ClassifierBundle::kUnifiedKey : ex.subject].push_back(ex);
    } else {
        grouped[classifier::ClassifierBundle::kUnifiedKey] = examples;
    }

    classifier::ClassifierBundle bundle;
    bundle.grouping = cfg.grouping;
    for (const auto& [key, data] : grouped) {
        auto model = classifier::train(data, cfg.hyper);
        classifier::ThresholdSet thresholds;
        for (int t = 0; t <= 3; ++t) thresholds.tau[t] = 0.5; // placeholders until `tune`
        bundle.groups[key] = {std::move(model), std::move(thresholds)};
    }
    save_classifier(bundle, cfg.model_file);
}

classifier::Grid parse_grid_spec(const std::string& spec) {
    classifier::Grid grid;
    if (spec.empty()) return grid;
    double parts[3];
    size_t start = 0;
    for (int i = 0; i < 3; ++i) {
        const size_t colon = spec.find(':', start);
        const bool last = i == 2;
        if (last != (colon == std::string::npos))
            fail(Errc::usage_error, "grid spec must be lo:hi:step, got '" + spec + "'");
        const std::string part = spec.substr(start, last ? std::string::npos : colon - start);
        try {
            parts[i] = std::stod(part);
        } catch (const std::exception&) {
            fail(Errc::usage_error, "bad grid component '" + part + "'");
        }
        start = colon + 1;
    }
    grid.lo = parts[0];
    grid.hi = parts[1];
    grid.step = parts[2];
    if (grid.lo < 0 || grid.hi > 1 || grid.lo > grid.hi || grid.step <= 0)
        fail(Errc::usage_error, "grid spec out of range: '" + spec + "'");
    return grid;
}

void cmd_tune(const RunConfig& cfg, const std::string& grid_spec) {
    require_existing(cfg.traces_path, "traces");
    require_existing(cfg.model_file, "model_file");
    const auto records = traces::read_traces(cfg.traces_path);
    const auto examples = harness::build_training_set(records);
    auto bundle = classifier::load_classifier(cfg.model_file);
    const auto grid = parse_grid_spec(grid_spec);

    for (auto& [key, mt] : bundle.groups) {
        std::vector<classifier::LabeledExample> data;
        for (const auto& ex : examples) {
            const std::string ex_key = bundle.grouping == "per_subject"
                                           ? (ex.subject.empty() ? classifier::ClassifierBundle::kUnifiedKey
                                                                 : ex.subject)
                                           : classifier::ClassifierBundle::kUnifiedKey;
            if (ex_key == key) data.push_back(ex);
        }
        if (data.empty()) fail(Errc::empty_data, "no examples for classifier group '" + key + "'");

        // Reconstruct the training split so tuning sees the same partition
        // the model was fitted on.
        std::vector<int> labels;
        labels.reserve(data.size());
        for (const auto& ex : data) labels.push_back(ex.label);
        const auto split = classifier::stratified_split(labels, cfg.hyper.val_fraction, cfg.hyper.split_seed);
        const auto& indices = cfg.tune_on_validation ? split.val : split.train;

        std::vector<classifier::LabeledExample> subset;
        subset.reserve(indices.size());
        for (size_t i : indices) subset.push_back(data[i]);
        const auto scored = classifier::score_by_stage(mt.first, subset);
        mt.second = classifier::tune_thresholds(scored, grid);
    }
    save_classifier(bundle, cfg.model_file);
}

namespace {

harness::MetricsReport finish_outputs(const RunConfig& cfg, std::vector<cascade::GradedEpisode> episodes) {
    require_path(cfg.report_dir, "report_dir");
    return report::write_run_outputs(cfg.report_dir, episodes);
}

} // namespace

harness::MetricsReport cmd_run(const RunConfig& cfg, const std::string& policy_text, int parallel) {
    const auto policy = cascade::Policy::parse(policy_text);
    auto questions = load_questions(cfg);
    auto models = make_models(cfg);
    const auto ccfg = cascade_config(cfg);
    const auto grader = resolve_grader(cfg, core::dataset_from_name(cfg.dataset_format));

    auto bundle = try_load_bundle(cfg);
    if (policy.needs_classifier() && !bundle)
        fail(Errc::classifier_missing,
             "policy '" + policy_text + "' needs a trained model file; run `tandem train` first");

    std::vector<cascade::GradedEpisode> episodes(questions.size());
    parallel_for(questions.size(), parallel, [&](size_t i) {
        const auto& q = questions[i];
        auto judge = judge_for(bundle ? &*bundle : nullptr, cfg, q.subject);
        cascade::GradedEpisode ep;
        ep.result = cascade::run_episode(q, policy, models, judge, ccfg);
        ep.subject = q.subject;
        ep.final_grade = harness::grade_answer(ep.result.final_answer, q.gold_answer, grader, cfg.grader_cmd);
        episodes[i] = std::move(ep);
    });
    return finish_outputs(cfg, std::move(episodes));
}

harness::MetricsReport cmd_replay(const RunConfig& cfg, const std::string& policy_text, int parallel) {
    const auto policy = cascade::Policy::parse(policy_text);
    require_existing(cfg.traces_path, "traces");
    const auto records = traces::read_traces(cfg.traces_path);
    if (records.empty()) fail(Errc::empty_data, "no trace records in '" + cfg.traces_path + "'");

    auto bundle = try_load_bundle(cfg);
    if (policy.needs_classifier() && !bundle)
        fail(Errc::classifier_missing, "replay policy '" + policy_text + "' needs a trained model file");

    traces::ReplayOptions options;
    options.allow_stage0_exit = cfg.allow_stage0_exit;
    options.router_threshold = cfg.router_threshold;

    std::vector<cascade::GradedEpisode> episodes(records.size());
    parallel_for(records.size(), parallel, [&](size_t i) {
        episodes[i] = traces::replay_one(records[i], bundle ? &*bundle : nullptr, policy, options);
    });
    return finish_outputs(cfg, std::move(episodes));
}

void cmd_report(const RunConfig& cfg, const std::string& results_path) {
    require_path(cfg.report_dir, "report_dir");
    const std::string path = results_path.empty() ? cfg.report_dir + "/results.jsonl" : results_path;
    if (!std::filesystem::exists(path))
        fail(Errc::config_error, "results file '" + path + "' does not exist; run `tandem run` or `tandem replay`");
    const auto episodes = report::read_results(path);
    report::write_report(cfg.report_dir, episodes);
}

} // namespace tandem::runner
