#include "tandem/traces.hpp"

#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>

#include <json.hpp>
#include <zlib.h>

namespace tandem::traces {

using backend::Usage;
using cascade::Policy;
using cascade::PolicyKind;
using nlohmann::json;

namespace {

bool has_gz_suffix(const std::string& path) {
    return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

std::string now_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ===== JSON encoding =====

json usage_to_json(const Usage& u) { return json::array({u.prompt_tokens, u.completion_tokens}); }

Usage usage_from_json(const json& j) {
    return {j.at(0).get<long>(), j.at(1).get<long>()};
}

json spec_to_json(const backend::ModelSpec& m) {
    json j = {{"name", m.name},
              {"role", backend::role_name(m.role)},
              {"param_count", m.param_count},
              {"endpoint", m.endpoint},
              {"decoding",
               {{"temperature", m.decoding.temperature},
                {"top_p", m.decoding.top_p},
                {"frequency_penalty", m.decoding.frequency_penalty},
                {"max_answer_tokens", m.decoding.max_answer_tokens}}},
              {"max_retries", m.max_retries}};
    if (m.price_per_1k_input) j["price_per_1k_input"] = *m.price_per_1k_input;
    if (m.price_per_1k_output) j["price_per_1k_output"] = *m.price_per_1k_output;
    if (m.thinking_mode) j["thinking_mode"] = *m.thinking_mode;
    return j;
}

backend::ModelSpec spec_from_json(const json& j) {
    backend::ModelSpec m;
    m.name = j.at("name").get<std::string>();
    m.role = backend::role_from_name(j.at("role").get<std::string>());
    m.param_count = j.at("param_count").get<long long>();
    m.endpoint = j.at("endpoint").get<std::string>();
    if (j.contains("price_per_1k_input")) m.price_per_1k_input = j["price_per_1k_input"].get<double>();
    if (j.contains("price_per_1k_output")) m.price_per_1k_output = j["price_per_1k_output"].get<double>();
    if (j.contains("thinking_mode")) m.thinking_mode = j["thinking_mode"].get<bool>();
    if (j.contains("decoding")) {
        const auto& d = j["decoding"];
        m.decoding.temperature = d.value("temperature", 0.0);
        m.decoding.top_p = d.value("top_p", 1.0);
        m.decoding.frequency_penalty = d.value("frequency_penalty", 0.0);
        m.decoding.max_answer_tokens = d.value("max_answer_tokens", 8192L);
    }
    m.max_retries = j.value("max_retries", 2);
    return m;
}

json question_to_json(const core::Question& q) {
    return {{"id", q.id},
            {"text", q.text},
            {"gold_answer", q.gold_answer},
            {"subject", q.subject},
            {"dataset", core::dataset_name(q.dataset)}};
}

core::Question question_from_json(const json& j) {
    core::Question q;
    q.id = j.at("id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    q.gold_answer = j.value("gold_answer", "");
    q.subject = j.value("subject", "");
    q.dataset = core::dataset_from_name(j.value("dataset", "custom"));
    return q;
}

json score_to_json(const backend::TokenScore& s) {
    json top = json::array();
    for (const auto& [text, lp] : s.top_alternatives) top.push_back(json::array({text, lp}));
    // Logprobs stay plain JSON numbers: nlohmann round-trips doubles
    // exactly, which the feature-recomputation invariant relies on.
    return {{"t", s.token_text}, {"lp", s.realized_logprob}, {"top", std::move(top)}, {"r", s.residual_mass}};
}

backend::TokenScore score_from_json(const json& j) {
    backend::TokenScore s;
    s.token_text = j.at("t").get<std::string>();
    s.realized_logprob = j.at("lp").get<double>();
    s.residual_mass = j.value("r", 0.0);
    if (j.contains("top"))
        for (const auto& alt : j["top"]) s.top_alternatives.emplace_back(alt.at(0).get<std::string>(), alt.at(1).get<double>());
    return s;
}

json features_to_json(const uncertainty::FeatureVector& f) {
    json arr = json::array();
    for (double v : f.flatten()) arr.push_back(v);
    return arr;
}

uncertainty::FeatureVector features_from_json(const json& j) {
    std::array<double, uncertainty::FeatureVector::kDims> flat{};
    if (j.size() != flat.size()) fail(Errc::parse_error, "feature vector width mismatch in trace");
    for (size_t i = 0; i < flat.size(); ++i) flat[i] = j[i].get<double>();
    return uncertainty::FeatureVector::from_flat(flat);
}

json stage_to_json(const StageData& s) {
    json j = {{"index", s.stage.index},
              {"label", core::stage_label_name(s.stage.label)},
              {"cumulative_budget", s.stage.cumulative_budget_tokens},
              {"mentor_tokens_cumulative", s.mentor_tokens_cumulative},
              {"insight_delta_text", s.insight_delta_text},
              {"insight_delta_tokens", s.insight_delta_tokens},
              {"n", s.n},
              {"usage",
               {{"mentor", usage_to_json(s.mentor_usage)},
                {"score", usage_to_json(s.score_usage)},
                {"answer", usage_to_json(s.answer_usage)}}}};
    json scores = json::array();
    for (const auto& ts : s.token_scores) scores.push_back(score_to_json(ts));
    j["token_scores"] = std::move(scores);
    if (s.features) j["features"] = features_to_json(*s.features);
    if (s.score) j["score"] = *s.score;
    if (s.decision) j["decision"] = *s.decision;
    if (s.answer_text) {
        j["answer"] = {{"text", *s.answer_text},
                       {"tokens", s.answer_tokens},
                       {"finish", backend::finish_reason_name(
                                      s.answer_finish.value_or(backend::FinishReason::stop_marker))}};
    }
    if (s.grade) j["grade"] = *s.grade;
    return j;
}

StageData stage_from_json(const json& j) {
    StageData s;
    s.stage.index = j.at("index").get<int>();
    s.stage.label = static_cast<core::StageLabel>(0);
    const std::string label = j.value("label", "question_only");
    for (int l = 0; l < 4; ++l)
        if (label == core::stage_label_name(static_cast<core::StageLabel>(l)))
            s.stage.label = static_cast<core::StageLabel>(l);
    s.stage.cumulative_budget_tokens = j.value("cumulative_budget", 0L);
    s.mentor_tokens_cumulative = j.value("mentor_tokens_cumulative", 0L);
    s.insight_delta_text = j.value("insight_delta_text", "");
    s.insight_delta_tokens = j.value("insight_delta_tokens", 0L);
    s.n = j.value("n", 0L);
    if (j.contains("token_scores"))
        for (const auto& ts : j["token_scores"]) s.token_scores.push_back(score_from_json(ts));
    if (j.contains("features")) s.features = features_from_json(j["features"]);
    if (j.contains("score")) s.score = j["score"].get<double>();
    if (j.contains("decision")) s.decision = j["decision"].get<int>();
    if (j.contains("answer")) {
        s.answer_text = j["answer"].at("text").get<std::string>();
        s.answer_tokens = j["answer"].value("tokens", 0L);
        s.answer_finish = backend::finish_reason_from_name(j["answer"].value("finish", "stop_marker"));
    }
    if (j.contains("grade")) s.grade = j["grade"].get<int>();
    if (j.contains("usage")) {
        const auto& u = j["usage"];
        if (u.contains("mentor")) s.mentor_usage = usage_from_json(u["mentor"]);
        if (u.contains("score")) s.score_usage = usage_from_json(u["score"]);
        if (u.contains("answer")) s.answer_usage = usage_from_json(u["answer"]);
    }
    return s;
}

json usage_map_to_json(const std::map<std::string, Usage>& usage) {
    json j = json::object();
    for (const auto& [name, u] : usage) j[name] = usage_to_json(u);
    return j;
}

std::map<std::string, Usage> usage_map_from_json(const json& j) {
    std::map<std::string, Usage> out;
    for (const auto& [name, u] : j.items()) out[name] = usage_from_json(u);
    return out;
}

json outcome_to_json(const RecordedOutcome& o) {
    json cost = {{"tflops", o.cost.tflops},
                 {"mentor_tokens", o.cost.mentor_tokens},
                 {"intern_generated_tokens", o.cost.intern_generated_tokens}};
    if (o.cost.dollars) cost["dollars"] = *o.cost.dollars;
    json j = {{"policy", o.policy},
              {"selected_stage", o.selected_stage},
              {"fallback_used", o.fallback_used},
              {"final_answer", o.final_answer},
              {"cost", std::move(cost)},
              {"usage", usage_map_to_json(o.usage)}};
    if (o.final_grade) j["final_grade"] = *o.final_grade;
    return j;
}

RecordedOutcome outcome_from_json(const json& j) {
    RecordedOutcome o;
    o.policy = j.at("policy").get<std::string>();
    o.selected_stage = j.at("selected_stage").get<int>();
    o.fallback_used = j.value("fallback_used", false);
    o.final_answer = j.value("final_answer", "");
    if (j.contains("final_grade")) o.final_grade = j["final_grade"].get<int>();
    const auto& cost = j.at("cost");
    o.cost.tflops = cost.at("tflops").get<double>();
    o.cost.mentor_tokens = cost.at("mentor_tokens").get<long>();
    o.cost.intern_generated_tokens = cost.at("intern_generated_tokens").get<long>();
    if (cost.contains("dollars")) o.cost.dollars = cost["dollars"].get<double>();
    if (j.contains("usage")) o.usage = usage_map_from_json(j["usage"]);
    return o;
}

// As-deployed resource usage along the policy path: mentor continuations
// through the last generated stage, scoring passes for judged stages, and
// the one answer call.
std::map<std::string, Usage> path_usage(const std::vector<StageData>& stages, const Policy& policy,
                                        int selected, bool fallback, const std::string& mentor_name,
                                        const std::string& intern_name) {
    auto find = [&](int t) -> const StageData* {
        for (const auto& s : stages)
            if (s.stage.index == t) return &s;
        return nullptr;
    };
    std::map<std::string, Usage> usage;
    auto add = [&](const std::string& name, const Usage& u) {
        usage[name].prompt_tokens += u.prompt_tokens;
        usage[name].completion_tokens += u.completion_tokens;
    };

    int last_generated = 0; // highest stage whose mentor delta was requested
    int last_scored = -1;   // highest stage whose scoring pass ran
    bool answer_by_mentor = false;
    switch (policy.kind) {
        case PolicyKind::tandem:
            last_generated = fallback ? 3 : selected;
            last_scored = fallback ? 3 : selected;
            break;
        case PolicyKind::fixed_stage:
            last_generated = selected;
            break;
        case PolicyKind::one_shot_router:
            last_generated = selected == 3 ? 3 : 0;
            last_scored = 0;
            break;
        case PolicyKind::single_model:
            answer_by_mentor = policy.model == backend::Role::mentor;
            break;
        case PolicyKind::budget_forcing:
            last_generated = selected;
            answer_by_mentor = true;
            break;
    }
    for (int t = 1; t <= last_generated; ++t)
        if (const auto* s = find(t)) add(mentor_name, s->mentor_usage);
    for (int t = 0; t <= last_scored; ++t)
        if (const auto* s = find(t)) add(intern_name, s->score_usage);
    if (const auto* s = find(selected)) add(answer_by_mentor ? mentor_name : intern_name, s->answer_usage);
    return usage;
}

} // namespace

TraceRecord make_trace_record(const core::Question& q, const cascade::Models& models,
                              const std::vector<long>& budgets, const cascade::EpisodeResult& result,
                              const cascade::EpisodeRaw& raw, const std::map<int, int>& stage_grades,
                              std::optional<int> final_grade, bool all_stage) {
    TraceRecord record;
    record.recorded_at = now_utc();
    record.question = q;
    record.mentor = models.mentor;
    record.intern = models.intern;
    record.budgets = budgets;
    record.all_stage = all_stage;

    for (const auto& rec : result.stages) {
        StageData sd;
        sd.stage = rec.stage;
        sd.mentor_tokens_cumulative = rec.mentor_tokens_cumulative;
        sd.features = rec.features;
        sd.score = rec.score;
        sd.decision = rec.decision;
        sd.answer_text = rec.answer;
        sd.answer_tokens = rec.intern_answer_tokens;
        sd.answer_finish = rec.answer_finish;
        if (auto it = stage_grades.find(rec.stage.index); it != stage_grades.end()) sd.grade = it->second;
        if (const auto* r = raw.find_stage(rec.stage.index)) {
            sd.insight_delta_text = r->insight_delta_text;
            sd.insight_delta_tokens = r->insight_delta_tokens;
            sd.token_scores = r->token_scores;
            sd.n = r->n;
            sd.mentor_usage = r->mentor_usage;
            sd.score_usage = r->score_usage;
            sd.answer_usage = r->answer_usage;
        }
        record.stages.push_back(std::move(sd));
    }

    RecordedOutcome outcome;
    outcome.policy = result.policy.to_string();
    outcome.selected_stage = result.selected_stage;
    outcome.fallback_used = result.fallback_used;
    outcome.final_answer = result.final_answer;
    outcome.final_grade = final_grade;
    outcome.cost = result.cost;
    // The episode's own usage includes collection overhead in all-stage
    // mode; the recorded outcome carries the as-deployed path instead so
    // replay reproduces it exactly.
    outcome.usage = path_usage(record.stages, result.policy, result.selected_stage, result.fallback_used,
                               models.mentor.name, models.intern.name);
    std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> prices{
        {models.mentor.name, {models.mentor.price_per_1k_input, models.mentor.price_per_1k_output}},
        {models.intern.name, {models.intern.price_per_1k_input, models.intern.price_per_1k_output}}};
    try {
        outcome.cost.dollars = cascade::compute_dollar_cost(outcome.usage, prices);
    } catch (const Error&) {
        outcome.cost.dollars.reset();
    }
    record.outcome = std::move(outcome);
    return record;
}

std::string trace_to_jsonl(const TraceRecord& record) {
    json stages = json::array();
    for (const auto& s : record.stages) stages.push_back(stage_to_json(s));
    json j = {{"schema_version", record.schema_version},
              {"recorded_at", record.recorded_at},
              {"question", question_to_json(record.question)},
              {"models", {{"mentor", spec_to_json(record.mentor)}, {"intern", spec_to_json(record.intern)}}},
              {"budgets", record.budgets},
              {"all_stage", record.all_stage},
              {"stages", std::move(stages)}};
    if (record.outcome) j["outcome"] = outcome_to_json(*record.outcome);
    return j.dump();
}

TraceRecord trace_from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        fail(Errc::parse_error, std::string("bad trace line: ") + e.what());
    }
    const int version = j.value("schema_version", -1);
    if (version != kSchemaVersion)
        fail(Errc::schema_mismatch, "trace schema version " + std::to_string(version) + ", reader expects " +
                                        std::to_string(kSchemaVersion));
    TraceRecord record;
    record.schema_version = version;
    record.recorded_at = j.value("recorded_at", "");
    record.question = question_from_json(j.at("question"));
    record.mentor = spec_from_json(j.at("models").at("mentor"));
    record.intern = spec_from_json(j.at("models").at("intern"));
    record.budgets = j.value("budgets", std::vector<long>{});
    record.all_stage = j.value("all_stage", false);
    for (const auto& s : j.at("stages")) record.stages.push_back(stage_from_json(s));
    for (size_t i = 1; i < record.stages.size(); ++i)
        if (record.stages[i].stage.index <= record.stages[i - 1].stage.index)
            fail(Errc::parse_error, "trace stages are not in ascending order");
    if (j.contains("outcome")) record.outcome = outcome_from_json(j["outcome"]);
    return record;
}

// ===== writer =====

struct TraceWriter::Impl {
    bool gz = false;
    gzFile gzf = nullptr;
    std::ofstream out;
    std::string path;
};

TraceWriter::TraceWriter(const std::string& path) : impl_(new Impl) {
    impl_->path = path;
    impl_->gz = has_gz_suffix(path);
    if (impl_->gz) {
        impl_->gzf = gzopen(path.c_str(), "ab");
        if (!impl_->gzf) fail(Errc::io_error, "cannot open trace file '" + path + "' for append");
    } else {
        impl_->out.open(path, std::ios::binary | std::ios::app);
        if (!impl_->out) fail(Errc::io_error, "cannot open trace file '" + path + "' for append");
    }
}

TraceWriter::~TraceWriter() {
    if (impl_->gz && impl_->gzf) gzclose(impl_->gzf);
}

void TraceWriter::write(const TraceRecord& record) {
    const std::string line = trace_to_jsonl(record) + "\n";
    std::lock_guard<std::mutex> lock(mutex_);
    if (impl_->gz) {
        if (gzwrite(impl_->gzf, line.data(), static_cast<unsigned>(line.size())) !=
            static_cast<int>(line.size()))
            fail(Errc::io_error, "short gzip write to '" + impl_->path + "'");
    } else {
        impl_->out << line;
        if (!impl_->out) fail(Errc::io_error, "short write to '" + impl_->path + "'");
    }
}

void TraceWriter::flush() {
    std::lock_guard<std::mutex> lock(mutex_);
    if (impl_->gz) {
        gzflush(impl_->gzf, Z_SYNC_FLUSH);
    } else {
        impl_->out.flush();
    }
}

// ===== reader =====

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::vector<std::string> lines;
    if (has_gz_suffix(path)) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) fail(Errc::io_error, "cannot open trace file '" + path + "'");
        std::string current;
        char buf[1 << 16];
        while (gzgets(f, buf, sizeof buf)) {
            current += buf;
            if (!current.empty() && current.back() == '\n') {
                current.pop_back();
                lines.push_back(std::move(current));
                current.clear();
            }
        }
        if (!current.empty()) lines.push_back(std::move(current));
        gzclose(f);
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(Errc::io_error, "cannot open trace file '" + path + "'");
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }
    return lines;
}

} // namespace

std::vector<TraceRecord> read_traces(const std::string& path) {
    std::vector<TraceRecord> records;
    const auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        try {
            records.push_back(trace_from_json_line(lines[i]));
        } catch (const Error& e) {
            if (e.code() == Errc::schema_mismatch) throw;
            fail(Errc::parse_error, path + " line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return records;
}

// ===== replay =====

namespace {

const StageData& stage_data(const TraceRecord& record, int index) {
    for (const auto& s : record.stages)
        if (s.stage.index == index) return s;
    fail(Errc::missing_stage_data,
         "trace for '" + record.question.id + "' has no stage " + std::to_string(index));
}

uncertainty::FeatureVector recompute_features(const TraceRecord& record, const StageData& sd) {
    if (sd.token_scores.empty())
        fail(Errc::missing_stage_data, "trace for '" + record.question.id + "' has no token scores for stage " +
                                           std::to_string(sd.stage.index));
    return uncertainty::extract_features(sd.token_scores, sd.n);
}

cascade::StageRecord base_record(const StageData& sd) {
    cascade::StageRecord rec;
    rec.stage = sd.stage;
    rec.mentor_tokens_cumulative = sd.mentor_tokens_cumulative;
    return rec;
}

} // namespace

cascade::GradedEpisode replay_one(const TraceRecord& record, const classifier::ClassifierBundle* bundle,
                                  const Policy& policy, const ReplayOptions& options) {
    const classifier::MlpModel* model = nullptr;
    const classifier::ThresholdSet* thresholds = nullptr;
    if (policy.needs_classifier()) {
        if (!bundle) fail(Errc::classifier_missing, "replay policy '" + policy.to_string() + "' needs a classifier");
        const auto& mt = bundle->resolve(record.question.subject);
        model = &mt.first;
        thresholds = &mt.second;
    }
    auto tau = [&](int t) {
        auto it = thresholds->tau.find(t);
        if (it == thresholds->tau.end())
            fail(Errc::classifier_missing, "no threshold for stage " + std::to_string(t));
        return it->second;
    };

    cascade::EpisodeResult res;
    res.question_id = record.question.id;
    res.policy = policy;

    int selected = -1;
    switch (policy.kind) {
        case PolicyKind::tandem: {
            std::array<double, 4> scores{};
            for (int t = 0; t <= 3; ++t) {
                const auto& sd = stage_data(record, t);
                auto rec = base_record(sd);
                rec.features = recompute_features(record, sd);
                double s = classifier::forward(*model, *rec.features);
                rec.score = s;
                scores[static_cast<size_t>(t)] = s;
                const bool judged = t > 0 || options.allow_stage0_exit;
                if (judged) rec.decision = classifier::decide(s, tau(t));
                const bool fired = judged && *rec.decision == 1;
                res.stages.push_back(std::move(rec));
                if (fired) {
                    selected = t;
                    break;
                }
            }
            if (selected < 0) {
                res.fallback_used = true;
                selected = cascade::fallback_select(scores);
            }
            break;
        }
        case PolicyKind::fixed_stage: {
            selected = policy.stage;
            for (int t = 1; t <= selected; ++t) res.stages.push_back(base_record(stage_data(record, t)));
            if (selected == 0) res.stages.push_back(base_record(stage_data(record, 0)));
            break;
        }
        case PolicyKind::one_shot_router: {
            const auto& sd = stage_data(record, 0);
            auto rec = base_record(sd);
            rec.features = recompute_features(record, sd);
            double s0 = classifier::forward(*model, *rec.features);
            rec.score = s0;
            rec.decision = classifier::decide(s0, options.router_threshold);
            const bool handoff = *rec.decision == 1;
            res.stages.push_back(std::move(rec));
            selected = handoff ? 0 : 3;
            for (int t = 1; t <= (handoff ? 0 : 3); ++t)
                res.stages.push_back(base_record(stage_data(record, t)));
            break;
        }
        case PolicyKind::single_model: {
            if (policy.model == backend::Role::mentor)
                fail(Errc::missing_stage_data, "traces do not record mentor answers; cannot replay single:mentor");
            selected = 0;
            res.stages.push_back(base_record(stage_data(record, 0)));
            break;
        }
        case PolicyKind::budget_forcing:
            fail(Errc::missing_stage_data, "traces do not record mentor answers; cannot replay budget_forcing");
    }

    const auto& sel = stage_data(record, selected);
    if (!sel.answer_text)
        fail(Errc::missing_stage_data, "trace for '" + record.question.id + "' has no recorded answer at stage " +
                                           std::to_string(selected));
    for (auto& rec : res.stages) {
        if (rec.stage.index == selected) {
            rec.answer = sel.answer_text;
            rec.intern_answer_tokens = sel.answer_tokens;
            rec.answer_finish = sel.answer_finish;
        }
    }
    res.selected_stage = selected;
    res.final_answer = *sel.answer_text;

    if (policy.kind == PolicyKind::single_model) {
        res.cost.tflops = cascade::compute_cost(0, sel.answer_tokens, 0, record.intern.param_count);
        res.cost.mentor_tokens = 0;
        res.cost.intern_generated_tokens = sel.answer_tokens;
    } else {
        const long mentor_tokens = res.fallback_used ? stage_data(record, 3).mentor_tokens_cumulative
                                                     : sel.mentor_tokens_cumulative;
        res.cost.mentor_tokens = mentor_tokens;
        res.cost.intern_generated_tokens = sel.answer_tokens;
        res.cost.tflops = cascade::compute_cost(mentor_tokens, sel.answer_tokens, record.mentor.param_count,
                                                record.intern.param_count);
    }

    res.usage = path_usage(record.stages, policy, selected, res.fallback_used, record.mentor.name,
                           record.intern.name);
    std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> prices{
        {record.mentor.name, {record.mentor.price_per_1k_input, record.mentor.price_per_1k_output}},
        {record.intern.name, {record.intern.price_per_1k_input, record.intern.price_per_1k_output}}};
    try {
        res.cost.dollars = cascade::compute_dollar_cost(res.usage, prices);
    } catch (const Error&) {
        res.cost.dollars.reset();
    }

    cascade::GradedEpisode graded;
    graded.subject = record.question.subject;
    for (const auto& sd : record.stages)
        if (sd.grade) graded.stage_grades[sd.stage.index] = *sd.grade;
    graded.final_grade = sel.grade;
    graded.result = std::move(res);
    return graded;
}

std::vector<cascade::GradedEpisode> replay(const std::vector<TraceRecord>& records,
                                           const classifier::ClassifierBundle* bundle, const Policy& policy,
                                           const ReplayOptions& options) {
    std::vector<cascade::GradedEpisode> out;
    out.reserve(records.size());
    for (const auto& record : records) out.push_back(replay_one(record, bundle, policy, options));
    return out;
}

} // namespace tandem::traces
