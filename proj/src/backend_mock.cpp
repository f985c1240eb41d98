#include "tandem/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace tandem::backend {

using nlohmann::json;

namespace {

std::vector<std::string> read_token_list(const json& j) {
    std::vector<std::string> out;
    for (const auto& t : j) out.push_back(t.get<std::string>());
    return out;
}

int stage_key(const std::string& key) {
    try {
        return std::stoi(key);
    } catch (const std::exception&) {
        fail(Errc::parse_error, "mock fixture stage key '" + key + "' is not an integer");
    }
}

} // namespace

MockBackend::MockBackend(const std::string& fixture_path, int top_k) : top_k_(top_k) {
    std::string path = fixture_path;
    if (path.rfind("mock:", 0) == 0) path = path.substr(5);

    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open mock fixture '" + path + "'");

    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        fail(Errc::parse_error, "mock fixture '" + path + "': " + e.what());
    }

    vocabulary_ = read_token_list(root.at("vocabulary"));
    for (size_t i = 0; i < vocabulary_.size(); ++i) vocab_index_[vocabulary_[i]] = i;
    if (vocabulary_.empty()) fail(Errc::parse_error, "mock fixture declares an empty vocabulary");

    for (const auto& [qid, body] : root.at("questions").items()) {
        QuestionScript script;
        if (body.contains("insights"))
            for (const auto& [k, v] : body["insights"].items())
                script.insights[stage_key(k)] = read_token_list(v.at("tokens"));
        if (body.contains("scores")) {
            for (const auto& [k, v] : body["scores"].items()) {
                ScoreScript s;
                s.tokens = read_token_list(v.at("tokens"));
                for (const auto& row : v.at("dists")) {
                    std::vector<double> dist = row.get<std::vector<double>>();
                    if (dist.size() != vocabulary_.size())
                        fail(Errc::parse_error, "mock fixture: distribution width != vocabulary size");
                    double sum = 0;
                    for (double p : dist) {
                        if (p < 0) fail(Errc::parse_error, "mock fixture: negative probability");
                        sum += p;
                    }
                    if (std::abs(sum - 1.0) > 1e-6)
                        fail(Errc::parse_error, "mock fixture: distribution does not sum to 1");
                    s.dists.push_back(std::move(dist));
                }
                if (s.dists.size() + 1 != s.tokens.size())
                    fail(Errc::parse_error, "mock fixture: need exactly len(tokens)-1 distributions");
                script.scores[stage_key(k)] = std::move(s);
            }
        }
        if (body.contains("answers")) {
            for (const auto& [k, v] : body["answers"].items()) {
                AnswerScript a;
                a.tokens = read_token_list(v.at("tokens"));
                if (v.contains("text")) a.text = v["text"].get<std::string>();
                script.answers[stage_key(k)] = std::move(a);
            }
        }
        questions_[qid] = std::move(script);
    }
}

const MockBackend::QuestionScript& MockBackend::script_for(const std::string& qid) const {
    auto it = questions_.find(qid);
    if (it == questions_.end()) fail(Errc::transport_error, "mock fixture has no question '" + qid + "'");
    return it->second;
}

void MockBackend::log(const char* op, const std::string& qid, int stage) {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_.push_back({op, qid, stage});
}

std::vector<MockBackend::Call> MockBackend::calls() const {
    std::lock_guard<std::mutex> lock(log_mutex_);
    return log_;
}

long MockBackend::call_count(const std::string& op, const std::string& question_id, int stage) const {
    std::lock_guard<std::mutex> lock(log_mutex_);
    long n = 0;
    for (const auto& c : log_)
        if (c.op == op && c.question_id == question_id && c.stage == stage) ++n;
    return n;
}

void MockBackend::clear_calls() {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_.clear();
}

GenerationResult MockBackend::generate_insights(const ModelSpec& model, const core::Question& q,
                                                const core::InsightStream& prior,
                                                const core::EffortStage& target_stage,
                                                const core::PromptTemplate& tmpl) {
    if (model.role != Role::mentor) fail(Errc::config_error, "generate_insights requires a mentor model");
    int expected = prior.recorded_stages() + 1;
    if (target_stage.index != expected)
        fail(Errc::stage_out_of_order, "prior stream covers stages < " + std::to_string(expected) +
                                           ", cannot target stage " + std::to_string(target_stage.index));
    log("insights", q.id, target_stage.index);

    const auto& script = script_for(q.id);
    auto it = script.insights.find(target_stage.index);
    if (it == script.insights.end())
        fail(Errc::transport_error, "mock fixture has no insights for (" + q.id + ", stage " +
                                        std::to_string(target_stage.index) + ")");

    const long remaining = target_stage.cumulative_budget_tokens - prior.token_count();
    const auto& scripted = it->second;

    GenerationResult result;
    if (remaining <= 0) {
        result.finish_reason = FinishReason::budget;
    } else if (static_cast<long>(scripted.size()) >= remaining) {
        result.tokens.assign(scripted.begin(), scripted.begin() + remaining);
        result.finish_reason = FinishReason::budget;
    } else {
        result.tokens = scripted;
        result.finish_reason = FinishReason::stop_marker;
    }
    for (const auto& t : result.tokens) result.text += t;
    result.usage.prompt_tokens = core::whitespace_token_count(tmpl.text) +
                                 core::whitespace_token_count(q.text) + prior.token_count();
    result.usage.completion_tokens = static_cast<long>(result.tokens.size());
    return result;
}

std::vector<TokenScore> MockBackend::score_sequence(const ModelSpec& model, const core::SlmInput& input) {
    if (model.role != Role::intern) fail(Errc::config_error, "score_sequence requires the intern model");
    log("scores", input.question_id, input.stage.index);

    const auto& script = script_for(input.question_id);
    auto it = script.scores.find(input.stage.index);
    if (it == script.scores.end())
        fail(Errc::transport_error, "mock fixture has no scores for (" + input.question_id + ", stage " +
                                        std::to_string(input.stage.index) + ")");
    const auto& s = it->second;

    std::vector<TokenScore> out;
    out.reserve(s.dists.size());
    for (size_t pos = 1; pos < s.tokens.size(); ++pos) {
        const auto& dist = s.dists[pos - 1];
        auto vi = vocab_index_.find(s.tokens[pos]);
        if (vi == vocab_index_.end())
            fail(Errc::parse_error, "mock fixture: token '" + s.tokens[pos] + "' not in vocabulary");
        double realized = dist[vi->second];
        if (realized <= 0.0)
            fail(Errc::parse_error, "mock fixture: realized token has zero probability");

        TokenScore ts;
        ts.token_text = s.tokens[pos];
        ts.realized_logprob = std::log(realized);

        // Top-K truncation with a residual bucket, exactly as the HTTP
        // client would see it; full coverage whenever K >= |vocabulary|.
        std::vector<size_t> order(dist.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return dist[a] > dist[b]; });
        const size_t keep = std::min<size_t>(static_cast<size_t>(std::max(top_k_, 1)), order.size());
        double covered = 0.0;
        for (size_t i = 0; i < keep; ++i) {
            double p = dist[order[i]];
            if (p <= 0.0) continue;
            ts.top_alternatives.emplace_back(vocabulary_[order[i]], std::log(p));
            covered += p;
        }
        ts.residual_mass = std::max(0.0, 1.0 - covered);
        out.push_back(std::move(ts));
    }
    return out;
}

GenerationResult MockBackend::generate_answer(const ModelSpec& model, const core::SlmInput& input) {
    log("answers", input.question_id, input.stage.index);

    const auto& script = script_for(input.question_id);
    auto it = script.answers.find(input.stage.index);
    if (it == script.answers.end())
        fail(Errc::transport_error, "mock fixture has no answer for (" + input.question_id + ", stage " +
                                        std::to_string(input.stage.index) + ")");
    const auto& scripted = it->second;

    GenerationResult result;
    const long max_tokens = model.decoding.max_answer_tokens;
    if (static_cast<long>(scripted.tokens.size()) > max_tokens) {
        result.tokens.assign(scripted.tokens.begin(), scripted.tokens.begin() + max_tokens);
        result.finish_reason = FinishReason::length_limit;
        for (const auto& t : result.tokens) result.text += t;
    } else {
        result.tokens = scripted.tokens;
        result.finish_reason = FinishReason::stop_marker;
        if (!scripted.text.empty()) {
            result.text = scripted.text;
        } else {
            for (const auto& t : result.tokens) result.text += t;
        }
    }
    result.usage.prompt_tokens = core::whitespace_token_count(input.rendered_text);
    result.usage.completion_tokens = static_cast<long>(result.tokens.size());
    return result;
}

std::pair<long, bool> MockBackend::count_tokens(std::string_view text) const {
    // The mock's tokenizer contract is whitespace splitting, so the count
    // is exact by definition here.
    return {core::whitespace_token_count(text), true};
}

} // namespace tandem::backend
