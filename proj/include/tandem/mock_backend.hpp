#pragma once

/**
 * Deterministic fixture-driven backend. The fixture is a JSON file keyed by
 * (question_id, operation, stage) holding token lists and, for scoring,
 * per-position full distributions over a declared small vocabulary:
 *
 *   {
 *     "schema_version": 1,
 *     "vocabulary": ["tok0", "tok1", ...],
 *     "questions": {
 *       "<qid>": {
 *         "insights": {"1": {"tokens": [...]}, "2": {...}, "3": {...}},
 *         "scores":   {"0": {"tokens": [...], "dists": [[p,...], ...]}, ...},
 *         "answers":  {"0": {"tokens": [...], "text": "..."} , ...}
 *       }
 *     }
 *   }
 *
 * scores.<t>.tokens lists all n tokens of x^t; dists has n-1 rows, one per
 * scored position (the first token has no predictive distribution). Every
 * operation is a pure function of (fixture, arguments).
 */

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "tandem/backend.hpp"

namespace tandem::backend {

class MockBackend : public Backend {
public:
    // fixture_path accepts both "mock:<path>" and a bare path.
    explicit MockBackend(const std::string& fixture_path, int top_k = 20);

    GenerationResult generate_insights(const ModelSpec& model, const core::Question& q,
                                       const core::InsightStream& prior, const core::EffortStage& target_stage,
                                       const core::PromptTemplate& tmpl) override;
    std::vector<TokenScore> score_sequence(const ModelSpec& model, const core::SlmInput& input) override;
    GenerationResult generate_answer(const ModelSpec& model, const core::SlmInput& input) override;

    std::pair<long, bool> count_tokens(std::string_view text) const override;

    struct Call {
        std::string op; // "insights" | "scores" | "answers"
        std::string question_id;
        int stage = 0;
    };

    // Request log for tests that assert frugality (e.g. that no stage-3
    // insights were ever requested after an earlier stop).
    std::vector<Call> calls() const;
    long call_count(const std::string& op, const std::string& question_id, int stage) const;
    void clear_calls();

    const std::vector<std::string>& vocabulary() const { return vocabulary_; }

private:
    struct ScoreScript {
        std::vector<std::string> tokens;
        std::vector<std::vector<double>> dists;
    };
    struct AnswerScript {
        std::vector<std::string> tokens;
        std::string text; // optional override; token concatenation otherwise
    };
    struct QuestionScript {
        std::map<int, std::vector<std::string>> insights;
        std::map<int, ScoreScript> scores;
        std::map<int, AnswerScript> answers;
    };

    const QuestionScript& script_for(const std::string& qid) const;
    void log(const char* op, const std::string& qid, int stage);

    std::vector<std::string> vocabulary_;
    std::map<std::string, size_t> vocab_index_;
    std::map<std::string, QuestionScript> questions_;
    int top_k_ = 20;

    mutable std::mutex log_mutex_;
    std::vector<Call> log_;
};

} // namespace tandem::backend
