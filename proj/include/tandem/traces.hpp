#pragma once

/**
 * Episode persistence and offline replay. Traces are UTF-8 JSON Lines, one
 * record per episode, append-only; a gzip-compressed variant is recognized
 * by the .gz extension. One serialized writer per file, any number of
 * concurrent readers; replay is embarrassingly parallel over records.
 *
 * All-stage records (scores, answers, and grades for every stage) are the
 * data-collection mode: they feed classifier training and make any policy
 * replayable without re-querying models.
 */

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tandem/cascade.hpp"

namespace tandem::traces {

constexpr int kSchemaVersion = 1;

struct StageData {
    core::EffortStage stage;
    long mentor_tokens_cumulative = 0;
    std::string insight_delta_text;
    long insight_delta_tokens = 0;
    std::vector<backend::TokenScore> token_scores;
    long n = 0;
    std::optional<uncertainty::FeatureVector> features;
    std::optional<double> score;
    std::optional<int> decision;
    std::optional<std::string> answer_text;
    long answer_tokens = 0;
    std::optional<backend::FinishReason> answer_finish;
    std::optional<int> grade;
    backend::Usage mentor_usage;
    backend::Usage score_usage;
    backend::Usage answer_usage;
};

struct RecordedOutcome {
    std::string policy;
    int selected_stage = 0;
    bool fallback_used = false;
    std::string final_answer;
    std::optional<int> final_grade;
    cascade::CostReport cost;
    std::map<std::string, backend::Usage> usage; // as-deployed path usage
};

struct TraceRecord {
    int schema_version = kSchemaVersion;
    std::string recorded_at; // ISO 8601 UTC
    core::Question question;
    backend::ModelSpec mentor;
    backend::ModelSpec intern;
    std::vector<long> budgets;
    bool all_stage = false;
    std::vector<StageData> stages; // ascending stage order
    std::optional<RecordedOutcome> outcome;
};

// Merges the episode result with its raw side-channel into one record.
// Grades map stage index -> 0/1 for whatever stages were answered.
TraceRecord make_trace_record(const core::Question& q, const cascade::Models& models,
                              const std::vector<long>& budgets, const cascade::EpisodeResult& result,
                              const cascade::EpisodeRaw& raw, const std::map<int, int>& stage_grades,
                              std::optional<int> final_grade, bool all_stage);

std::string trace_to_jsonl(const TraceRecord& record);
TraceRecord trace_from_json_line(const std::string& line);

class TraceWriter {
public:
    explicit TraceWriter(const std::string& path); // append mode
    ~TraceWriter();
    TraceWriter(const TraceWriter&) = delete;
    TraceWriter& operator=(const TraceWriter&) = delete;

    void write(const TraceRecord& record);
    void flush();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::mutex mutex_;
};

std::vector<TraceRecord> read_traces(const std::string& path);

struct ReplayOptions {
    bool allow_stage0_exit = false;
    double router_threshold = 0.5;
};

// Recomputes features -> scores -> decisions purely from stored data and
// rebuilds the as-deployed episode (costs from stored token counts). The
// classifier bundle may be null for policies that do not judge.
std::vector<cascade::GradedEpisode> replay(const std::vector<TraceRecord>& records,
                                           const classifier::ClassifierBundle* bundle,
                                           const cascade::Policy& policy, const ReplayOptions& options = {});

cascade::GradedEpisode replay_one(const TraceRecord& record, const classifier::ClassifierBundle* bundle,
                                  const cascade::Policy& policy, const ReplayOptions& options = {});

} // namespace tandem::traces
