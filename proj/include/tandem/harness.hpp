#pragma once

/**
 * Dataset loading, answer grading, classifier-training-set construction,
 * and the evaluation aggregates (accuracy/length/cost, per-stage classifier
 * precision/recall/F1, stage distribution, routing-failure taxonomy).
 * Grading and aggregation are pure over their inputs.
 */

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tandem/cascade.hpp"
#include "tandem/traces.hpp"

namespace tandem::harness {

// Formats:
//   math      {problem, solution, subject, level}, gold from the solution's last \boxed{}
//   gsm8k     {question, answer}, gold after the "####" marker
//   humaneval {task_id, prompt, canonical_solution, test, entry_point}, gold packed
//             opaquely (JSON of entry_point+test) for an external grader
//   custom    {id, text, gold}
std::vector<core::Question> load_dataset(const std::string& path, core::Dataset format);

enum class Grader { boxed_math, numeric, exact, external };

Grader grader_from_name(std::string_view name);
const char* grader_name(Grader g);
Grader default_grader(core::Dataset dataset);

// 1 when the answer matches gold. boxed_math extracts the last \boxed{...}
// (falling back to the last number in the text), strips LaTeX spacing, and
// compares strings; when both sides parse as rationals/decimals it compares
// numerically with tolerance 1e-6. external runs `cmd <answer-file>
// <gold-file>` and maps exit status 0 -> 1, 1 -> 0.
int grade_answer(const std::string& answer, const std::string& gold, Grader grader,
                 const std::string& external_cmd = "");

// Extraction helper used by boxed_math; exposed for per-item reporting.
struct BoxedExtraction {
    std::string value;
    bool from_box = false; // false when the last-number fallback fired
};
std::optional<BoxedExtraction> extract_boxed(const std::string& text);

// One LabeledExample per (question, stage); label = that stage's grade.
std::vector<classifier::LabeledExample> build_training_set(const std::vector<traces::TraceRecord>& records);

struct GroupRow {
    std::string group;
    long episodes = 0;
    double accuracy = 0;             // percent
    double avg_inference_length = 0; // tokens, L_L + L_S
    double avg_cost_tflops = 0;
};

struct MetricsReport {
    long episodes = 0;
    double accuracy = 0; // percent
    double avg_inference_length = 0;
    double avg_cost_tflops = 0;
    std::optional<double> avg_dollars; // present when every episode was priced
    std::vector<GroupRow> per_group;   // by subject, when subjects exist
    bool approx_token_counts = false;  // whitespace-fallback counting occurred
};

MetricsReport evaluate(const std::vector<cascade::GradedEpisode>& episodes);

struct DistributionRow {
    std::string group;
    long episodes = 0;
    std::array<double, 4> pct{}; // stage 0..3, sums to 100 within rounding
};

struct StageDistribution {
    std::vector<DistributionRow> rows; // per group
    DistributionRow overall;           // sample-weighted
};

StageDistribution stage_distribution(const std::vector<cascade::GradedEpisode>& episodes);

// Partition of episodes by routing outcome; the four counts always sum to
// the episode count. late_stop takes precedence when correct stages exist
// on both sides of a wrong selection (a cheaper correct option was missed).
struct RoutingTaxonomy {
    long correct = 0;
    long premature_stop = 0;
    long late_stop = 0;
    long unsolvable = 0;

    long total() const { return correct + premature_stop + late_stop + unsolvable; }
};

RoutingTaxonomy routing_analysis(const std::vector<cascade::GradedEpisode>& episodes);

struct StageMetrics {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    std::optional<double> precision; // absent when undefined (no positive predictions)
    std::optional<double> recall;
    std::optional<double> f1;
    bool both_classes = false;
};

struct ClassifierMetrics {
    std::map<int, StageMetrics> per_stage;
    std::optional<double> macro_precision; // over stages where defined
    std::optional<double> macro_recall;
    std::optional<double> macro_f1;
};

// predictions_vs_labels: per stage, (predicted decision, label) pairs.
ClassifierMetrics classifier_metrics(const std::map<int, std::vector<std::pair<int, int>>>& predictions_vs_labels);

} // namespace tandem::harness
