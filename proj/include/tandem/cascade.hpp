#pragma once

/**
 * The orchestration state machine: staged judgment, early stop, fallback
 * selection, and cost accounting, plus the baseline policies used for
 * comparison runs (fixed stage, single model, budget forcing, one-shot
 * router).
 *
 * Episodes are independent; a runner may execute many concurrently. Within
 * one episode every backend call is strictly sequential, and mentor tokens
 * beyond the stopping stage are never requested.
 */

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tandem/backend.hpp"
#include "tandem/classifier.hpp"
#include "tandem/core.hpp"
#include "tandem/uncertainty.hpp"

namespace tandem::cascade {

enum class PolicyKind { tandem, fixed_stage, one_shot_router, single_model, budget_forcing };

struct Policy {
    PolicyKind kind = PolicyKind::tandem;
    int stage = 0;                              // fixed_stage
    backend::Role model = backend::Role::intern; // single_model
    long budget_tokens = 0;                     // budget_forcing

    static Policy tandem() { return {PolicyKind::tandem}; }
    static Policy fixed(int stage);
    static Policy router() { return {PolicyKind::one_shot_router}; }
    static Policy single(backend::Role role) { return {PolicyKind::single_model, 0, role}; }
    static Policy budget_forcing(long budget_tokens);

    // "tandem", "fixed_stage:2", "one_shot_router", "single:intern",
    // "single:mentor", "budget_forcing:500"
    static Policy parse(std::string_view text);
    std::string to_string() const;

    bool needs_classifier() const {
        return kind == PolicyKind::tandem || kind == PolicyKind::one_shot_router;
    }
};

struct StageRecord {
    core::EffortStage stage;
    long mentor_tokens_cumulative = 0; // L_L through this stage
    std::optional<uncertainty::FeatureVector> features;
    std::optional<double> score;  // s^t
    std::optional<int> decision;  // y^t, present only for judged stages
    std::optional<std::string> answer;
    long intern_answer_tokens = 0; // L_S when this stage answered
    std::optional<backend::FinishReason> answer_finish;
};

struct CostReport {
    double tflops = 0.0;
    long mentor_tokens = 0;
    long intern_generated_tokens = 0;
    std::optional<double> dollars;
};

struct EpisodeResult {
    std::string question_id;
    Policy policy;
    std::vector<StageRecord> stages; // ascending stage order, visited stages only
    int selected_stage = 0;
    std::string final_answer;
    CostReport cost;
    bool fallback_used = false;
    std::map<std::string, backend::Usage> usage; // per model name, all calls
    bool approx_token_counts = false;            // whitespace fallback was used somewhere

    const StageRecord* find_stage(int index) const;
};

// Raw per-stage material that EpisodeResult deliberately omits but trace
// recording needs: the full TokenScore lists and the insight deltas.
struct StageRaw {
    int stage_index = 0;
    std::string insight_delta_text;
    long insight_delta_tokens = 0;
    std::vector<backend::TokenScore> token_scores;
    long n = 0; // token count of x^t under the scoring backend
    backend::Usage mentor_usage;  // the stage's continuation request
    backend::Usage score_usage;   // the scoring pass
    backend::Usage answer_usage;  // the answer call, when answered
};

struct EpisodeRaw {
    std::vector<StageRaw> stages;
    const StageRaw* find_stage(int index) const;
};

struct Models {
    backend::ModelSpec mentor;
    backend::ModelSpec intern;
    std::shared_ptr<backend::Backend> mentor_backend;
    std::shared_ptr<backend::Backend> intern_backend;
};

struct Judge {
    const classifier::MlpModel* model = nullptr;
    const classifier::ThresholdSet* thresholds = nullptr;

    bool valid() const { return model != nullptr && thresholds != nullptr; }
    double tau(int stage) const;
};

struct CascadeConfig {
    core::StageLadder ladder;
    core::PromptTemplate insight_template;
    core::PromptTemplate answer_template;
    bool allow_stage0_exit = false;
    double router_threshold = 0.5;
    // Data-collection mode: score, answer (and later grade) every stage
    // regardless of decisions. The recorded outcome still reflects the
    // policy path and its as-deployed cost.
    bool all_stage_answers = false;
};

CascadeConfig default_cascade_config();

// Eq-10 style argmax over the four sufficiency scores; ties break toward
// the smallest index (the cheapest configuration).
int fallback_select(const std::array<double, 4>& scores);

// Cost = 2/1e12 * (|theta_L| * L_L + |theta_S| * (L_L + L_S)), in TFLOPs.
// Single-model runs pass L_L = 0 and that model's parameters as theta_S.
double compute_cost(long long mentor_tokens, long long intern_tokens, long long theta_L, long long theta_S);

// Sum over models of (input*price_in + output*price_out)/1000. A price may
// be absent only while the matching token count is zero.
double compute_dollar_cost(
    const std::map<std::string, backend::Usage>& usage,
    const std::map<std::string, std::pair<std::optional<double>, std::optional<double>>>& prices);

EpisodeResult run_episode(const core::Question& q, const Policy& policy, const Models& models,
                          const Judge& judge, const CascadeConfig& cfg, EpisodeRaw* raw = nullptr);

// An episode plus everything evaluation needs: the grouping key, the final
// grade, and (for all-stage data) the per-stage grades.
struct GradedEpisode {
    EpisodeResult result;
    std::string subject;
    std::optional<int> final_grade;
    std::map<int, int> stage_grades;
};

} // namespace tandem::cascade
