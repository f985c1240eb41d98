#pragma once

/**
 * The sufficiency classifier: a two-hidden-layer MLP (64 and 32 units,
 * rectifier activations, logistic output) trained with Adam on binary
 * cross-entropy, plus per-stage decision thresholds tuned by grid search.
 *
 * Training is single-threaded and fully deterministic for a fixed seed:
 * one RNG stream drives weight init, epoch shuffles, and dropout masks,
 * and the stratified split derives from the same seed. Trained models are
 * immutable and safe to share across workers.
 */

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tandem/core.hpp"
#include "tandem/uncertainty.hpp"

namespace tandem::classifier {

struct MlpModel {
    std::vector<int> layer_dims{uncertainty::FeatureVector::kDims, 64, 32, 1};
    std::vector<std::vector<double>> weights; // per layer, row-major [out][in]
    std::vector<std::vector<double>> biases;  // per layer
    std::vector<double> norm_mean;            // per-feature z-score stats from training data
    std::vector<double> norm_std;
    double dropout_rate = 0.3; // training only; inference never drops

    bool trained() const { return !weights.empty() && !norm_mean.empty(); }
    void validate() const;
};

struct ThresholdSet {
    std::map<int, double> tau; // stage index -> threshold in [0,1]
};

struct LabeledExample {
    uncertainty::FeatureVector features;
    int label = 0; // 1 = intern answered correctly under this guidance
    core::EffortStage stage;
    std::string question_id;
    std::string subject;
};

struct TrainHyper {
    double lr = 1e-4;
    int max_epochs = 3;
    double dropout = 0.3;
    unsigned split_seed = 42;
    double val_fraction = 0.3;
    int batch_size = 64;
    int patience = 1; // epochs without val-accuracy improvement before stopping
};

struct TrainReport {
    double best_val_accuracy = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
};

// Sufficiency score s in [0,1]; deterministic, no dropout.
double forward(const MlpModel& model, const uncertainty::FeatureVector& f);

MlpModel train(const std::vector<LabeledExample>& data, const TrainHyper& hyper = {},
               TrainReport* report = nullptr);

struct SplitIndices {
    std::vector<size_t> train;
    std::vector<size_t> val;
};

// Stratified by label, shuffled with mt19937(seed); the exact split train()
// uses internally, exposed so threshold tuning can reuse it.
SplitIndices stratified_split(const std::vector<int>& labels, double val_fraction, unsigned seed);

struct Grid {
    double lo = 0.05, hi = 0.95, step = 0.05;
    std::vector<double> values() const;
};

// Objective over the confusion counts of 1[s > tau]; higher is better.
using TuneObjective = std::function<double(long tp, long fp, long tn, long fn)>;

double accuracy_objective(long tp, long fp, long tn, long fn);
double f1_objective(long tp, long fp, long tn, long fn);

// Per stage, the grid value maximizing the objective; ties go to the
// smallest tau (prefers earlier stopping, hence lower cost).
ThresholdSet tune_thresholds(const std::map<int, std::vector<std::pair<double, int>>>& scored,
                             const Grid& grid = {}, const TuneObjective& objective = accuracy_objective);

// y = 1 iff s strictly exceeds tau.
inline int decide(double s, double tau) { return s > tau ? 1 : 0; }

std::map<int, std::vector<std::pair<double, int>>> score_by_stage(const MlpModel& model,
                                                                  const std::vector<LabeledExample>& data);

// ===== parameter access (finite-difference checks, serialization) =====

size_t param_count(const MlpModel& model);
double get_param(const MlpModel& model, size_t index);
void add_param(MlpModel& model, size_t index, double delta);

// Binary cross-entropy of one example and its gradient over the flattened
// parameters (layer order, weights row-major then biases). Dropout off.
double example_loss(const MlpModel& model, const uncertainty::FeatureVector& f, int label);
std::vector<double> example_gradient(const MlpModel& model, const uncertainty::FeatureVector& f, int label);

// ===== model files =====

struct ClassifierBundle {
    std::string grouping = "unified"; // "unified" | "per_subject"
    std::map<std::string, std::pair<MlpModel, ThresholdSet>> groups;

    static constexpr const char* kUnifiedKey = "all";

    const std::pair<MlpModel, ThresholdSet>& resolve(const std::string& subject) const;
};

void save_classifier(const ClassifierBundle& bundle, const std::string& path);
ClassifierBundle load_classifier(const std::string& path);

} // namespace tandem::classifier
