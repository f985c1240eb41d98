#include "tandem/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace tandem::classifier {

using nlohmann::json;
using uncertainty::FeatureVector;

namespace {

constexpr double kEps = 1e-12;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> normalize(const MlpModel& model, const FeatureVector& f) {
    auto flat = f.flatten();
    std::vector<double> x(flat.begin(), flat.end());
    if (model.norm_mean.size() == x.size()) {
        for (size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - model.norm_mean[i]) / model.norm_std[i];
    }
    return x;
}

struct ForwardState {
    std::vector<std::vector<double>> activations; // input + post-activation per layer
    double output = 0.5;                          // after logistic
};

// mask: per hidden layer, inverted-dropout scale per unit (empty = no dropout)
ForwardState run_forward(const MlpModel& model, std::vector<double> x,
                         const std::vector<std::vector<double>>* masks = nullptr) {
    ForwardState state;
    state.activations.push_back(x);
    const size_t layers = model.weights.size();
    for (size_t l = 0; l < layers; ++l) {
        const int n_out = model.layer_dims[l + 1];
        const int n_in = model.layer_dims[l];
        std::vector<double> z(static_cast<size_t>(n_out), 0.0);
        const auto& w = model.weights[l];
        const auto& b = model.biases[l];
        for (int o = 0; o < n_out; ++o) {
            double acc = b[static_cast<size_t>(o)];
            const double* row = w.data() + static_cast<size_t>(o) * static_cast<size_t>(n_in);
            for (int i = 0; i < n_in; ++i) acc += row[i] * x[static_cast<size_t>(i)];
            z[static_cast<size_t>(o)] = acc;
        }
        if (l + 1 < layers) {
            for (auto& v : z) v = v > 0.0 ? v : 0.0; // rectifier
            if (masks && !(*masks)[l].empty())
                for (size_t o = 0; o < z.size(); ++o) z[o] *= (*masks)[l][o];
        } else {
            z[0] = sigmoid(z[0]);
        }
        x = z;
        state.activations.push_back(x);
    }
    state.output = state.activations.back()[0];
    return state;
}

// dL/dz at the output is (s - y) for BCE through the logistic, which keeps
// the backward pass exact even when s saturates.
void accumulate_gradient(const MlpModel& model, const ForwardState& state, int label,
                         const std::vector<std::vector<double>>* masks,
                         std::vector<std::vector<double>>& grad_w, std::vector<std::vector<double>>& grad_b) {
    const size_t layers = model.weights.size();
    std::vector<double> delta{state.output - static_cast<double>(label)};
    for (size_t l = layers; l-- > 0;) {
        const int n_out = model.layer_dims[l + 1];
        const int n_in = model.layer_dims[l];
        const auto& below = state.activations[l];
        for (int o = 0; o < n_out; ++o) {
            grad_b[l][static_cast<size_t>(o)] += delta[static_cast<size_t>(o)];
            double* row = grad_w[l].data() + static_cast<size_t>(o) * static_cast<size_t>(n_in);
            for (int i = 0; i < n_in; ++i) row[i] += delta[static_cast<size_t>(o)] * below[static_cast<size_t>(i)];
        }
        if (l == 0) break;
        std::vector<double> next(static_cast<size_t>(n_in), 0.0);
        const auto& w = model.weights[l];
        for (int i = 0; i < n_in; ++i) {
            double acc = 0.0;
            for (int o = 0; o < n_out; ++o)
                acc += w[static_cast<size_t>(o) * static_cast<size_t>(n_in) + static_cast<size_t>(i)] *
                       delta[static_cast<size_t>(o)];
            // through dropout scaling, then the rectifier gate
            if (masks && !(*masks)[l - 1].empty()) acc *= (*masks)[l - 1][static_cast<size_t>(i)];
            if (state.activations[l][static_cast<size_t>(i)] <= 0.0) acc = 0.0;
            next[static_cast<size_t>(i)] = acc;
        }
        delta = std::move(next);
    }
}

} // namespace

void MlpModel::validate() const {
    if (layer_dims.size() < 2) fail(Errc::dimension_mismatch, "model needs at least input and output layers");
    if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size())
        fail(Errc::dimension_mismatch, "layer count does not match weight/bias arrays");
    for (size_t l = 0; l < weights.size(); ++l) {
        const size_t want_w = static_cast<size_t>(layer_dims[l]) * static_cast<size_t>(layer_dims[l + 1]);
        if (weights[l].size() != want_w || biases[l].size() != static_cast<size_t>(layer_dims[l + 1]))
            fail(Errc::dimension_mismatch, "layer " + std::to_string(l) + " has inconsistent dimensions");
    }
    if (layer_dims.back() != 1) fail(Errc::dimension_mismatch, "output layer must have a single unit");
    if (!norm_mean.empty() &&
        (norm_mean.size() != static_cast<size_t>(layer_dims[0]) || norm_std.size() != norm_mean.size()))
        fail(Errc::dimension_mismatch, "normalization vectors do not match the input width");
}

double forward(const MlpModel& model, const FeatureVector& f) {
    model.validate();
    if (static_cast<int>(f.flatten().size()) != model.layer_dims[0])
        fail(Errc::dimension_mismatch, "feature vector width does not match the model input");
    return run_forward(model, normalize(model, f)).output;
}

SplitIndices stratified_split(const std::vector<int>& labels, double val_fraction, unsigned seed) {
    std::mt19937 rng(seed);
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);

    SplitIndices split;
    for (auto* cls : {&neg, &pos}) {
        std::shuffle(cls->begin(), cls->end(), rng);
        size_t n = cls->size();
        size_t n_val = static_cast<size_t>(std::llround(val_fraction * static_cast<double>(n)));
        if (n >= 2) n_val = std::clamp<size_t>(n_val, 1, n - 1);
        if (n == 1) n_val = 0; // a lone example trains
        for (size_t i = 0; i < n; ++i) (i < n_val ? split.val : split.train).push_back((*cls)[i]);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    return split;
}

namespace {

struct AdamState {
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
    long step = 0;
};

void adam_update(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
                 std::vector<double>& v, long step, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (size_t i = 0; i < param.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

double evaluate_accuracy(const MlpModel& model, const std::vector<LabeledExample>& data,
                         const std::vector<size_t>& indices) {
    if (indices.empty()) return 0.0;
    long correct = 0;
    for (size_t i : indices) {
        double s = run_forward(model, normalize(model, data[i].features)).output;
        if ((s > 0.5 ? 1 : 0) == data[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

} // namespace

MlpModel train(const std::vector<LabeledExample>& data, const TrainHyper& hyper, TrainReport* report) {
    if (data.empty()) fail(Errc::empty_data, "no training examples");
    bool has_pos = false, has_neg = false;
    std::vector<int> labels;
    labels.reserve(data.size());
    for (const auto& ex : data) {
        labels.push_back(ex.label);
        (ex.label ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        fail(Errc::single_class_data, "training data must contain both sufficient and insufficient examples");

    std::mt19937 rng(hyper.split_seed);

    MlpModel model;
    model.dropout_rate = hyper.dropout;
    const auto& dims = model.layer_dims;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const size_t n_in = static_cast<size_t>(dims[l]);
        const size_t n_out = static_cast<size_t>(dims[l + 1]);
        const double limit = std::sqrt(6.0 / static_cast<double>(n_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        std::vector<double> w(n_in * n_out);
        for (auto& v : w) v = dist(rng);
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(n_out, 0.0);
    }

    SplitIndices split = stratified_split(labels, hyper.val_fraction, hyper.split_seed);

    // z-score stats from the training portion only
    const size_t width = static_cast<size_t>(dims[0]);
    model.norm_mean.assign(width, 0.0);
    model.norm_std.assign(width, 0.0);
    for (size_t i : split.train) {
        auto flat = data[i].features.flatten();
        for (size_t d = 0; d < width; ++d) model.norm_mean[d] += flat[d];
    }
    for (auto& v : model.norm_mean) v /= static_cast<double>(split.train.size());
    for (size_t i : split.train) {
        auto flat = data[i].features.flatten();
        for (size_t d = 0; d < width; ++d) {
            double c = flat[d] - model.norm_mean[d];
            model.norm_std[d] += c * c;
        }
    }
    for (auto& v : model.norm_std) {
        v = std::sqrt(v / static_cast<double>(split.train.size()));
        if (v == 0.0) v = 1.0; // constant feature
    }

    AdamState adam;
    for (size_t l = 0; l < model.weights.size(); ++l) {
        adam.m_w.emplace_back(model.weights[l].size(), 0.0);
        adam.v_w.emplace_back(model.weights[l].size(), 0.0);
        adam.m_b.emplace_back(model.biases[l].size(), 0.0);
        adam.v_b.emplace_back(model.biases[l].size(), 0.0);
    }

    MlpModel best = model;
    double best_acc = -1.0;
    int best_epoch = 0;
    int since_improvement = 0;
    int epochs_run = 0;

    std::vector<size_t> order = split.train;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double keep = 1.0 - hyper.dropout;

    for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
        ++epochs_run;
        std::shuffle(order.begin(), order.end(), rng);

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(hyper.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(hyper.batch_size));
            std::vector<std::vector<double>> grad_w, grad_b;
            for (size_t l = 0; l < model.weights.size(); ++l) {
                grad_w.emplace_back(model.weights[l].size(), 0.0);
                grad_b.emplace_back(model.biases[l].size(), 0.0);
            }
            for (size_t bi = start; bi < end; ++bi) {
                const auto& ex = data[order[bi]];
                std::vector<std::vector<double>> masks;
                if (hyper.dropout > 0.0 && keep > 0.0) {
                    for (size_t l = 0; l + 1 < model.weights.size(); ++l) {
                        std::vector<double> mask(static_cast<size_t>(dims[l + 1]));
                        for (auto& m : mask) m = unit(rng) < keep ? 1.0 / keep : 0.0;
                        masks.push_back(std::move(mask));
                    }
                }
                auto state =
                    run_forward(model, normalize(model, ex.features), masks.empty() ? nullptr : &masks);
                accumulate_gradient(model, state, ex.label, masks.empty() ? nullptr : &masks, grad_w, grad_b);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto& layer : grad_w)
                for (auto& g : layer) g *= scale;
            for (auto& layer : grad_b)
                for (auto& g : layer) g *= scale;

            ++adam.step;
            for (size_t l = 0; l < model.weights.size(); ++l) {
                adam_update(model.weights[l], grad_w[l], adam.m_w[l], adam.v_w[l], adam.step, hyper.lr);
                adam_update(model.biases[l], grad_b[l], adam.m_b[l], adam.v_b[l], adam.step, hyper.lr);
            }
        }

        const auto& eval_set = split.val.empty() ? split.train : split.val;
        double acc = evaluate_accuracy(model, data, eval_set);
        if (acc > best_acc) {
            best_acc = acc;
            best = model;
            best_epoch = epoch;
            since_improvement = 0;
        } else if (++since_improvement >= hyper.patience) {
            break;
        }
    }

    if (report) {
        report->best_val_accuracy = best_acc;
        report->best_epoch = best_epoch;
        report->epochs_run = epochs_run;
    }
    return best;
}

std::vector<double> Grid::values() const {
    if (step <= 0) fail(Errc::config_error, "grid step must be positive");
    std::vector<double> out;
    for (int k = 0;; ++k) {
        double v = lo + k * step;
        if (v > hi + 1e-12) break;
        out.push_back(v);
    }
    if (out.empty()) fail(Errc::config_error, "empty threshold grid");
    return out;
}

double accuracy_objective(long tp, long fp, long tn, long fn) {
    long total = tp + fp + tn + fn;
    return total == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total);
}

double f1_objective(long tp, long fp, long tn, long fn) {
    (void)tn;
    double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

ThresholdSet tune_thresholds(const std::map<int, std::vector<std::pair<double, int>>>& scored,
                             const Grid& grid, const TuneObjective& objective) {
    const std::vector<double> taus = grid.values();
    ThresholdSet out;
    for (const auto& [stage, samples] : scored) {
        if (samples.empty()) fail(Errc::empty_stage, "no scored samples for stage " + std::to_string(stage));
        double best_obj = -1.0;
        double best_tau = taus.front();
        for (double tau : taus) {
            long tp = 0, fp = 0, tn = 0, fn = 0;
            for (const auto& [s, label] : samples) {
                int pred = decide(s, tau);
                if (pred == 1)
                    (label == 1 ? tp : fp)++;
                else
                    (label == 1 ? fn : tn)++;
            }
            double obj = objective(tp, fp, tn, fn);
            if (obj > best_obj) { // strict: ties keep the smallest tau
                best_obj = obj;
                best_tau = tau;
            }
        }
        out.tau[stage] = best_tau;
    }
    return out;
}

std::map<int, std::vector<std::pair<double, int>>> score_by_stage(const MlpModel& model,
                                                                  const std::vector<LabeledExample>& data) {
    std::map<int, std::vector<std::pair<double, int>>> out;
    for (const auto& ex : data) out[ex.stage.index].emplace_back(forward(model, ex.features), ex.label);
    return out;
}

// ===== parameter access =====

size_t param_count(const MlpModel& model) {
    size_t n = 0;
    for (size_t l = 0; l < model.weights.size(); ++l) n += model.weights[l].size() + model.biases[l].size();
    return n;
}

namespace {

std::pair<std::vector<double>*, size_t> locate_param(MlpModel& model, size_t index) {
    for (size_t l = 0; l < model.weights.size(); ++l) {
        if (index < model.weights[l].size()) return {&model.weights[l], index};
        index -= model.weights[l].size();
        if (index < model.biases[l].size()) return {&model.biases[l], index};
        index -= model.biases[l].size();
    }
    fail(Errc::dimension_mismatch, "parameter index out of range");
}

} // namespace

double get_param(const MlpModel& model, size_t index) {
    auto [vec, off] = locate_param(const_cast<MlpModel&>(model), index);
    return (*vec)[off];
}

void add_param(MlpModel& model, size_t index, double delta) {
    auto [vec, off] = locate_param(model, index);
    (*vec)[off] += delta;
}

double example_loss(const MlpModel& model, const FeatureVector& f, int label) {
    double s = run_forward(model, normalize(model, f)).output;
    s = std::clamp(s, kEps, 1.0 - kEps);
    return label == 1 ? -std::log(s) : -std::log(1.0 - s);
}

std::vector<double> example_gradient(const MlpModel& model, const FeatureVector& f, int label) {
    std::vector<std::vector<double>> grad_w, grad_b;
    for (size_t l = 0; l < model.weights.size(); ++l) {
        grad_w.emplace_back(model.weights[l].size(), 0.0);
        grad_b.emplace_back(model.biases[l].size(), 0.0);
    }
    auto state = run_forward(model, normalize(model, f));
    accumulate_gradient(model, state, label, nullptr, grad_w, grad_b);

    std::vector<double> flat;
    flat.reserve(param_count(model));
    for (size_t l = 0; l < grad_w.size(); ++l) {
        flat.insert(flat.end(), grad_w[l].begin(), grad_w[l].end());
        flat.insert(flat.end(), grad_b[l].begin(), grad_b[l].end());
    }
    return flat;
}

// ===== model files =====

namespace {

constexpr int kSchemaVersion = 1;

json model_to_json(const MlpModel& m, const ThresholdSet& t) {
    json thresholds = json::object();
    for (const auto& [stage, tau] : t.tau) thresholds[std::to_string(stage)] = tau;
    return {{"layer_dims", m.layer_dims}, {"weights", m.weights},   {"biases", m.biases},
            {"norm_mean", m.norm_mean},   {"norm_std", m.norm_std}, {"dropout_rate", m.dropout_rate},
            {"thresholds", thresholds}};
}

std::pair<MlpModel, ThresholdSet> model_from_json(const json& j) {
    MlpModel m;
    m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    m.norm_mean = j.at("norm_mean").get<std::vector<double>>();
    m.norm_std = j.at("norm_std").get<std::vector<double>>();
    m.dropout_rate = j.value("dropout_rate", 0.3);
    m.validate();
    ThresholdSet t;
    for (const auto& [k, v] : j.at("thresholds").items()) t.tau[std::stoi(k)] = v.get<double>();
    return {std::move(m), std::move(t)};
}

} // namespace

const std::pair<MlpModel, ThresholdSet>& ClassifierBundle::resolve(const std::string& subject) const {
    const std::string key = grouping == "per_subject" ? subject : std::string(kUnifiedKey);
    auto it = groups.find(key);
    if (it == groups.end() && grouping == "per_subject") it = groups.find(kUnifiedKey);
    if (it == groups.end())
        fail(Errc::classifier_missing, "no classifier for grouping key '" + key + "'");
    return it->second;
}

void save_classifier(const ClassifierBundle& bundle, const std::string& path) {
    json groups = json::object();
    for (const auto& [key, mt] : bundle.groups) groups[key] = model_to_json(mt.first, mt.second);
    json root = {{"schema_version", kSchemaVersion}, {"grouping", bundle.grouping}, {"groups", groups}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_error, "cannot write classifier file '" + path + "'");
    out << root.dump(2) << "\n";
    if (!out) fail(Errc::io_error, "short write to classifier file '" + path + "'");
}

ClassifierBundle load_classifier(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot read classifier file '" + path + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        fail(Errc::parse_error, "classifier file '" + path + "': " + e.what());
    }
    if (root.value("schema_version", -1) != kSchemaVersion)
        fail(Errc::schema_mismatch, "classifier file schema version mismatch");
    ClassifierBundle bundle;
    bundle.grouping = root.value("grouping", "unified");
    for (const auto& [key, body] : root.at("groups").items()) bundle.groups[key] = model_from_json(body);
    return bundle;
}

} // namespace tandem::classifier
