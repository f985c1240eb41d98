#pragma once

/**
 * Per-token perplexity/entropy and the 17-dim distributional feature vector
 * the sufficiency classifier consumes. Everything here is a pure function;
 * all values are natural-log units (entropy in nats).
 */

#include <array>
#include <vector>

#include "tandem/backend.hpp"

namespace tandem::uncertainty {

struct SeriesStats {
    double mean = 0, std = 0, median = 0, max = 0, min = 0, q25 = 0, q75 = 0;
};

struct FeatureVector {
    SeriesStats ppl;
    SeriesStats entropy;
    double ppl_trend = 0;
    double entropy_trend = 0;
    long length = 0; // n, token count of the scored input

    static constexpr int kDims = 17;
    // Fixed flattening order: ppl stats (mean, std, median, max, min, q25,
    // q75), entropy stats in the same order, both trends, then length.
    std::array<double, kDims> flatten() const;
    static FeatureVector from_flat(const std::array<double, kDims>& flat);
};

// PPL_i = exp(-logprob_i); every value >= 1 for well-formed logprobs.
std::vector<double> per_token_ppl(const std::vector<backend::TokenScore>& scores);

// H_i = -sum p log p over the reported alternatives plus the residual
// bucket, with 0·log 0 = 0. Exact when the backend supplies the full
// vocabulary (residual 0); otherwise a documented underestimate.
std::vector<double> per_token_entropy(const std::vector<backend::TokenScore>& scores);

// Population standard deviation (divide by n); percentiles by linear
// interpolation between order statistics.
SeriesStats distribution_stats(const std::vector<double>& series);

// mean(last k) - mean(first k) with k = min(20, n); the windows overlap
// when n < 40 and coincide when n <= 20.
double trend(const std::vector<double>& series);

FeatureVector extract_features(const std::vector<backend::TokenScore>& scores, long n);

} // namespace tandem::uncertainty
