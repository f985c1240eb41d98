#include "tandem/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "tandem/error.hpp"

namespace tandem::uncertainty {

std::array<double, FeatureVector::kDims> FeatureVector::flatten() const {
    return {ppl.mean,     ppl.std,     ppl.median,     ppl.max,     ppl.min,     ppl.q25,     ppl.q75,
            entropy.mean, entropy.std, entropy.median, entropy.max, entropy.min, entropy.q25, entropy.q75,
            ppl_trend,    entropy_trend, static_cast<double>(length)};
}

FeatureVector FeatureVector::from_flat(const std::array<double, kDims>& flat) {
    FeatureVector f;
    f.ppl = {flat[0], flat[1], flat[2], flat[3], flat[4], flat[5], flat[6]};
    f.entropy = {flat[7], flat[8], flat[9], flat[10], flat[11], flat[12], flat[13]};
    f.ppl_trend = flat[14];
    f.entropy_trend = flat[15];
    f.length = static_cast<long>(flat[16]);
    return f;
}

std::vector<double> per_token_ppl(const std::vector<backend::TokenScore>& scores) {
    if (scores.empty()) fail(Errc::empty_input, "per_token_ppl on empty score list");
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) out.push_back(std::exp(-s.realized_logprob));
    return out;
}

std::vector<double> per_token_entropy(const std::vector<backend::TokenScore>& scores) {
    if (scores.empty()) fail(Errc::empty_input, "per_token_entropy on empty score list");
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) {
        if (s.residual_mass < 0.0 || s.residual_mass > 1.0 + 1e-9)
            fail(Errc::invalid_distribution, "residual mass outside [0,1]");
        double h = 0.0;
        for (const auto& [text, lp] : s.top_alternatives) {
            double p = std::exp(lp);
            if (p > 0.0) h -= p * lp;
        }
        if (s.residual_mass > 0.0) h -= s.residual_mass * std::log(s.residual_mass);
        out.push_back(h);
    }
    return out;
}

namespace {

// Linear interpolation between closest ranks, matching the most common
// percentile convention: rank = p/100 * (n-1) over the sorted series.
double percentile_sorted(const std::vector<double>& sorted, double p) {
    const size_t n = sorted.size();
    if (n == 1) return sorted[0];
    double rank = p / 100.0 * static_cast<double>(n - 1);
    size_t lo = static_cast<size_t>(rank);
    if (lo >= n - 1) return sorted[n - 1];
    double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

} // namespace

SeriesStats distribution_stats(const std::vector<double>& series) {
    if (series.empty()) fail(Errc::empty_input, "distribution_stats on empty series");
    const double n = static_cast<double>(series.size());

    double sum = 0.0;
    for (double v : series) sum += v;
    const double mean = sum / n;

    double sq = 0.0;
    for (double v : series) sq += (v - mean) * (v - mean);

    std::vector<double> sorted(series);
    std::sort(sorted.begin(), sorted.end());

    SeriesStats st;
    st.mean = mean;
    st.std = std::sqrt(sq / n); // population form
    st.median = percentile_sorted(sorted, 50.0);
    st.max = sorted.back();
    st.min = sorted.front();
    st.q25 = percentile_sorted(sorted, 25.0);
    st.q75 = percentile_sorted(sorted, 75.0);
    return st;
}

double trend(const std::vector<double>& series) {
    if (series.empty()) fail(Errc::empty_input, "trend on empty series");
    const size_t n = series.size();
    const size_t k = std::min<size_t>(20, n);
    double first = 0.0, last = 0.0;
    for (size_t i = 0; i < k; ++i) first += series[i];
    for (size_t i = n - k; i < n; ++i) last += series[i];
    return (last - first) / static_cast<double>(k);
}

FeatureVector extract_features(const std::vector<backend::TokenScore>& scores, long n) {
    if (scores.empty()) fail(Errc::empty_input, "extract_features on empty score list");
    if (n < static_cast<long>(scores.size()))
        fail(Errc::empty_input, "n must cover every scored position");

    const auto ppl = per_token_ppl(scores);
    const auto entropy = per_token_entropy(scores);

    FeatureVector f;
    f.ppl = distribution_stats(ppl);
    f.entropy = distribution_stats(entropy);
    f.ppl_trend = trend(ppl);
    f.entropy_trend = trend(entropy);
    f.length = n;
    return f;
}

} // namespace tandem::uncertainty
