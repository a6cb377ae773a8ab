#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "fefm/errors.hpp"

namespace fefm {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + exp(-y*phi)), stable for large |phi|
inline double instance_loss(double phi, int y) {
    if (y != 1 && y != -1) throw DataError("label must be +1 or -1");
    const double z = -static_cast<double>(y) * phi;
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

inline double log_loss_metric(const std::vector<double>& probs, const std::vector<int>& labels) {
    if (probs.empty() || probs.size() != labels.size()) throw DataError("log_loss: bad input sizes");
    double total = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        double p = std::clamp(probs[i], 1e-15, 1.0 - 1e-15);
        total += labels[i] > 0 ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

// Rank-statistic AUC with ties counted one half, O(N log N). Twice the
// Mann-Whitney U is kept in integers so the result matches the O(N^2)
// pairwise count bit for bit.
inline double auc_metric(const std::vector<double>& scores, const std::vector<int>& labels) {
    const size_t N = scores.size();
    if (N == 0 || labels.size() != N) throw DataError("auc: bad input sizes");
    std::vector<size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    int64_t n_pos = 0;
    for (int y : labels) n_pos += y > 0 ? 1 : 0;
    const int64_t n_neg = static_cast<int64_t>(N) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auc undefined: single-class input");

    // rank2[i] = twice the average rank (1-based) of instance i
    std::vector<int64_t> rank2(N);
    size_t idx = 0;
    while (idx < N) {
        size_t j = idx;
        while (j + 1 < N && scores[order[j + 1]] == scores[order[idx]]) ++j;
        const int64_t two_avg = static_cast<int64_t>(idx + 1) + static_cast<int64_t>(j + 1);
        for (size_t t = idx; t <= j; ++t) rank2[order[t]] = two_avg;
        idx = j + 1;
    }
    int64_t rank2_pos_sum = 0;
    for (size_t i = 0; i < N; ++i)
        if (labels[i] > 0) rank2_pos_sum += rank2[i];
    const int64_t two_u = rank2_pos_sum - n_pos * (n_pos + 1);  // = 2*wins + ties
    return static_cast<double>(two_u) / static_cast<double>(2 * n_pos * n_neg);
}

}  // namespace fefm
