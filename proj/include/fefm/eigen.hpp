#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fefm/errors.hpp"

namespace fefm {

struct EigenResult {
    std::vector<double> values;   // non-increasing
    std::vector<double> vectors;  // k x k, column t is the eigenvector of values[t]
};

inline double frobenius_norm(const std::vector<double>& A) {
    double s = 0.0;
    for (double x : A) s += x * x;
    return std::sqrt(s);
}

// Cyclic Jacobi on a symmetric k x k matrix (row-major). Sweeps until every
// off-diagonal magnitude is <= tol * ||A||_F, capped at 100 sweeps.
inline EigenResult symmetric_eigenvalues(std::vector<double> A, int k, double tol = 1e-12) {
    if (static_cast<int>(A.size()) != k * k) throw ConfigError("matrix size mismatch");
    double max_abs = 0.0, max_asym = 0.0;
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
            max_abs = std::max(max_abs, std::abs(A[a * k + b]));
            max_asym = std::max(max_asym, std::abs(A[a * k + b] - A[b * k + a]));
        }
    if (max_abs > 0.0 && max_asym > 1e-9 * max_abs) throw NumericError("matrix is not symmetric");

    const double threshold = tol * std::max(frobenius_norm(A), 1e-300);
    std::vector<double> Q(k * k, 0.0);
    for (int a = 0; a < k; ++a) Q[a * k + a] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < k; ++p)
            for (int q = p + 1; q < k; ++q) off = std::max(off, std::abs(A[p * k + q]));
        if (off <= threshold) break;
        for (int p = 0; p < k; ++p) {
            for (int q = p + 1; q < k; ++q) {
                const double apq = A[p * k + q];
                if (std::abs(apq) <= threshold * 1e-3) continue;
                const double theta = (A[q * k + q] - A[p * k + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int r = 0; r < k; ++r) {
                    const double arp = A[r * k + p], arq = A[r * k + q];
                    A[r * k + p] = c * arp - s * arq;
                    A[r * k + q] = s * arp + c * arq;
                }
                for (int r = 0; r < k; ++r) {
                    const double apr = A[p * k + r], aqr = A[q * k + r];
                    A[p * k + r] = c * apr - s * aqr;
                    A[q * k + r] = s * apr + c * aqr;
                }
                for (int r = 0; r < k; ++r) {
                    const double qrp = Q[r * k + p], qrq = Q[r * k + q];
                    Q[r * k + p] = c * qrp - s * qrq;
                    Q[r * k + q] = s * qrp + c * qrq;
                }
            }
        }
    }

    EigenResult res;
    res.values.resize(k);
    for (int a = 0; a < k; ++a) res.values[a] = A[a * k + a];
    std::vector<int> order(k);
    for (int a = 0; a < k; ++a) order[a] = a;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return res.values[a] > res.values[b]; });
    EigenResult sorted;
    sorted.values.resize(k);
    sorted.vectors.resize(k * k);
    for (int t = 0; t < k; ++t) {
        sorted.values[t] = res.values[order[t]];
        for (int r = 0; r < k; ++r) sorted.vectors[r * k + t] = Q[r * k + order[t]];
    }
    return sorted;
}

}  // namespace fefm
