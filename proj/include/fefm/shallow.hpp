#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "fefm/data.hpp"
#include "fefm/errors.hpp"

namespace fefm {

enum class ModelKind { LR, FM, FFM, FwFM, FEFM };

inline const char* kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::LR: return "lr";
        case ModelKind::FM: return "fm";
        case ModelKind::FFM: return "ffm";
        case ModelKind::FwFM: return "fwfm";
        case ModelKind::FEFM: return "fefm";
    }
    return "?";
}

// Canonical index for unordered field pairs {f,g}: pairs enumerate as
// (0,1),(0,2),...,(0,n-1),(1,2),... giving a bijection onto [0, n(n-1)/2).
struct FieldPairIndex {
    int n = 0;
    explicit FieldPairIndex(int fields) : n(fields) {}
    int count() const { return n * (n - 1) / 2; }
    int index(int f, int g) const {
        if (f == g || f < 0 || g < 0 || f >= n || g >= n) throw ConfigError("invalid field pair");
        if (f > g) std::swap(f, g);
        return f * n - f * (f + 1) / 2 + (g - f - 1);
    }
    std::pair<int, int> fields(int p) const {
        for (int f = 0; f < n - 1; ++f) {
            int row = (n - 1 - f);
            if (p < row) return {f, f + 1 + p};
            p -= row;
        }
        throw ConfigError("pair index out of range");
    }
};

struct ShallowParams {
    ModelKind kind = ModelKind::FEFM;
    int64_t m = 0;
    int n = 0;
    int k = 0;
    bool symmetric_mode = true;

    double w0 = 0.0;
    std::vector<double> w;      // m
    std::vector<double> v;      // m*k            (FM/FwFM/FEFM, and shared by DeepFEFM)
    std::vector<double> v_ffm;  // m*(n-1)*k      (FFM)
    std::vector<double> r;      // n(n-1)/2       (FwFM)
    std::vector<double> u;      // n(n-1)/2 * k*k (FEFM; W_p = u_p + u_p^T in symmetric mode)

    std::span<const double> embedding(int64_t i) const { return {v.data() + i * k, static_cast<size_t>(k)}; }
    std::span<double> embedding(int64_t i) { return {v.data() + i * k, static_cast<size_t>(k)}; }

    // FFM: embedding of feature i used against field g (g != owner field f).
    int64_t ffm_offset(int64_t i, int f, int g) const {
        int slot = g < f ? g : g - 1;
        return (i * (n - 1) + slot) * k;
    }
    std::span<const double> ffm_embedding(int64_t i, int f, int g) const {
        return {v_ffm.data() + ffm_offset(i, f, g), static_cast<size_t>(k)};
    }

    std::span<const double> u_block(int p) const {
        return {u.data() + static_cast<int64_t>(p) * k * k, static_cast<size_t>(k) * k};
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) {
        fn(w0);
        for (auto& x : w) fn(x);
        for (auto& x : v) fn(x);
        for (auto& x : v_ffm) fn(x);
        for (auto& x : r) fn(x);
        for (auto& x : u) fn(x);
    }

    static ShallowParams init(ModelKind kind, int64_t m, int n, int k, uint64_t seed,
                              double init_stddev = 0.01, bool symmetric_mode = true) {
        if (m < 1 || n < 1) throw ConfigError("m and n must be >= 1");
        if (kind != ModelKind::LR && k < 1) throw ConfigError("k must be >= 1");
        ShallowParams p;
        p.kind = kind;
        p.m = m;
        p.n = n;
        p.k = (kind == ModelKind::LR) ? 0 : k;
        p.symmetric_mode = symmetric_mode;
        p.w.assign(m, 0.0);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> dist(0.0, init_stddev);
        const int npairs = n * (n - 1) / 2;
        switch (kind) {
            case ModelKind::LR:
                break;
            case ModelKind::FM:
                p.v.resize(m * k);
                break;
            case ModelKind::FFM:
                p.v_ffm.resize(m * static_cast<int64_t>(n - 1) * k);
                break;
            case ModelKind::FwFM:
                p.v.resize(m * k);
                p.r.assign(npairs, 1.0);
                break;
            case ModelKind::FEFM:
                p.v.resize(m * k);
                p.u.resize(static_cast<int64_t>(npairs) * k * k);
                break;
        }
        for (auto& x : p.v) x = dist(rng);
        for (auto& x : p.v_ffm) x = dist(rng);
        for (auto& x : p.u) x = dist(rng);
        return p;
    }
};

// Exact Table-1 parameter counts.
inline int64_t param_count(ModelKind kind, int64_t m, int64_t n, int64_t k) {
    if (m < 1 || n < 1) throw ConfigError("m and n must be >= 1");
    const int64_t npairs = n * (n - 1) / 2;
    switch (kind) {
        case ModelKind::LR: return m + 1;
        case ModelKind::FM: return m + m * k + 1;
        case ModelKind::FFM: return m + m * (n - 1) * k + 1;
        case ModelKind::FwFM: return m + m * k + npairs + 1;
        case ModelKind::FEFM: return m + m * k + npairs * k * k + 1;
    }
    throw ConfigError("unknown model kind");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// v_i^T W v_j for a dense k x k matrix W (row-major).
inline double pair_score_fefm(std::span<const double> vi, std::span<const double> vj,
                              std::span<const double> W) {
    const size_t k = vi.size();
    if (vj.size() != k || W.size() != k * k) throw ConfigError("pair_score_fefm dimension mismatch");
    double s = 0.0;
    for (size_t a = 0; a < k; ++a) {
        double row = 0.0;
        for (size_t b = 0; b < k; ++b) row += W[a * k + b] * vj[b];
        s += vi[a] * row;
    }
    return s;
}

// Effective interaction matrix of pair p: u_p + u_p^T in symmetric mode,
// raw u_p otherwise (the non-symmetric ablation).
inline std::vector<double> effective_pair_matrix(const ShallowParams& params, int p) {
    if (params.kind != ModelKind::FEFM) throw ConfigError("effective_pair_matrix requires FEFM");
    const int k = params.k;
    const int npairs = params.n * (params.n - 1) / 2;
    if (p < 0 || p >= npairs) throw ConfigError("pair index out of range");
    auto up = params.u_block(p);
    std::vector<double> W(up.begin(), up.end());
    if (params.symmetric_mode)
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) W[a * k + b] = up[a * k + b] + up[b * k + a];
    return W;
}

inline void check_instance(const ShallowParams& params, const Instance& inst) {
    if (static_cast<int>(inst.active.size()) != params.n)
        throw DataError("instance has wrong field count");
    for (int32_t i : inst.active)
        if (i < 0 || i >= params.m) throw DataError("feature id out of range");
}

inline double logit(const ShallowParams& params, const Instance& inst) {
    check_instance(params, inst);
    const int n = params.n;
    const int k = params.k;
    double phi = params.w0;
    for (int32_t i : inst.active) phi += params.w[i];
    if (params.kind == ModelKind::LR) return phi;

    FieldPairIndex pairs(n);
    for (int f = 0; f < n; ++f) {
        for (int g = f + 1; g < n; ++g) {
            const int64_t i = inst.active[f];
            const int64_t j = inst.active[g];
            switch (params.kind) {
                case ModelKind::FM:
                    phi += dot(params.embedding(i), params.embedding(j));
                    break;
                case ModelKind::FFM:
                    phi += dot(params.ffm_embedding(i, f, g), params.ffm_embedding(j, g, f));
                    break;
                case ModelKind::FwFM:
                    phi += dot(params.embedding(i), params.embedding(j)) * params.r[pairs.index(f, g)];
                    break;
                case ModelKind::FEFM: {
                    const int p = pairs.index(f, g);
                    auto up = params.u_block(p);
                    auto vi = params.embedding(i);
                    auto vj = params.embedding(j);
                    // v_i^T (u + u^T) v_j = v_i^T u v_j + v_j^T u v_i, without materializing W
                    double s = 0.0;
                    for (int a = 0; a < k; ++a) {
                        double row = 0.0;
                        for (int b = 0; b < k; ++b) row += up[a * k + b] * vj[b];
                        s += vi[a] * row;
                    }
                    if (params.symmetric_mode) {
                        for (int a = 0; a < k; ++a) {
                            double row = 0.0;
                            for (int b = 0; b < k; ++b) row += up[a * k + b] * vi[b];
                            s += vj[a] * row;
                        }
                    }
                    phi += s;
                    break;
                }
                default:
                    break;
            }
        }
    }
    return phi;
}

// Sparse gradient holding only entries touched by the instance/batch.
struct SparseGradient {
    double d_w0 = 0.0;
    std::unordered_map<int64_t, double> d_w;
    std::unordered_map<int64_t, std::vector<double>> d_v;       // feature -> k
    std::unordered_map<int64_t, std::vector<double>> d_v_ffm;   // flat (i*(n-1)+slot) -> k
    std::unordered_map<int, double> d_r;                        // pair -> scalar
    std::unordered_map<int64_t, std::vector<double>> d_u;       // pair -> k*k

    std::vector<double>& vec(std::unordered_map<int64_t, std::vector<double>>& map, int64_t key, int len) {
        auto [it, fresh] = map.try_emplace(key);
        if (fresh) it->second.assign(len, 0.0);
        return it->second;
    }
};

// d(upstream * phi)/d(theta) for every parameter touched by the instance.
inline void accumulate_gradient(const ShallowParams& params, const Instance& inst, double upstream,
                                SparseGradient& grad) {
    check_instance(params, inst);
    const int n = params.n;
    const int k = params.k;
    grad.d_w0 += upstream;
    for (int32_t i : inst.active) grad.d_w[i] += upstream;
    if (params.kind == ModelKind::LR) return;

    FieldPairIndex pairs(n);
    for (int f = 0; f < n; ++f) {
        for (int g = f + 1; g < n; ++g) {
            const int64_t i = inst.active[f];
            const int64_t j = inst.active[g];
            switch (params.kind) {
                case ModelKind::FM: {
                    auto vi = params.embedding(i);
                    auto vj = params.embedding(j);
                    auto& gi = grad.vec(grad.d_v, i, k);
                    auto& gj = grad.vec(grad.d_v, j, k);
                    for (int t = 0; t < k; ++t) {
                        gi[t] += upstream * vj[t];
                        gj[t] += upstream * vi[t];
                    }
                    break;
                }
                case ModelKind::FFM: {
                    auto vig = params.ffm_embedding(i, f, g);
                    auto vjf = params.ffm_embedding(j, g, f);
                    auto& gi = grad.vec(grad.d_v_ffm, params.ffm_offset(i, f, g) / k, k);
                    auto& gj = grad.vec(grad.d_v_ffm, params.ffm_offset(j, g, f) / k, k);
                    for (int t = 0; t < k; ++t) {
                        gi[t] += upstream * vjf[t];
                        gj[t] += upstream * vig[t];
                    }
                    break;
                }
                case ModelKind::FwFM: {
                    const int p = pairs.index(f, g);
                    auto vi = params.embedding(i);
                    auto vj = params.embedding(j);
                    grad.d_r[p] += upstream * dot(vi, vj);
                    auto& gi = grad.vec(grad.d_v, i, k);
                    auto& gj = grad.vec(grad.d_v, j, k);
                    const double rp = params.r[p];
                    for (int t = 0; t < k; ++t) {
                        gi[t] += upstream * rp * vj[t];
                        gj[t] += upstream * rp * vi[t];
                    }
                    break;
                }
                case ModelKind::FEFM: {
                    const int p = pairs.index(f, g);
                    auto up = params.u_block(p);
                    auto vi = params.embedding(i);
                    auto vj = params.embedding(j);
                    auto& gi = grad.vec(grad.d_v, i, k);
                    auto& gj = grad.vec(grad.d_v, j, k);
                    auto& gu = grad.vec(grad.d_u, p, k * k);
                    // score = v_i^T W v_j with W = u + u^T (sym) or u
                    for (int a = 0; a < k; ++a) {
                        for (int b = 0; b < k; ++b) {
                            const double Wab = params.symmetric_mode ? up[a * k + b] + up[b * k + a]
                                                                     : up[a * k + b];
                            gi[a] += upstream * Wab * vj[b];
                            gj[b] += upstream * Wab * vi[a];
                            // d/d u_ab: v_i[a] v_j[b] (+ v_i[b] v_j[a] via the transpose)
                            double d = vi[a] * vj[b];
                            if (params.symmetric_mode) d += vi[b] * vj[a];
                            gu[a * k + b] += upstream * d;
                        }
                    }
                    break;
                }
                default:
                    break;
            }
        }
    }
}

inline SparseGradient gradient(const ShallowParams& params, const Instance& inst, double upstream) {
    SparseGradient grad;
    accumulate_gradient(params, inst, upstream, grad);
    return grad;
}

}  // namespace fefm
