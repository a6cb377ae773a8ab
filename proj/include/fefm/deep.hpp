#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fefm/shallow.hpp"

namespace fefm {

enum class Mode { Train, Eval };

struct DnnParams {
    std::vector<int> widths{1024, 1024, 1024};
    double dropout = 0.2;
    int input_width = 0;
    std::vector<std::vector<double>> W;  // layer l: widths[l] x in_l, row-major
    std::vector<std::vector<double>> b;  // widths[l]
    std::vector<double> w_logit;         // widths.back(); no output bias

    int layers() const { return static_cast<int>(widths.size()); }
    int in_width(int l) const { return l == 0 ? input_width : widths[l - 1]; }

    static DnnParams init(int input_width, std::vector<int> widths, double dropout, uint64_t seed) {
        if (input_width < 1) throw ConfigError("DNN input width must be >= 1");
        for (int wdt : widths)
            if (wdt < 1) throw ConfigError("DNN layer width must be >= 1");
        DnnParams p;
        p.widths = std::move(widths);
        p.dropout = dropout;
        p.input_width = input_width;
        std::mt19937_64 rng(seed);
        for (int l = 0; l < p.layers(); ++l) {
            const int in = p.in_width(l);
            const int out = p.widths[l];
            // He-style scale for rectifier layers
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in));
            p.W.emplace_back(static_cast<size_t>(out) * in);
            for (auto& x : p.W.back()) x = dist(rng);
            p.b.emplace_back(out, 0.0);
        }
        std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / p.widths.back()));
        p.w_logit.resize(p.widths.back());
        for (auto& x : p.w_logit) x = dist(rng);
        return p;
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) {
        for (auto& layer : W)
            for (auto& x : layer) fn(x);
        for (auto& layer : b)
            for (auto& x : layer) fn(x);
        for (auto& x : w_logit) fn(x);
    }
};

struct DeepFefmParams {
    ShallowParams fefm;  // kind must be FEFM
    DnnParams dnn;
    // Table-5 ablation switches
    bool use_fefm_logit = true;
    bool use_linear_terms = true;
    bool dnn_input_feature_embeddings = true;
    bool dnn_input_fefm_embeddings = true;

    int pair_count() const { return fefm.n * (fefm.n - 1) / 2; }
    int dnn_input_width() const {
        int w = 0;
        if (dnn_input_fefm_embeddings) w += pair_count();
        if (dnn_input_feature_embeddings) w += fefm.n * fefm.k;
        if (w == 0) throw ConfigError("at least one DNN input block must be enabled");
        return w;
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) {
        fefm.for_each_param(fn);
        dnn.for_each_param(fn);
    }

    static DeepFefmParams init(int64_t m, int n, int k, std::vector<int> widths, double dropout,
                               uint64_t seed, bool symmetric_mode = true) {
        DeepFefmParams p;
        p.fefm = ShallowParams::init(ModelKind::FEFM, m, n, k, seed, 0.01, symmetric_mode);
        p.dnn = DnnParams::init(p.dnn_input_width(), std::move(widths), dropout, seed + 1);
        return p;
    }
};

// Pairwise bilinear scores at canonical pair order; component p({f,g}) is
// v_i^T W_{f,g} v_j for the active features of fields f < g.
inline std::vector<double> fefm_interaction_vector(const ShallowParams& fefm, const Instance& inst) {
    if (fefm.kind != ModelKind::FEFM) throw ConfigError("fefm_interaction_vector requires FEFM params");
    check_instance(fefm, inst);
    FieldPairIndex pairs(fefm.n);
    std::vector<double> out(pairs.count(), 0.0);
    for (int f = 0; f < fefm.n; ++f)
        for (int g = f + 1; g < fefm.n; ++g) {
            const int p = pairs.index(f, g);
            out[p] = pair_score_fefm(fefm.embedding(inst.active[f]), fefm.embedding(inst.active[g]),
                                     effective_pair_matrix(fefm, p));
        }
    return out;
}

struct DnnInputFlags {
    bool fefm_embeddings = true;
    bool feature_embeddings = true;
};

inline std::vector<double> build_dnn_input(const std::vector<double>& v_fefm,
                                           const std::vector<std::vector<double>>& active_embeddings,
                                           DnnInputFlags flags) {
    if (!flags.fefm_embeddings && !flags.feature_embeddings)
        throw ConfigError("both DNN input blocks disabled");
    std::vector<double> out;
    if (flags.fefm_embeddings) out.insert(out.end(), v_fefm.begin(), v_fefm.end());
    if (flags.feature_embeddings)
        for (const auto& e : active_embeddings) out.insert(out.end(), e.begin(), e.end());
    return out;
}

struct DnnCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;             // affine outputs per layer
    std::vector<std::vector<double>> post;            // after rectifier (+dropout)
    std::vector<std::vector<uint8_t>> mask;           // dropout keep mask per layer
    double keep = 1.0;
};

inline double dnn_forward(const DnnParams& dnn, const std::vector<double>& input, Mode mode,
                          std::mt19937_64& rng, DnnCache* cache = nullptr) {
    if (static_cast<int>(input.size()) != dnn.input_width) throw ConfigError("DNN input width mismatch");
    const bool drop = mode == Mode::Train && dnn.dropout > 0.0;
    const double keep = 1.0 - dnn.dropout;
    std::bernoulli_distribution keep_dist(keep);
    if (cache) {
        cache->input = input;
        cache->pre.clear();
        cache->post.clear();
        cache->mask.clear();
        cache->keep = drop ? keep : 1.0;
    }
    std::vector<double> h = input;
    for (int l = 0; l < dnn.layers(); ++l) {
        const int in = dnn.in_width(l);
        const int out = dnn.widths[l];
        std::vector<double> z(out);
        for (int o = 0; o < out; ++o) {
            double s = dnn.b[l][o];
            const double* row = dnn.W[l].data() + static_cast<size_t>(o) * in;
            for (int i = 0; i < in; ++i) s += row[i] * h[i];
            z[o] = s;
        }
        std::vector<double> a(out);
        std::vector<uint8_t> m;
        if (drop) m.resize(out, 1);
        for (int o = 0; o < out; ++o) {
            a[o] = z[o] > 0.0 ? z[o] : 0.0;
            if (drop) {
                // inverted dropout after each hidden activation
                if (keep_dist(rng)) {
                    a[o] /= keep;
                } else {
                    a[o] = 0.0;
                    m[o] = 0;
                }
            }
        }
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->post.push_back(a);
            cache->mask.push_back(std::move(m));
        }
        h = std::move(a);
    }
    double out = 0.0;
    for (int o = 0; o < dnn.widths.back(); ++o) out += dnn.w_logit[o] * h[o];
    return out;
}

struct DeepGradient {
    SparseGradient shallow;
    std::vector<std::vector<double>> d_W;
    std::vector<std::vector<double>> d_b;
    std::vector<double> d_w_logit;

    void ensure_shape(const DnnParams& dnn) {
        if (!d_W.empty()) return;
        for (int l = 0; l < dnn.layers(); ++l) {
            d_W.emplace_back(dnn.W[l].size(), 0.0);
            d_b.emplace_back(dnn.b[l].size(), 0.0);
        }
        d_w_logit.assign(dnn.w_logit.size(), 0.0);
    }
};

struct DeepCache {
    std::vector<double> v_fefm;
    DnnCache dnn;
};

inline double deepfefm_logit(const DeepFefmParams& params, const Instance& inst, Mode mode,
                             std::mt19937_64& rng, DeepCache* cache = nullptr) {
    const ShallowParams& fefm = params.fefm;
    check_instance(fefm, inst);
    double phi = 0.0;
    if (params.use_linear_terms) {
        phi += fefm.w0;
        for (int32_t i : inst.active) phi += fefm.w[i];
    }
    std::vector<double> v_fefm = fefm_interaction_vector(fefm, inst);
    if (params.use_fefm_logit)
        for (double s : v_fefm) phi += s;

    std::vector<std::vector<double>> active;
    if (params.dnn_input_feature_embeddings) {
        active.reserve(fefm.n);
        for (int32_t i : inst.active) {
            auto e = fefm.embedding(i);
            active.emplace_back(e.begin(), e.end());
        }
    }
    auto input = build_dnn_input(v_fefm, active,
                                 {params.dnn_input_fefm_embeddings, params.dnn_input_feature_embeddings});
    phi += dnn_forward(params.dnn, input, mode, rng, cache ? &cache->dnn : nullptr);
    if (cache) cache->v_fefm = std::move(v_fefm);
    return phi;
}

// Backprop through Eq-style composition: DNN head, concatenated input blocks,
// the pair-score map, and the linear/pairwise logit paths. Dropout masks come
// from the forward cache.
inline DeepGradient deepfefm_gradient(const DeepFefmParams& params, const Instance& inst,
                                      double upstream, const DeepCache& cache) {
    const ShallowParams& fefm = params.fefm;
    const DnnParams& dnn = params.dnn;
    const int n = fefm.n;
    const int k = fefm.k;
    if (static_cast<int>(cache.dnn.pre.size()) != dnn.layers()) throw ConfigError("stale forward cache");

    DeepGradient grad;
    grad.ensure_shape(dnn);

    // DNN head
    const auto& h_last = cache.dnn.post.back();
    std::vector<double> dh(h_last.size());
    for (size_t o = 0; o < h_last.size(); ++o) {
        grad.d_w_logit[o] += upstream * h_last[o];
        dh[o] = upstream * dnn.w_logit[o];
    }
    for (int l = dnn.layers() - 1; l >= 0; --l) {
        const int in = dnn.in_width(l);
        const int out = dnn.widths[l];
        const auto& h_in = l == 0 ? cache.dnn.input : cache.dnn.post[l - 1];
        std::vector<double> dz(out);
        for (int o = 0; o < out; ++o) {
            double d = dh[o];
            if (!cache.dnn.mask[l].empty()) d = cache.dnn.mask[l][o] ? d / cache.dnn.keep : 0.0;
            dz[o] = cache.dnn.pre[l][o] > 0.0 ? d : 0.0;
        }
        std::vector<double> dh_in(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double d = dz[o];
            if (d == 0.0) continue;
            double* gw = grad.d_W[l].data() + static_cast<size_t>(o) * in;
            const double* wrow = dnn.W[l].data() + static_cast<size_t>(o) * in;
            for (int i = 0; i < in; ++i) {
                gw[i] += d * h_in[i];
                dh_in[i] += d * wrow[i];
            }
            grad.d_b[l][o] += d;
        }
        dh = std::move(dh_in);
    }

    // dh now holds d(phi)/d(input). Split into the enabled blocks.
    FieldPairIndex pairs(n);
    const int npairs = pairs.count();
    std::vector<double> d_score(npairs, 0.0);
    size_t off = 0;
    if (params.dnn_input_fefm_embeddings) {
        for (int p = 0; p < npairs; ++p) d_score[p] += dh[off + p];
        off += npairs;
    }
    if (params.use_fefm_logit)
        for (int p = 0; p < npairs; ++p) d_score[p] += upstream;

    // pair scores: v_i^T W_p v_j
    for (int f = 0; f < n; ++f) {
        for (int g = f + 1; g < n; ++g) {
            const int p = pairs.index(f, g);
            const double coef = d_score[p];
            if (coef == 0.0) continue;
            const int64_t i = inst.active[f];
            const int64_t j = inst.active[g];
            auto up = fefm.u_block(p);
            auto vi = fefm.embedding(i);
            auto vj = fefm.embedding(j);
            auto& gi = grad.shallow.vec(grad.shallow.d_v, i, k);
            auto& gj = grad.shallow.vec(grad.shallow.d_v, j, k);
            auto& gu = grad.shallow.vec(grad.shallow.d_u, p, k * k);
            for (int a = 0; a < k; ++a) {
                for (int b = 0; b < k; ++b) {
                    const double Wab =
                        fefm.symmetric_mode ? up[a * k + b] + up[b * k + a] : up[a * k + b];
                    gi[a] += coef * Wab * vj[b];
                    gj[b] += coef * Wab * vi[a];
                    double d = vi[a] * vj[b];
                    if (fefm.symmetric_mode) d += vi[b] * vj[a];
                    gu[a * k + b] += coef * d;
                }
            }
        }
    }

    // feature-embedding input block feeds v directly
    if (params.dnn_input_feature_embeddings) {
        for (int f = 0; f < n; ++f) {
            auto& gi = grad.shallow.vec(grad.shallow.d_v, inst.active[f], k);
            for (int t = 0; t < k; ++t) gi[t] += dh[off + static_cast<size_t>(f) * k + t];
        }
    }

    if (params.use_linear_terms) {
        grad.shallow.d_w0 += upstream;
        for (int32_t i : inst.active) grad.shallow.d_w[i] += upstream;
    }
    return grad;
}

}  // namespace fefm
