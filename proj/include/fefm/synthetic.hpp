#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "fefm/data.hpp"
#include "fefm/metrics.hpp"
#include "fefm/shallow.hpp"

namespace fefm {

// Synthetic CTR benchmark with planted field-specific interactions: every
// feature gets a latent embedding, every field pair a random sign, and the
// generating logit is sum_{f<g} sign_{fg} * <e_i, e_j>. Shared-embedding FM
// cannot represent the conflicting signs; FEFM can (W = sign * I), which is
// what the learning-sanity benchmark exploits.
struct SyntheticSpec {
    int n_fields = 8;
    int features_per_field = 10;
    int latent_dim = 4;
    double scale = 6.0;  // logit scale; larger means more separable labels
    int64_t size = 20000;
};

inline Dataset make_planted_dataset(const SyntheticSpec& spec, uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int n = spec.n_fields;
    const int64_t m = static_cast<int64_t>(n) * spec.features_per_field;
    std::normal_distribution<double> emb_dist(0.0, 1.0 / std::sqrt(spec.latent_dim));
    std::vector<double> latent(m * spec.latent_dim);
    for (auto& x : latent) x = emb_dist(rng);

    FieldPairIndex pairs(n);
    std::vector<double> sign(pairs.count());
    std::bernoulli_distribution coin(0.5);
    for (auto& s : sign) s = coin(rng) ? 1.0 : -1.0;

    std::uniform_int_distribution<int> feat_dist(0, spec.features_per_field - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Dataset ds;
    ds.n = n;
    ds.m = m;
    ds.instances.reserve(spec.size);
    for (int64_t d = 0; d < spec.size; ++d) {
        Instance inst;
        inst.active.resize(n);
        for (int f = 0; f < n; ++f)
            inst.active[f] = static_cast<int32_t>(f * spec.features_per_field + feat_dist(rng));
        double score = 0.0;
        for (int f = 0; f < n; ++f) {
            for (int g = f + 1; g < n; ++g) {
                const double* ei = latent.data() + static_cast<int64_t>(inst.active[f]) * spec.latent_dim;
                const double* ej = latent.data() + static_cast<int64_t>(inst.active[g]) * spec.latent_dim;
                double dot = 0.0;
                for (int t = 0; t < spec.latent_dim; ++t) dot += ei[t] * ej[t];
                score += sign[pairs.index(f, g)] * dot;
            }
        }
        inst.label = unif(rng) < sigmoid(spec.scale * score) ? 1 : -1;
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

}  // namespace fefm
