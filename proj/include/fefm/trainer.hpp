#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "fefm/data.hpp"
#include "fefm/deep.hpp"
#include "fefm/metrics.hpp"
#include "fefm/shallow.hpp"

namespace fefm {

struct TrainConfig {
    double eta = 0.05;
    double lambda1 = 0.0;      // linear parameters (w0, w)
    double lambda2 = 0.0;      // feature embeddings (v, v_ffm)
    double lambda3 = 0.0;      // field-pair parameters (r, u)
    double lambda_deep = 0.0;  // DNN weight matrices and output weights
    int batch_size = 1024;
    int max_epochs = 20;
    double min_delta = 0.000005;
    int patience = 2;
    uint64_t seed = 42;
    bool shuffle_each_epoch = true;

    void validate() const {
        if (eta <= 0) throw ConfigError("eta must be > 0");
        if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda_deep < 0)
            throw ConfigError("regularization strengths must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (patience < 0) throw ConfigError("patience must be >= 0");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    }
};

struct AdaGradState {
    double eps = 1e-7;
    double acc_w0 = 0.0;
    std::vector<double> acc_w, acc_v, acc_v_ffm, acc_r, acc_u;
    std::vector<std::vector<double>> acc_W, acc_b;
    std::vector<double> acc_w_logit;

    static constexpr double kInitialAccumulator = 0.1;

    static AdaGradState shaped_like(const ShallowParams& p) {
        AdaGradState s;
        s.acc_w0 = kInitialAccumulator;
        s.acc_w.assign(p.w.size(), kInitialAccumulator);
        s.acc_v.assign(p.v.size(), kInitialAccumulator);
        s.acc_v_ffm.assign(p.v_ffm.size(), kInitialAccumulator);
        s.acc_r.assign(p.r.size(), kInitialAccumulator);
        s.acc_u.assign(p.u.size(), kInitialAccumulator);
        return s;
    }
    static AdaGradState shaped_like(const DeepFefmParams& p) {
        AdaGradState s = shaped_like(p.fefm);
        for (const auto& layer : p.dnn.W) s.acc_W.emplace_back(layer.size(), kInitialAccumulator);
        for (const auto& layer : p.dnn.b) s.acc_b.emplace_back(layer.size(), kInitialAccumulator);
        s.acc_w_logit.assign(p.dnn.w_logit.size(), kInitialAccumulator);
        return s;
    }
};

inline void adagrad_apply(double& theta, double& acc, double g, double eta, double eps) {
    acc += g * g;
    theta -= eta * g / (std::sqrt(acc) + eps);
}

// One mini-batch step: mean loss over the batch, sparse gradients of the
// mean data term, lazy L2 on parameters the batch touched, single AdaGrad
// update. Returns the (pre-update) mean data loss.
inline double batch_step(ShallowParams& model, std::span<const Instance> batch, const TrainConfig& cfg,
                         AdaGradState& opt) {
    if (batch.empty()) throw DataError("empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double mean_loss = 0.0;
    SparseGradient grad;
    for (const Instance& inst : batch) {
        const double phi = logit(model, inst);
        mean_loss += instance_loss(phi, inst.label) * inv_b;
        const double upstream = -inst.label * sigmoid(-inst.label * phi) * inv_b;
        accumulate_gradient(model, inst, upstream, grad);
    }

    grad.d_w0 += cfg.lambda1 * model.w0;
    for (auto& [i, g] : grad.d_w) g += cfg.lambda1 * model.w[i];
    for (auto& [i, gv] : grad.d_v)
        for (int t = 0; t < model.k; ++t) gv[t] += cfg.lambda2 * model.v[i * model.k + t];
    for (auto& [slot, gv] : grad.d_v_ffm)
        for (int t = 0; t < model.k; ++t) gv[t] += cfg.lambda2 * model.v_ffm[slot * model.k + t];
    for (auto& [p, g] : grad.d_r) g += cfg.lambda3 * model.r[p];
    for (auto& [p, gu] : grad.d_u) {
        const int64_t off = static_cast<int64_t>(p) * model.k * model.k;
        for (int t = 0; t < model.k * model.k; ++t) gu[t] += cfg.lambda3 * model.u[off + t];
    }

    adagrad_apply(model.w0, opt.acc_w0, grad.d_w0, cfg.eta, opt.eps);
    for (auto& [i, g] : grad.d_w) adagrad_apply(model.w[i], opt.acc_w[i], g, cfg.eta, opt.eps);
    for (auto& [i, gv] : grad.d_v)
        for (int t = 0; t < model.k; ++t)
            adagrad_apply(model.v[i * model.k + t], opt.acc_v[i * model.k + t], gv[t], cfg.eta, opt.eps);
    for (auto& [slot, gv] : grad.d_v_ffm)
        for (int t = 0; t < model.k; ++t)
            adagrad_apply(model.v_ffm[slot * model.k + t], opt.acc_v_ffm[slot * model.k + t], gv[t],
                          cfg.eta, opt.eps);
    for (auto& [p, g] : grad.d_r) adagrad_apply(model.r[p], opt.acc_r[p], g, cfg.eta, opt.eps);
    for (auto& [p, gu] : grad.d_u) {
        const int64_t off = static_cast<int64_t>(p) * model.k * model.k;
        for (int t = 0; t < model.k * model.k; ++t)
            adagrad_apply(model.u[off + t], opt.acc_u[off + t], gu[t], cfg.eta, opt.eps);
    }
    return mean_loss;
}

inline double batch_step(DeepFefmParams& model, std::span<const Instance> batch, const TrainConfig& cfg,
                         AdaGradState& opt, std::mt19937_64& dropout_rng) {
    if (batch.empty()) throw DataError("empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double mean_loss = 0.0;
    DeepGradient total;
    total.ensure_shape(model.dnn);
    for (const Instance& inst : batch) {
        DeepCache cache;
        const double phi = deepfefm_logit(model, inst, Mode::Train, dropout_rng, &cache);
        mean_loss += instance_loss(phi, inst.label) * inv_b;
        const double upstream = -inst.label * sigmoid(-inst.label * phi) * inv_b;
        DeepGradient g = deepfefm_gradient(model, inst, upstream, cache);
        total.shallow.d_w0 += g.shallow.d_w0;
        for (auto& [i, gv] : g.shallow.d_w) total.shallow.d_w[i] += gv;
        for (auto& [i, gv] : g.shallow.d_v) {
            auto& dst = total.shallow.vec(total.shallow.d_v, i, model.fefm.k);
            for (int t = 0; t < model.fefm.k; ++t) dst[t] += gv[t];
        }
        for (auto& [p, gu] : g.shallow.d_u) {
            auto& dst = total.shallow.vec(total.shallow.d_u, p, model.fefm.k * model.fefm.k);
            for (size_t t = 0; t < gu.size(); ++t) dst[t] += gu[t];
        }
        for (size_t l = 0; l < g.d_W.size(); ++l) {
            for (size_t t = 0; t < g.d_W[l].size(); ++t) total.d_W[l][t] += g.d_W[l][t];
            for (size_t t = 0; t < g.d_b[l].size(); ++t) total.d_b[l][t] += g.d_b[l][t];
        }
        for (size_t t = 0; t < g.d_w_logit.size(); ++t) total.d_w_logit[t] += g.d_w_logit[t];
    }

    ShallowParams& fefm = model.fefm;
    auto& sg = total.shallow;
    sg.d_w0 += cfg.lambda1 * fefm.w0;
    for (auto& [i, g] : sg.d_w) g += cfg.lambda1 * fefm.w[i];
    for (auto& [i, gv] : sg.d_v)
        for (int t = 0; t < fefm.k; ++t) gv[t] += cfg.lambda2 * fefm.v[i * fefm.k + t];
    for (auto& [p, gu] : sg.d_u) {
        const int64_t off = static_cast<int64_t>(p) * fefm.k * fefm.k;
        for (size_t t = 0; t < gu.size(); ++t) gu[t] += cfg.lambda3 * fefm.u[off + t];
    }
    for (size_t l = 0; l < total.d_W.size(); ++l)
        for (size_t t = 0; t < total.d_W[l].size(); ++t) total.d_W[l][t] += cfg.lambda_deep * model.dnn.W[l][t];
    for (size_t t = 0; t < total.d_w_logit.size(); ++t)
        total.d_w_logit[t] += cfg.lambda_deep * model.dnn.w_logit[t];

    adagrad_apply(fefm.w0, opt.acc_w0, sg.d_w0, cfg.eta, opt.eps);
    for (auto& [i, g] : sg.d_w) adagrad_apply(fefm.w[i], opt.acc_w[i], g, cfg.eta, opt.eps);
    for (auto& [i, gv] : sg.d_v)
        for (int t = 0; t < fefm.k; ++t)
            adagrad_apply(fefm.v[i * fefm.k + t], opt.acc_v[i * fefm.k + t], gv[t], cfg.eta, opt.eps);
    for (auto& [p, gu] : sg.d_u) {
        const int64_t off = static_cast<int64_t>(p) * fefm.k * fefm.k;
        for (size_t t = 0; t < gu.size(); ++t)
            adagrad_apply(fefm.u[off + t], opt.acc_u[off + t], gu[t], cfg.eta, opt.eps);
    }
    for (size_t l = 0; l < total.d_W.size(); ++l) {
        for (size_t t = 0; t < total.d_W[l].size(); ++t)
            adagrad_apply(model.dnn.W[l][t], opt.acc_W[l][t], total.d_W[l][t], cfg.eta, opt.eps);
        for (size_t t = 0; t < total.d_b[l].size(); ++t)
            adagrad_apply(model.dnn.b[l][t], opt.acc_b[l][t], total.d_b[l][t], cfg.eta, opt.eps);
    }
    for (size_t t = 0; t < total.d_w_logit.size(); ++t)
        adagrad_apply(model.dnn.w_logit[t], opt.acc_w_logit[t], total.d_w_logit[t], cfg.eta, opt.eps);
    return mean_loss;
}

inline double eval_logit(const ShallowParams& model, const Instance& inst) { return logit(model, inst); }

inline double eval_logit(const DeepFefmParams& model, const Instance& inst) {
    std::mt19937_64 unused(0);  // eval mode draws no randomness
    return deepfefm_logit(model, inst, Mode::Eval, unused);
}

template <typename M>
std::vector<double> predict_probabilities(const M& model, const Dataset& ds) {
    std::vector<double> probs;
    probs.reserve(ds.instances.size());
    for (const auto& inst : ds.instances) probs.push_back(sigmoid(eval_logit(model, inst)));
    return probs;
}

struct EvalResult {
    double auc = 0.0;
    double log_loss = 0.0;
};

template <typename M>
EvalResult evaluate(const M& model, const Dataset& ds) {
    auto probs = predict_probabilities(model, ds);
    std::vector<int> labels;
    labels.reserve(ds.instances.size());
    for (const auto& inst : ds.instances) labels.push_back(inst.label);
    return {auc_metric(probs, labels), log_loss_metric(probs, labels)};
}

// Early-stopping rule: stop once the validation loss has failed to improve
// the best by more than min_delta for `patience` consecutive epochs. The
// best-loss tracker itself uses the strict minimum, so the returned model is
// always the argmin epoch.
struct EarlyStopper {
    double min_delta;
    int patience;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int wait = 0;

    EarlyStopper(double delta, int pat) : min_delta(delta), patience(pat) {}

    // epoch is 1-based; returns true when training should stop after it
    bool update(int epoch, double loss) {
        if (loss < best - min_delta)
            wait = 0;
        else
            ++wait;
        if (loss < best) {
            best = loss;
            best_epoch = epoch;
        }
        return wait >= patience;
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_logloss = 0.0;
    double val_auc = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    int best_epoch = 0;
    double best_val_logloss = 0.0;
    int stopped_epoch = 0;
};

inline void write_history_csv(std::ostream& out, const TrainHistory& hist) {
    out << "epoch,train_loss,val_logloss,val_auc,seconds\n";
    char buf[160];
    for (const auto& rec : hist.records) {
        std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f,%.3f\n", rec.epoch, rec.train_loss,
                      rec.val_logloss, rec.val_auc, rec.seconds);
        out << buf;
    }
}

namespace detail {
template <typename M>
double run_batch(M& model, std::span<const Instance> batch, const TrainConfig& cfg, AdaGradState& opt,
                 std::mt19937_64& rng) {
    if constexpr (std::is_same_v<M, DeepFefmParams>)
        return batch_step(model, batch, cfg, opt, rng);
    else
        return batch_step(model, batch, cfg, opt);
}
}  // namespace detail

// Mini-batch epochs with per-epoch derived shuffle seeds, validation after
// each epoch, early stopping, best-epoch model returned.
template <typename M>
std::pair<M, TrainHistory> fit(M model, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
    cfg.validate();
    if (train.instances.empty() || val.instances.empty()) throw DataError("empty train or validation set");

    AdaGradState opt = AdaGradState::shaped_like(model);
    EarlyStopper stopper(cfg.min_delta, cfg.patience);
    TrainHistory hist;
    M best_model = model;

    std::vector<int64_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<Instance> batch;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        if (cfg.shuffle_each_epoch) {
            std::seed_seq seq{cfg.seed, static_cast<uint64_t>(epoch)};
            std::mt19937_64 rng(seq);
            std::shuffle(order.begin(), order.end(), rng);
        }
        double train_loss = 0.0;
        int64_t done = 0;
        while (done < train.size()) {
            const int64_t take = std::min<int64_t>(cfg.batch_size, train.size() - done);
            batch.clear();
            for (int64_t i = 0; i < take; ++i) batch.push_back(train.instances[order[done + i]]);
            const double loss = detail::run_batch(model, std::span<const Instance>(batch), cfg, opt, dropout_rng);
            train_loss += loss * static_cast<double>(take);
            done += take;
        }
        train_loss /= static_cast<double>(train.size());

        const EvalResult ev = evaluate(model, val);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.records.push_back({epoch, train_loss, ev.log_loss, ev.auc, secs});

        const double prev_best = stopper.best;
        const bool stop = stopper.update(epoch, ev.log_loss);
        if (ev.log_loss < prev_best) best_model = model;
        if (stop) {
            hist.stopped_epoch = epoch;
            break;
        }
        hist.stopped_epoch = epoch;
    }
    hist.best_epoch = stopper.best_epoch;
    hist.best_val_logloss = stopper.best;
    return {std::move(best_model), std::move(hist)};
}

}  // namespace fefm
