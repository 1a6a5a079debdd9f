#pragma once

#include "umtn/autodiff.hpp"
#include "umtn/dataset.hpp"
#include "umtn/error.hpp"
#include "umtn/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <vector>

namespace umtn {

/// Copy of `ds` normalized with its training-split mean and standard
/// deviation. Zero variance falls back to a divisor of 1 (with a warning).
inline SequenceDataset normalize(const SequenceDataset& ds, std::ostream* warn = &std::cerr) {
    SequenceDataset out = ds;
    out.stats = compute_training_stats(ds);
    if (out.stats.degenerate() && warn) *warn << "warning: training split has zero variance; using divisor 1\n";
    const double mean = out.stats.mean, scale = out.stats.scale();
    for (double& v : out.values) v = (v - mean) / scale;
    out.normalized = true;
    return out;
}

inline SequenceDataset denormalize(const SequenceDataset& ds) {
    if (!ds.normalized) return ds;
    SequenceDataset out = ds;
    for (double& v : out.values) v = ds.stats.denormalize(v);
    out.normalized = false;
    return out;
}

/// Inverse-sigmoid teacher-forcing probability k / (k + exp(epoch / k)).
inline double scheduled_sampling_prob(long epoch, double k) {
    if (epoch < 0) throw ArgumentError("scheduled sampling: epoch must be >= 0");
    if (!(k > 0.0)) throw ArgumentError("scheduled sampling: k must be positive");
    return k / (k + std::exp(static_cast<double>(epoch) / k));
}

struct TrainConfig {
    double lr = 1e-3;
    int max_epochs = 1000;
    int patience = 50;
    /// 0 selects min(32, number of training sequences).
    int batch_size = 0;
    double scheduled_sampling_k = 50.0;
    std::uint64_t seed = 0;
    int tau = 5;
    int horizon = 15;
    ad::AdamConfig adam{};

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (batch_size < 0) throw ConfigError("batch_size must be >= 0");
        if (!(scheduled_sampling_k > 0.0)) throw ConfigError("scheduled_sampling_k must be positive");
        if (tau < 1 || horizon < 1) throw ConfigError("tau and T must be >= 1");
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double teacher_prob = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_val_mae = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
};

/// n x B ground-truth frames for steps 0 .. steps-1 of the given sequences.
inline std::vector<ad::Array> batch_frames(const SequenceDataset& ds, const std::vector<std::size_t>& seqs,
                                           std::size_t steps) {
    std::vector<ad::Array> frames(steps, ad::Array(ds.n_sites(), seqs.size()));
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t b = 0; b < seqs.size(); ++b)
            frames[t].col(static_cast<Eigen::Index>(b)) = ds.frame(seqs[b], t);
    return frames;
}

/// Objective of one batch: sum over steps first..tau+T-1 of ||u_t - u-hat_t||^2,
/// averaged over the sequences of the batch.
inline Tensor rollout_loss(const RolloutOutput& out, const std::vector<ad::Array>& frames, int tau, int horizon) {
    const double batch = static_cast<double>(frames.front().cols());
    Tensor total;
    for (int t = out.first_step; t <= tau + horizon - 1; ++t) {
        Tensor term = ad::squared_error(out.at(t), Tensor::matrix(frames[static_cast<std::size_t>(t)]));
        total = total.defined() ? ad::add(total, term) : term;
    }
    return ad::scale(total, 1.0 / batch);
}

/// Closed-loop forecasts (T x n per sequence) for the given sequences.
inline std::vector<Matrix> forecast(const Forecaster& model, const SequenceDataset& ds,
                                    const std::vector<std::size_t>& seqs, int tau, int horizon,
                                    std::size_t batch = 64) {
    ad::NoGradGuard ng;
    std::vector<Matrix> out;
    out.reserve(seqs.size());
    for (std::size_t start = 0; start < seqs.size(); start += batch) {
        const std::vector<std::size_t> chunk(seqs.begin() + static_cast<std::ptrdiff_t>(start),
                                             seqs.begin() + static_cast<std::ptrdiff_t>(std::min(seqs.size(), start + batch)));
        const auto frames = batch_frames(ds, chunk, static_cast<std::size_t>(tau));
        const auto res = model.rollout_batch(frames, tau, horizon, 0.0, nullptr);
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            Matrix p(horizon, static_cast<Eigen::Index>(ds.n_sites()));
            for (int t = tau; t < tau + horizon; ++t) p.row(t - tau) = res.at(t).value().col(static_cast<Eigen::Index>(b)).transpose();
            out.push_back(std::move(p));
        }
    }
    return out;
}

/// Mean closed-loop MAE over steps tau..tau+T-1 of the given sequences.
inline double split_mae(const Forecaster& model, const SequenceDataset& ds, const std::vector<std::size_t>& seqs,
                        int tau, int horizon) {
    const auto preds = forecast(model, ds, seqs, tau, horizon);
    double total = 0.0;
    for (std::size_t k = 0; k < seqs.size(); ++k) {
        const Matrix truth = ds.sequence(seqs[k]).middleRows(tau, horizon);
        total += (truth - preds[k]).cwiseAbs().mean();
    }
    return total / static_cast<double>(seqs.size());
}

struct TrainOptions {
    /// Replaces the validation MAE (used to exercise early stopping).
    std::function<double(const Forecaster&, int epoch)> validation_metric;
    /// Called after every epoch.
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Minimizes the multi-step squared-error objective with Adam, scheduled
/// sampling and early stopping on validation MAE. On return the model holds
/// the parameters of the best validation epoch.
inline TrainHistory train_loop(Forecaster& model, const SequenceDataset& ds, const TrainConfig& cfg,
                               const TrainOptions& opts = {}) {
    cfg.validate();
    if (!ds.normalized) throw ConfigError("train_loop expects a normalized dataset");
    if (static_cast<std::size_t>(cfg.tau + cfg.horizon) > ds.length)
        throw ConfigError("tau + T exceeds the dataset sequence length");
    if (model.geometry().site_hash != ds.sites.hash())
        throw ValidationError("model geometry was built for a different site set");
    auto train = ds.indices(Split::train);
    const auto val = ds.indices(Split::val);
    if (train.empty()) throw ConfigError("training split is empty");
    if (val.empty() && !opts.validation_metric) throw ConfigError("validation split is empty");

    const std::size_t batch = cfg.batch_size > 0 ? static_cast<std::size_t>(cfg.batch_size)
                                                 : std::min<std::size_t>(32, train.size());
    const auto steps = static_cast<std::size_t>(cfg.tau + cfg.horizon);
    ad::AdamConfig adam = cfg.adam;
    adam.lr = cfg.lr;

    std::mt19937_64 rng(cfg.seed);
    TrainHistory hist;
    ParameterStore best = model.params().clone();
    int since_best = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double prob = scheduled_sampling_prob(epoch, cfg.scheduled_sampling_k);
        std::shuffle(train.begin(), train.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < train.size(); start += batch) {
            const std::vector<std::size_t> seqs(train.begin() + static_cast<std::ptrdiff_t>(start),
                                                train.begin() + static_cast<std::ptrdiff_t>(std::min(train.size(), start + batch)));
            const auto frames = batch_frames(ds, seqs, steps);
            const auto out = model.rollout_batch(frames, cfg.tau, cfg.horizon, prob, &rng);
            const Tensor loss = rollout_loss(out, frames, cfg.tau, cfg.horizon);
            if (!std::isfinite(loss.item()))
                throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch));
            loss_sum += loss.item() * static_cast<double>(seqs.size());
            ad::backward(loss, model.params());
            ad::adam_step(model.params(), adam);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        rec.teacher_prob = prob;
        rec.val_mae = opts.validation_metric ? opts.validation_metric(model, epoch)
                                             : split_mae(model, ds, val, cfg.tau, cfg.horizon);
        hist.epochs.push_back(rec);
        if (opts.on_epoch) opts.on_epoch(rec);

        if (rec.val_mae < hist.best_val_mae) {
            hist.best_val_mae = rec.val_mae;
            hist.best_epoch = epoch;
            best = model.params().clone();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            hist.stopped_early = true;
            break;
        }
    }
    model.params().assign_values(best);
    return hist;
}

}  // namespace umtn
