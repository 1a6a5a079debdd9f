#pragma once

#include "umtn/dataset.hpp"
#include "umtn/error.hpp"
#include "umtn/model.hpp"
#include "umtn/training.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <vector>

namespace umtn {

/// (1 / (T n)) sum |truth - pred|.
inline double mae(const Matrix& truth, const Matrix& pred) {
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
        throw ArgumentError("mae: shape mismatch");
    if (truth.size() == 0) throw ArgumentError("mae: empty input");
    return (truth - pred).cwiseAbs().sum() / static_cast<double>(truth.size());
}

struct EvalReport {
    double mae_mean = 0.0;
    /// Sample standard deviation over runs; 0 when there is a single run.
    double mae_std = 0.0;
    bool std_defined = false;
    std::vector<double> per_run;
    Vector per_step;  // length T
    Vector per_site;  // length n
    int tau = 0;
    int horizon = 0;
    int n_runs = 0;
    std::string model;
};

/// Single-run report from per-sequence forecasts (T x n each).
inline EvalReport score_forecasts(const SequenceDataset& ds, const std::vector<std::size_t>& seqs,
                                  const std::vector<Matrix>& preds, int tau, int horizon) {
    if (seqs.empty()) throw ArgumentError("evaluation split is empty");
    EvalReport rep;
    rep.tau = tau;
    rep.horizon = horizon;
    rep.n_runs = 1;
    const auto n = static_cast<Eigen::Index>(ds.n_sites());
    rep.per_step = Vector::Zero(horizon);
    rep.per_site = Vector::Zero(n);
    double total = 0.0;
    for (std::size_t k = 0; k < seqs.size(); ++k) {
        const Matrix truth = ds.sequence(seqs[k]).middleRows(tau, horizon);
        const Matrix err = (truth - preds[k]).cwiseAbs();
        total += mae(truth, preds[k]);
        rep.per_step += err.rowwise().mean();
        rep.per_site += err.colwise().mean().transpose();
    }
    const double count = static_cast<double>(seqs.size());
    rep.per_step /= count;
    rep.per_site /= count;
    rep.per_run = {total / count};
    rep.mae_mean = rep.per_run[0];
    return rep;
}

inline void check_eval_args(const SequenceDataset& ds, int tau, int horizon) {
    if (tau < 1) throw ArgumentError("evaluation: tau must be >= 1");
    if (horizon < 1) throw ArgumentError("evaluation: T must be >= 1");
    if (static_cast<std::size_t>(tau + horizon) > ds.length)
        throw ArgumentError("evaluation: tau + T exceeds sequence length");
}

/// Closed-loop evaluation of one trained model on a split.
inline EvalReport evaluate_model(const Forecaster& model, const SequenceDataset& ds, Split split, int tau, int horizon) {
    check_eval_args(ds, tau, horizon);
    if (model.geometry().site_hash != ds.sites.hash())
        throw ValidationError("checkpoint site set does not match the dataset");
    const auto seqs = ds.indices(split);
    if (seqs.empty()) throw ArgumentError("evaluation split is empty");
    auto rep = score_forecasts(ds, seqs, forecast(model, ds, seqs, tau, horizon), tau, horizon);
    rep.model = model.kind();
    return rep;
}

/// Combines independent runs: mean and sample std of the run MAEs, and
/// averaged per-step/per-site curves.
inline EvalReport aggregate_runs(const std::vector<EvalReport>& runs) {
    if (runs.empty()) throw ArgumentError("aggregate_runs: no runs");
    EvalReport rep = runs[0];
    rep.per_run.clear();
    rep.per_step.setZero();
    rep.per_site.setZero();
    for (const auto& r : runs) {
        rep.per_run.push_back(r.mae_mean);
        rep.per_step += r.per_step;
        rep.per_site += r.per_site;
    }
    const double k = static_cast<double>(runs.size());
    rep.per_step /= k;
    rep.per_site /= k;
    rep.n_runs = static_cast<int>(runs.size());
    rep.mae_mean = std::accumulate(rep.per_run.begin(), rep.per_run.end(), 0.0) / k;
    if (runs.size() > 1) {
        double ss = 0.0;
        for (double v : rep.per_run) ss += (v - rep.mae_mean) * (v - rep.mae_mean);
        rep.mae_std = std::sqrt(ss / (k - 1.0));
        rep.std_defined = true;
    } else {
        rep.mae_std = 0.0;
        rep.std_defined = false;
    }
    return rep;
}

/// Repeated train-and-evaluate: `train_run(seed)` must return a freshly
/// trained model for each seed.
inline EvalReport evaluate_runs(const std::function<std::unique_ptr<Forecaster>(std::uint64_t)>& train_run,
                                const SequenceDataset& ds, Split split, int tau, int horizon,
                                const std::vector<std::uint64_t>& seeds) {
    std::vector<EvalReport> runs;
    for (auto s : seeds) {
        const auto model = train_run(s);
        runs.push_back(evaluate_model(*model, ds, split, tau, horizon));
    }
    return aggregate_runs(runs);
}

/// Repeats the last observed frame u_{tau-1} for every future step.
inline EvalReport persistence_baseline(const SequenceDataset& ds, Split split, int tau, int horizon) {
    check_eval_args(ds, tau, horizon);
    const auto seqs = ds.indices(split);
    if (seqs.empty()) throw ArgumentError("evaluation split is empty");
    std::vector<Matrix> preds;
    preds.reserve(seqs.size());
    for (auto k : seqs) preds.push_back(ds.sequence(k).row(tau - 1).replicate(horizon, 1));
    auto rep = score_forecasts(ds, seqs, preds, tau, horizon);
    rep.model = "persistence";
    return rep;
}

inline void write_per_step_csv(std::ostream& os, const EvalReport& r) {
    os.precision(17);
    os << "step,mae\n";
    for (Eigen::Index t = 0; t < r.per_step.size(); ++t) os << (r.tau + t) << ',' << r.per_step(t) << '\n';
}

inline void write_per_site_csv(std::ostream& os, const EvalReport& r, const SiteSet& sites) {
    os.precision(17);
    os << "site";
    for (Eigen::Index k = 0; k < sites.dim(); ++k) os << ",x" << (k + 1);
    os << ",mae\n";
    for (Eigen::Index i = 0; i < r.per_site.size(); ++i) {
        os << i;
        for (Eigen::Index k = 0; k < sites.dim(); ++k) os << ',' << sites.coords()(i, k);
        os << ',' << r.per_site(i) << '\n';
    }
}

}  // namespace umtn
