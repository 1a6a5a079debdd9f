#pragma once

#include "umtn/dataset.hpp"
#include "umtn/error.hpp"
#include "umtn/kernels.hpp"
#include "umtn/sites.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <vector>

namespace umtn {

inline constexpr double kConditionLimit = 1e14;
inline constexpr double kConditionWarning = 1e10;

/// Phi_ij = phi(||x_i - x_j||).
inline Matrix kernel_matrix(const RadialKernel& k, const SiteSet& sites) {
    const auto n = sites.size();
    Matrix phi(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) phi(i, j) = k(sites.distances()(i, j));
    return phi;
}

/// The RBF interpolation matrix of a site set and everything derived from
/// it. Solves go through a symmetric eigendecomposition, which is safe for
/// the indefinite multiquadric matrix and gives the condition number, the
/// explicit inverse and the ridge-regularized solutions for free.
class InterpolationSystem {
public:
    InterpolationSystem(const RadialKernel& kernel, SiteSet sites)
        : kernel_(kernel), sites_(std::move(sites)) {
        phi_ = kernel_matrix(kernel_, sites_);
        Eigen::SelfAdjointEigenSolver<Matrix> es(phi_);
        if (es.info() != Eigen::Success)
            throw ConditioningError("eigendecomposition of the interpolation matrix failed",
                                    std::numeric_limits<double>::infinity());
        eigvals_ = es.eigenvalues();
        eigvecs_ = es.eigenvectors();
        const double lo = eigvals_.cwiseAbs().minCoeff();
        const double hi = eigvals_.cwiseAbs().maxCoeff();
        condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        if (!(condition_ <= kConditionLimit))
            throw ConditioningError("interpolation matrix condition estimate " +
                                        std::to_string(condition_) + " exceeds limit",
                                    condition_);
        inverse_ = eigvecs_ * eigvals_.cwiseInverse().asDiagonal() * eigvecs_.transpose();
        inverse_max_abs_ = inverse_.cwiseAbs().maxCoeff();
        scaled_inverse_ = inverse_ / inverse_max_abs_;
    }

    const RadialKernel& kernel() const noexcept { return kernel_; }
    const SiteSet& sites() const noexcept { return sites_; }
    Eigen::Index size() const noexcept { return sites_.size(); }
    const Matrix& phi() const noexcept { return phi_; }
    const Matrix& inverse() const noexcept { return inverse_; }
    /// Phi^-1 divided by its largest-magnitude entry.
    const Matrix& scaled_inverse() const noexcept { return scaled_inverse_; }
    double inverse_max_abs() const noexcept { return inverse_max_abs_; }
    double condition() const noexcept { return condition_; }
    bool ill_conditioned() const noexcept { return condition_ > kConditionWarning; }

    /// Phi^-1 b (exact interpolation).
    Vector solve(const Vector& b) const {
        check_length(b.size());
        return eigvecs_ * (eigvals_.cwiseInverse().asDiagonal() * (eigvecs_.transpose() * b));
    }

    /// argmin ||Phi c - u||^2 + lambda ||c||^2.
    Vector fit(const Vector& u, double lambda) const {
        check_length(u.size());
        if (!u.allFinite()) throw ArgumentError("fit_coefficients: values must be finite");
        return fit_matrix(lambda) * u;
    }

    /// Linear map u -> c of the regularized fit, (Phi^T Phi + lambda I)^-1 Phi^T.
    Matrix fit_matrix(double lambda) const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw ArgumentError("fit_coefficients: lambda must be >= 0");
        const Vector filt =
            eigvals_.unaryExpr([lambda](double s) { return s / (s * s + lambda); });
        return eigvecs_ * filt.asDiagonal() * eigvecs_.transpose();
    }

private:
    void check_length(Eigen::Index m) const {
        if (m != size())
            throw ArgumentError("length " + std::to_string(m) + " does not match " +
                                std::to_string(size()) + " sites");
    }

    RadialKernel kernel_;
    SiteSet sites_;
    Matrix phi_;
    Vector eigvals_;
    Matrix eigvecs_;
    Matrix inverse_;
    Matrix scaled_inverse_;
    double inverse_max_abs_ = 1.0;
    double condition_ = 1.0;
};

inline InterpolationSystem build_phi(const RadialKernel& k, const SiteSet& sites) {
    return InterpolationSystem(k, sites);
}

inline Vector fit_coefficients(const InterpolationSystem& sys, const Vector& values, double lambda) {
    return sys.fit(values, lambda);
}

inline Matrix scaled_inverse(const InterpolationSystem& sys) { return sys.scaled_inverse(); }

/// sum_j c_j phi(||q - x_j||) for each query row q.
inline Vector evaluate_interpolant(const RadialKernel& k, const SiteSet& sites, const Vector& coeffs,
                                   const Matrix& queries) {
    if (coeffs.size() != sites.size())
        throw ArgumentError("evaluate_interpolant: coefficient count does not match sites");
    if (queries.cols() != sites.dim())
        throw ArgumentError("evaluate_interpolant: query dimension does not match sites");
    Vector out(queries.rows());
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < sites.size(); ++j)
            s += coeffs(j) * k((queries.row(q) - sites.coords().row(j)).norm());
        out(q) = s;
    }
    return out;
}

struct LoocvScore {
    RadialKernel kernel;
    double mean_abs_error = std::numeric_limits<double>::infinity();
};

struct LoocvResult {
    RadialKernel best;
    std::size_t best_index = 0;
    std::vector<LoocvScore> scores;
};

/// Leave-one-out kernel selection: for every snapshot one seeded-random site
/// is held out, the exact interpolant on the remaining sites predicts it and
/// the absolute errors are averaged. Candidates whose (reduced) systems are
/// singular or too ill-conditioned score +inf. Ties go to the earlier candidate.
inline LoocvResult loocv_select_kernel(const std::vector<RadialKernel>& candidates,
                                       const SiteSet& sites, const std::vector<Vector>& snapshots,
                                       std::uint64_t seed) {
    if (candidates.empty()) throw ArgumentError("loocv: no candidate kernels");
    if (snapshots.empty()) throw ArgumentError("loocv: no training snapshots");
    const auto n = sites.size();
    if (n < 2) throw DomainError("loocv needs at least two sites");
    for (const auto& s : snapshots)
        if (s.size() != n) throw ArgumentError("loocv: snapshot length does not match sites");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    std::vector<Eigen::Index> left_out(snapshots.size());
    for (auto& k : left_out) k = pick(rng);

    LoocvResult result;
    for (const auto& cand : candidates) {
        LoocvScore score{cand, std::numeric_limits<double>::infinity()};
        try {
            const Matrix phi = kernel_matrix(cand, sites);
            // Whole-system guard first; the reduced systems interlace with it.
            Eigen::SelfAdjointEigenSolver<Matrix> es(phi, Eigen::EigenvaluesOnly);
            const double lo = es.eigenvalues().cwiseAbs().minCoeff();
            const double cond = lo > 0 ? es.eigenvalues().cwiseAbs().maxCoeff() / lo
                                       : std::numeric_limits<double>::infinity();
            if (!(cond <= kConditionLimit)) throw ConditioningError("loocv candidate", cond);

            std::map<Eigen::Index, Eigen::PartialPivLU<Matrix>> factors;
            double total = 0.0;
            for (std::size_t s = 0; s < snapshots.size(); ++s) {
                const Eigen::Index k = left_out[s];
                std::vector<Eigen::Index> keep;
                keep.reserve(static_cast<std::size_t>(n - 1));
                for (Eigen::Index j = 0; j < n; ++j)
                    if (j != k) keep.push_back(j);
                auto it = factors.find(k);
                if (it == factors.end())
                    it = factors.emplace(k, Eigen::PartialPivLU<Matrix>(phi(keep, keep))).first;
                const Vector rhs = snapshots[s](keep);
                const Vector c = it->second.solve(rhs);
                const double pred = phi(k, keep).dot(c);
                total += std::abs(pred - snapshots[s](k));
            }
            const double mean = total / static_cast<double>(snapshots.size());
            if (std::isfinite(mean)) score.mean_abs_error = mean;
        } catch (const ConditioningError&) {
        } catch (const DomainError&) {
        }
        result.scores.push_back(score);
    }
    for (std::size_t i = 1; i < result.scores.size(); ++i)
        if (result.scores[i].mean_abs_error < result.scores[result.best_index].mean_abs_error)
            result.best_index = i;
    result.best = result.scores[result.best_index].kernel;
    return result;
}

/// LOOCV over the training split of a dataset; each (sequence, time) frame
/// is one snapshot. `max_snapshots` > 0 keeps only the first that many.
inline LoocvResult loocv_select_kernel(const std::vector<RadialKernel>& candidates,
                                       const SequenceDataset& ds, std::uint64_t seed,
                                       std::size_t max_snapshots = 0) {
    std::vector<Vector> snaps;
    for (auto k : ds.indices(Split::train))
        for (std::size_t t = 0; t < ds.length; ++t) {
            if (max_snapshots > 0 && snaps.size() >= max_snapshots) break;
            snaps.emplace_back(ds.frame(k, t));
        }
    if (snaps.empty()) throw ArgumentError("loocv: training split is empty");
    return loocv_select_kernel(candidates, ds.sites, snaps, seed);
}

inline void write_loocv_csv(std::ostream& os, const LoocvResult& r) {
    os << "candidate,family,epsilon,mean_abs_error\n";
    os.precision(17);
    for (std::size_t i = 0; i < r.scores.size(); ++i)
        os << i << ',' << to_string(r.scores[i].kernel.family()) << ','
           << r.scores[i].kernel.epsilon() << ',' << r.scores[i].mean_abs_error << '\n';
}

/// Candidate grid used when no explicit list is configured.
inline std::vector<RadialKernel> default_kernel_candidates() {
    std::vector<RadialKernel> out;
    for (double e : {0.25, 0.5, 1.0, 2.0, 4.0}) out.push_back(RadialKernel::multiquadric(e));
    for (double e : {0.25, 0.5, 1.0, 2.0}) out.push_back(RadialKernel::inverse_multiquadric(e));
    for (double e : {0.5, 1.0, 2.0, 4.0}) out.push_back(RadialKernel::gaussian(e));
    out.push_back(RadialKernel::thin_plate_spline());
    return out;
}

}  // namespace umtn
