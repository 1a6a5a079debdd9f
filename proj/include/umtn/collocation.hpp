#pragma once

#include "umtn/error.hpp"
#include "umtn/interpolation.hpp"
#include "umtn/kernels.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <vector>

namespace umtn {

/// A_ij = (L phi(||x - x_j||)) at x = x_i.
inline Matrix operator_matrix(const RadialKernel& k, const SiteSet& sites, const LinearOperatorSpec& op) {
    const auto n = sites.size();
    Matrix a = Matrix::Zero(n, n);
    if (op.is_zero()) return a;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point xi = sites.site(i);
        try {
            for (Eigen::Index j = 0; j < n; ++j) a(i, j) = kernel_operator_apply(k, op, sites.site(j), xi);
        } catch (const Error& e) {
            throw DomainError("operator evaluation failed at site " + std::to_string(i) + ": " + e.what());
        }
    }
    return a;
}

/// H = Phi + dt * [L phi].
inline Matrix build_h(const RadialKernel& k, const SiteSet& sites, const LinearOperatorSpec& op, double dt) {
    if (!(dt > 0.0)) throw ArgumentError("build_h: dt must be positive");
    return kernel_matrix(k, sites) + dt * operator_matrix(k, sites, op);
}

struct TrajectoryPoint {
    double time = 0.0;
    Vector values;
    Vector coeffs;
};

using Trajectory = std::vector<TrajectoryPoint>;

/// Explicit first-order RBF collocation stepper, Phi c_{t+dt} = H c_t,
/// with optional Dirichlet rows: at boundary sites the H-row is replaced by
/// the prescribed value, so Phi c_{t+dt} interpolates it there.
class CollocationStepper {
public:
    using BoundaryValues = std::function<Vector(double)>;

    CollocationStepper(InterpolationSystem system, const LinearOperatorSpec& op, double dt)
        : system_(std::move(system)), dt_(dt) {
        if (!(dt > 0.0)) throw ArgumentError("collocation stepper: dt must be positive");
        h_ = system_.phi() + dt * operator_matrix(system_.kernel(), system_.sites(), op);
    }

    /// Stepper with an explicitly supplied H matrix.
    CollocationStepper(InterpolationSystem system, Matrix h, double dt)
        : system_(std::move(system)), h_(std::move(h)), dt_(dt) {
        if (!(dt > 0.0)) throw ArgumentError("collocation stepper: dt must be positive");
        if (h_.rows() != system_.size() || h_.cols() != system_.size())
            throw ArgumentError("collocation stepper: H has wrong shape");
    }

    void set_dirichlet(std::vector<Eigen::Index> indices, BoundaryValues values) {
        std::set<Eigen::Index> seen;
        for (auto i : indices) {
            if (i < 0 || i >= system_.size()) throw ArgumentError("boundary index out of range");
            if (!seen.insert(i).second) throw ArgumentError("duplicate boundary index");
        }
        boundary_ = std::move(indices);
        boundary_values_ = std::move(values);
    }

    const InterpolationSystem& system() const noexcept { return system_; }
    const Matrix& h_matrix() const noexcept { return h_; }
    double dt() const noexcept { return dt_; }
    const std::vector<Eigen::Index>& boundary_indices() const noexcept { return boundary_; }

    /// Coefficients after one step from c at time t.
    Vector step(const Vector& c, double t) const {
        Vector rhs = h_ * c;
        if (!boundary_.empty()) {
            const Vector g = boundary_values_(t + dt_);
            if (g.size() != static_cast<Eigen::Index>(boundary_.size()))
                throw ArgumentError("boundary callback returned wrong number of values");
            for (std::size_t b = 0; b < boundary_.size(); ++b) rhs(boundary_[b]) = g(static_cast<Eigen::Index>(b));
        }
        return system_.solve(rhs);
    }

private:
    InterpolationSystem system_;
    Matrix h_;
    double dt_;
    std::vector<Eigen::Index> boundary_;
    BoundaryValues boundary_values_;
};

inline Trajectory solve_ivp(const CollocationStepper& stepper, const Vector& initial_values, double t_end) {
    if (!(t_end > 0.0)) throw ArgumentError("solve_ivp: t_end must be positive");
    const double ratio = t_end / stepper.dt();
    const auto steps = static_cast<long>(std::llround(ratio));
    if (steps < 1 || std::abs(static_cast<double>(steps) - ratio) > 1e-12 * std::max(1.0, ratio))
        throw ArgumentError("solve_ivp: t_end is not an integer multiple of dt");
    const auto& sys = stepper.system();
    Trajectory traj;
    traj.reserve(static_cast<std::size_t>(steps) + 1);
    Vector c = sys.solve(initial_values);
    traj.push_back({0.0, sys.phi() * c, c});
    for (long s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) * stepper.dt();
        c = stepper.step(c, t);
        if (!c.allFinite())
            throw DivergenceError("collocation solution became non-finite at t=" + std::to_string(t + stepper.dt()));
        traj.push_back({static_cast<double>(s + 1) * stepper.dt(), sys.phi() * c, c});
    }
    return traj;
}

}  // namespace umtn
