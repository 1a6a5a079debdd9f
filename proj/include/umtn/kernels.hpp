#pragma once

#include "umtn/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <string_view>

namespace umtn {

using Point = Eigen::VectorXd;

enum class KernelFamily { multiquadric, inverse_multiquadric, gaussian, thin_plate_spline };

inline std::string_view to_string(KernelFamily f) {
    switch (f) {
    case KernelFamily::multiquadric: return "multiquadric";
    case KernelFamily::inverse_multiquadric: return "inverse_multiquadric";
    case KernelFamily::gaussian: return "gaussian";
    case KernelFamily::thin_plate_spline: return "thin_plate_spline";
    }
    return "unknown";
}

inline KernelFamily kernel_family_from_string(std::string_view s) {
    if (s == "multiquadric") return KernelFamily::multiquadric;
    if (s == "inverse_multiquadric") return KernelFamily::inverse_multiquadric;
    if (s == "gaussian") return KernelFamily::gaussian;
    if (s == "thin_plate_spline") return KernelFamily::thin_plate_spline;
    throw ConfigError("unknown kernel family '" + std::string(s) + "'");
}

/// A radial basis function phi(r) together with its shape parameter.
///
/// Conventions:
///   multiquadric          sqrt(r^2 + eps^2)
///   inverse multiquadric  1 / sqrt(r^2 + eps^2)
///   gaussian              exp(-(eps r)^2)
///   thin-plate spline     r^2 log r, with phi(0) = 0 (eps unused)
class RadialKernel {
public:
    RadialKernel() = default;
    RadialKernel(KernelFamily family, double epsilon) : family_(family), epsilon_(epsilon) {
        if (family != KernelFamily::thin_plate_spline && !(epsilon > 0.0 && std::isfinite(epsilon)))
            throw ArgumentError("kernel shape parameter must be positive and finite, got " +
                                std::to_string(epsilon));
    }

    static RadialKernel multiquadric(double eps) { return {KernelFamily::multiquadric, eps}; }
    static RadialKernel inverse_multiquadric(double eps) {
        return {KernelFamily::inverse_multiquadric, eps};
    }
    static RadialKernel gaussian(double eps) { return {KernelFamily::gaussian, eps}; }
    static RadialKernel thin_plate_spline() { return {KernelFamily::thin_plate_spline, 1.0}; }

    KernelFamily family() const noexcept { return family_; }
    double epsilon() const noexcept { return epsilon_; }

    /// Whether second derivatives exist at every offset, including zero.
    bool smooth_at_origin() const noexcept { return family_ != KernelFamily::thin_plate_spline; }

    double operator()(double r) const {
        if (r < 0.0 || std::isnan(r)) throw ArgumentError("kernel_eval: radius must be >= 0");
        const double e2 = epsilon_ * epsilon_;
        switch (family_) {
        case KernelFamily::multiquadric: return std::sqrt(r * r + e2);
        case KernelFamily::inverse_multiquadric: return 1.0 / std::sqrt(r * r + e2);
        case KernelFamily::gaussian: return std::exp(-e2 * r * r);
        case KernelFamily::thin_plate_spline: return r == 0.0 ? 0.0 : r * r * std::log(r);
        }
        return 0.0;
    }

    /// Gradient of x -> phi(||x||) at the offset v.
    Eigen::VectorXd gradient(const Eigen::VectorXd& v) const {
        const double r2 = v.squaredNorm();
        const double e2 = epsilon_ * epsilon_;
        switch (family_) {
        case KernelFamily::multiquadric: return v / std::sqrt(r2 + e2);
        case KernelFamily::inverse_multiquadric: {
            const double p = 1.0 / std::sqrt(r2 + e2);
            return -v * (p * p * p);
        }
        case KernelFamily::gaussian: return v * (-2.0 * e2 * std::exp(-e2 * r2));
        case KernelFamily::thin_plate_spline:
            if (r2 == 0.0) return Eigen::VectorXd::Zero(v.size());
            return v * (std::log(r2) + 1.0);  // 2 log r + 1
        }
        return Eigen::VectorXd::Zero(v.size());
    }

    /// Laplacian of x -> phi(||x||) at the offset v.
    double laplacian(const Eigen::VectorXd& v) const {
        const double r2 = v.squaredNorm();
        const double e2 = epsilon_ * epsilon_;
        const auto d = static_cast<double>(v.size());
        switch (family_) {
        case KernelFamily::multiquadric: {
            const double p = std::sqrt(r2 + e2);
            return (d * p * p - r2) / (p * p * p);
        }
        case KernelFamily::inverse_multiquadric: {
            const double p = 1.0 / std::sqrt(r2 + e2);
            const double p3 = p * p * p;
            return -d * p3 + 3.0 * r2 * p3 * p * p;
        }
        case KernelFamily::gaussian:
            return (-2.0 * d * e2 + 4.0 * e2 * e2 * r2) * std::exp(-e2 * r2);
        case KernelFamily::thin_plate_spline:
            if (r2 == 0.0) throw DomainError("thin-plate spline Laplacian is singular at zero offset");
            return d * (std::log(r2) + 1.0) + 2.0;
        }
        return 0.0;
    }

private:
    KernelFamily family_ = KernelFamily::multiquadric;
    double epsilon_ = 1.0;
};

inline double kernel_eval(const RadialKernel& k, double r) { return k(r); }

/// Linear spatial operator  L u = a(x).grad u + c(x) lap u + q(x) u.
/// Empty callbacks denote zero fields.
struct LinearOperatorSpec {
    std::function<Eigen::VectorXd(const Point&)> convection;
    std::function<double(const Point&)> diffusion;
    std::function<double(const Point&)> reaction;

    bool is_zero() const { return !convection && !diffusion && !reaction; }

    static LinearOperatorSpec zero() { return {}; }
    static LinearOperatorSpec pure_diffusion(double c) {
        LinearOperatorSpec op;
        op.diffusion = [c](const Point&) { return c; };
        return op;
    }
};

/// Pointwise sum of two operators.
inline LinearOperatorSpec operator+(const LinearOperatorSpec& a, const LinearOperatorSpec& b) {
    LinearOperatorSpec out;
    if (a.convection || b.convection) {
        out.convection = [a, b](const Point& x) -> Eigen::VectorXd {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
            if (a.convection) v += a.convection(x);
            if (b.convection) v += b.convection(x);
            return v;
        };
    }
    auto sum_scalar = [](const std::function<double(const Point&)>& f,
                         const std::function<double(const Point&)>& g)
        -> std::function<double(const Point&)> {
        if (!f && !g) return {};
        return [f, g](const Point& x) { return (f ? f(x) : 0.0) + (g ? g(x) : 0.0); };
    };
    out.diffusion = sum_scalar(a.diffusion, b.diffusion);
    out.reaction = sum_scalar(a.reaction, b.reaction);
    return out;
}

/// (L phi(||x - center||)) evaluated at x = eval_point.
inline double kernel_operator_apply(const RadialKernel& k, const LinearOperatorSpec& op,
                                    const Point& center, const Point& eval_point) {
    if (center.size() != eval_point.size())
        throw ArgumentError("kernel_operator_apply: dimension mismatch (" +
                            std::to_string(center.size()) + " vs " +
                            std::to_string(eval_point.size()) + ")");
    if (op.is_zero()) return 0.0;
    const Eigen::VectorXd v = eval_point - center;
    if (!k.smooth_at_origin() && v.squaredNorm() == 0.0)
        throw DomainError("thin-plate spline cannot be differentiated at zero offset");
    double out = 0.0;
    if (op.convection) {
        const Eigen::VectorXd a = op.convection(eval_point);
        if (a.size() != v.size()) throw ArgumentError("convection field has wrong dimension");
        out += a.dot(k.gradient(v));
    }
    if (op.diffusion) out += op.diffusion(eval_point) * k.laplacian(v);
    if (op.reaction) out += op.reaction(eval_point) * k(v.norm());
    return out;
}

}  // namespace umtn
