#pragma once

#include "umtn/dataset.hpp"
#include "umtn/error.hpp"
#include "umtn/parallel.hpp"
#include "umtn/sites.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

namespace umtn {

/// Synthetic convection-diffusion benchmark on the periodic square [0, 2pi)^2:
///
///   u_t = a(x,y) u_x + b(x,y) u_y + c(x,y) lap u
///
/// discretized with second-order central differences and integrated with
/// classical RK4 (`substeps_per_output` internal steps per output interval).
struct ConvDiffConfig {
    int grid_size = 50;
    double dt_out = 0.01;
    double t_end = 0.2;
    int n_sites = 250;
    int n_sequences = 1000;
    std::array<int, 3> split{700, 150, 150};
    int substeps_per_output = 10;
    int max_mode = 9;
    /// Variance of the Fourier coefficients.
    double coefficient_variance = 0.02;
    int tau = 5;
    int horizon = 15;
    std::uint64_t seed = 0;

    double spacing() const { return 2.0 * std::numbers::pi / grid_size; }
    double internal_dt() const { return dt_out / substeps_per_output; }
    int n_outputs() const { return static_cast<int>(std::lround(t_end / dt_out)); }

    /// Throws ConfigError on inconsistent counts or an unstable time step.
    void validate() const {
        if (grid_size < 3) throw ConfigError("grid_size must be >= 3");
        if (n_sequences <= 0) throw ConfigError("n_sequences must be positive");
        if (split[0] <= 0 || split[1] <= 0 || split[2] <= 0)
            throw ConfigError("every split count must be positive");
        if (split[0] + split[1] + split[2] != n_sequences)
            throw ConfigError("split counts must sum to n_sequences");
        if (n_sites <= 0 || n_sites > grid_size * grid_size)
            throw ConfigError("n_sites must be in [1, grid_size^2]");
        if (!(dt_out > 0.0) || !(t_end > 0.0)) throw ConfigError("dt_out and t_end must be positive");
        const double ratio = t_end / dt_out;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1)
            throw ConfigError("t_end must be a positive integer multiple of dt_out");
        if (substeps_per_output < 1) throw ConfigError("substeps_per_output must be >= 1");
        if (tau < 1 || horizon < 0 || tau + horizon > n_outputs() + 1)
            throw ConfigError("tau + horizon exceeds the number of snapshots");
        if (max_mode < 0 || !(coefficient_variance >= 0.0))
            throw ConfigError("invalid initial-condition parameters");
        const double h = spacing();
        const double dt = internal_dt();
        // max c = 0.5 on the domain; explicit diffusion bound dt < h^2 / (4 max c).
        const double diffusion_bound = h * h / (4.0 * 0.5);
        if (!(dt < diffusion_bound))
            throw ConfigError("internal step " + std::to_string(dt) + " violates diffusion bound " +
                              std::to_string(diffusion_bound));
    }
};

struct CoefficientFields {
    double a, b, c;
};

inline CoefficientFields coefficient_fields(double x, double y) {
    constexpr double pi = std::numbers::pi;
    const double a = 0.5 * (std::cos(y) + x * (2.0 * pi - x) * std::sin(x)) + 0.6;
    const double b = 2.0 * (std::cos(y) + std::sin(x)) + 0.8;
    const double r = std::sqrt((x - pi) * (x - pi) + (y - pi) * (y - pi));
    const double c = 0.5 * (1.0 - r / (std::numbers::sqrt2 * pi));
    return {a, b, c};
}

/// Field sampled on the regular grid, stored row-major as [iy][ix] with
/// x = ix h and y = iy h.
using GridField = RowMatrix;

/// u(x) = sum_{|k|,|l| <= K} lambda_kl cos(k x + l y) + zeta_kl sin(k x + l y).
struct FourierInitialCondition {
    int max_mode = 9;
    /// (2K+1) x (2K+1), entry [k+K][l+K].
    Matrix lambda;
    Matrix zeta;

    static FourierInitialCondition zeros(int max_mode) {
        const int m = 2 * max_mode + 1;
        return {max_mode, Matrix::Zero(m, m), Matrix::Zero(m, m)};
    }

    template <class Rng>
    static FourierInitialCondition sample(Rng& rng, int max_mode = 9, double variance = 0.02) {
        auto ic = zeros(max_mode);
        std::normal_distribution<double> normal(0.0, std::sqrt(variance));
        for (Eigen::Index i = 0; i < ic.lambda.rows(); ++i)
            for (Eigen::Index j = 0; j < ic.lambda.cols(); ++j) {
                ic.lambda(i, j) = normal(rng);
                ic.zeta(i, j) = normal(rng);
            }
        return ic;
    }

    double& lambda_at(int k, int l) { return lambda(k + max_mode, l + max_mode); }
    double& zeta_at(int k, int l) { return zeta(k + max_mode, l + max_mode); }

    double operator()(double x, double y) const {
        double s = 0.0;
        for (int k = -max_mode; k <= max_mode; ++k)
            for (int l = -max_mode; l <= max_mode; ++l) {
                const double arg = k * x + l * y;
                s += lambda(k + max_mode, l + max_mode) * std::cos(arg) +
                     zeta(k + max_mode, l + max_mode) * std::sin(arg);
            }
        return s;
    }

    /// Separable evaluation on the G x G grid:
    /// cos(kx+ly) = cos kx cos ly - sin kx sin ly, sin(kx+ly) = sin kx cos ly + cos kx sin ly.
    GridField on_grid(int grid_size) const {
        const int m = 2 * max_mode + 1;
        const double h = 2.0 * std::numbers::pi / grid_size;
        Matrix cs(grid_size, m), sn(grid_size, m);
        for (int i = 0; i < grid_size; ++i)
            for (int k = -max_mode; k <= max_mode; ++k) {
                cs(i, k + max_mode) = std::cos(k * i * h);
                sn(i, k + max_mode) = std::sin(k * i * h);
            }
        // u(ix, iy) with x-modes on the left, y-modes on the right.
        const Matrix u_xy = cs * (lambda * cs.transpose() + zeta * sn.transpose()) +
                            sn * (zeta * cs.transpose() - lambda * sn.transpose());
        return u_xy.transpose();
    }
};

template <class Rng>
GridField sample_initial_condition(Rng& rng, const ConvDiffConfig& cfg) {
    return FourierInitialCondition::sample(rng, cfg.max_mode, cfg.coefficient_variance).on_grid(cfg.grid_size);
}

/// Method-of-lines right-hand side on the periodic grid.
class ConvDiffOperator {
public:
    explicit ConvDiffOperator(int grid_size) : g_(grid_size), h_(2.0 * std::numbers::pi / grid_size) {
        a_.resize(g_, g_);
        b_.resize(g_, g_);
        c_.resize(g_, g_);
        for (int iy = 0; iy < g_; ++iy)
            for (int ix = 0; ix < g_; ++ix) {
                const auto f = coefficient_fields(ix * h_, iy * h_);
                a_(iy, ix) = f.a;
                b_(iy, ix) = f.b;
                c_(iy, ix) = f.c;
            }
    }

    void apply(const GridField& u, GridField& out) const {
        out.resize(g_, g_);
        const double inv2h = 1.0 / (2.0 * h_);
        const double invh2 = 1.0 / (h_ * h_);
        for (int iy = 0; iy < g_; ++iy) {
            const int yp = (iy + 1) % g_, ym = (iy + g_ - 1) % g_;
            for (int ix = 0; ix < g_; ++ix) {
                const int xp = (ix + 1) % g_, xm = (ix + g_ - 1) % g_;
                const double ux = (u(iy, xp) - u(iy, xm)) * inv2h;
                const double uy = (u(yp, ix) - u(ym, ix)) * inv2h;
                const double lap = (u(iy, xp) + u(iy, xm) + u(yp, ix) + u(ym, ix) - 4.0 * u(iy, ix)) * invh2;
                out(iy, ix) = a_(iy, ix) * ux + b_(iy, ix) * uy + c_(iy, ix) * lap;
            }
        }
    }

private:
    int g_;
    double h_;
    GridField a_, b_, c_;
};

/// Integrates from t = 0 to t_end; returns n_outputs() + 1 snapshots
/// (including the initial field).
inline std::vector<GridField> simulate_convdiff(const ConvDiffConfig& cfg, const GridField& initial) {
    cfg.validate();
    if (initial.rows() != cfg.grid_size || initial.cols() != cfg.grid_size)
        throw ArgumentError("initial field does not match grid size");
    const ConvDiffOperator op(cfg.grid_size);
    const double dt = cfg.internal_dt();
    std::vector<GridField> out;
    out.reserve(static_cast<std::size_t>(cfg.n_outputs()) + 1);
    out.push_back(initial);
    GridField u = initial, k1, k2, k3, k4, tmp;
    for (int s = 0; s < cfg.n_outputs(); ++s) {
        for (int sub = 0; sub < cfg.substeps_per_output; ++sub) {
            op.apply(u, k1);
            tmp = u + (0.5 * dt) * k1;
            op.apply(tmp, k2);
            tmp = u + (0.5 * dt) * k2;
            op.apply(tmp, k3);
            tmp = u + dt * k3;
            op.apply(tmp, k4);
            u += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if (!u.allFinite())
            throw DivergenceError("convection-diffusion field diverged at t=" +
                                  std::to_string((s + 1) * cfg.dt_out));
        out.push_back(u);
    }
    return out;
}

/// Per-sequence generator, independent of how sequences are scheduled.
inline std::mt19937_64 sequence_rng(std::uint64_t master_seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

/// Grid cells (flat index iy*G + ix) drawn uniformly without replacement.
inline std::vector<int> sample_site_cells(const ConvDiffConfig& cfg) {
    std::vector<int> cells(static_cast<std::size_t>(cfg.grid_size) * cfg.grid_size);
    std::iota(cells.begin(), cells.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(cells.begin(), cells.end(), rng);
    cells.resize(static_cast<std::size_t>(cfg.n_sites));
    return cells;
}

inline SequenceDataset generate_dataset(const ConvDiffConfig& cfg, unsigned threads = 0) {
    cfg.validate();
    const auto cells = sample_site_cells(cfg);
    const double h = cfg.spacing();
    Matrix coords(cfg.n_sites, 2);
    for (int s = 0; s < cfg.n_sites; ++s) {
        coords(s, 0) = (cells[s] % cfg.grid_size) * h;
        coords(s, 1) = (cells[s] / cfg.grid_size) * h;
    }

    SequenceDataset ds;
    ds.sites = SiteSet(coords);
    ds.n_sequences = static_cast<std::size_t>(cfg.n_sequences);
    ds.length = static_cast<std::size_t>(cfg.tau + cfg.horizon);
    ds.tau = cfg.tau;
    ds.horizon = cfg.horizon;
    ds.seed = cfg.seed;
    ds.values.assign(ds.n_sequences * ds.length * ds.n_sites(), 0.0);
    ds.split = sequential_split(cfg.split[0], cfg.split[1], cfg.split[2]);

    parallel_for(ds.n_sequences, [&](std::size_t k) {
        auto rng = sequence_rng(cfg.seed, k);
        const auto snaps = simulate_convdiff(cfg, sample_initial_condition(rng, cfg));
        auto seq = ds.sequence(k);
        for (std::size_t t = 0; t < ds.length; ++t)
            for (int s = 0; s < cfg.n_sites; ++s)
                seq(static_cast<Eigen::Index>(t), s) = snaps[t](cells[s] / cfg.grid_size, cells[s] % cfg.grid_size);
    }, threads);

    ds.stats = compute_training_stats(ds);
    return ds;
}

}  // namespace umtn
