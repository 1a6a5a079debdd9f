#pragma once

#include "umtn/autodiff.hpp"
#include "umtn/error.hpp"
#include "umtn/interpolation.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace umtn {

using ad::Tensor;
using ad::ParameterStore;

struct ModelConfig {
    int levels = 1;
    int feature_width = 8;
    int s_hidden1 = 64;
    int s_hidden2 = 32;
    int nab_hidden = 32;
    int rfn_hidden = 64;
    int dim = 2;
    /// Ridge parameter of the coefficient fit applied to every input frame.
    double lambda = 1e-2;
    /// Use Phi^-1 scaled to unit max-abs inside the LSTB (false: raw Phi^-1).
    bool scale_inverse = true;

    int rfn_input_width() const { return feature_width * levels + 1; }
    int s_input_width() const { return 2 * dim + 1; }

    void validate() const {
        if (levels < 0) throw ConfigError("levels must be >= 0");
        if (feature_width < 1 || s_hidden1 < 1 || s_hidden2 < 1 || nab_hidden < 1 || rfn_hidden < 1)
            throw ConfigError("layer sizes must be positive");
        if (dim < 1) throw ConfigError("spatial dimension must be >= 1");
        if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    }
};

/// Per-site-set constants shared by every forward pass: Phi, the LSTB
/// inverse G, the ridge-fit map u -> c and the S_alpha input triples
/// (x_i, x_j, phi(||x_i - x_j||)) for all ordered pairs, row i*n + j.
struct SiteGeometry {
    std::shared_ptr<const InterpolationSystem> system;
    double lambda = 1e-2;
    bool scaled = true;
    ad::Array phi;
    ad::Array g;
    ad::Array fit;
    ad::Array pair_inputs;
    std::string site_hash;

    Eigen::Index n() const { return phi.rows(); }
    Eigen::Index dim() const { return system->sites().dim(); }

    static SiteGeometry build(const RadialKernel& kernel, const SiteSet& sites, double lambda,
                              bool scaled = true) {
        SiteGeometry geo;
        geo.system = std::make_shared<const InterpolationSystem>(kernel, sites);
        geo.lambda = lambda;
        geo.scaled = scaled;
        geo.phi = geo.system->phi();
        geo.g = scaled ? geo.system->scaled_inverse() : geo.system->inverse();
        geo.fit = geo.system->fit_matrix(lambda);
        const auto n = sites.size();
        const auto d = sites.dim();
        geo.pair_inputs.resize(n * n, 2 * d + 1);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                auto row = geo.pair_inputs.row(i * n + j);
                row.head(d) = sites.coords().row(i);
                row.segment(d, d) = sites.coords().row(j);
                row(2 * d) = geo.phi(i, j);
            }
        geo.site_hash = sites.hash();
        return geo;
    }
};

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Registers a fully connected net prefix.w{k}, prefix.b{k} for the given widths.
template <class Rng>
void register_mlp(ParameterStore& store, const std::string& prefix, const std::vector<int>& widths, Rng& rng) {
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        store.add_weight(prefix + ".w" + std::to_string(k), widths[k], widths[k + 1], rng);
        store.add_bias(prefix + ".b" + std::to_string(k), widths[k + 1]);
    }
}

/// ReLU on hidden layers, linear output.
inline Tensor mlp_forward(const ParameterStore& store, const std::string& prefix, std::size_t layers, Tensor x) {
    for (std::size_t k = 0; k < layers; ++k) {
        x = ad::add_row(ad::matmul(x, store.get(prefix + ".w" + std::to_string(k))),
                        store.get(prefix + ".b" + std::to_string(k)));
        if (k + 1 < layers) x = ad::relu(x);
    }
    return x;
}

/// Evaluates S_alpha on every ordered site pair; entry (i, j) of matrix f is
/// output f for pair (x_i, x_j, phi_ij).
inline std::vector<Tensor> spatial_features(const ParameterStore& store, const std::string& prefix,
                                            const SiteGeometry& geo, int width) {
    const Tensor out = mlp_forward(store, prefix, 3, Tensor::matrix(geo.pair_inputs));
    if (out.cols() != width) throw ArgumentError("spatial network output width mismatch");
    const auto n = geo.n();
    std::vector<Tensor> mats;
    mats.reserve(static_cast<std::size_t>(width));
    for (int f = 0; f < width; ++f) mats.push_back(ad::reshape(ad::slice(out, f, 1), {n, n}));
    return mats;
}

/// C_f = c + G [S]^f c for each feature f; `c` is n x B (one column per sequence).
inline std::vector<Tensor> lstb_forward(const std::vector<Tensor>& features, const Tensor& g, const Tensor& c) {
    if (g.rows() != c.rows() || g.cols() != c.rows()) throw ArgumentError("lstb: G does not match coefficient length");
    std::vector<Tensor> out;
    out.reserve(features.size());
    for (const auto& s : features) {
        if (s.rows() != c.rows() || s.cols() != c.rows())
            throw ArgumentError("lstb: feature matrix does not match coefficient length");
        out.push_back(ad::add(c, ad::matmul(g, ad::matmul(s, c))));
    }
    return out;
}

/// Precomputed K_f = G [S]^f; lstb_apply(K, c) equals lstb_forward(S, G, c).
inline std::vector<Tensor> lstb_transforms(const std::vector<Tensor>& features, const Tensor& g) {
    std::vector<Tensor> k;
    k.reserve(features.size());
    for (const auto& s : features) k.push_back(ad::matmul(g, s));
    return k;
}

inline std::vector<Tensor> lstb_apply(const std::vector<Tensor>& transforms, const Tensor& c) {
    std::vector<Tensor> out;
    out.reserve(transforms.size());
    for (const auto& k : transforms) out.push_back(ad::add(c, ad::matmul(k, c)));
    return out;
}

/// Stacks per-feature n x B blocks into an (n*B) x F site-major row matrix.
inline Tensor stack_site_rows(const std::vector<Tensor>& blocks) {
    std::vector<Tensor> cols;
    cols.reserve(blocks.size());
    for (const auto& b : blocks) cols.push_back(ad::reshape(b, {b.numel(), 1}));
    return ad::concat(cols);
}

/// Shared per-site aggregator: rows of C (one per site and sequence) -> one coefficient.
inline Tensor nab_forward(const ParameterStore& store, const std::string& prefix, const std::vector<Tensor>& c_level) {
    if (c_level.empty()) throw ArgumentError("nab: no feature columns");
    const auto n = c_level[0].rows();
    const auto b = c_level[0].cols();
    const Tensor rows = stack_site_rows(c_level);
    if (rows.cols() != store.get(prefix + ".w0").rows())
        throw ArgumentError("nab: feature width " + std::to_string(rows.cols()) + " does not match network input");
    return ad::reshape(mlp_forward(store, prefix, 2, rows), {n, b});
}

struct GruState {
    Tensor prediction;  // rows x 1
    Tensor hidden;      // rows x H
};

/// One GRU cell update (PyTorch gate layout r | z | n) plus a linear readout:
///   r = sig(x Wr + bxr + h Ur + bhr), z = sig(x Wz + bxz + h Uz + bhz)
///   n = tanh(x Wn + bxn + r * (h Un + bhn)),  h' = (1 - z) n + z h.
inline GruState rfn_step(const ParameterStore& store, const std::string& prefix, const Tensor& input,
                         const Tensor& hidden) {
    const Tensor& wx = store.get(prefix + ".wx");
    const Tensor& wh = store.get(prefix + ".wh");
    if (input.cols() != wx.rows())
        throw ArgumentError("rfn: input width " + std::to_string(input.cols()) + " does not match " +
                            std::to_string(wx.rows()));
    const auto hsz = wh.rows();
    if (hidden.cols() != hsz || hidden.rows() != input.rows()) throw ArgumentError("rfn: hidden state shape mismatch");
    const Tensor gx = ad::add_row(ad::matmul(input, wx), store.get(prefix + ".bx"));
    const Tensor gh = ad::add_row(ad::matmul(hidden, wh), store.get(prefix + ".bh"));
    const Tensor r = ad::sigmoid(ad::add(ad::slice(gx, 0, hsz), ad::slice(gh, 0, hsz)));
    const Tensor z = ad::sigmoid(ad::add(ad::slice(gx, hsz, hsz), ad::slice(gh, hsz, hsz)));
    const Tensor cand = ad::tanh(ad::add(ad::slice(gx, 2 * hsz, hsz), ad::mul(r, ad::slice(gh, 2 * hsz, hsz))));
    const Tensor next = ad::add(cand, ad::mul(z, ad::sub(hidden, cand)));
    const Tensor pred = ad::add_row(ad::matmul(next, store.get(prefix + ".wo")), store.get(prefix + ".bo"));
    return {pred, next};
}

template <class Rng>
void register_gru(ParameterStore& store, const std::string& prefix, int input, int hidden, Rng& rng) {
    store.add_weight(prefix + ".wx", input, 3 * hidden, rng);
    store.add_weight(prefix + ".wh", hidden, 3 * hidden, rng);
    store.add_bias(prefix + ".bx", 3 * hidden);
    store.add_bias(prefix + ".bh", 3 * hidden);
    store.add_weight(prefix + ".wo", hidden, 1, rng);
    store.add_bias(prefix + ".bo", 1);
}

// ---------------------------------------------------------------------------
// Forecasters
// ---------------------------------------------------------------------------

/// Predictions of one rollout over a batch; predictions[k] is u-hat at step
/// first_step + k, an n x B tensor.
struct RolloutOutput {
    int first_step = 1;
    std::vector<Tensor> predictions;

    const Tensor& at(int t) const { return predictions.at(static_cast<std::size_t>(t - first_step)); }
};

/// Chooses, per sequence, between teacher values and the model's own
/// previous prediction for input frames past the observation window.
class TeacherSchedule {
public:
    TeacherSchedule(double prob, std::mt19937_64* rng) : prob_(prob), rng_(rng) {
        if (prob < 0.0 || prob > 1.0) throw ArgumentError("teacher_prob must lie in [0, 1]");
        if (prob > 0.0 && prob < 1.0 && rng == nullptr) throw ArgumentError("scheduled sampling needs an rng");
    }

    /// Input tensor for one frame: teacher columns where drawn, else `pred`.
    Tensor select(const Tensor& pred, const ad::Array* teacher) {
        if (prob_ == 0.0) return pred;
        if (teacher == nullptr) throw ArgumentError("teacher_prob > 0 requires teacher values");
        const auto b = pred.cols();
        std::vector<bool> use(static_cast<std::size_t>(b));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        bool all = true, none = true;
        for (Eigen::Index j = 0; j < b; ++j) {
            const bool t = prob_ >= 1.0 ? true : u(*rng_) < prob_;
            use[static_cast<std::size_t>(j)] = t;
            all = all && t;
            none = none && !t;
        }
        if (all) return Tensor::matrix(*teacher);
        if (none) return pred;
        ad::Array keep = ad::Array::Zero(pred.rows(), b), forced = ad::Array::Zero(pred.rows(), b);
        for (Eigen::Index j = 0; j < b; ++j) {
            if (use[static_cast<std::size_t>(j)]) forced.col(j) = teacher->col(j);
            else keep.col(j).setOnes();
        }
        return ad::add(ad::mul(pred, Tensor::matrix(keep)), Tensor::matrix(forced));
    }

private:
    double prob_;
    std::mt19937_64* rng_;
};

/// Common interface of the trainable sequence models.
class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual ParameterStore& params() = 0;
    virtual const ParameterStore& params() const = 0;
    virtual const SiteGeometry& geometry() const = 0;
    virtual std::string kind() const = 0;
    /// First step whose prediction the model can produce.
    virtual int first_step() const { return 1; }

    /// `frames[t]` is the n x B ground truth at step t. Steps t < tau are
    /// always fed from `frames`; later inputs come from `frames` with
    /// probability teacher_prob per sequence, else from the model's own
    /// prediction. Produces predictions for steps first_step()..tau+T-1.
    virtual RolloutOutput rollout_batch(const std::vector<ad::Array>& frames, int tau, int horizon,
                                        double teacher_prob, std::mt19937_64* rng) const = 0;
};

inline void check_rollout_args(const std::vector<ad::Array>& frames, int tau, int horizon, double teacher_prob,
                               Eigen::Index n) {
    if (tau < 1) throw ArgumentError("rollout: tau must be >= 1");
    if (horizon < 0) throw ArgumentError("rollout: T must be >= 0");
    if (frames.size() < static_cast<std::size_t>(tau)) throw ArgumentError("rollout: fewer than tau observed frames");
    if (teacher_prob > 0.0 && frames.size() < static_cast<std::size_t>(tau + horizon - 1))
        throw ArgumentError("rollout: teacher_prob > 0 requires teacher values for every step");
    for (const auto& f : frames)
        if (f.rows() != n || f.cols() != frames[0].cols()) throw ArgumentError("rollout: frame shape mismatch");
}

/// Multilevel forecaster: M cascaded LSTB/NAB levels
/// sharing one S_alpha, followed by a per-site GRU fusion network.
///
/// Parameters: alpha.* (S_alpha, 2d+1 -> h1 -> h2 -> F), gamma{m}.* for
/// m = 1..M-1 (F -> nab_hidden -> 1; the last level's aggregate would feed
/// nothing), beta.* (GRU with input F*M + 1, readout to 1).
class UmtnModel : public Forecaster {
public:
    UmtnModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        register_mlp(store_, "alpha", {cfg_.s_input_width(), cfg_.s_hidden1, cfg_.s_hidden2, cfg_.feature_width}, rng);
        for (int m = 1; m < cfg_.levels; ++m)
            register_mlp(store_, "gamma" + std::to_string(m), {cfg_.feature_width, cfg_.nab_hidden, 1}, rng);
        register_gru(store_, "beta", cfg_.rfn_input_width(), cfg_.rfn_hidden, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() override { return store_; }
    const ParameterStore& params() const override { return store_; }
    std::string kind() const override { return "umtn"; }

    void attach(std::shared_ptr<const SiteGeometry> geo) {
        if (geo->dim() != cfg_.dim)
            throw ArgumentError("model dimension " + std::to_string(cfg_.dim) + " does not match sites of dimension " +
                                std::to_string(geo->dim()));
        geo_ = std::move(geo);
    }
    void attach(const RadialKernel& kernel, const SiteSet& sites) {
        attach(std::make_shared<const SiteGeometry>(
            SiteGeometry::build(kernel, sites, cfg_.lambda, cfg_.scale_inverse)));
    }
    bool has_geometry() const { return static_cast<bool>(geo_); }
    const SiteGeometry& geometry() const override {
        if (!geo_) throw StateError("model has no site geometry attached");
        return *geo_;
    }
    std::shared_ptr<const SiteGeometry> geometry_ptr() const { return geo_; }

    /// F matrices [S]^f, each n x n.
    std::vector<Tensor> build_spatial_features() const {
        return spatial_features(store_, "alpha", geometry(), cfg_.feature_width);
    }

    /// U = Phi [c0 | C^(1) | ... | C^(M)] as an (n*B) x (F*M + 1) matrix,
    /// rows ordered site-major. `transforms` are the K_f = G [S]^f.
    Tensor multilevel_features(const std::vector<Tensor>& transforms, const Tensor& c0) const {
        const Tensor phi = Tensor::matrix(geometry().phi);
        std::vector<Tensor> blocks{ad::matmul(phi, c0)};
        Tensor c = c0;
        for (int m = 1; m <= cfg_.levels; ++m) {
            auto level = lstb_apply(transforms, c);
            for (const auto& col : level) blocks.push_back(ad::matmul(phi, col));
            if (m < cfg_.levels) c = nab_forward(store_, "gamma" + std::to_string(m), level);
        }
        return stack_site_rows(blocks);
    }

    /// Ridge-regularized coefficients of an n x B block of frames.
    Tensor coefficients(const Tensor& frames) const {
        return ad::matmul(Tensor::matrix(geometry().fit), frames);
    }

    RolloutOutput rollout_batch(const std::vector<ad::Array>& frames, int tau, int horizon, double teacher_prob,
                                std::mt19937_64* rng) const override {
        const auto& geo = geometry();
        const auto n = geo.n();
        check_rollout_args(frames, tau, horizon, teacher_prob, n);
        const auto b = frames[0].cols();
        const Tensor g = Tensor::matrix(geo.g);
        const auto transforms = lstb_transforms(build_spatial_features(), g);
        TeacherSchedule teacher(teacher_prob, rng);

        RolloutOutput out;
        out.first_step = 1;
        Tensor hidden = Tensor::zeros({n * b, cfg_.rfn_hidden});
        const int last_input = tau + horizon - 2;
        for (int t = 0; t <= last_input; ++t) {
            Tensor x;
            if (t < tau) {
                x = Tensor::matrix(frames[static_cast<std::size_t>(t)]);
            } else {
                const ad::Array* tv = static_cast<std::size_t>(t) < frames.size() ? &frames[static_cast<std::size_t>(t)] : nullptr;
                x = teacher.select(out.predictions.back(), tv);
            }
            const Tensor u = multilevel_features(transforms, coefficients(x));
            auto st = rfn_step(store_, "beta", u, hidden);
            hidden = st.hidden;
            out.predictions.push_back(ad::reshape(st.prediction, {n, b}));
        }
        return out;
    }

private:
    ModelConfig cfg_;
    ParameterStore store_;
    std::shared_ptr<const SiteGeometry> geo_;
};

/// Single-sequence rollout result.
struct Rollout {
    Matrix predictions;  // T x n, steps tau .. tau+T-1
    Matrix all;          // (tau+T-1) x n, steps 1 .. tau+T-1
};

/// Rollout of one sequence. `observed` is tau x n; `teacher_values`, when
/// given, holds the true u_1 .. u_{tau+T-1} row-wise.
inline Rollout rollout(const Forecaster& model, const Matrix& observed, int horizon,
                       const std::optional<Matrix>& teacher_values, double teacher_prob,
                       std::mt19937_64* rng) {
    const int tau = static_cast<int>(observed.rows());
    if (teacher_prob > 0.0 && !teacher_values) throw ArgumentError("rollout: teacher_prob > 0 without teacher values");
    std::vector<ad::Array> frames;
    for (int t = 0; t < tau; ++t) frames.emplace_back(observed.row(t).transpose());
    if (teacher_values) {
        if (teacher_values->rows() != tau + horizon - 1) throw ArgumentError("rollout: teacher values have wrong length");
        for (int t = tau; t <= tau + horizon - 2; ++t) frames.emplace_back(teacher_values->row(t - 1).transpose());
    }
    ad::NoGradGuard ng;
    const auto out = model.rollout_batch(frames, tau, horizon, teacher_prob, rng);
    const auto n = model.geometry().n();
    Rollout r;
    r.all = Matrix::Zero(tau + horizon - 1, n);
    for (std::size_t k = 0; k < out.predictions.size(); ++k)
        r.all.row(out.first_step + static_cast<int>(k) - 1) = out.predictions[k].value().col(0).transpose();
    r.predictions = r.all.bottomRows(horizon);
    return r;
}

// ---------------------------------------------------------------------------
// DRC baseline (simplified)
// ---------------------------------------------------------------------------

struct DrcConfig {
    int feature_width = 16;
    int s_hidden1 = 64;
    int s_hidden2 = 32;
    std::vector<int> aggregator_hidden{128, 64, 32};
    int past_frames = 2;
    int dim = 2;
    double lambda = 1e-2;
    bool scale_inverse = true;
};

/// Feed-forward collocation baseline: one spatial block on the current frame
/// (features Phi (c + G [S]^f c)), concatenated per site with the p most
/// recent raw values, mapped to the next value by an MLP.
class DrcModel : public Forecaster {
public:
    DrcModel(const DrcConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg_.past_frames < 1) throw ConfigError("drc: past_frames must be >= 1");
        std::mt19937_64 rng(seed);
        register_mlp(store_, "alpha", {2 * cfg_.dim + 1, cfg_.s_hidden1, cfg_.s_hidden2, cfg_.feature_width}, rng);
        std::vector<int> widths{cfg_.feature_width + cfg_.past_frames};
        widths.insert(widths.end(), cfg_.aggregator_hidden.begin(), cfg_.aggregator_hidden.end());
        widths.push_back(1);
        register_mlp(store_, "agg", widths, rng);
        agg_layers_ = widths.size() - 1;
    }

    const DrcConfig& config() const { return cfg_; }
    ParameterStore& params() override { return store_; }
    const ParameterStore& params() const override { return store_; }
    std::string kind() const override { return "drc"; }
    int first_step() const override { return cfg_.past_frames; }

    void attach(const RadialKernel& kernel, const SiteSet& sites) {
        if (sites.dim() != cfg_.dim) throw ArgumentError("drc: site dimension mismatch");
        geo_ = std::make_shared<const SiteGeometry>(SiteGeometry::build(kernel, sites, cfg_.lambda, cfg_.scale_inverse));
    }
    void attach(std::shared_ptr<const SiteGeometry> geo) { geo_ = std::move(geo); }
    const SiteGeometry& geometry() const override {
        if (!geo_) throw StateError("drc: no site geometry attached");
        return *geo_;
    }

    /// Next-step prediction from the p most recent frames (oldest first), each n x B.
    Tensor forward(const std::vector<Tensor>& recent, const std::vector<Tensor>& transforms) const {
        if (recent.size() < static_cast<std::size_t>(cfg_.past_frames))
            throw ArgumentError("drc: needs " + std::to_string(cfg_.past_frames) + " past frames");
        const auto& geo = geometry();
        const Tensor phi = Tensor::matrix(geo.phi);
        const Tensor& current = recent.back();
        const Tensor c = ad::matmul(Tensor::matrix(geo.fit), current);
        std::vector<Tensor> blocks;
        for (const auto& col : lstb_apply(transforms, c)) blocks.push_back(ad::matmul(phi, col));
        for (std::size_t k = recent.size() - static_cast<std::size_t>(cfg_.past_frames); k < recent.size(); ++k)
            blocks.push_back(recent[k]);
        const Tensor out = mlp_forward(store_, "agg", agg_layers_, stack_site_rows(blocks));
        return ad::reshape(out, {current.rows(), current.cols()});
    }

    std::vector<Tensor> transforms() const {
        return lstb_transforms(spatial_features(store_, "alpha", geometry(), cfg_.feature_width),
                               Tensor::matrix(geometry().g));
    }

    RolloutOutput rollout_batch(const std::vector<ad::Array>& frames, int tau, int horizon, double teacher_prob,
                                std::mt19937_64* rng) const override {
        const auto n = geometry().n();
        check_rollout_args(frames, tau, horizon, teacher_prob, n);
        if (tau < cfg_.past_frames) throw ArgumentError("drc: tau is smaller than the number of past frames");
        const auto k = transforms();
        TeacherSchedule teacher(teacher_prob, rng);
        RolloutOutput out;
        out.first_step = cfg_.past_frames;
        std::vector<Tensor> inputs;
        for (int t = 0; t <= tau + horizon - 2; ++t) {
            if (t < tau) {
                inputs.push_back(Tensor::matrix(frames[static_cast<std::size_t>(t)]));
            } else {
                const ad::Array* tv = static_cast<std::size_t>(t) < frames.size() ? &frames[static_cast<std::size_t>(t)] : nullptr;
                inputs.push_back(teacher.select(out.predictions.back(), tv));
            }
            if (t + 1 < cfg_.past_frames) continue;
            std::vector<Tensor> recent(inputs.end() - cfg_.past_frames, inputs.end());
            out.predictions.push_back(forward(recent, k));
        }
        return out;
    }

private:
    DrcConfig cfg_;
    ParameterStore store_;
    std::shared_ptr<const SiteGeometry> geo_;
    std::size_t agg_layers_ = 4;
};

/// Prediction from an explicit list of observed frames (oldest first), each an n-vector.
inline Vector drc_forward(const DrcModel& model, const std::vector<Vector>& observed) {
    if (observed.size() < static_cast<std::size_t>(model.config().past_frames))
        throw ArgumentError("drc: fewer observed frames than past_frames");
    ad::NoGradGuard ng;
    std::vector<Tensor> recent;
    for (const auto& f : observed) recent.push_back(Tensor::matrix(ad::Array(f)));
    return model.forward(recent, model.transforms()).value().col(0);
}

}  // namespace umtn
