#include "umtn/collocation.hpp"
#include "umtn/model.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace umtn;
using ad::Array;

namespace {

SiteSet random_sites(int n, std::uint64_t seed, int d = 2) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    Matrix c(n, d);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) c(i, k) = u(rng);
    return SiteSet(c);
}

ModelConfig small_config(int levels) {
    ModelConfig cfg;
    cfg.levels = levels;
    cfg.feature_width = 3;
    cfg.s_hidden1 = 6;
    cfg.s_hidden2 = 5;
    cfg.nab_hidden = 4;
    cfg.rfn_hidden = 5;
    return cfg;
}

// Straight-line MLP on one input row: ReLU hidden layers, linear output.
Eigen::RowVectorXd mlp_oracle(const ParameterStore& s, const std::string& prefix, std::size_t layers,
                              Eigen::RowVectorXd x) {
    for (std::size_t k = 0; k < layers; ++k) {
        const Eigen::MatrixXd w = s.get(prefix + ".w" + std::to_string(k)).value();
        const Eigen::RowVectorXd b = s.get(prefix + ".b" + std::to_string(k)).value().row(0);
        x = x * w + b;
        if (k + 1 < layers) x = x.cwiseMax(0.0);
    }
    return x;
}

void zero_prefix(ParameterStore& s, const std::string& prefix) {
    for (auto& e : s.entries())
        if (e.name.rfind(prefix, 0) == 0) e.tensor.mutable_value().setZero();
}

std::vector<Array> random_frames(int count, Eigen::Index n, Eigen::Index b, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<Array> out;
    for (int t = 0; t < count; ++t) {
        Array a(n, b);
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
        out.push_back(a);
    }
    return out;
}

Matrix frames_to_matrix(const std::vector<Array>& f, int from, int count, Eigen::Index col = 0) {
    Matrix m(count, f[0].rows());
    for (int t = 0; t < count; ++t) m.row(t) = f[static_cast<std::size_t>(from + t)].col(col).transpose();
    return m;
}

}  // namespace

TEST(ModelConfig, Widths) {
    ModelConfig cfg;
    EXPECT_EQ(cfg.s_input_width(), 5);
    cfg.levels = 3;
    EXPECT_EQ(cfg.rfn_input_width(), 25);
    cfg.levels = -1;
    EXPECT_THROW(UmtnModel(cfg, 0), ConfigError);
}

TEST(UmtnModel, ParameterCounts) {
    for (int m : {0, 1, 2, 3}) {
        ModelConfig cfg;
        cfg.levels = m;
        const UmtnModel model(cfg, 1);
        const auto& p = model.params();
        EXPECT_EQ(p.parameter_count("alpha"), 2728u);
        const std::size_t in = static_cast<std::size_t>(8 * m + 1);
        EXPECT_EQ(p.parameter_count("beta"), 3 * (in * 64 + 64 * 64 + 2 * 64) + 65);
        EXPECT_EQ(p.parameter_count("gamma"), static_cast<std::size_t>(std::max(0, m - 1)) * 321u);
    }
    ModelConfig cfg;
    cfg.levels = 3;
    EXPECT_EQ(UmtnModel(cfg, 0).params().parameter_count(), 20907u);
    EXPECT_EQ(UmtnModel(cfg, 0).params().get("beta.wh").rows(), 64);
    EXPECT_EQ(UmtnModel(cfg, 0).params().get("beta.wo").cols(), 1);
}

TEST(SpatialFeatures, Examples) {
    ModelConfig cfg;
    UmtnModel model(cfg, 3);
    const auto sites = random_sites(7, 1);
    model.attach(RadialKernel::multiquadric(1.0), sites);
    const auto feats = model.build_spatial_features();
    ASSERT_EQ(feats.size(), 8u);
    for (const auto& f : feats) EXPECT_EQ(f.shape(), (ad::Shape{7, 7}));

    const auto& geo = model.geometry();
    for (int i = 0; i < 7; i += 2)
        for (int j = 0; j < 7; j += 3) {
            Eigen::RowVectorXd in(5);
            in << sites.coords().row(i), sites.coords().row(j), geo.phi(i, j);
            const auto out = mlp_oracle(model.params(), "alpha", 3, in);
            for (int f = 0; f < 8; ++f) EXPECT_NEAR(feats[f].value()(i, j), out(f), 1e-12);
        }

    zero_prefix(model.params(), "alpha");
    for (const auto& f : model.build_spatial_features()) EXPECT_EQ(f.value().cwiseAbs().maxCoeff(), 0.0);

    ModelConfig three = cfg;
    three.dim = 3;
    UmtnModel wrong(three, 0);
    EXPECT_THROW(wrong.attach(RadialKernel::multiquadric(1.0), sites), ArgumentError);
    EXPECT_THROW(wrong.build_spatial_features(), StateError);
}

TEST(Lstb, ZeroFeaturesGiveResidual) {
    const Tensor c = Tensor::matrix(Array::Random(6, 2));
    std::vector<Tensor> feats(8, Tensor::zeros({6, 6}));
    const auto out = lstb_forward(feats, Tensor::matrix(Array::Random(6, 6)), c);
    ASSERT_EQ(out.size(), 8u);
    for (const auto& col : out) EXPECT_EQ(col.value(), c.value());
    EXPECT_THROW(lstb_forward(feats, Tensor::zeros({5, 5}), c), ArgumentError);
}

TEST(Lstb, TransformsMatchForward) {
    const Tensor c = Tensor::matrix(Array::Random(5, 3));
    const Tensor g = Tensor::matrix(Array::Random(5, 5));
    std::vector<Tensor> feats{Tensor::matrix(Array::Random(5, 5)), Tensor::matrix(Array::Random(5, 5))};
    const auto a = lstb_forward(feats, g, c);
    const auto b = lstb_apply(lstb_transforms(feats, g), c);
    for (std::size_t f = 0; f < 2; ++f) EXPECT_LT((a[f].value() - b[f].value()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Lstb, EqualsCollocationStep) {
    // F = 1, [S] = dt * L phi, G = unscaled Phi^-1, lambda = 0.
    const auto sites = random_sites(10, 4);
    const auto k = RadialKernel::multiquadric(1.0);
    const double dt = 1e-3;
    const auto op = LinearOperatorSpec::pure_diffusion(1.0);
    const InterpolationSystem sys(k, sites);
    CollocationStepper stepper(sys, op, dt);
    const auto geo = SiteGeometry::build(k, sites, 0.0, false);
    const Tensor s = Tensor::matrix(Array(dt * operator_matrix(k, sites, op)));
    Vector u(10);
    for (int i = 0; i < 10; ++i) u(i) = std::sin(sites.coords()(i, 0)) * std::cos(sites.coords()(i, 1));
    const Tensor c = ad::matmul(Tensor::matrix(geo.fit), Tensor::matrix(Array(u)));
    const auto big_c = lstb_forward({s}, Tensor::matrix(geo.g), c);
    const Vector lstb_values = (geo.phi * big_c[0].value()).col(0);
    const Vector colloc_values = sys.phi() * stepper.step(sys.solve(u), 0.0);
    EXPECT_LT((lstb_values - colloc_values).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Nab, Examples) {
    std::mt19937_64 rng(5);
    ParameterStore p;
    register_mlp(p, "g", {8, 32, 1}, rng);
    std::vector<Tensor> level;
    for (int f = 0; f < 8; ++f) level.push_back(Tensor::matrix(Array::Random(6, 2)));
    const Tensor out = nab_forward(p, "g", level);
    EXPECT_EQ(out.shape(), (ad::Shape{6, 2}));
    for (int i = 0; i < 6; ++i)
        for (int b = 0; b < 2; ++b) {
            Eigen::RowVectorXd row(8);
            for (int f = 0; f < 8; ++f) row(f) = level[f].value()(i, b);
            EXPECT_NEAR(out.value()(i, b), mlp_oracle(p, "g", 2, row)(0), 1e-13);
        }
    zero_prefix(p, "g");
    p.get("g.b1").mutable_value()(0, 0) = 0.75;
    EXPECT_EQ(nab_forward(p, "g", level).value(), Array::Constant(6, 2, 0.75));
    level.pop_back();
    EXPECT_THROW(nab_forward(p, "g", level), ArgumentError);
}

TEST(MultilevelFeatures, Examples) {
    const auto sites = random_sites(6, 6);
    const Array u = Array::Random(6, 2);
    for (int m : {0, 1, 3}) {
        ModelConfig cfg;
        cfg.levels = m;
        cfg.lambda = 1e-10;
        UmtnModel model(cfg, 7);
        model.attach(RadialKernel::multiquadric(1.0), sites);
        const auto t = lstb_transforms(model.build_spatial_features(), Tensor::matrix(model.geometry().g));
        const Tensor c0 = model.coefficients(Tensor::matrix(u));
        const Tensor big_u = model.multilevel_features(t, c0);
        EXPECT_EQ(big_u.cols(), 8 * m + 1);
        EXPECT_EQ(big_u.rows(), 12);
        // First column is Phi c0, which reproduces u for small lambda.
        for (int i = 0; i < 6; ++i)
            for (int b = 0; b < 2; ++b) EXPECT_NEAR(big_u.value()(i * 2 + b, 0), u(i, b), 1e-6);
    }
}

TEST(MultilevelFeatures, MatchesHandCascade) {
    const auto sites = random_sites(5, 8);
    UmtnModel model(small_config(2), 9);
    model.attach(RadialKernel::multiquadric(0.8), sites);
    const auto& geo = model.geometry();
    const Array u = Array::Random(5, 1);
    const auto feats = model.build_spatial_features();
    const Tensor big_u = model.multilevel_features(lstb_transforms(feats, Tensor::matrix(geo.g)),
                                                   model.coefficients(Tensor::matrix(u)));
    // Oracle in plain Eigen.
    const Eigen::MatrixXd phi = geo.phi, g = geo.g;
    Eigen::VectorXd c = Eigen::MatrixXd(geo.fit) * Eigen::VectorXd(u.col(0));
    std::vector<Eigen::VectorXd> cols{phi * c};
    for (int level = 1; level <= 2; ++level) {
        Eigen::MatrixXd cf(5, 3);
        for (int f = 0; f < 3; ++f) cf.col(f) = c + g * Eigen::MatrixXd(feats[f].value()) * c;
        for (int f = 0; f < 3; ++f) cols.push_back(phi * cf.col(f));
        if (level == 1)
            for (int i = 0; i < 5; ++i) c(i) = mlp_oracle(model.params(), "gamma1", 2, cf.row(i))(0);
    }
    ASSERT_EQ(big_u.cols(), 7);
    for (int j = 0; j < 7; ++j)
        for (int i = 0; i < 5; ++i) EXPECT_NEAR(big_u.value()(i, j), cols[j](i), 1e-12);
}

TEST(Rfn, Examples) {
    std::mt19937_64 rng(10);
    ParameterStore p;
    register_gru(p, "beta", 9, 64, rng);
    const Tensor x = Tensor::matrix(Array::Random(4, 9));
    const Tensor h = Tensor::matrix(Array::Random(4, 64));
    auto st = rfn_step(p, "beta", x, h);
    EXPECT_EQ(st.hidden.shape(), (ad::Shape{4, 64}));
    EXPECT_EQ(st.prediction.shape(), (ad::Shape{4, 1}));

    zero_prefix(p, "beta.wo");
    zero_prefix(p, "beta.bo");
    EXPECT_EQ(rfn_step(p, "beta", x, h).prediction.value(), Array::Zero(4, 1));

    zero_prefix(p, "beta");
    EXPECT_LT((rfn_step(p, "beta", x, h).hidden.value() - 0.5 * h.value()).cwiseAbs().maxCoeff(), 1e-15);

    EXPECT_THROW(rfn_step(p, "beta", Tensor::zeros({4, 8}), h), ArgumentError);
    EXPECT_THROW(rfn_step(p, "beta", x, Tensor::zeros({3, 64})), ArgumentError);
}

TEST(Rfn, MatchesGruEquations) {
    std::mt19937_64 rng(11);
    ParameterStore p;
    register_gru(p, "beta", 3, 4, rng);
    p.get("beta.bx").mutable_value().setRandom();
    p.get("beta.bh").mutable_value().setRandom();
    const Eigen::RowVectorXd x = Eigen::RowVectorXd::Random(3), h = Eigen::RowVectorXd::Random(4);
    const auto st = rfn_step(p, "beta", Tensor::matrix(Array(x)), Tensor::matrix(Array(h)));
    const Eigen::MatrixXd wx = p.get("beta.wx").value(), wh = p.get("beta.wh").value();
    const Eigen::RowVectorXd bx = p.get("beta.bx").value().row(0), bh = p.get("beta.bh").value().row(0);
    auto sig = [](Eigen::RowVectorXd v) { return v.unaryExpr([](double a) { return 1 / (1 + std::exp(-a)); }).eval(); };
    const Eigen::RowVectorXd gx = x * wx + bx, gh = h * wh + bh;
    const Eigen::RowVectorXd r = sig(gx.segment(0, 4) + gh.segment(0, 4));
    const Eigen::RowVectorXd z = sig(gx.segment(4, 4) + gh.segment(4, 4));
    const Eigen::RowVectorXd n = (gx.segment(8, 4) + r.cwiseProduct(gh.segment(8, 4))).unaryExpr([](double a) { return std::tanh(a); });
    const Eigen::RowVectorXd h1 = (1 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(st.hidden.value()(0, j), h1(j), 1e-14);
    const double pred = h1.dot(Eigen::VectorXd(p.get("beta.wo").value().col(0))) + p.get("beta.bo").value()(0, 0);
    EXPECT_NEAR(st.prediction.item(), pred, 1e-14);
}

TEST(Rollout, HorizonZero) {
    UmtnModel model(small_config(1), 1);
    model.attach(RadialKernel::multiquadric(1.0), random_sites(5, 2));
    const auto f = random_frames(4, 5, 1, 3);
    const auto r = rollout(model, frames_to_matrix(f, 0, 4), 0, std::nullopt, 0.0, nullptr);
    EXPECT_EQ(r.predictions.rows(), 0);
    EXPECT_EQ(r.all.rows(), 3);
}

TEST(Rollout, FullTeacherForcingEqualsObservedInputs) {
    UmtnModel model(small_config(2), 2);
    model.attach(RadialKernel::multiquadric(1.0), random_sites(5, 3));
    const int tau = 3, horizon = 4;
    const auto f = random_frames(tau + horizon, 5, 1, 4);
    std::mt19937_64 rng(1);
    const auto forced = rollout(model, frames_to_matrix(f, 0, tau), horizon, frames_to_matrix(f, 1, tau + horizon - 1),
                                1.0, &rng);
    // Observing every input frame directly gives the same one-step predictions.
    const auto observed = rollout(model, frames_to_matrix(f, 0, tau + horizon - 1), 1, std::nullopt, 0.0, nullptr);
    EXPECT_EQ(forced.all, observed.all);
}

TEST(Rollout, ClosedLoopIgnoresTeacherValues) {
    UmtnModel model(small_config(1), 3);
    model.attach(RadialKernel::multiquadric(1.0), random_sites(5, 5));
    const auto f = random_frames(6, 5, 1, 6);
    Matrix teacher = frames_to_matrix(f, 1, 5);
    const auto a = rollout(model, frames_to_matrix(f, 0, 3), 3, teacher, 0.0, nullptr);
    teacher.bottomRows(3).setConstant(123.0);
    const auto b = rollout(model, frames_to_matrix(f, 0, 3), 3, teacher, 0.0, nullptr);
    const auto c = rollout(model, frames_to_matrix(f, 0, 3), 3, std::nullopt, 0.0, nullptr);
    EXPECT_EQ(a.all, b.all);
    EXPECT_EQ(a.all, c.all);
}

TEST(Rollout, Errors) {
    UmtnModel model(small_config(1), 3);
    model.attach(RadialKernel::multiquadric(1.0), random_sites(5, 5));
    const auto f = random_frames(3, 5, 1, 6);
    std::mt19937_64 rng(0);
    EXPECT_THROW(rollout(model, frames_to_matrix(f, 0, 3), 2, std::nullopt, 0.5, &rng), ArgumentError);
    EXPECT_THROW(rollout(model, frames_to_matrix(f, 0, 3), 2, Matrix::Zero(2, 5), 1.0, &rng), ArgumentError);
    EXPECT_THROW(rollout(model, frames_to_matrix(f, 0, 3), 2, Matrix::Zero(4, 5), 1.5, &rng), ArgumentError);
    EXPECT_THROW(model.rollout_batch(f, 0, 2, 0.0, nullptr), ArgumentError);
    EXPECT_THROW(model.rollout_batch({Array::Zero(4, 1)}, 1, 2, 0.0, nullptr), ArgumentError);
}

TEST(Rollout, DeterministicAndBatchConsistent) {
    UmtnModel model(small_config(2), 4);
    model.attach(RadialKernel::multiquadric(1.0), random_sites(6, 7));
    const auto f = random_frames(7, 6, 3, 8);
    std::mt19937_64 r1(5), r2(5);
    const auto a = model.rollout_batch(f, 3, 4, 0.5, &r1);
    const auto b = model.rollout_batch(f, 3, 4, 0.5, &r2);
    for (std::size_t k = 0; k < a.predictions.size(); ++k) EXPECT_EQ(a.predictions[k].value(), b.predictions[k].value());
    // Each batch column matches a single-sequence rollout.
    const auto batch = model.rollout_batch(f, 3, 4, 0.0, nullptr);
    for (Eigen::Index col = 0; col < 3; ++col) {
        const auto single = rollout(model, frames_to_matrix(f, 0, 3, col), 4, std::nullopt, 0.0, nullptr);
        for (std::size_t k = 0; k < batch.predictions.size(); ++k)
            for (Eigen::Index i = 0; i < 6; ++i)
                EXPECT_NEAR(batch.predictions[k].value()(i, col), single.all(static_cast<Eigen::Index>(k), i), 1e-12);
    }
}

TEST(Rollout, SitePermutationConsistency) {
    const auto sites = random_sites(6, 9);
    UmtnModel a(small_config(2), 5);
    a.attach(RadialKernel::multiquadric(1.0), sites);
    UmtnModel b(small_config(2), 5);
    const std::vector<Eigen::Index> perm{3, 0, 5, 1, 4, 2};
    b.attach(RadialKernel::multiquadric(1.0), sites.permuted(perm));
    const auto f = random_frames(3, 6, 1, 10);
    Matrix obs = frames_to_matrix(f, 0, 3), obs_p(3, 6);
    for (int j = 0; j < 6; ++j) obs_p.col(j) = obs.col(perm[j]);
    const auto ra = rollout(a, obs, 3, std::nullopt, 0.0, nullptr);
    const auto rb = rollout(b, obs_p, 3, std::nullopt, 0.0, nullptr);
    for (int j = 0; j < 6; ++j) EXPECT_LT((rb.all.col(j) - ra.all.col(perm[j])).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Rollout, EndToEndGradientCheck) {
    // M = 2, n = 5, tau = 3, T = 3, full loss over every predicted step.
    UmtnModel model(small_config(2), 6);
    model.attach(RadialKernel::multiquadric(1.0), random_sites(5, 11));
    const auto f = random_frames(6, 5, 2, 12);
    auto loss_fn = [&](ParameterStore&) {
        std::mt19937_64 rng(3);
        const auto out = model.rollout_batch(f, 3, 3, 0.5, &rng);
        Tensor total;
        for (int t = out.first_step; t <= 5; ++t) {
            const Tensor term = ad::squared_error(out.at(t), Tensor::matrix(f[static_cast<std::size_t>(t)]));
            total = total.defined() ? ad::add(total, term) : term;
        }
        return total;
    };
    const auto rep = ad::gradient_check(loss_fn, model.params(), 1e-4);
    EXPECT_TRUE(rep.passed) << rep.worst_parameter << " " << rep.max_relative_error;
}

TEST(Drc, Examples) {
    DrcConfig cfg;
    DrcModel model(cfg, 1);
    EXPECT_EQ(model.params().get("alpha.w2").cols(), 16);
    EXPECT_EQ(model.params().get("agg.w0").rows(), 18);
    model.attach(RadialKernel::multiquadric(1.0), random_sites(6, 1));
    zero_prefix(model.params(), "alpha");
    zero_prefix(model.params(), "agg");
    model.params().get("agg.b3").mutable_value()(0, 0) = -0.3;
    const Vector out = drc_forward(model, {Vector::Random(6), Vector::Random(6)});
    EXPECT_EQ(out, Vector::Constant(6, -0.3));
    EXPECT_THROW(drc_forward(model, {Vector::Random(6)}), ArgumentError);
}

TEST(Drc, MatchesStraightLineOracle) {
    DrcConfig cfg;
    cfg.feature_width = 2;
    cfg.aggregator_hidden = {4, 3};
    DrcModel model(cfg, 2);
    const auto sites = random_sites(3, 2);
    model.attach(RadialKernel::multiquadric(1.0), sites);
    const auto& geo = model.geometry();
    const Vector prev = Vector::Random(3), cur = Vector::Random(3);
    const Vector got = drc_forward(model, {prev, cur});
    const Eigen::MatrixXd phi = geo.phi, g = geo.g, fit = geo.fit;
    const Vector c = fit * cur;
    Eigen::MatrixXd s0(3, 3), s1(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            Eigen::RowVectorXd in(5);
            in << sites.coords().row(i), sites.coords().row(j), phi(i, j);
            const auto o = mlp_oracle(model.params(), "alpha", 3, in);
            s0(i, j) = o(0);
            s1(i, j) = o(1);
        }
    const Vector f0 = phi * (c + g * s0 * c), f1 = phi * (c + g * s1 * c);
    for (int i = 0; i < 3; ++i) {
        Eigen::RowVectorXd row(4);
        row << f0(i), f1(i), prev(i), cur(i);
        EXPECT_NEAR(got(i), mlp_oracle(model.params(), "agg", 3, row)(0), 1e-12);
    }
}

TEST(Drc, RolloutShapesAndGradient) {
    DrcConfig cfg;
    cfg.feature_width = 2;
    cfg.s_hidden1 = 4;
    cfg.s_hidden2 = 3;
    cfg.aggregator_hidden = {4};
    DrcModel model(cfg, 3);
    model.attach(RadialKernel::multiquadric(1.0), random_sites(4, 3));
    const auto f = random_frames(5, 4, 2, 4);
    const auto out = model.rollout_batch(f, 3, 2, 0.0, nullptr);
    EXPECT_EQ(out.first_step, 2);
    EXPECT_EQ(out.predictions.size(), 3u);
    auto loss_fn = [&](ParameterStore&) {
        const auto o = model.rollout_batch(f, 3, 2, 1.0, nullptr);
        Tensor total = ad::squared_error(o.at(2), Tensor::matrix(f[2]));
        for (int t = 3; t <= 4; ++t) total = ad::add(total, ad::squared_error(o.at(t), Tensor::matrix(f[static_cast<std::size_t>(t)])));
        return total;
    };
    EXPECT_TRUE(ad::gradient_check(loss_fn, model.params(), 1e-4).passed);
}
