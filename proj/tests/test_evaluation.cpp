#include "umtn/evaluation.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace umtn;

namespace {

// Values u_t = t + site index, split train/val/test = 1/1/n-2.
SequenceDataset linear_dataset(std::size_t n_seq, int n_sites, std::size_t length) {
    SequenceDataset ds;
    Matrix c(n_sites, 2);
    for (int i = 0; i < n_sites; ++i) c.row(i) << i, 0.5 * i;
    ds.sites = SiteSet(c);
    ds.n_sequences = n_seq;
    ds.length = length;
    ds.tau = 1;
    ds.horizon = static_cast<int>(length) - 1;
    for (std::size_t k = 0; k < n_seq; ++k)
        for (std::size_t t = 0; t < length; ++t)
            for (int i = 0; i < n_sites; ++i) ds.values.push_back(static_cast<double>(t + i + k));
    ds.split = sequential_split(1, 1, n_seq - 2);
    return ds;
}

EvalReport run_with(double value, int steps, int sites) {
    EvalReport r;
    r.mae_mean = value;
    r.per_run = {value};
    r.per_step = Vector::Constant(steps, value);
    r.per_site = Vector::Constant(sites, value);
    r.n_runs = 1;
    r.tau = 1;
    r.horizon = steps;
    return r;
}

}  // namespace

TEST(Mae, Examples) {
    Matrix a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    b << 1, 2, 3, 4;
    EXPECT_EQ(mae(a, b), 0.0);
    b << 0, 2, 3, 8;
    EXPECT_DOUBLE_EQ(mae(a, b), 5.0 / 4.0);
    EXPECT_DOUBLE_EQ(mae(Matrix::Zero(3, 1), Matrix::Constant(3, 1, -2.0)), 2.0);
}

TEST(Mae, Errors) {
    EXPECT_THROW(mae(Matrix::Zero(2, 2), Matrix::Zero(2, 3)), ArgumentError);
    EXPECT_THROW(mae(Matrix::Zero(0, 2), Matrix::Zero(0, 2)), ArgumentError);
}

TEST(Mae, SymmetricAndNonNegative) {
    for (int k = 0; k < 10; ++k) {
        const Matrix a = Matrix::Random(4, 3), b = Matrix::Random(4, 3);
        EXPECT_EQ(mae(a, b), mae(b, a));
        EXPECT_GE(mae(a, b), 0.0);
    }
}

TEST(Persistence, LinearTrend) {
    // u_t = t + i + k, tau = 1, T = 2: errors 1 and 2, mean 1.5.
    const auto ds = linear_dataset(4, 3, 3);
    const auto rep = persistence_baseline(ds, Split::test, 1, 2);
    EXPECT_DOUBLE_EQ(rep.mae_mean, 1.5);
    EXPECT_EQ(rep.per_step.size(), 2);
    EXPECT_DOUBLE_EQ(rep.per_step(0), 1.0);
    EXPECT_DOUBLE_EQ(rep.per_step(1), 2.0);
    EXPECT_EQ(rep.per_site, Vector::Constant(3, 1.5));
    EXPECT_EQ(rep.model, "persistence");
}

TEST(Persistence, ConstantSequencesScoreZero) {
    auto ds = linear_dataset(4, 3, 5);
    ds.values.assign(ds.values.size(), 0.7);
    EXPECT_EQ(persistence_baseline(ds, Split::val, 2, 3).mae_mean, 0.0);
}

TEST(Persistence, Errors) {
    const auto ds = linear_dataset(4, 3, 3);
    EXPECT_THROW(persistence_baseline(ds, Split::test, 0, 2), ArgumentError);
    EXPECT_THROW(persistence_baseline(ds, Split::test, 1, 3), ArgumentError);
    EXPECT_THROW(persistence_baseline(ds, Split::test, 1, 0), ArgumentError);
    auto empty = ds;
    empty.split = sequential_split(4, 0, 0);
    EXPECT_THROW(persistence_baseline(empty, Split::test, 1, 2), ArgumentError);
}

TEST(Aggregate, SingleRunHasUndefinedStd) {
    const auto rep = aggregate_runs({run_with(0.25, 3, 2)});
    EXPECT_EQ(rep.n_runs, 1);
    EXPECT_EQ(rep.mae_mean, 0.25);
    EXPECT_EQ(rep.mae_std, 0.0);
    EXPECT_FALSE(rep.std_defined);
}

TEST(Aggregate, SampleStd) {
    const auto rep = aggregate_runs({run_with(1.0, 3, 2), run_with(2.0, 3, 2), run_with(4.0, 3, 2)});
    EXPECT_DOUBLE_EQ(rep.mae_mean, 7.0 / 3.0);
    // Deviations -4/3, -1/3, 5/3: sum of squares 42/9, divided by 2.
    EXPECT_NEAR(rep.mae_std, std::sqrt(42.0 / 18.0), 1e-15);
    EXPECT_TRUE(rep.std_defined);
    EXPECT_EQ(rep.per_run, (std::vector<double>{1.0, 2.0, 4.0}));
    EXPECT_NEAR(rep.per_step(1), 7.0 / 3.0, 1e-15);
    EXPECT_THROW(aggregate_runs({}), ArgumentError);
}

TEST(EvaluateModel, MatchesManualForecastAndLeavesDatasetUntouched) {
    const auto ds = linear_dataset(6, 4, 4);
    const auto before = ds.values;
    ModelConfig cfg;
    cfg.levels = 1;
    cfg.feature_width = 2;
    cfg.s_hidden1 = 4;
    cfg.s_hidden2 = 4;
    cfg.nab_hidden = 4;
    cfg.rfn_hidden = 4;
    UmtnModel model(cfg, 1);
    model.attach(RadialKernel::multiquadric(1.0), ds.sites);
    const auto rep = evaluate_model(model, ds, Split::test, 2, 2);
    EXPECT_EQ(ds.values, before);
    double total = 0.0;
    for (auto k : ds.indices(Split::test)) {
        const auto r = rollout(model, ds.sequence(k).topRows(2), 2, std::nullopt, 0.0, nullptr);
        total += mae(ds.sequence(k).middleRows(2, 2), r.predictions);
    }
    EXPECT_NEAR(rep.mae_mean, total / 4.0, 1e-12);
    EXPECT_NEAR(rep.per_step.mean(), rep.mae_mean, 1e-12);
    EXPECT_NEAR(rep.per_site.mean(), rep.mae_mean, 1e-12);
    EXPECT_EQ(rep.model, model.kind());

    UmtnModel other(cfg, 1);
    other.attach(RadialKernel::multiquadric(1.0), linear_dataset(6, 5, 4).sites);
    EXPECT_THROW(evaluate_model(other, ds, Split::test, 2, 2), ValidationError);
}

TEST(EvaluateRuns, CallsTrainerPerSeed) {
    const auto ds = linear_dataset(5, 3, 3);
    std::vector<std::uint64_t> seen;
    ModelConfig cfg;
    cfg.levels = 0;
    cfg.rfn_hidden = 4;
    const auto rep = evaluate_runs(
        [&](std::uint64_t s) {
            seen.push_back(s);
            auto m = std::make_unique<UmtnModel>(cfg, s);
            m->attach(RadialKernel::multiquadric(1.0), ds.sites);
            return std::unique_ptr<Forecaster>(std::move(m));
        },
        ds, Split::test, 1, 2, {4, 9});
    EXPECT_EQ(seen, (std::vector<std::uint64_t>{4, 9}));
    EXPECT_EQ(rep.n_runs, 2);
    EXPECT_TRUE(rep.std_defined);
}

TEST(ReportCsv, Format) {
    const auto ds = linear_dataset(4, 3, 3);
    const auto rep = persistence_baseline(ds, Split::test, 1, 2);
    std::ostringstream steps, sites;
    write_per_step_csv(steps, rep);
    write_per_site_csv(sites, rep, ds.sites);
    EXPECT_EQ(steps.str(), "step,mae\n1,1\n2,2\n");
    EXPECT_EQ(sites.str(), "site,x1,x2,mae\n0,0,0,1.5\n1,1,0.5,1.5\n2,2,1,1.5\n");
}

TEST(Persistence, InvariantToSitePermutation) {
    auto ds = linear_dataset(4, 3, 4);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (double& v : ds.values) v = g(rng);
    const std::vector<Eigen::Index> perm{2, 0, 1};
    SequenceDataset p = ds;
    p.sites = ds.sites.permuted(perm);
    for (std::size_t k = 0; k < ds.n_sequences; ++k)
        for (std::size_t t = 0; t < ds.length; ++t)
            for (int i = 0; i < 3; ++i) p.sequence(k)(t, i) = ds.sequence(k)(t, perm[i]);
    EXPECT_NEAR(persistence_baseline(p, Split::test, 2, 2).mae_mean, persistence_baseline(ds, Split::test, 2, 2).mae_mean,
                1e-15);
}

TEST(Aggregates, TwoSequenceHandComputation) {
    // Two test sequences, two sites, tau = 1, T = 2, persistence forecasts.
    SequenceDataset ds;
    Matrix c(2, 1);
    c << 0, 1;
    ds.sites = SiteSet(c);
    ds.n_sequences = 2;
    ds.length = 3;
    ds.tau = 1;
    ds.horizon = 2;
    ds.values = {0, 0, 1, -1, 3, 0,   // sequence 0: errors (1,1), (3,0)
                 2, 2, 2, 4, 0, 2};  // sequence 1: errors (0,2), (2,0)
    ds.split = sequential_split(0, 0, 2);
    const auto rep = persistence_baseline(ds, Split::test, 1, 2);
    EXPECT_DOUBLE_EQ(rep.mae_mean, (5.0 / 4.0 + 4.0 / 4.0) / 2.0);
    EXPECT_DOUBLE_EQ(rep.per_step(0), (1.0 + 1.0) / 2.0);
    EXPECT_DOUBLE_EQ(rep.per_step(1), (1.5 + 1.0) / 2.0);
    EXPECT_DOUBLE_EQ(rep.per_site(0), (2.0 + 1.0) / 2.0);
    EXPECT_DOUBLE_EQ(rep.per_site(1), (0.5 + 1.0) / 2.0);
}

TEST(EvaluateModel, LeavesParametersUntouched) {
    const auto ds = linear_dataset(5, 4, 4);
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.feature_width = 2;
    cfg.rfn_hidden = 4;
    UmtnModel model(cfg, 8);
    model.attach(RadialKernel::multiquadric(1.0), ds.sites);
    auto snapshot = [&] {
        std::vector<double> v;
        for (const auto& e : model.params().entries())
            v.insert(v.end(), e.tensor.value().data(), e.tensor.value().data() + e.tensor.value().size());
        return v;
    };
    const auto before = snapshot();
    evaluate_model(model, ds, Split::test, 2, 2);
    EXPECT_EQ(snapshot(), before);
}

TEST(Mae, TriangleBound) {
    for (int k = 0; k < 20; ++k) {
        const Matrix a = Matrix::Random(3, 5), b = Matrix::Random(3, 5), c = Matrix::Random(3, 5);
        EXPECT_LE(mae(a, c), mae(a, b) + mae(b, c) + 1e-15);
    }
}
