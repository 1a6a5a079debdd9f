#include "umtn/umtn.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <numbers>

using namespace umtn;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string config;
    std::string out;
    bool seed_given() const { return seed_opt && seed_opt->count() > 0; }
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
    c.seed_opt = cmd->add_option("--seed", c.seed, "Random seed (overrides the config file)");
    cmd->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
    auto* o = cmd->add_option("--out", c.out, "Output path");
    if (out_required) o->required();
}

json load_config(const Common& c) { return c.config.empty() ? json::object() : read_json_file(c.config); }

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    out.precision(17);
    return out;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

/// Copy of `ds` in the normalized units described by `stats`.
SequenceDataset apply_stats(const SequenceDataset& ds, const NormalizationStats& stats) {
    if (ds.normalized) return ds;
    SequenceDataset out = ds;
    for (double& v : out.values) v = stats.normalize(v);
    out.stats = stats;
    out.normalized = true;
    return out;
}

NormalizationStats checkpoint_stats(const json& manifest, const SequenceDataset& ds) {
    const auto& extra = manifest.value("extra", json::object());
    if (extra.contains("stats"))
        return {extra["stats"].at("mean").get<double>(), extra["stats"].at("variance").get<double>()};
    return ds.stats;
}

std::string model_label(const Forecaster& m) {
    if (const auto* u = dynamic_cast<const UmtnModel*>(&m)) return "umtn-L" + std::to_string(u->config().levels);
    return m.kind();
}

// ---------------------------------------------------------------------------

struct GenData {
    Common c;
    unsigned threads = 0;
    std::string sites_csv, sequences_csv;
    std::vector<std::size_t> split;
    int tau = 5, horizon = 15;

    void attach(CLI::App& app) {
        auto* cmd = app.add_subcommand("gen-data", "Generate the synthetic convection-diffusion dataset or ingest CSV data");
        add_common(cmd, c);
        cmd->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
        auto* s = cmd->add_option("--sites-csv", sites_csv, "Sites CSV (site_id, coord_1..coord_d)")->check(CLI::ExistingFile);
        auto* q = cmd->add_option("--sequences-csv", sequences_csv, "Sequences CSV (sequence_id, time_index, site_id, value)")
                      ->check(CLI::ExistingFile);
        s->needs(q);
        q->needs(s);
        cmd->add_option("--split", split, "Train/val/test counts for CSV ingestion")->expected(3)->delimiter(',');
        cmd->add_option("--tau", tau, "Observed steps for CSV ingestion");
        cmd->add_option("--horizon", horizon, "Forecast steps for CSV ingestion");
        cmd->callback([this] { run(); });
    }

    void run() {
        SequenceDataset ds;
        if (!sites_csv.empty()) {
            if (split.size() != 3) throw ConfigError("--split a,b,c is required with CSV ingestion");
            ds = ingest_csv(sites_csv, sequences_csv, tau, horizon, {split[0], split[1], split[2]});
            if (c.seed_given()) ds.seed = c.seed;
        } else {
            auto cfg = config_from<ConvDiffConfig>(load_config(c), "data");
            if (c.seed_given()) cfg.seed = c.seed;
            ds = generate_dataset(cfg, threads);
        }
        save_dataset(ds, c.out);
        std::cout << json{{"out", c.out}, {"N", ds.n_sequences}, {"length", ds.length}, {"n", ds.n_sites()},
                          {"site_hash", ds.sites.hash()}}.dump()
                  << '\n';
    }
};

struct TuneKernel {
    Common c;
    std::string data;
    std::size_t max_snapshots = 0;
    bool write_back = false;

    void attach(CLI::App& app) {
        auto* cmd = app.add_subcommand("tune-kernel", "Select the RBF kernel by leave-one-out cross-validation");
        add_common(cmd, c);
        cmd->add_option("--data", data, "Dataset directory")->required();
        cmd->add_option("--max-snapshots", max_snapshots, "Use only the first N training frames (0 = all)");
        cmd->add_flag("--write-back", write_back, "Record the selected kernel in the dataset manifest");
        cmd->callback([this] { run(); });
    }

    void run() {
        const json cfg = load_config(c);
        auto ds = load_dataset(data);
        const auto candidates = cfg.contains("candidates")
                                    ? config_from<std::vector<RadialKernel>>(cfg, "candidates")
                                    : default_kernel_candidates();
        const auto res = loocv_select_kernel(candidates, ds, c.seed_given() ? c.seed : ds.seed, max_snapshots);
        json scores = json::array();
        for (const auto& s : res.scores)
            scores.push_back({{"kernel", s.kernel},
                              {"mean_abs_error", std::isfinite(s.mean_abs_error) ? json(s.mean_abs_error) : json(nullptr)}});
        const json report{{"best", res.best}, {"best_index", res.best_index}, {"scores", scores}};
        write_json(c.out, report);
        auto csv = open_out(fs::path(c.out).replace_extension(".csv"));
        write_loocv_csv(csv, res);
        if (write_back) {
            ds.kernel = res.best;
            save_dataset(ds, data);
        }
        std::cout << json{{"best", res.best}}.dump() << '\n';
    }
};

struct SolveConfig {
    std::string preset = "heat1d";
    RadialKernel kernel = RadialKernel::multiquadric(1.0);
    int n_sites = 25;
    double dt = 1e-3;
    double t_end = 0.1;
    double diffusion = 1.0;
    std::uint64_t seed = 0;
};

void from_json(const json& j, SolveConfig& s) {
    s.preset = j.value("preset", s.preset);
    if (j.contains("kernel")) s.kernel = j.at("kernel").get<RadialKernel>();
    s.n_sites = j.value("n_sites", s.n_sites);
    s.dt = j.value("dt", s.dt);
    s.t_end = j.value("t_end", s.t_end);
    s.diffusion = j.value("diffusion", s.diffusion);
    s.seed = j.value("seed", s.seed);
}

struct Solve {
    Common c;
    std::string sites_csv;

    void attach(CLI::App& app) {
        auto* cmd = app.add_subcommand("solve", "Integrate a linear PDE with explicit RBF collocation");
        add_common(cmd, c);
        cmd->add_option("--sites-csv", sites_csv, "Sites CSV replacing the preset's node placement")
            ->check(CLI::ExistingFile);
        cmd->callback([this] { run(); });
    }

    SiteSet preset_sites(const SolveConfig& s) const {
        if (!sites_csv.empty()) {
            const auto rows = io_detail::read_csv(sites_csv);
            if (rows.empty()) throw DataError("sites CSV has no rows");
            Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size() - 1));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != rows[0].size()) throw DataError("wrong column count in sites CSV");
                for (std::size_t k = 1; k < rows[i].size(); ++k)
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k - 1)) =
                        io_detail::parse_double(rows[i][k], "sites CSV row " + std::to_string(i + 2));
            }
            return SiteSet(std::move(m));
        }
        if (s.n_sites < 2) throw ConfigError("solve: n_sites must be >= 2");
        if (s.preset == "heat1d") {
            Matrix m(s.n_sites, 1);
            for (int i = 0; i < s.n_sites; ++i) m(i, 0) = std::numbers::pi * i / (s.n_sites - 1);
            return SiteSet(std::move(m));
        }
        std::mt19937_64 rng(s.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Matrix m(s.n_sites, 2);
        for (int i = 0; i < s.n_sites; ++i) m.row(i) << u(rng), u(rng);
        return SiteSet(std::move(m));
    }

    void run() {
        auto s = config_from<SolveConfig>(load_config(c), "solve");
        if (c.seed_given()) s.seed = c.seed;
        if (s.preset != "heat1d" && s.preset != "diffusion2d")
            throw ConfigError("unknown solve preset '" + s.preset + "' (heat1d, diffusion2d)");
        const auto sites = preset_sites(s);
        CollocationStepper st(InterpolationSystem(s.kernel, sites), LinearOperatorSpec::pure_diffusion(s.diffusion), s.dt);
        Vector w(sites.size());
        if (s.preset == "heat1d") {
            // u0 = sin x with zero Dirichlet values at both ends of the interval.
            Eigen::Index lo = 0, hi = 0;
            for (Eigen::Index i = 0; i < sites.size(); ++i) {
                w(i) = std::sin(sites.coords()(i, 0));
                if (sites.coords()(i, 0) < sites.coords()(lo, 0)) lo = i;
                if (sites.coords()(i, 0) > sites.coords()(hi, 0)) hi = i;
            }
            st.set_dirichlet({lo, hi}, [](double) { return Vector::Zero(2); });
        } else {
            const Point centre = sites.coords().colwise().mean().transpose();
            for (Eigen::Index i = 0; i < sites.size(); ++i)
                w(i) = std::exp(-(sites.coords().row(i).transpose() - centre).squaredNorm() / 0.05);
        }
        const auto traj = solve_ivp(st, w, s.t_end);
        auto out = open_out(c.out);
        out << "t,site_index,value\n";
        for (const auto& p : traj)
            for (Eigen::Index i = 0; i < p.values.size(); ++i) out << p.time << ',' << i << ',' << p.values(i) << '\n';
        std::cout << json{{"out", c.out}, {"steps", traj.size() - 1}, {"n", sites.size()}}.dump() << '\n';
    }
};

struct Train {
    Common c;
    std::string data, history, model_kind;
    int levels = -1;
    int epochs = 0;
    bool verbose = false;

    void attach(CLI::App& app) {
        auto* cmd = app.add_subcommand("train", "Train a UMTN (or DRC) forecaster");
        add_common(cmd, c);
        cmd->add_option("--data", data, "Dataset directory")->required();
        cmd->add_option("--history", history, "History CSV (default <out>/history.csv)");
        cmd->add_option("--model", model_kind, "umtn or drc (default from config, else umtn)");
        cmd->add_option("--levels", levels, "Number of UMTN levels M (overrides the config)");
        cmd->add_option("--epochs", epochs, "Maximum epochs (overrides the config)");
        cmd->add_flag("-v,--verbose", verbose, "Print one line per epoch to stderr");
        cmd->callback([this] { run(); });
    }

    void run() {
        const json cfg = load_config(c);
        const auto raw = load_dataset(data);
        const auto ds = raw.normalized ? raw : normalize(raw, &std::cerr);
        auto tc = config_from<TrainConfig>(cfg, "train");
        const json tj = cfg.value("train", json::object());
        if (!tj.contains("tau")) tc.tau = ds.tau;
        if (!tj.contains("horizon")) tc.horizon = ds.horizon;
        if (c.seed_given()) tc.seed = c.seed;
        if (epochs > 0) tc.max_epochs = epochs;
        const RadialKernel kernel = cfg.contains("kernel") ? cfg.at("kernel").get<RadialKernel>()
                                                           : ds.kernel.value_or(RadialKernel::multiquadric(1.0));
        const std::string kind = !model_kind.empty() ? model_kind : cfg.value("model_kind", std::string("umtn"));

        std::unique_ptr<Forecaster> model;
        if (kind == "umtn") {
            auto mc = config_from<ModelConfig>(cfg, "model");
            if (levels >= 0) mc.levels = levels;
            mc.dim = static_cast<int>(ds.sites.dim());
            auto m = std::make_unique<UmtnModel>(mc, tc.seed);
            m->attach(kernel, ds.sites);
            model = std::move(m);
        } else if (kind == "drc") {
            auto dc = config_from<DrcConfig>(cfg, "drc");
            dc.dim = static_cast<int>(ds.sites.dim());
            auto m = std::make_unique<DrcModel>(dc, tc.seed);
            m->attach(kernel, ds.sites);
            model = std::move(m);
        } else {
            throw ConfigError("unknown model kind '" + kind + "' (umtn, drc)");
        }

        TrainOptions opts;
        if (verbose)
            opts.on_epoch = [](const EpochRecord& r) {
                std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " val_mae " << r.val_mae << '\n';
            };
        const auto hist = train_loop(*model, ds, tc, opts);
        const json extra{{"stats", {{"mean", ds.stats.mean}, {"variance", ds.stats.variance}}},
                         {"train_config", tc},
                         {"best_epoch", hist.best_epoch},
                         {"best_val_mae", hist.best_val_mae},
                         {"epochs_run", hist.epochs.size()},
                         {"label", model_label(*model)},
                         {"dataset_seed", ds.seed}};
        save_checkpoint(*model, c.out, extra);
        auto h = open_out(history.empty() ? fs::path(c.out) / "history.csv" : fs::path(history));
        h << "epoch,train_loss,val_mae\n";
        for (const auto& r : hist.epochs) h << r.epoch << ',' << r.train_loss << ',' << r.val_mae << '\n';
        std::cout << json{{"out", c.out},
                          {"best_epoch", hist.best_epoch},
                          {"best_val_mae", hist.best_val_mae},
                          {"parameters", model->params().parameter_count()}}.dump()
                  << '\n';
    }
};

struct Eval {
    Common c;
    std::string checkpoint, data, split = "test";
    int tau = 0, horizon = 0;

    void attach(CLI::App& app) {
        auto* cmd = app.add_subcommand("eval", "Closed-loop evaluation: report JSON plus per-step and per-site CSVs");
        add_common(cmd, c);
        cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
        cmd->add_option("--data", data, "Dataset directory")->required();
        cmd->add_option("--split", split, "train, val or test");
        cmd->add_option("--tau", tau, "Observed steps (default: dataset tau)");
        cmd->add_option("--horizon", horizon, "Forecast steps T (default: dataset T)");
        cmd->callback([this] { run(); });
    }

    void run() {
        const auto raw = load_dataset(data);
        const auto ck = load_checkpoint(checkpoint, raw.sites);
        const auto ds = apply_stats(raw, checkpoint_stats(ck.manifest, raw));
        const int t0 = tau > 0 ? tau : ds.tau, th = horizon > 0 ? horizon : ds.horizon;
        const Split sp = split_from_string(split);
        const auto rep = evaluate_model(*ck.model, ds, sp, t0, th);
        const auto base = persistence_baseline(ds, sp, t0, th);
        const fs::path out(c.out);
        fs::create_directories(out);
        json j{{"report", rep},
               {"persistence", base},
               {"label", ck.manifest.value("extra", json::object()).value("label", model_label(*ck.model))},
               {"split", split},
               {"units", "normalized"},
               {"checkpoint", checkpoint},
               {"dataset", data}};
        write_json(out / "report.json", j);
        auto steps = open_out(out / "per_step.csv");
        write_per_step_csv(steps, rep);
        auto sites = open_out(out / "per_site.csv");
        write_per_site_csv(sites, rep, ds.sites);
        std::cout << json{{"mae", rep.mae_mean}, {"persistence_mae", base.mae_mean}}.dump() << '\n';
    }
};

struct Predict {
    Common c;
    std::string checkpoint, data;
    std::size_t sequence = 0;
    int tau = 0, horizon = 0;

    void attach(CLI::App& app) {
        auto* cmd = app.add_subcommand("predict", "Forecast one sequence and write predictions in data units");
        add_common(cmd, c);
        cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
        cmd->add_option("--data", data, "Dataset directory")->required();
        cmd->add_option("--sequence", sequence, "Sequence index");
        cmd->add_option("--tau", tau, "Observed steps (default: dataset tau)");
        cmd->add_option("--horizon", horizon, "Forecast steps T (default: dataset T)");
        cmd->callback([this] { run(); });
    }

    void run() {
        const auto raw = load_dataset(data);
        if (sequence >= raw.n_sequences) throw ArgumentError("sequence index out of range");
        const auto ck = load_checkpoint(checkpoint, raw.sites);
        const auto stats = checkpoint_stats(ck.manifest, raw);
        const auto ds = apply_stats(raw, stats);
        const int t0 = tau > 0 ? tau : ds.tau, th = horizon > 0 ? horizon : ds.horizon;
        check_eval_args(ds, t0, th);
        const auto pred = forecast(*ck.model, ds, {sequence}, t0, th).front();
        auto out = open_out(c.out);
        out << "step,site_index,prediction,truth\n";
        for (int t = 0; t < th; ++t)
            for (Eigen::Index i = 0; i < pred.cols(); ++i)
                out << (t0 + t) << ',' << i << ',' << stats.denormalize(pred(t, i)) << ','
                    << stats.denormalize(ds.sequence(sequence)(t0 + t, i)) << '\n';
        std::cout << json{{"out", c.out}, {"steps", th}}.dump() << '\n';
    }
};

struct ExportReport {
    Common c;
    std::vector<std::string> inputs;

    void attach(CLI::App& app) {
        auto* cmd = app.add_subcommand("export-report", "Aggregate eval reports into a summary table (CSV and Markdown)");
        add_common(cmd, c);
        cmd->add_option("inputs", inputs, "report.json files or eval output directories")->required();
        cmd->callback([this] { run(); });
    }

    void run() {
        std::map<std::string, std::vector<EvalReport>> groups;
        std::vector<EvalReport> baseline;
        for (const auto& in : inputs) {
            fs::path p(in);
            if (fs::is_directory(p)) p /= "report.json";
            const json j = read_json_file(p);
            try {
                groups[j.at("label").get<std::string>()].push_back(j.at("report").get<EvalReport>());
                if (j.contains("persistence")) baseline.push_back(j.at("persistence").get<EvalReport>());
            } catch (const json::exception& e) {
                throw DataError("malformed report " + p.string() + ": " + e.what());
            }
        }
        std::vector<std::pair<std::string, EvalReport>> rows;
        for (const auto& [label, runs] : groups) rows.emplace_back(label, aggregate_runs(runs));
        if (!baseline.empty()) rows.emplace_back("persistence", baseline.front());

        const fs::path out(c.out);
        fs::create_directories(out);
        auto csv = open_out(out / "summary.csv");
        auto md = open_out(out / "summary.md");
        csv << "model,n_runs,mae_mean,mae_std,std_defined\n";
        md << "| model | runs | MAE | std |\n|---|---|---|---|\n";
        md.precision(4);
        md << std::fixed;
        json j = json::array();
        for (const auto& [label, r] : rows) {
            csv << label << ',' << r.n_runs << ',' << r.mae_mean << ',' << r.mae_std << ',' << r.std_defined << '\n';
            md << "| " << label << " | " << r.n_runs << " | " << r.mae_mean << " | ";
            if (r.std_defined) md << r.mae_std;
            else md << "n/a";
            md << " |\n";
            json row = r;
            row["label"] = label;
            j.push_back(row);
        }
        write_json(out / "summary.json", j);
        std::cout << json{{"out", c.out}, {"rows", rows.size()}}.dump() << '\n';
    }
};

int category_code(ErrorCategory c) { return static_cast<int>(c); }

std::string category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::Config: return "config";
        case ErrorCategory::Data: return "data";
        case ErrorCategory::Numerical: return "numerical";
    }
    return "numerical";
}

int fail(ErrorCategory cat, const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", {{"category", category_name(cat)}, {"kind", kind}, {"message", message}}}}.dump()
              << '\n';
    return category_code(cat);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"umtn: RBF collocation forecasting toolkit"};
    app.require_subcommand(1);
    GenData gen;
    TuneKernel tune;
    Solve solve;
    Train train;
    Eval eval;
    Predict predict;
    ExportReport report;
    gen.attach(app);
    tune.attach(app);
    solve.attach(app);
    train.attach(app);
    eval.attach(app);
    predict.attach(app);
    report.attach(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(ErrorCategory::Config, "usage", e.what());
    } catch (const Error& e) {
        return fail(e.category(), e.kind(), e.what());
    } catch (const json::exception& e) {
        return fail(ErrorCategory::Config, "config", e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(ErrorCategory::Data, "io", e.what());
    } catch (const std::exception& e) {
        return fail(ErrorCategory::Numerical, "internal", e.what());
    }
    return 0;
}
