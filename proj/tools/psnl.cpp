// psnl: train, tune, and evaluate proximal symmetric nonnegative
// latent-factor models over undirected weighted edge lists.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "psnl/eval.hpp"
#include "psnl/model_io.hpp"
#include "psnl/shdi_matrix.hpp"
#include "psnl/solver.hpp"
#include "psnl/text_format.hpp"
#include "psnl/tpe.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

struct TrainFlags {
    psnl::TrainConfig cfg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--rank", cfg.rank, "LF dimension f")->capture_default_str();
        cmd->add_option("--max-iters", cfg.max_iters, "Iteration cap")->capture_default_str();
        cmd->add_option("--tol", cfg.tol, "RMSE-delta stop threshold (0 disables)")
            ->capture_default_str();
        cmd->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
        cmd->add_option("--init-scale", cfg.init_scale, "Upper bound of the uniform init")
            ->capture_default_str();
        cmd->add_flag("--ablate-proximal", cfg.ablate_proximal,
                      "Force mu = 0 in the learning rules");
        cmd->add_option("--threads", cfg.threads, "Worker thread cap (does not change results)")
            ->capture_default_str();
    }

    void manifest(ordered_json& flags) const {
        flags["rank"] = cfg.rank;
        flags["max-iters"] = cfg.max_iters;
        flags["tol"] = cfg.tol;
        flags["seed"] = cfg.seed;
        flags["init-scale"] = cfg.init_scale;
        flags["ablate-proximal"] = cfg.ablate_proximal;
        flags["threads"] = cfg.threads;
    }
};

struct HyperFlags {
    psnl::HyperParams hp;

    void attach(CLI::App* cmd) {
        cmd->add_option("--lambda", hp.lambda, "L2 regularization coefficient")
            ->capture_default_str();
        cmd->add_option("--gamma", hp.gamma, "Augmentation scale (alpha_u = gamma*|Lambda(u)|)")
            ->capture_default_str();
        cmd->add_option("--mu", hp.mu, "Proximal coefficient")->capture_default_str();
        cmd->add_option("--eta", hp.eta, "Dual step rescale")->capture_default_str();
    }

    void manifest(ordered_json& flags) const {
        flags["lambda"] = hp.lambda;
        flags["gamma"] = hp.gamma;
        flags["mu"] = hp.mu;
        flags["eta"] = hp.eta;
    }
};

struct SpaceFlags {
    psnl::SearchSpace space;
    std::string scales[4] = {"log", "log", "log", "log"};

    void attach(CLI::App* cmd) {
        static const char* kNames[4] = {"lambda", "gamma", "mu", "eta"};
        for (int i = 0; i < 4; ++i) {
            psnl::ParamSpec& spec = space.dim(i);
            const std::string base = kNames[i];
            cmd->add_option("--" + base + "-lo", spec.lo, "Lower bound for " + base)
                ->capture_default_str();
            cmd->add_option("--" + base + "-hi", spec.hi, "Upper bound for " + base)
                ->capture_default_str();
            cmd->add_option("--" + base + "-scale", scales[i], "Scale for " + base)
                ->check(CLI::IsMember({"log", "linear"}))
                ->capture_default_str();
        }
    }

    void resolve() {
        for (int i = 0; i < 4; ++i)
            space.dim(i).scale = scales[i] == "linear" ? psnl::ParamSpec::Scale::Linear
                                                       : psnl::ParamSpec::Scale::Log;
        space.validate();
    }

    void manifest(ordered_json& flags) const {
        static const char* kNames[4] = {"lambda", "gamma", "mu", "eta"};
        for (int i = 0; i < 4; ++i) {
            const psnl::ParamSpec& spec = space.dim(i);
            flags[std::string(kNames[i]) + "-lo"] = spec.lo;
            flags[std::string(kNames[i]) + "-hi"] = spec.hi;
            flags[std::string(kNames[i]) + "-scale"] = scales[i];
        }
    }
};

struct TpeFlags {
    psnl::TpeConfig cfg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--n-trials", cfg.n_trials, "Tuning trials")->capture_default_str();
        cmd->add_option("--n-startup", cfg.n_startup, "Random trials before TPE kicks in")
            ->capture_default_str();
        cmd->add_option("--n-candidates", cfg.n_candidates, "Candidates drawn per suggestion")
            ->capture_default_str();
        cmd->add_option("--theta", cfg.theta, "Good/bad split quantile")->capture_default_str();
        cmd->add_option("--trial-budget", cfg.trial_budget_iters, "Iteration cap per trial")
            ->capture_default_str();
    }

    void manifest(ordered_json& flags) const {
        flags["n-trials"] = cfg.n_trials;
        flags["n-startup"] = cfg.n_startup;
        flags["n-candidates"] = cfg.n_candidates;
        flags["theta"] = cfg.theta;
        flags["trial-budget"] = cfg.trial_budget_iters;
    }
};

void write_manifest(const std::string& explicit_path, const std::string& primary_output,
                    const std::string& command, const ordered_json& flags) {
    std::string path = explicit_path;
    if (path.empty()) {
        if (primary_output.empty() || primary_output == "-") return;  // streaming run
        path = primary_output + ".manifest.json";
    }
    ordered_json doc;
    doc["tool"] = "psnl";
    doc["command"] = command;
    doc["flags"] = flags;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw psnl::DataError("cannot open '" + path + "' for writing");
    f << doc.dump(2) << '\n';
}

psnl::ShdiMatrix load_single(const std::string& path, const std::string& format) {
    if (format == "auto") return psnl::load_edges(path);
    std::ifstream f(path);
    if (!f) throw psnl::DataError("cannot open '" + path + "'");
    return psnl::parse_edges(f, format == "mm" ? psnl::EdgeFormat::MatrixMarket
                                               : psnl::EdgeFormat::Tsv);
}

void require_disjoint(const psnl::ShdiMatrix& a, const psnl::ShdiMatrix& b,
                      const char* what) {
    std::unordered_set<std::uint64_t> keys;
    keys.reserve(a.edges().size() * 2);
    for (const psnl::Edge& e : a.edges())
        keys.insert((static_cast<std::uint64_t>(e.m) << 32) | e.n);
    for (const psnl::Edge& e : b.edges())
        if (keys.count((static_cast<std::uint64_t>(e.m) << 32) | e.n))
            throw psnl::DataError(std::string(what) + " sets share pair (" +
                                  a.labels()[e.m] + ", " + a.labels()[e.n] + ")");
}

std::ostream& open_or_stdout(std::ofstream& file, const std::string& path) {
    if (path == "-") return std::cout;
    file.open(path, std::ios::binary);
    if (!file) throw psnl::DataError("cannot open '" + path + "' for writing");
    return file;
}

int dispatch(CLI::App& app, int argc, char** argv) {
    try {
        app.parse(argc, argv);
        return kExitOk;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const psnl::DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const psnl::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Proximal symmetric nonnegative latent-factor analysis"};
    app.require_subcommand(1);

    // ---- split ----------------------------------------------------------
    auto* split = app.add_subcommand("split", "Partition an edge list into 10 folds");
    struct {
        std::string input, format = "auto", out, manifest;
        std::uint64_t seed = 0;
    } sp;
    split->add_option("--input", sp.input, "Edge list path")->required();
    split->add_option("--format", sp.format, "Input format")
        ->check(CLI::IsMember({"auto", "tsv", "mm"}))
        ->capture_default_str();
    split->add_option("--seed", sp.seed, "RNG seed")->capture_default_str();
    split->add_option("--out", sp.out, "Fold file path")->required();
    split->add_option("--manifest", sp.manifest, "Manifest path (default <out>.manifest.json)");
    split->callback([&] {
        const psnl::ShdiMatrix mat = load_single(sp.input, sp.format);
        ordered_json flags;
        flags["input"] = sp.input;
        flags["format"] = sp.format;
        flags["seed"] = sp.seed;
        flags["out"] = sp.out;
        write_manifest(sp.manifest, sp.out, "split", flags);
        const psnl::FoldSplit folds = psnl::kfold_split(mat, 10, sp.seed);
        std::ofstream f(sp.out, std::ios::binary);
        if (!f) throw psnl::DataError("cannot open '" + sp.out + "' for writing");
        psnl::write_folds(f, mat, folds);
        std::cout << "wrote " << sp.out << " (" << mat.edges().size() << " edges, 10 folds)\n";
    });

    // ---- train ----------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train a model on a train/validation split");
    struct {
        std::string train, valid, model, manifest;
        bool checkpoint = false;
        TrainFlags tf;
        HyperFlags hf;
    } tr;
    train_cmd->add_option("--train", tr.train, "Training edge list")->required();
    train_cmd->add_option("--valid", tr.valid, "Validation edge list")->required();
    train_cmd->add_option("--model", tr.model, "Output model path")->required();
    train_cmd->add_flag("--checkpoint", tr.checkpoint, "Append X and W for resumable training");
    train_cmd->add_option("--manifest", tr.manifest,
                          "Manifest path (default <model>.manifest.json)");
    tr.tf.attach(train_cmd);
    tr.hf.attach(train_cmd);
    train_cmd->callback([&] {
        tr.tf.cfg.validate();
        tr.hf.hp.validate();
        ordered_json flags;
        flags["train"] = tr.train;
        flags["valid"] = tr.valid;
        flags["model"] = tr.model;
        flags["checkpoint"] = tr.checkpoint;
        tr.tf.manifest(flags);
        tr.hf.manifest(flags);
        write_manifest(tr.manifest, tr.model, "train", flags);

        const auto mats = psnl::load_edges_shared({tr.train, tr.valid});
        require_disjoint(mats[0], mats[1], "train/validation");
        auto [state, report] = psnl::train(mats[0], mats[1], tr.hf.hp, tr.tf.cfg);
        psnl::save_model_file(tr.model, state, mats[0].labels(), tr.checkpoint);
        std::cout << "iterations\t" << report.iterations_run << '\n'
                  << "stop_reason\t" << psnl::TrainReport::stop_name(report.stop_reason) << '\n'
                  << "validation_rmse\t" << psnl::fmt_double(report.rmse_history.back()) << '\n'
                  << "final_gap\t" << psnl::fmt_double(report.final_gap) << '\n'
                  << "wall_time_s\t" << report.wall_time << '\n';
    });

    // ---- tune -----------------------------------------------------------
    auto* tune = app.add_subcommand("tune", "TPE-search hyperparameters");
    struct {
        std::string train, valid, out, trial_log, manifest;
        TrainFlags tf;
        SpaceFlags sf;
        TpeFlags pf;
    } tu;
    tune->add_option("--train", tu.train, "Training edge list")->required();
    tune->add_option("--valid", tu.valid, "Validation edge list")->required();
    tune->add_option("--out", tu.out, "Best hyperparameters (JSON)")->required();
    tune->add_option("--trial-log", tu.trial_log, "Append-only trial log path");
    tune->add_option("--manifest", tu.manifest, "Manifest path (default <out>.manifest.json)");
    tu.tf.attach(tune);
    tu.sf.attach(tune);
    tu.pf.attach(tune);
    tune->callback([&] {
        tu.tf.cfg.validate();
        tu.sf.resolve();
        tu.pf.cfg.validate();
        ordered_json flags;
        flags["train"] = tu.train;
        flags["valid"] = tu.valid;
        flags["out"] = tu.out;
        flags["trial-log"] = tu.trial_log;
        tu.tf.manifest(flags);
        tu.sf.manifest(flags);
        tu.pf.manifest(flags);
        write_manifest(tu.manifest, tu.out, "tune", flags);

        const auto mats = psnl::load_edges_shared({tu.train, tu.valid});
        require_disjoint(mats[0], mats[1], "train/validation");
        std::ofstream log;
        std::ostream* log_stream = nullptr;
        if (!tu.trial_log.empty()) {
            log.open(tu.trial_log, std::ios::binary);
            if (!log) throw psnl::DataError("cannot open '" + tu.trial_log + "' for writing");
            log_stream = &log;
        }
        const psnl::SearchResult result = psnl::run_search(
            mats[0], mats[1], tu.sf.space, tu.pf.cfg, tu.tf.cfg, tu.tf.cfg.seed, log_stream);
        ordered_json best;
        best["lambda"] = result.best.lambda;
        best["gamma"] = result.best.gamma;
        best["mu"] = result.best.mu;
        best["eta"] = result.best.eta;
        best["b"] = result.best_loss;
        best["trial"] = result.best_index;
        std::ofstream f(tu.out, std::ios::binary);
        if (!f) throw psnl::DataError("cannot open '" + tu.out + "' for writing");
        f << best.dump(2) << '\n';
        std::cout << "best trial " << result.best_index << " b="
                  << psnl::fmt_double(result.best_loss) << '\n';
    });

    // ---- predict --------------------------------------------------------
    auto* predict_cmd = app.add_subcommand("predict", "Predict weights for node pairs");
    struct {
        std::string model, pairs, out = "-", manifest;
    } pr;
    predict_cmd->add_option("--model", pr.model, "Model path")->required();
    predict_cmd->add_option("--pairs", pr.pairs, "Pairs file: <label_a>\\t<label_b> per line")
        ->required();
    predict_cmd->add_option("--out", pr.out, "Output path ('-' = stdout)")
        ->capture_default_str();
    predict_cmd->add_option("--manifest", pr.manifest, "Manifest path");
    predict_cmd->callback([&] {
        ordered_json flags;
        flags["model"] = pr.model;
        flags["pairs"] = pr.pairs;
        flags["out"] = pr.out;
        write_manifest(pr.manifest, pr.out, "predict", flags);

        const psnl::LoadedModel model = psnl::load_model_file(pr.model);
        std::ifstream pairs(pr.pairs);
        if (!pairs) throw psnl::DataError("cannot open '" + pr.pairs + "'");
        std::ofstream file;
        std::ostream& out = open_or_stdout(file, pr.out);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(pairs, line)) {
            ++lineno;
            auto fields = psnl::split_fields(line);
            if (fields.empty() || fields[0].front() == '#') continue;
            if (fields.size() != 2)
                throw psnl::DataError("line " + std::to_string(lineno) +
                                      ": expected <label_a> <label_b>");
            const auto a = model.index_of(std::string(fields[0]));
            const auto b = model.index_of(std::string(fields[1]));
            if (a < 0 || b < 0)
                throw psnl::DataError("line " + std::to_string(lineno) + ": unknown label");
            const double v = psnl::predict(model.state, static_cast<std::uint32_t>(a),
                                           static_cast<std::uint32_t>(b));
            out << fields[0] << '\t' << fields[1] << '\t' << psnl::fmt_double(v) << '\n';
        }
    });

    // ---- eval -----------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "RMSE of a model on held-out edges");
    struct {
        std::string model, test, out = "-", manifest;
    } ev;
    eval_cmd->add_option("--model", ev.model, "Model path")->required();
    eval_cmd->add_option("--test", ev.test, "Held-out edge list")->required();
    eval_cmd->add_option("--out", ev.out, "Output path ('-' = stdout)")->capture_default_str();
    eval_cmd->add_option("--manifest", ev.manifest, "Manifest path");
    eval_cmd->callback([&] {
        ordered_json flags;
        flags["model"] = ev.model;
        flags["test"] = ev.test;
        flags["out"] = ev.out;
        write_manifest(ev.manifest, ev.out, "eval", flags);

        const psnl::LoadedModel model = psnl::load_model_file(ev.model);
        std::ifstream f(ev.test);
        if (!f) throw psnl::DataError("cannot open '" + ev.test + "'");
        std::stringstream buf;
        buf << f.rdbuf();
        const auto raw = psnl::parse_raw(buf, psnl::detect_format(buf));
        std::vector<psnl::Edge> truth;
        truth.reserve(raw.size());
        for (const psnl::RawEdge& r : raw) {
            const auto a = model.index_of(r.a);
            const auto b = model.index_of(r.b);
            if (a < 0 || b < 0)
                throw psnl::DataError("line " + std::to_string(r.line) +
                                      ": label not present in model");
            auto m = static_cast<std::uint32_t>(a), n = static_cast<std::uint32_t>(b);
            if (m > n) std::swap(m, n);
            truth.push_back({m, n, r.y});
        }
        const double value = psnl::rmse(truth, model.state);
        std::ofstream file;
        std::ostream& out = open_or_stdout(file, ev.out);
        out << psnl::fmt_double(value) << '\n';
    });

    // ---- cv -------------------------------------------------------------
    auto* cv = app.add_subcommand("cv", "Tenfold cross-validation (7/1/2 rotations)");
    struct {
        std::string input, format = "auto", csv, manifest, timing = "wall";
        bool tune = false, retune = false;
        TrainFlags tf;
        HyperFlags hf;
        SpaceFlags sf;
        TpeFlags pf;
    } cf;
    cv->add_option("--input", cf.input, "Edge list path")->required();
    cv->add_option("--format", cf.format, "Input format")
        ->check(CLI::IsMember({"auto", "tsv", "mm"}))
        ->capture_default_str();
    cv->add_option("--csv", cf.csv, "Summary CSV path")->required();
    cv->add_flag("--tune", cf.tune, "TPE-tune on rotation 0 before training");
    cv->add_flag("--retune-per-rotation", cf.retune, "Re-tune inside every rotation");
    cv->add_option("--timing", cf.timing, "wall: record wall clock; none: write zeros")
        ->check(CLI::IsMember({"wall", "none"}))
        ->capture_default_str();
    cv->add_option("--manifest", cf.manifest, "Manifest path (default <csv>.manifest.json)");
    cf.tf.attach(cv);
    cf.hf.attach(cv);
    cf.sf.attach(cv);
    cf.pf.attach(cv);
    cv->callback([&] {
        cf.tf.cfg.validate();
        cf.hf.hp.validate();
        cf.sf.resolve();
        cf.pf.cfg.validate();
        ordered_json flags;
        flags["input"] = cf.input;
        flags["format"] = cf.format;
        flags["csv"] = cf.csv;
        flags["tune"] = cf.tune;
        flags["retune-per-rotation"] = cf.retune;
        flags["timing"] = cf.timing;
        cf.tf.manifest(flags);
        cf.hf.manifest(flags);
        cf.sf.manifest(flags);
        cf.pf.manifest(flags);
        write_manifest(cf.manifest, cf.csv, "cv", flags);

        const psnl::ShdiMatrix mat = load_single(cf.input, cf.format);
        psnl::CvOptions options;
        options.tune = cf.tune;
        options.retune_per_rotation = cf.retune;
        options.record_walltime = cf.timing == "wall";
        options.hp = cf.hf.hp;
        options.space = cf.sf.space;
        options.tpe = cf.pf.cfg;
        const psnl::CvSummary summary =
            psnl::cross_validate(mat, cf.tf.cfg, options, cf.tf.cfg.seed);
        std::ofstream f(cf.csv, std::ios::binary);
        if (!f) throw psnl::DataError("cannot open '" + cf.csv + "' for writing");
        psnl::write_csv(f, summary);
        psnl::write_table(std::cout, summary);
    });

    return dispatch(app, argc, argv);
}
