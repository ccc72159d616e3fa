#include "psnl/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "psnl/rng.hpp"
#include "psnl/text_format.hpp"

namespace psnl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

double rmse(std::span<const Edge> truth, const FactorState& state) {
    if (truth.empty()) throw DataError("cannot compute RMSE over an empty entry set");
    double sum = 0.0;
    for (const Edge& e : truth) {
        const double diff = e.y - predict(state, e.m, e.n);
        sum += diff * diff;
    }
    return std::sqrt(sum / static_cast<double>(truth.size()));
}

CvSummary cross_validate(const ShdiMatrix& mat, const TrainConfig& cfg,
                         const CvOptions& options, std::uint64_t seed) {
    const std::size_t k = 10;
    const FoldSplit split = kfold_split(mat, k, seed);

    CvSummary summary;
    HyperParams shared_hp = options.hp;
    double shared_tune_time = 0.0;

    if (options.tune && !options.retune_per_rotation) {
        const auto rot0 = split.rotation(0);
        const ShdiMatrix tr = mat.restrict_to(rot0.train);
        const ShdiMatrix va = mat.restrict_to(rot0.valid);
        const auto t0 = Clock::now();
        shared_hp = run_search(tr, va, options.space, options.tpe, cfg,
                               mix_seed(seed, 0x74756e65), nullptr)
                        .best;
        shared_tune_time = seconds_since(t0);
    }

    for (std::size_t r = 0; r < k; ++r) {
        const auto rot = split.rotation(r);
        const ShdiMatrix tr = mat.restrict_to(rot.train);
        const ShdiMatrix va = mat.restrict_to(rot.valid);
        const ShdiMatrix te = mat.restrict_to(rot.test);

        EvalResult res;
        HyperParams hp = shared_hp;
        if (options.tune && options.retune_per_rotation) {
            const auto t0 = Clock::now();
            hp = run_search(tr, va, options.space, options.tpe, cfg,
                            mix_seed(seed, 0x74756e65 + r), nullptr)
                     .best;
            res.wall_time_tune = seconds_since(t0);
        } else if (r == 0) {
            res.wall_time_tune = shared_tune_time;
        }

        TrainConfig rot_cfg = cfg;
        rot_cfg.seed = mix_seed(seed, 0x726f7400 + r);
        summary.seeds.push_back(rot_cfg.seed);

        const auto t0 = Clock::now();
        auto [state, report] = train(tr, va, hp, rot_cfg);
        res.wall_time_train = seconds_since(t0);
        res.rmse = rmse(te.edges(), state);
        res.n_pairs = te.edges().size();
        if (!options.record_walltime) {
            res.wall_time_train = 0.0;
            res.wall_time_tune = 0.0;
        }
        summary.rotations.push_back(res);
    }

    double mean = 0.0;
    for (const EvalResult& r : summary.rotations) mean += r.rmse;
    mean /= static_cast<double>(summary.rotations.size());
    double var = 0.0;
    for (const EvalResult& r : summary.rotations) var += (r.rmse - mean) * (r.rmse - mean);
    var /= static_cast<double>(summary.rotations.size());
    summary.mean_rmse = mean;
    summary.std_rmse = std::sqrt(var);
    return summary;
}

void write_csv(std::ostream& out, const CvSummary& summary) {
    out << "rotation,rmse,n_pairs,train_seconds,tune_seconds\n";
    for (std::size_t r = 0; r < summary.rotations.size(); ++r) {
        const EvalResult& res = summary.rotations[r];
        out << r << ',' << fmt_double(res.rmse) << ',' << res.n_pairs << ','
            << fmt_double(res.wall_time_train) << ',' << fmt_double(res.wall_time_tune)
            << '\n';
    }
    out << "mean," << fmt_double(summary.mean_rmse) << ",,,\n";
    out << "std," << fmt_double(summary.std_rmse) << ",,,\n";
}

void write_table(std::ostream& out, const CvSummary& summary) {
    out << "rotation  rmse          n_pairs  train_s    tune_s\n";
    char buf[160];
    for (std::size_t r = 0; r < summary.rotations.size(); ++r) {
        const EvalResult& res = summary.rotations[r];
        std::snprintf(buf, sizeof(buf), "%-8zu  %-12.6g  %-7zu  %-9.3f  %-9.3f\n", r,
                      res.rmse, res.n_pairs, res.wall_time_train, res.wall_time_tune);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "mean rmse %.6g  std %.3g\n", summary.mean_rmse,
                  summary.std_rmse);
    out << buf;
}

}  // namespace psnl
