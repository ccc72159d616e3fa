#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "psnl/shdi_matrix.hpp"
#include "psnl/solver.hpp"
#include "psnl/tpe.hpp"

namespace psnl {

struct EvalResult {
    double rmse = 0.0;
    std::size_t n_pairs = 0;
    double wall_time_train = 0.0;  // seconds
    double wall_time_tune = 0.0;
};

struct CvSummary {
    std::vector<EvalResult> rotations;
    double mean_rmse = 0.0;
    double std_rmse = 0.0;
    std::vector<std::uint64_t> seeds;  // per-rotation training seeds
};

// Root mean square prediction error over the given known entries, using A.
// Throws DataError on an empty truth set.
double rmse(std::span<const Edge> truth, const FactorState& state);

struct CvOptions {
    bool tune = false;                // TPE-tune instead of using `hp` as-is
    bool retune_per_rotation = false; // default: tune once on rotation 0, reuse
    bool record_walltime = true;      // false writes zeros (deterministic output)
    HyperParams hp;                   // used when tune == false
    SearchSpace space;
    TpeConfig tpe;
};

// Tenfold protocol: rotation r trains on 7 folds, stops on fold r's RMSE
// delta, and is scored on folds r+1, r+2. Tuning (when enabled) runs on
// rotation 0's train/validation split and the best s is reused everywhere
// unless retune_per_rotation is set.
CvSummary cross_validate(const ShdiMatrix& mat, const TrainConfig& cfg,
                         const CvOptions& options, std::uint64_t seed);

// `rotation,rmse,n_pairs,train_seconds,tune_seconds` plus a mean/std footer.
void write_csv(std::ostream& out, const CvSummary& summary);
void write_table(std::ostream& out, const CvSummary& summary);

}  // namespace psnl
