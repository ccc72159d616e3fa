#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "psnl/shdi_matrix.hpp"
#include "psnl/solver.hpp"

namespace psnl {

// One tunable parameter's bounded domain. Log-scale parameters are searched
// and density-estimated in log coordinates.
struct ParamSpec {
    enum class Scale { Log, Linear };

    std::string name;
    double lo = 0.0;
    double hi = 0.0;
    Scale scale = Scale::Log;

    void validate() const;
    double to_scale(double v) const;
    double from_scale(double s) const;
    double scale_lo() const { return to_scale(lo); }
    double scale_hi() const { return to_scale(hi); }
    double width() const { return scale_hi() - scale_lo(); }
};

// Search domain of s = {lambda, gamma, mu, eta}.
struct SearchSpace {
    ParamSpec lambda{"lambda", 0x1p-10, 0x1p2, ParamSpec::Scale::Log};
    ParamSpec gamma{"gamma", 0x1p-10, 0x1p2, ParamSpec::Scale::Log};
    ParamSpec mu{"mu", 0x1p-10, 0x1p2, ParamSpec::Scale::Log};
    ParamSpec eta{"eta", 0x1p-6, 0x1p1, ParamSpec::Scale::Log};

    void validate() const;
    const ParamSpec& dim(int i) const;
    ParamSpec& dim(int i);
    static double value_of(const HyperParams& hp, int i);
    static void set_value(HyperParams& hp, int i, double v);
};

struct Trial {
    enum class Status { Ok, Diverged };

    HyperParams s;
    double b = 0.0;  // validation RMSE, or the sentinel loss when diverged
    Status status = Status::Ok;
};

// TPE history C = {(s_i, b_i)} with the good/bad quantile theta.
struct ObservationSet {
    std::vector<Trial> trials;
    double theta = 0.25;

    // |good| = ceil(theta * |trials|), the trials with the smallest b
    // (ties broken by earlier index).
    std::size_t good_count() const;
    std::vector<std::size_t> order_by_loss() const;
};

struct TpeConfig {
    int n_trials = 60;
    int n_startup = 20;
    int n_candidates = 24;
    double theta = 0.25;
    int trial_budget_iters = 200;

    void validate() const;
};

// One-dimensional Parzen estimator over a bounded domain in scale
// coordinates: a Gaussian per observed point plus the bounded-uniform prior
// as one extra component, every component truncated-renormalized to the
// domain, all weighted equally. Bandwidth per point is the larger of the
// nearest-neighbor distance and 1% of the domain width.
class ParzenMixture {
public:
    ParzenMixture(std::span<const double> points, const ParamSpec& spec);

    double log_density(double scaled_query) const;
    double density(double scaled_query) const;

    // Draws in scale coordinates, always inside the domain.
    template <typename RngT>
    double sample(RngT& rng) const {
        const std::size_t comp = rng.below(centers_.size() + 1);
        if (comp == centers_.size()) return rng.uniform(lo_, hi_);
        for (int tries = 0; tries < 256; ++tries) {
            const double v = centers_[comp] + bandwidths_[comp] * rng.normal();
            if (v >= lo_ && v <= hi_) return v;
        }
        return centers_[comp];  // pathological bandwidth; the center is in-domain
    }

private:
    double lo_, hi_;
    std::vector<double> centers_;
    std::vector<double> bandwidths_;
    std::vector<double> trunc_mass_;  // Phi((hi-c)/s) - Phi((lo-c)/s) per component
};

// Density of the one-dimensional Parzen estimator at `query`, measured in
// the parameter's scale coordinates. `points` and `query` are in original
// coordinates and must lie within bounds.
double parzen_density(std::span<const double> points, const ParamSpec& spec, double query);

// Next point to evaluate. Below cfg.n_startup observations: an independent
// draw from the bounded prior. Otherwise: split the history at the theta
// quantile into good (density l) and bad (density g), draw cfg.n_candidates
// samples from l, return the candidate maximizing l(s)/g(s).
HyperParams suggest(const ObservationSet& obs, const SearchSpace& space,
                    const TpeConfig& cfg, std::uint64_t rng_seed);

struct SearchResult {
    HyperParams best;
    std::size_t best_index = 0;
    double best_loss = 0.0;
    ObservationSet history;
};

// Thrown when every trial diverged; carries the full history.
struct SearchFailure : DivergenceError {
    ObservationSet history;

    explicit SearchFailure(ObservationSet h)
        : DivergenceError("every tuning trial diverged"), history(std::move(h)) {}
};

// Sequential TPE search over cfg.n_trials budgeted training runs. Each trial
// trains with base_cfg capped at cfg.trial_budget_iters and is scored by
// validation RMSE. Diverged trials receive the sentinel loss
// 10 * (max finite b so far, or 1e3 if none) and stay in the history.
// When trial_log is set, one line per trial is appended:
// `<index>\t<lambda>\t<gamma>\t<mu>\t<eta>\t<b>\t<status>`.
SearchResult run_search(const ShdiMatrix& train_mat, const ShdiMatrix& valid_mat,
                        const SearchSpace& space, const TpeConfig& cfg,
                        const TrainConfig& base_cfg, std::uint64_t seed,
                        std::ostream* trial_log = nullptr);

void write_trial_line(std::ostream& out, std::size_t index, const Trial& trial);

}  // namespace psnl
