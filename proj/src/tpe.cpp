#include "psnl/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "psnl/rng.hpp"
#include "psnl/text_format.hpp"

namespace psnl {

namespace {

constexpr double kBandwidthFloorFrac = 0.01;
constexpr double kLog2Pi = 1.8378770664093454836;

double norm_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

}  // namespace

void ParamSpec::validate() const {
    if (!(lo > 0.0) || !(lo < hi))
        throw std::invalid_argument("parameter '" + name + "' needs 0 < lo < hi");
}

double ParamSpec::to_scale(double v) const {
    return scale == Scale::Log ? std::log(v) : v;
}

double ParamSpec::from_scale(double s) const {
    return scale == Scale::Log ? std::exp(s) : s;
}

void SearchSpace::validate() const {
    for (int i = 0; i < 4; ++i) dim(i).validate();
}

const ParamSpec& SearchSpace::dim(int i) const {
    switch (i) {
        case 0: return lambda;
        case 1: return gamma;
        case 2: return mu;
        default: return eta;
    }
}

ParamSpec& SearchSpace::dim(int i) {
    return const_cast<ParamSpec&>(static_cast<const SearchSpace&>(*this).dim(i));
}

double SearchSpace::value_of(const HyperParams& hp, int i) {
    switch (i) {
        case 0: return hp.lambda;
        case 1: return hp.gamma;
        case 2: return hp.mu;
        default: return hp.eta;
    }
}

void SearchSpace::set_value(HyperParams& hp, int i, double v) {
    switch (i) {
        case 0: hp.lambda = v; break;
        case 1: hp.gamma = v; break;
        case 2: hp.mu = v; break;
        default: hp.eta = v; break;
    }
}

std::size_t ObservationSet::good_count() const {
    const std::size_t beta = trials.size();
    const auto good = static_cast<std::size_t>(std::ceil(theta * static_cast<double>(beta)));
    return std::min(good, beta);
}

std::vector<std::size_t> ObservationSet::order_by_loss() const {
    std::vector<std::size_t> order(trials.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
        return trials[a].b < trials[b].b;
    });
    return order;
}

void TpeConfig::validate() const {
    if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
    if (n_startup < 0) throw std::invalid_argument("n_startup must be >= 0");
    if (n_candidates < 1) throw std::invalid_argument("n_candidates must be >= 1");
    if (!(theta > 0.0) || !(theta < 1.0)) throw std::invalid_argument("theta must be in (0,1)");
    if (trial_budget_iters < 1) throw std::invalid_argument("trial_budget_iters must be >= 1");
}

ParzenMixture::ParzenMixture(std::span<const double> points, const ParamSpec& spec)
    : lo_(spec.scale_lo()), hi_(spec.scale_hi()) {
    centers_.reserve(points.size());
    for (double p : points) {
        const double c = spec.to_scale(p);
        if (c < lo_ || c > hi_) throw std::invalid_argument("observation outside bounds");
        centers_.push_back(c);
    }
    const double floor = kBandwidthFloorFrac * spec.width();
    bandwidths_.resize(centers_.size());
    for (std::size_t i = 0; i < centers_.size(); ++i) {
        double nn = spec.width();  // lone point: prior-wide kernel
        for (std::size_t j = 0; j < centers_.size(); ++j) {
            if (j == i) continue;
            nn = std::min(nn, std::abs(centers_[i] - centers_[j]));
        }
        bandwidths_[i] = std::max(nn, floor);
    }
    trunc_mass_.resize(centers_.size());
    for (std::size_t i = 0; i < centers_.size(); ++i) {
        trunc_mass_[i] = norm_cdf((hi_ - centers_[i]) / bandwidths_[i]) -
                         norm_cdf((lo_ - centers_[i]) / bandwidths_[i]);
    }
}

double ParzenMixture::density(double q) const {
    const double weight = 1.0 / static_cast<double>(centers_.size() + 1);
    double sum = 1.0 / (hi_ - lo_);  // bounded-uniform prior component
    for (std::size_t i = 0; i < centers_.size(); ++i) {
        const double z = (q - centers_[i]) / bandwidths_[i];
        const double pdf = std::exp(-0.5 * (z * z + kLog2Pi)) / bandwidths_[i];
        sum += pdf / trunc_mass_[i];
    }
    return weight * sum;
}

double ParzenMixture::log_density(double q) const { return std::log(density(q)); }

double parzen_density(std::span<const double> points, const ParamSpec& spec, double query) {
    spec.validate();
    if (query < spec.lo || query > spec.hi)
        throw std::invalid_argument("query outside bounds");
    return ParzenMixture(points, spec).density(spec.to_scale(query));
}

HyperParams suggest(const ObservationSet& obs, const SearchSpace& space,
                    const TpeConfig& cfg, std::uint64_t rng_seed) {
    space.validate();
    Rng rng(mix_seed(rng_seed, 0x74706573));  // "tpes"

    HyperParams out;
    if (obs.trials.size() < static_cast<std::size_t>(cfg.n_startup)) {
        for (int i = 0; i < 4; ++i) {
            const ParamSpec& spec = space.dim(i);
            SearchSpace::set_value(out, i,
                                   spec.from_scale(rng.uniform(spec.scale_lo(), spec.scale_hi())));
        }
        return out;
    }

    const auto order = obs.order_by_loss();
    const std::size_t n_good = obs.good_count();

    std::vector<ParzenMixture> l, g;
    l.reserve(4);
    g.reserve(4);
    for (int i = 0; i < 4; ++i) {
        std::vector<double> good, bad;
        for (std::size_t r = 0; r < order.size(); ++r) {
            const double v = SearchSpace::value_of(obs.trials[order[r]].s, i);
            (r < n_good ? good : bad).push_back(v);
        }
        l.emplace_back(good, space.dim(i));
        g.emplace_back(bad, space.dim(i));
    }

    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cfg.n_candidates; ++c) {
        double scaled[4];
        double score = 0.0;
        for (int i = 0; i < 4; ++i) {
            scaled[i] = l[i].sample(rng);
            score += l[i].log_density(scaled[i]) - g[i].log_density(scaled[i]);
        }
        if (score > best_score) {
            best_score = score;
            for (int i = 0; i < 4; ++i)
                SearchSpace::set_value(out, i, space.dim(i).from_scale(scaled[i]));
        }
    }
    return out;
}

void write_trial_line(std::ostream& out, std::size_t index, const Trial& trial) {
    out << index << '\t' << fmt_double(trial.s.lambda) << '\t' << fmt_double(trial.s.gamma)
        << '\t' << fmt_double(trial.s.mu) << '\t' << fmt_double(trial.s.eta) << '\t'
        << fmt_double(trial.b) << '\t'
        << (trial.status == Trial::Status::Ok ? "ok" : "diverged") << '\n';
}

SearchResult run_search(const ShdiMatrix& train_mat, const ShdiMatrix& valid_mat,
                        const SearchSpace& space, const TpeConfig& cfg,
                        const TrainConfig& base_cfg, std::uint64_t seed,
                        std::ostream* trial_log) {
    space.validate();
    cfg.validate();

    TrainConfig trial_cfg = base_cfg;
    trial_cfg.max_iters = cfg.trial_budget_iters;
    // One shared init seed keeps trials comparable: b differences come from
    // the hyperparameters, not from re-rolled initial factors.
    trial_cfg.seed = mix_seed(seed, 0x696e6974736565);

    ObservationSet obs;
    obs.theta = cfg.theta;
    double max_finite_b = -1.0;

    for (int t = 0; t < cfg.n_trials; ++t) {
        Trial trial;
        trial.s = suggest(obs, space, cfg, mix_seed(seed, 0x73756700 + static_cast<std::uint64_t>(t)));
        try {
            auto [state, report] = train(train_mat, valid_mat, trial.s, trial_cfg);
            trial.b = report.rmse_history.back();
            trial.status = Trial::Status::Ok;
            max_finite_b = std::max(max_finite_b, trial.b);
        } catch (const DivergenceError&) {
            trial.status = Trial::Status::Diverged;
            trial.b = 10.0 * (max_finite_b > 0.0 ? max_finite_b : 1e3);
        }
        if (trial_log) write_trial_line(*trial_log, obs.trials.size(), trial);
        obs.trials.push_back(trial);
    }

    bool any_ok = false;
    SearchResult result;
    result.history = obs;
    result.best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < obs.trials.size(); ++i) {
        const Trial& tr = obs.trials[i];
        if (tr.status == Trial::Status::Ok) any_ok = true;
        if (tr.b < result.best_loss) {
            result.best_loss = tr.b;
            result.best = tr.s;
            result.best_index = i;
        }
    }
    if (!any_ok) throw SearchFailure(std::move(obs));
    return result;
}

}  // namespace psnl
