#include "psnl/solver.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "psnl/rng.hpp"

namespace psnl {

namespace {

constexpr double kGapFloor = 1e-12;

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// Squared errors are written into a buffer element-wise and summed
// sequentially, so the result does not depend on the thread count.
double validation_rmse(const FactorState& state, const ShdiMatrix& valid, int threads) {
    const auto& edges = valid.edges();
    const std::int64_t n = static_cast<std::int64_t>(edges.size());
    std::vector<double> sq(edges.size());
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (std::int64_t i = 0; i < n; ++i) {
        const double diff = edges[i].y - predict(state, edges[i].m, edges[i].n);
        sq[i] = diff * diff;
    }
    double sum = 0.0;
    for (double s : sq) sum += s;
    return std::sqrt(sum / static_cast<double>(n));
}

}  // namespace

void HyperParams::validate() const {
    if (!(lambda > 0.0) || !(gamma > 0.0) || !(mu > 0.0) || !(eta > 0.0))
        throw std::invalid_argument("hyperparameters lambda, gamma, mu, eta must be > 0");
}

void TrainConfig::validate() const {
    if (rank < 1) throw std::invalid_argument("rank must be >= 1");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(tol >= 0.0)) throw std::invalid_argument("tol must be >= 0");
    if (!(init_scale > 0.0)) throw std::invalid_argument("init_scale must be > 0");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (residual_refresh_every < 1)
        throw std::invalid_argument("residual_refresh_every must be >= 1");
}

double alpha(const HyperParams& hp, std::uint32_t degree) {
    return hp.gamma * static_cast<double>(degree < 1 ? 1 : degree);
}

FactorState init_state(const ShdiMatrix& mat, const TrainConfig& cfg) {
    cfg.validate();
    FactorState state;
    state.nodes = mat.node_count();
    state.rank = cfg.rank;
    const std::size_t total = static_cast<std::size_t>(state.nodes) * cfg.rank;
    state.X.resize(total);
    Rng rng(mix_seed(cfg.seed, 0x696e6974));  // "init"
    for (double& x : state.X) x = cfg.init_scale * rng.uniform01_open_low();
    state.A = state.X;
    state.W.assign(total, 0.0);
    state.residual.resize(mat.edges().size());
    refresh_residual(state, mat, cfg.threads);
    return state;
}

void refresh_residual(FactorState& state, const ShdiMatrix& mat, int threads) {
    const auto& edges = mat.edges();
    const int f = state.rank;
    const std::int64_t n = static_cast<std::int64_t>(edges.size());
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (std::int64_t e = 0; e < n; ++e) {
        const double* xm = state.X.data() + static_cast<std::size_t>(edges[e].m) * f;
        const double* xn = state.X.data() + static_cast<std::size_t>(edges[e].n) * f;
        double dot = 0.0;
        for (int d = 0; d < f; ++d) dot += xm[d] * xn[d];
        state.residual[e] = edges[e].y - dot;
    }
}

void update_column_x(FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
                     const TrainConfig& cfg, int d) {
    const std::uint32_t nodes = state.nodes;
    const double mu = cfg.ablate_proximal ? 0.0 : hp.mu;
    const double lambda = hp.lambda;

    // Column-d snapshot; every read of x_{.,d} below uses it (Jacobi).
    std::vector<double> snap(nodes);
    for (std::uint32_t u = 0; u < nodes; ++u) snap[u] = state.x(u, d);

    std::vector<double> fresh(nodes);
    std::atomic<bool> bad_denominator{false};
    const int threads = cfg.threads;

#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (std::int64_t m = 0; m < static_cast<std::int64_t>(nodes); ++m) {
        const std::uint32_t u = static_cast<std::uint32_t>(m);
        const double am = alpha(hp, mat.degree(u));
        double num = 0.0;
        double den = 0.0;
        for (const NeighborRef& nb : mat.neighbors(u)) {
            const double sn = snap[nb.node];
            // y - sum_{l != d} x_{m,l} x_{n,l} == residual + x_{m,d} x_{n,d}
            const double partial = state.residual[nb.edge] + snap[u] * sn;
            num += partial * sn;
            den += sn * sn + lambda;
        }
        num += am * state.a(u, d) - state.w(u, d) + mu * snap[u];
        den += am + mu;
        if (!(den > 0.0)) {
            bad_denominator.store(true, std::memory_order_relaxed);
            fresh[u] = snap[u];
            continue;
        }
        fresh[u] = num / den;
    }
    if (bad_denominator.load())
        throw std::domain_error(
            "non-positive update denominator: hyperparameters are corrupted");

    // One correction per known entry, computed purely from the snapshot and
    // the fresh column, so it is safe to run the edges in parallel.
    const auto& edges = mat.edges();
    const std::int64_t ecount = static_cast<std::int64_t>(edges.size());
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (std::int64_t e = 0; e < ecount; ++e) {
        const std::uint32_t m = edges[e].m, n = edges[e].n;
        state.residual[e] += snap[m] * snap[n] - fresh[m] * fresh[n];
    }

    for (std::uint32_t u = 0; u < nodes; ++u) state.x(u, d) = fresh[u];
}

void update_column_a(FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
                     int d, int threads) {
    const std::int64_t nodes = static_cast<std::int64_t>(state.nodes);
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (std::int64_t m = 0; m < nodes; ++m) {
        const std::uint32_t u = static_cast<std::uint32_t>(m);
        const double am = alpha(hp, mat.degree(u));
        const double v = state.x(u, d) + state.w(u, d) / am;
        state.a(u, d) = v > 0.0 ? v : 0.0;
    }
}

void update_column_w(FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
                     int d, int threads) {
    const std::int64_t nodes = static_cast<std::int64_t>(state.nodes);
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (std::int64_t m = 0; m < nodes; ++m) {
        const std::uint32_t u = static_cast<std::uint32_t>(m);
        const double am = alpha(hp, mat.degree(u));
        state.w(u, d) += hp.eta * am * (state.x(u, d) - state.a(u, d));
    }
}

void sweep(FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
           const TrainConfig& cfg) {
    for (int d = 0; d < state.rank; ++d) {
        update_column_x(state, mat, hp, cfg, d);
        update_column_a(state, mat, hp, d, cfg.threads);
        update_column_w(state, mat, hp, d, cfg.threads);
    }
}

double predict(const FactorState& state, std::uint32_t m, std::uint32_t n) {
    if (m >= state.nodes || n >= state.nodes)
        throw std::out_of_range("node index out of range");
    const double* am = state.A.data() + static_cast<std::size_t>(m) * state.rank;
    const double* an = state.A.data() + static_cast<std::size_t>(n) * state.rank;
    double sum = 0.0;
    for (int d = 0; d < state.rank; ++d) sum += am[d] * an[d];
    return sum;
}

double evaluate_objective(const FactorState& state, const ShdiMatrix& mat,
                          const HyperParams& hp, std::span<const double> x_anchor,
                          bool ablate_proximal) {
    const int f = state.rank;
    const double mu = ablate_proximal ? 0.0 : hp.mu;
    double eps = 0.0;
    for (std::uint32_t u = 0; u < state.nodes; ++u) {
        for (const NeighborRef& nb : mat.neighbors(u)) {
            double dot = 0.0, reg = 0.0;
            for (int d = 0; d < f; ++d) {
                dot += state.x(u, d) * state.x(nb.node, d);
                reg += state.x(u, d) * state.x(u, d) +
                       state.x(nb.node, d) * state.x(nb.node, d);
            }
            const double r = nb.weight - dot;
            eps += 0.5 * (r * r + hp.lambda * reg);
        }
    }
    for (std::uint32_t u = 0; u < state.nodes; ++u) {
        const double au = alpha(hp, mat.degree(u));
        for (int d = 0; d < f; ++d) {
            const double gap = state.x(u, d) - state.a(u, d);
            eps += state.w(u, d) * gap + 0.5 * au * gap * gap;
            const double prox = state.x(u, d) - x_anchor[static_cast<std::size_t>(u) * f + d];
            eps += 0.5 * mu * prox * prox;
        }
    }
    return eps;
}

TrainReport train_state(FactorState& state, const ShdiMatrix& train_mat,
                        const ShdiMatrix& valid_mat, const HyperParams& hp,
                        const TrainConfig& cfg) {
    cfg.validate();
    hp.validate();
    if (state.nodes != train_mat.node_count() || state.rank != cfg.rank)
        throw std::invalid_argument("state does not match matrix/config");
    if (state.residual.size() != train_mat.edges().size())
        throw std::invalid_argument("state residual does not match training edges");
    if (valid_mat.edges().empty()) throw DataError("validation set is empty");

    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    double prev_rmse = validation_rmse(state, valid_mat, cfg.threads);

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        sweep(state, train_mat, hp, cfg);
        if (iter % cfg.residual_refresh_every == 0)
            refresh_residual(state, train_mat, cfg.threads);

        if (!all_finite(state.X) || !all_finite(state.A) || !all_finite(state.W))
            throw DivergenceError(
                "non-finite factor value at iteration " + std::to_string(iter) +
                "; try a smaller eta or a larger mu");

        const double rmse = validation_rmse(state, valid_mat, cfg.threads);
        if (!std::isfinite(rmse))
            throw DivergenceError(
                "non-finite validation RMSE at iteration " + std::to_string(iter) +
                "; try a smaller eta or a larger mu");
        report.rmse_history.push_back(rmse);
        report.iterations_run = iter;
        if (std::abs(rmse - prev_rmse) < cfg.tol) {
            report.stop_reason = TrainReport::Stop::Tol;
            break;
        }
        prev_rmse = rmse;
    }

    double gap_sq = 0.0, x_sq = 0.0;
    for (std::size_t i = 0; i < state.X.size(); ++i) {
        const double g = state.X[i] - state.A[i];
        gap_sq += g * g;
        x_sq += state.X[i] * state.X[i];
    }
    report.final_gap = std::sqrt(gap_sq) / std::max(std::sqrt(x_sq), kGapFloor);
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::pair<FactorState, TrainReport> train(const ShdiMatrix& train_mat,
                                          const ShdiMatrix& valid_mat,
                                          const HyperParams& hp, const TrainConfig& cfg) {
    FactorState state = init_state(train_mat, cfg);
    TrainReport report = train_state(state, train_mat, valid_mat, hp, cfg);
    return {std::move(state), std::move(report)};
}

}  // namespace psnl
