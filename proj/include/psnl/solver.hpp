#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "psnl/shdi_matrix.hpp"

namespace psnl {

// A non-finite value appeared during training. Usually means eta is too
// aggressive or mu too small for the instance.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The tuned quadruple s = {lambda, gamma, mu, eta}.
//   lambda: L2 regularization weight, applied per known neighbor
//   gamma:  augmentation scale, alpha_u = gamma * max(1, |Lambda(u)|)
//   mu:     proximal coefficient anchoring X updates at the previous sweep
//   eta:    dual step rescale
struct HyperParams {
    double lambda = 0.02;
    double gamma = 0.3;
    double mu = 0.1;
    double eta = 1.0;

    // All four must be strictly positive.
    void validate() const;
};

struct TrainConfig {
    int rank = 20;
    int max_iters = 1000;
    double tol = 1e-5;  // stop when |RMSE_k - RMSE_{k-1}| < tol; 0 disables
    std::uint64_t seed = 0;
    double init_scale = 0.05;
    bool ablate_proximal = false;  // forces mu = 0 in the learning rules
    int threads = 1;
    int residual_refresh_every = 50;  // full residual recompute cadence, in sweeps

    void validate() const;
};

// X: unconstrained latent factors, A: nonnegative output factors,
// W: Lagrangian multipliers; all |U| x f row-major. residual caches
// r_e = y_e - x_m . x_n per known entry, aligned with the training
// matrix's edge order.
struct FactorState {
    std::uint32_t nodes = 0;
    int rank = 0;
    std::vector<double> X;
    std::vector<double> A;
    std::vector<double> W;
    std::vector<double> residual;

    double& x(std::uint32_t u, int d) { return X[static_cast<std::size_t>(u) * rank + d]; }
    double x(std::uint32_t u, int d) const { return X[static_cast<std::size_t>(u) * rank + d]; }
    double& a(std::uint32_t u, int d) { return A[static_cast<std::size_t>(u) * rank + d]; }
    double a(std::uint32_t u, int d) const { return A[static_cast<std::size_t>(u) * rank + d]; }
    double& w(std::uint32_t u, int d) { return W[static_cast<std::size_t>(u) * rank + d]; }
    double w(std::uint32_t u, int d) const { return W[static_cast<std::size_t>(u) * rank + d]; }
};

struct TrainReport {
    enum class Stop { MaxIters, Tol };

    int iterations_run = 0;
    std::vector<double> rmse_history;  // validation RMSE per sweep
    Stop stop_reason = Stop::MaxIters;
    double final_gap = 0.0;  // ||X - A||_F / max(||X||_F, 1e-12)
    double wall_time = 0.0;  // seconds

    static const char* stop_name(Stop s) {
        return s == Stop::Tol ? "tol" : "max_iters";
    }
};

// alpha_u = gamma * max(1, degree). The max(1, .) guard keeps the A-update's
// w/alpha division defined for nodes isolated in a training fold.
double alpha(const HyperParams& hp, std::uint32_t degree);

// X uniform on (0, init_scale], A = X, W = 0, residual computed from scratch.
FactorState init_state(const ShdiMatrix& mat, const TrainConfig& cfg);

// Recomputes the residual cache from scratch.
void refresh_residual(FactorState& state, const ShdiMatrix& mat, int threads = 1);

// Job One for column d. Jacobi within the column: every x_{n,d} on the
// right-hand side reads a snapshot taken before any write. Columns < d are
// expected to hold this sweep's values already (Gauss-Seidel across columns).
// Corrects the residual cache for the column change.
void update_column_x(FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
                     const TrainConfig& cfg, int d);

// Job Two: a_{m,d} = max(0, x_{m,d} + w_{m,d} / alpha_m).
void update_column_a(FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
                     int d, int threads = 1);

// Job Three: w_{m,d} += eta * alpha_m * (x_{m,d} - a_{m,d}).
void update_column_w(FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
                     int d, int threads = 1);

// One full pass: for d = 0..f-1 run Jobs One, Two, Three.
void sweep(FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
           const TrainConfig& cfg);

// yhat_{m,n} = sum_d a_{m,d} a_{n,d}; symmetric in (m, n) bit-exactly.
double predict(const FactorState& state, std::uint32_t m, std::uint32_t n);

// The augmented Lagrangian with the proximal term, anchored at x_anchor.
// The data term sums over every ordered mention of each known entry
// (a self-loop counts once). Test support; not used in the training loop.
double evaluate_objective(const FactorState& state, const ShdiMatrix& mat,
                          const HyperParams& hp, std::span<const double> x_anchor,
                          bool ablate_proximal = false);

// Runs sweeps until the validation RMSE delta drops below cfg.tol or
// cfg.max_iters is reached. RMSE uses A. Throws DivergenceError when a
// non-finite value appears.
std::pair<FactorState, TrainReport> train(const ShdiMatrix& train_mat,
                                          const ShdiMatrix& valid_mat,
                                          const HyperParams& hp, const TrainConfig& cfg);

// Resumes from an existing state (checkpoint restarts); the state must match
// train_mat's node count and carry a residual for its edges.
TrainReport train_state(FactorState& state, const ShdiMatrix& train_mat,
                        const ShdiMatrix& valid_mat, const HyperParams& hp,
                        const TrainConfig& cfg);

}  // namespace psnl
