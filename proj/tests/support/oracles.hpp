#pragma once

// Independent oracles the solver tests check against. Everything here is
// deliberately written the slow, obvious way and shares no code with the
// implementation paths it verifies.

#include <cmath>
#include <functional>
#include <vector>

#include "psnl/shdi_matrix.hpp"
#include "psnl/solver.hpp"

namespace psnl::test {

// Golden-section minimizer over [lo, hi] (unimodal objective assumed).
inline double golden_section_min(const std::function<double(double)>& f, double lo,
                                 double hi, int iters = 200) {
    const double inv_phi = 0.6180339887498948482;
    double a = lo, b = hi;
    double c = b - (b - a) * inv_phi;
    double d = a + (b - a) * inv_phi;
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters; ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

// The one-variable objective that the element-wise X-update minimizes for
// entry (m, d): row m's share of the data/regularization terms (each known
// neighbor once, column-d values frozen at `snapshot`, other columns at
// their current statuses) plus the multiplier, penalty, and proximal terms.
inline std::function<double(double)> restricted_quadratic(
    const FactorState& state, const ShdiMatrix& mat, const HyperParams& hp,
    const std::vector<double>& snapshot, std::uint32_t m, int d, bool ablate_proximal) {
    const int f = state.rank;
    const double mu = ablate_proximal ? 0.0 : hp.mu;
    std::vector<double> coeff_c, coeff_s;
    for (const NeighborRef& nb : mat.neighbors(m)) {
        double partial = nb.weight;
        for (int l = 0; l < f; ++l) {
            if (l == d) continue;
            partial -= state.x(m, l) * state.x(nb.node, l);
        }
        coeff_c.push_back(partial);
        coeff_s.push_back(snapshot[nb.node]);
    }
    const double am = alpha(hp, mat.degree(m));
    const double a = state.a(m, d);
    const double w = state.w(m, d);
    const double anchor = snapshot[m];
    const double lambda = hp.lambda;
    return [=](double x) {
        double val = 0.0;
        for (std::size_t i = 0; i < coeff_c.size(); ++i) {
            const double r = coeff_c[i] - x * coeff_s[i];
            val += 0.5 * (r * r + lambda * x * x);
        }
        val += w * x + 0.5 * am * (x - a) * (x - a) + 0.5 * mu * (x - anchor) * (x - anchor);
        return val;
    };
}

// Magnitude scale of the restricted quadratic's gradient terms at x, for
// tolerance framing in the stationarity checks.
inline double gradient_scale(const FactorState& state, const ShdiMatrix& mat,
                             const HyperParams& hp, const std::vector<double>& snapshot,
                             std::uint32_t m, int d, double x, bool ablate_proximal) {
    const int f = state.rank;
    const double mu = ablate_proximal ? 0.0 : hp.mu;
    double scale = 0.0;
    for (const NeighborRef& nb : mat.neighbors(m)) {
        double partial = nb.weight;
        for (int l = 0; l < f; ++l) {
            if (l == d) continue;
            partial -= state.x(m, l) * state.x(nb.node, l);
        }
        const double s = snapshot[nb.node];
        scale += std::abs(partial * s) + (s * s + hp.lambda) * std::abs(x);
    }
    const double am = alpha(hp, mat.degree(m));
    scale += std::abs(state.w(m, d)) + am * (std::abs(x) + std::abs(state.a(m, d))) +
             mu * (std::abs(x) + std::abs(snapshot[m]));
    return scale;
}

// Dense |U| x |U| product A A^T for the prediction oracle.
inline std::vector<double> dense_gram(const FactorState& state) {
    const std::size_t n = state.nodes;
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (int d = 0; d < state.rank; ++d)
                sum += state.a(static_cast<std::uint32_t>(i), d) *
                       state.a(static_cast<std::uint32_t>(j), d);
            out[i * n + j] = sum;
        }
    return out;
}

// Brute-force augmented Lagrangian: iterates the canonical edge list and
// adds both ordered mentions explicitly (self-loops once).
inline double brute_force_objective(const FactorState& state, const ShdiMatrix& mat,
                                    const HyperParams& hp,
                                    const std::vector<double>& anchor,
                                    bool ablate_proximal = false) {
    const int f = state.rank;
    const double mu = ablate_proximal ? 0.0 : hp.mu;
    double eps = 0.0;
    auto mention = [&](std::uint32_t m, std::uint32_t n, double y) {
        double dot = 0.0, reg = 0.0;
        for (int d = 0; d < f; ++d) {
            dot += state.x(m, d) * state.x(n, d);
            reg += state.x(m, d) * state.x(m, d) + state.x(n, d) * state.x(n, d);
        }
        eps += 0.5 * ((y - dot) * (y - dot) + hp.lambda * reg);
    };
    for (const Edge& e : mat.edges()) {
        mention(e.m, e.n, e.y);
        if (e.m != e.n) mention(e.n, e.m, e.y);
    }
    for (std::uint32_t u = 0; u < state.nodes; ++u) {
        const double au = alpha(hp, mat.degree(u));
        for (int d = 0; d < f; ++d) {
            const double gap = state.x(u, d) - state.a(u, d);
            const double prox = state.x(u, d) - anchor[static_cast<std::size_t>(u) * f + d];
            eps += state.w(u, d) * gap + 0.5 * au * gap * gap + 0.5 * mu * prox * prox;
        }
    }
    return eps;
}

// Straightforward single sweep without the residual cache: every
// y - sum_{l != d} x_m x_n is recomputed from scratch, with the same
// column-snapshot discipline as the production path.
inline void reference_sweep(FactorState& state, const ShdiMatrix& mat,
                            const HyperParams& hp, bool ablate_proximal) {
    const int f = state.rank;
    const double mu = ablate_proximal ? 0.0 : hp.mu;
    for (int d = 0; d < f; ++d) {
        std::vector<double> snap(state.nodes);
        for (std::uint32_t u = 0; u < state.nodes; ++u) snap[u] = state.x(u, d);
        std::vector<double> fresh(state.nodes);
        for (std::uint32_t m = 0; m < state.nodes; ++m) {
            const double am = alpha(hp, mat.degree(m));
            double num = 0.0, den = 0.0;
            for (const NeighborRef& nb : mat.neighbors(m)) {
                double scratch = 0.0;
                for (int l = 0; l < f; ++l) scratch += state.x(m, l) * state.x(nb.node, l);
                const double partial = (nb.weight - scratch) + snap[m] * snap[nb.node];
                num += partial * snap[nb.node];
                den += snap[nb.node] * snap[nb.node] + hp.lambda;
            }
            num += am * state.a(m, d) - state.w(m, d) + mu * snap[m];
            den += am + mu;
            fresh[m] = num / den;
        }
        for (std::uint32_t u = 0; u < state.nodes; ++u) state.x(u, d) = fresh[u];
        for (std::uint32_t m = 0; m < state.nodes; ++m) {
            const double am = alpha(hp, mat.degree(m));
            const double v = state.x(m, d) + state.w(m, d) / am;
            state.a(m, d) = v > 0.0 ? v : 0.0;
        }
        for (std::uint32_t m = 0; m < state.nodes; ++m) {
            const double am = alpha(hp, mat.degree(m));
            state.w(m, d) += hp.eta * am * (state.x(m, d) - state.a(m, d));
        }
    }
    // from-scratch residuals, same entry order as the cached path
    for (std::size_t e = 0; e < mat.edges().size(); ++e) {
        const Edge& ed = mat.edges()[e];
        double dot = 0.0;
        for (int l = 0; l < f; ++l) dot += state.x(ed.m, l) * state.x(ed.n, l);
        state.residual[e] = ed.y - dot;
    }
}

// Two-pass RMSE: accumulate squared errors, then divide and root.
inline double two_pass_rmse(std::span<const Edge> truth, const FactorState& state) {
    std::vector<double> sq;
    sq.reserve(truth.size());
    for (const Edge& e : truth) {
        const double p = predict(state, e.m, e.n);
        sq.push_back((e.y - p) * (e.y - p));
    }
    double total = 0.0;
    for (double v : sq) total += v;
    return std::sqrt(total / static_cast<double>(sq.size()));
}

}  // namespace psnl::test
