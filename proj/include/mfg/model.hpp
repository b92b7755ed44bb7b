// SPDX-License-Identifier: MIT
//
// Game data: coefficient bundle (drift factor, diffusion, running and
// terminal cost), finite action grids, and the finite-dimensional measure
// summary that coefficients consume. Coefficients are Markovian: they read
// the current state, never the path.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfg/errors.hpp"
#include "mfg/linalg.hpp"
#include "mfg/rng.hpp"

namespace mfg {

// Finite ordered action set. Values may be scalars (size-1 vectors) or
// vectors; indices 0..K-1 are the stable labels used everywhere else.
struct ActionGrid {
    std::vector<Vector> points;

    ActionGrid() = default;
    explicit ActionGrid(std::vector<Vector> p) : points(std::move(p)) {}

    static ActionGrid scalars(const Vector& vals) {
        ActionGrid g;
        for (double v : vals) g.points.push_back({v});
        return g;
    }

    int size() const { return static_cast<int>(points.size()); }
    double scalar(int i) const { return points[static_cast<size_t>(i)][0]; }
    const Vector& at(int i) const { return points[static_cast<size_t>(i)]; }

    bool distinct() const {
        for (size_t i = 0; i < points.size(); ++i)
            for (size_t j = i + 1; j < points.size(); ++j)
                if (points[i] == points[j]) return false;
        return true;
    }
};

struct Histogram1D {
    Vector edges;   // size = masses.size() + 1, nondecreasing
    Vector masses;  // nonnegative, sums to 1

    double total_mass() const {
        double s = 0.0;
        for (double m : masses) s += m;
        return s;
    }
    double center(int k) const { return 0.5 * (edges[k] + edges[k + 1]); }
};

// Finite-dimensional view of a path measure: per-time moments plus 1-D
// marginal histograms per coordinate. This is the only shape of measure
// dependence the coefficient functions can see.
struct MeasureSummary {
    std::vector<double> times;
    std::vector<Vector> means;                     // [time][coord]
    std::vector<Matrix> covs;                      // [time] d x d
    std::vector<std::vector<Histogram1D>> hists;   // [time][coord]

    int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
    size_t n_times() const { return times.size(); }
    bool empty() const { return times.empty(); }

    // Linear interpolation in t, clamped to the marginal grid.
    double mean_at(double t, int coord) const { return interp(t, coord, means); }

    double var_at(double t, int coord) const {
        if (times.empty()) return 0.0;
        auto [k, w] = locate(t);
        double lo = covs[k](coord, coord);
        double hi = covs[k + (k + 1 < times.size() ? 1 : 0)](coord, coord);
        return (1.0 - w) * lo + w * hi;
    }

    static MeasureSummary point_mass(const std::vector<double>& ts, const Vector& x) {
        MeasureSummary m;
        m.times = ts;
        const int d = static_cast<int>(x.size());
        for (size_t j = 0; j < ts.size(); ++j) {
            m.means.push_back(x);
            m.covs.emplace_back(d, d);
            std::vector<Histogram1D> h(d);
            for (int c = 0; c < d; ++c) h[c] = Histogram1D{{x[c], x[c]}, {1.0}};
            m.hists.push_back(std::move(h));
        }
        return m;
    }

private:
    std::pair<size_t, double> locate(double t) const {
        if (t <= times.front() || times.size() == 1) return {0, 0.0};
        if (t >= times.back()) return {times.size() - 1, 0.0};
        size_t k = 0;
        while (k + 1 < times.size() && times[k + 1] <= t) ++k;
        if (k + 1 >= times.size()) return {times.size() - 1, 0.0};
        double w = (t - times[k]) / (times[k + 1] - times[k]);
        return {k, w};
    }
    double interp(double t, int coord, const std::vector<Vector>& field) const {
        if (times.empty()) return 0.0;
        auto [k, w] = locate(t);
        double lo = field[k][coord];
        double hi = field[k + (k + 1 < times.size() ? 1 : 0)][coord];
        return (1.0 - w) * lo + w * hi;
    }
};

// Declared sup-norm bounds for the coefficient bundle, plus an optional
// local Lipschitz constant in x (0 disables the probe).
struct CoefficientBounds {
    double lambda_sup = 0.0;
    double sigma_sup = 0.0;
    double f_sup = 0.0;
    double xi_sup = 0.0;
    double lipschitz_x = 0.0;
};

using DriftFactorFn = std::function<Vector(double, const Vector&, const MeasureSummary&, int)>;
using DiffusionFn = std::function<Matrix(double, const Vector&, const MeasureSummary&, int)>;
using RunningCostFn = std::function<double(double, const Vector&, const MeasureSummary&, int, int)>;
using TerminalCostFn = std::function<double(const Vector&)>;

struct ModelSpec {
    int dim_state = 1;      // d
    int noise_dim = 1;      // p: columns of sigma, length of the drift factor
    int noise0_dim = 0;     // p0: trailing columns of sigma drive the common noise
    double horizon = 1.0;   // T
    Vector x0;

    DriftFactorFn drift_factor;   // lambda(t, x, m, a_idx) -> R^p
    DiffusionFn diffusion;        // sigma(t, x, m, b_idx) -> d x p
    RunningCostFn running_cost;   // f(t, x, m, a_idx, b_idx)
    TerminalCostFn terminal_cost; // xi(x_T)

    ActionGrid drift_actions;     // A
    ActionGrid diffusion_actions; // B
    CoefficientBounds bounds;

    int indiv_noise_dim() const { return noise_dim - noise0_dim; }

    void check_structure() const {
        if (dim_state < 1) throw ConfigError("dim_state must be >= 1");
        if (horizon <= 0.0) throw ConfigError("horizon must be > 0");
        if (static_cast<int>(x0.size()) != dim_state) throw ConfigError("x0 size != dim_state");
        if (drift_actions.size() < 1 || diffusion_actions.size() < 1)
            throw ConfigError("action grids must be nonempty");
        if (!drift_actions.distinct() || !diffusion_actions.distinct())
            throw ConfigError("action grid points must be distinct");
        if (noise0_dim < 0 || noise0_dim > noise_dim)
            throw ConfigError("noise0_dim must lie in [0, noise_dim]");
        if (!drift_factor || !diffusion || !running_cost || !terminal_cost)
            throw ConfigError("all four coefficient functions must be set");
    }
};

struct CoefficientPoint {
    Vector drift;      // sigma(b) * lambda(a), R^d
    Matrix diffusion;  // sigma(b), d x p
    Matrix cov;        // sigma sigma^T (b), d x d, symmetrized
    double cost = 0.0; // f
};

inline CoefficientPoint eval_coefficients(const ModelSpec& spec, double t, const Vector& x,
                                          const MeasureSummary& m, int a_idx, int b_idx) {
    CoefficientPoint out;
    Vector lam = spec.drift_factor(t, x, m, a_idx);
    out.diffusion = spec.diffusion(t, x, m, b_idx);
    if (!all_finite(lam))
        throw NonFiniteCoefficient("lambda non-finite at a=" + std::to_string(a_idx));
    if (!all_finite(out.diffusion))
        throw NonFiniteCoefficient("sigma non-finite at b=" + std::to_string(b_idx));
    if (static_cast<int>(lam.size()) != spec.noise_dim)
        throw ConfigError("lambda must return a vector of length noise_dim");
    if (out.diffusion.rows != spec.dim_state || out.diffusion.cols != spec.noise_dim)
        throw ConfigError("sigma must return a dim_state x noise_dim matrix");
    out.drift = matvec(out.diffusion, lam);
    out.cov = aat(out.diffusion);
    symmetrize(out.cov);
    out.cost = spec.running_cost(t, x, m, a_idx, b_idx);
    if (!std::isfinite(out.cost))
        throw NonFiniteCoefficient("f non-finite at (a,b)=(" + std::to_string(a_idx) + "," +
                                   std::to_string(b_idx) + ")");
    return out;
}

struct ValidationReport {
    struct CoeffStat {
        std::string name;
        double max_abs = 0.0;
        double bound = 0.0;
        bool exceeded = false;
    };
    struct Violation {
        std::string kind;  // "BoundViolation" | "NonFiniteCoefficient" | "LipschitzViolation"
        std::string name;
        double value = 0.0;
        double bound = 0.0;
        std::string location;
    };
    std::vector<CoeffStat> stats;
    std::vector<Violation> violations;
    int probes = 0;

    bool clean() const { return violations.empty(); }
};

namespace detail {

// Kronecker (golden-ratio family) low-discrepancy points on [0,1]^k.
inline double kronecker(std::uint64_t k, int dim_index, double shift) {
    static const double alphas[] = {0.6180339887498949, 0.4142135623730951, 0.7320508075688772,
                                    0.2360679774997896, 0.6457513110645906, 0.3166247903553998,
                                    0.6055512754639893, 0.1231056256176605};
    double v = shift + static_cast<double>(k + 1) * alphas[dim_index % 8];
    return v - std::floor(v);
}

inline MeasureSummary probe_summary(const ModelSpec& spec, std::uint64_t seed, int which) {
    // A handful of synthetic marginal summaries spanning mean/variance space.
    const int d = spec.dim_state;
    std::vector<double> ts = {0.0, 0.5 * spec.horizon, spec.horizon};
    MeasureSummary m;
    m.times = ts;
    for (size_t j = 0; j < ts.size(); ++j) {
        Vector mu(d);
        Matrix cov(d, d);
        std::vector<Histogram1D> hs(d);
        for (int c = 0; c < d; ++c) {
            double u1 = rng::uniform(seed, rng::Purpose::Probe, 17 + which, j, c);
            double u2 = rng::uniform(seed, rng::Purpose::Probe, 31 + which, j, c);
            mu[c] = 4.0 * (u1 - 0.5);
            double sd = 0.1 + 1.9 * u2;
            cov(c, c) = sd * sd;
            hs[c] = Histogram1D{{mu[c] - 2 * sd, mu[c], mu[c] + 2 * sd}, {0.5, 0.5}};
        }
        m.means.push_back(std::move(mu));
        m.covs.push_back(std::move(cov));
        m.hists.push_back(std::move(hs));
    }
    return m;
}

}  // namespace detail

// Probe the coefficient bundle on quasi-random points of the box |x_i| <= 2,
// t in [0,T], all grid actions, and a few synthetic measure summaries.
// Reports per-coefficient max |value| and flags bound exceedances,
// non-finite values, and finite-difference Lipschitz violations in x.
inline ValidationReport validate_model(const ModelSpec& spec, int probes, std::uint64_t seed) {
    spec.check_structure();
    ValidationReport rep;
    rep.probes = probes;
    const int d = spec.dim_state;
    const double box = 2.0;

    double max_lam = 0.0, max_sig = 0.0, max_f = 0.0, max_xi = 0.0, max_lip = 0.0;
    auto record = [&rep](const std::string& kind, const std::string& name, double value,
                         double bound, const std::string& loc) {
        rep.violations.push_back({kind, name, value, bound, loc});
    };

    std::vector<MeasureSummary> msamples;
    for (int w = 0; w < 3; ++w) msamples.push_back(detail::probe_summary(spec, seed, w));

    const double shift = rng::uniform(seed, rng::Purpose::Probe, 0, 0, 0);
    for (int k = 0; k < probes; ++k) {
        double t = spec.horizon * detail::kronecker(k, 0, shift);
        Vector x(d);
        for (int c = 0; c < d; ++c) x[c] = box * (2.0 * detail::kronecker(k, c + 1, shift) - 1.0);
        const MeasureSummary& m = msamples[k % msamples.size()];
        std::string loc = "probe " + std::to_string(k);

        for (int a = 0; a < spec.drift_actions.size(); ++a) {
            Vector lam = spec.drift_factor(t, x, m, a);
            if (!all_finite(lam)) {
                record("NonFiniteCoefficient", "lambda", 0.0, 0.0, loc + " a=" + std::to_string(a));
                continue;
            }
            for (double v : lam) max_lam = std::max(max_lam, std::abs(v));
            if (spec.bounds.lipschitz_x > 0.0) {
                const double h = 1e-4;
                for (int c = 0; c < d; ++c) {
                    Vector xh = x;
                    xh[c] += h;
                    Vector lamh = spec.drift_factor(t, xh, m, a);
                    for (size_t i = 0; i < lam.size(); ++i)
                        max_lip = std::max(max_lip, std::abs(lamh[i] - lam[i]) / h);
                }
            }
        }
        for (int b = 0; b < spec.diffusion_actions.size(); ++b) {
            Matrix sig = spec.diffusion(t, x, m, b);
            if (!all_finite(sig)) {
                record("NonFiniteCoefficient", "sigma", 0.0, 0.0, loc + " b=" + std::to_string(b));
                continue;
            }
            for (double v : sig.a) max_sig = std::max(max_sig, std::abs(v));
            if (spec.bounds.lipschitz_x > 0.0) {
                const double h = 1e-4;
                for (int c = 0; c < d; ++c) {
                    Vector xh = x;
                    xh[c] += h;
                    Matrix sigh = spec.diffusion(t, xh, m, b);
                    for (size_t i = 0; i < sig.a.size(); ++i)
                        max_lip = std::max(max_lip, std::abs(sigh.a[i] - sig.a[i]) / h);
                }
            }
        }
        for (int a = 0; a < spec.drift_actions.size(); ++a)
            for (int b = 0; b < spec.diffusion_actions.size(); ++b) {
                double f = spec.running_cost(t, x, m, a, b);
                if (!std::isfinite(f)) {
                    record("NonFiniteCoefficient", "f", 0.0, 0.0,
                           loc + " (a,b)=(" + std::to_string(a) + "," + std::to_string(b) + ")");
                    continue;
                }
                max_f = std::max(max_f, std::abs(f));
            }
        double xi = spec.terminal_cost(x);
        if (!std::isfinite(xi))
            record("NonFiniteCoefficient", "xi", 0.0, 0.0, loc);
        else
            max_xi = std::max(max_xi, std::abs(xi));
    }

    auto push_stat = [&](const std::string& name, double got, double bound) {
        bool exceeded = got > bound;
        rep.stats.push_back({name, got, bound, exceeded});
        if (exceeded) record("BoundViolation", name, got, bound, "probe sweep");
    };
    push_stat("lambda", max_lam, spec.bounds.lambda_sup);
    push_stat("sigma", max_sig, spec.bounds.sigma_sup);
    push_stat("f", max_f, spec.bounds.f_sup);
    push_stat("xi", max_xi, spec.bounds.xi_sup);
    if (spec.bounds.lipschitz_x > 0.0 && max_lip > spec.bounds.lipschitz_x)
        record("LipschitzViolation", "lambda/sigma", max_lip, spec.bounds.lipschitz_x,
               "finite-difference sweep");
    return rep;
}

}  // namespace mfg
