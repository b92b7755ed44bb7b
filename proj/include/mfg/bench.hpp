// SPDX-License-Identifier: MIT
//
// Independent oracles: Riccati ODE reference for the linear-quadratic mean
// field game, brute-force maximization of the constrained Hamiltonian, and
// plain Euler Monte Carlo for uncontrolled reductions. Deliberately shares
// nothing with the hamiltonian or bestresponse modules beyond the model
// types; these are the ground truth the solvers are checked against.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mfg/errors.hpp"
#include "mfg/model.hpp"
#include "mfg/rng.hpp"

namespace mfg::bench {

// Scalar LQ mean field game: minimize E[ int (q/2)(X - kappa mbar)^2 +
// (r/2) a^2 dt + (g/2) X_T^2 ] with dX = a dt + sigma0 dW, coupled through
// the equilibrium mean mbar.
struct LQParams {
    double q = 1.0;       // state tracking weight, >= 0
    double r = 1.0;       // control cost, > 0
    double g = 0.0;       // terminal weight, >= 0
    double kappa = 0.0;   // mean-coupling weight
    double sigma0 = 1.0;  // fixed volatility, > 0
    double horizon = 1.0;
    double x0 = 0.0;      // common initial state = initial mean
};

struct LQReference {
    std::vector<double> ts;    // fine output grid
    std::vector<double> P;     // Riccati coefficient, value = P/2 x^2 + s x + k
    std::vector<double> phi;   // s_t = phi_t * mean_t
    std::vector<double> mean;  // equilibrium mean path
    std::vector<double> s;
    std::vector<double> k;
    double value0 = 0.0;  // minimal cost at (0, x0)

    double gain(size_t j, double r) const { return P[j] / r; }
    double mean_at(double t) const { return interp(ts, mean, t); }
    double P_at(double t) const { return interp(ts, P, t); }
    double s_at(double t) const { return interp(ts, s, t); }
    double value_at(double x) const { return 0.5 * P[0] * x * x + s[0] * x + k[0]; }

private:
    static double interp(const std::vector<double>& xs, const std::vector<double>& ys, double t) {
        if (t <= xs.front()) return ys.front();
        if (t >= xs.back()) return ys.back();
        size_t j = static_cast<size_t>((t - xs.front()) / (xs[1] - xs[0]));
        if (j + 1 >= xs.size()) j = xs.size() - 2;
        double w = (t - xs[j]) / (xs[j + 1] - xs[j]);
        return (1.0 - w) * ys[j] + w * ys[j + 1];
    }
};

namespace detail {

// One full pass at `steps` RK4 steps. Backward system in reversed time for
// (P, phi), then the mean consistency ODE forward, then (s, k) backward.
inline LQReference lq_solve_once(const LQParams& p, int steps) {
    const double T = p.horizon;
    const int n = 2 * steps;  // store half-points so RK4 stages are exact grid reads
    const double h = T / n;

    LQReference ref;
    ref.ts.resize(n + 1);
    for (int j = 0; j <= n; ++j) ref.ts[j] = T * static_cast<double>(j) / n;

    // reversed time tau = T - t: dP/dtau = q - P^2/r ; dphi/dtau = -(2 phi P + phi^2)/r - q kappa
    ref.P.assign(n + 1, 0.0);
    ref.phi.assign(n + 1, 0.0);
    ref.P[n] = p.g;
    ref.phi[n] = 0.0;
    auto fP = [&](double P) { return p.q - P * P / p.r; };
    auto fphi = [&](double P, double phi) {
        return -(2.0 * phi * P + phi * phi) / p.r - p.q * p.kappa;
    };
    for (int j = n; j > 0; --j) {
        double P = ref.P[j], phi = ref.phi[j];
        double k1P = fP(P), k1f = fphi(P, phi);
        double k2P = fP(P + 0.5 * h * k1P), k2f = fphi(P + 0.5 * h * k1P, phi + 0.5 * h * k1f);
        double k3P = fP(P + 0.5 * h * k2P), k3f = fphi(P + 0.5 * h * k2P, phi + 0.5 * h * k2f);
        double k4P = fP(P + h * k3P), k4f = fphi(P + h * k3P, phi + h * k3f);
        ref.P[j - 1] = P + h / 6.0 * (k1P + 2 * k2P + 2 * k3P + k4P);
        ref.phi[j - 1] = phi + h / 6.0 * (k1f + 2 * k2f + 2 * k3f + k4f);
    }

    // forward mean: dm/dt = -(P + phi) m / r. Half-step rate values come
    // from 4-point interpolation of the stored grid, keeping RK4 at O(h^4).
    Vector rate(n + 1);
    for (int j = 0; j <= n; ++j) rate[j] = -(ref.P[j] + ref.phi[j]) / p.r;
    auto rate_mid = [&](int j) {  // cubic interpolation of rate at t_{j + 1/2}
        if (j == 0)
            return (5.0 * rate[0] + 15.0 * rate[1] - 5.0 * rate[2] + rate[3]) / 16.0;
        if (j == n - 1)
            return (5.0 * rate[n] + 15.0 * rate[n - 1] - 5.0 * rate[n - 2] + rate[n - 3]) / 16.0;
        return (9.0 * (rate[j] + rate[j + 1]) - (rate[j - 1] + rate[j + 2])) / 16.0;
    };
    ref.mean.assign(n + 1, 0.0);
    ref.mean[0] = p.x0;
    for (int j = 0; j < n; ++j) {
        double m = ref.mean[j];
        double rm = rate_mid(j);
        double k1 = rate[j] * m;
        double k2 = rm * (m + 0.5 * h * k1);
        double k3 = rm * (m + 0.5 * h * k2);
        double k4 = rate[j + 1] * (m + h * k3);
        ref.mean[j + 1] = m + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }

    ref.s.assign(n + 1, 0.0);
    for (int j = 0; j <= n; ++j) ref.s[j] = ref.phi[j] * ref.mean[j];

    // constant term backward: dk/dt = s^2/(2r) - (q/2) c^2 - sigma0^2 P / 2,
    // c = kappa mean; quadrature by Simpson over interval pairs, one-sided
    // 3-point rule for the odd offsets.
    ref.k.assign(n + 1, 0.0);
    auto fk = [&](int idx) {
        double c = p.kappa * ref.mean[idx];
        return -ref.s[idx] * ref.s[idx] / (2.0 * p.r) + 0.5 * p.q * c * c +
               0.5 * p.sigma0 * p.sigma0 * ref.P[idx];
    };
    for (int j = n - 2; j >= 0; j -= 2)
        ref.k[j] = ref.k[j + 2] + h / 3.0 * (fk(j) + 4.0 * fk(j + 1) + fk(j + 2));
    for (int j = n - 1; j >= 0; j -= 2)
        ref.k[j] = ref.k[j + 1] + h / 12.0 * (5.0 * fk(j) + 8.0 * fk(j + 1) - fk(j + 2));
    ref.value0 = ref.value_at(p.x0);
    return ref;
}

inline double lq_diff(const LQReference& a, const LQReference& b) {
    // compare on the coarser grid (b has twice the resolution)
    double worst = 0.0;
    for (size_t j = 0; j < a.ts.size(); ++j) {
        size_t j2 = 2 * j;
        worst = std::max(worst, std::abs(a.P[j] - b.P[j2]));
        worst = std::max(worst, std::abs(a.phi[j] - b.phi[j2]));
        worst = std::max(worst, std::abs(a.mean[j] - b.mean[j2]));
    }
    worst = std::max(worst, std::abs(a.value0 - b.value0));
    return worst;
}

}  // namespace detail

// Riccati reference with a step-halving self-check; the halved run is the
// returned one.
inline LQReference lq_riccati_reference(const LQParams& p, int steps) {
    if (p.r <= 0.0) throw ConfigError("LQ control cost r must be > 0");
    if (steps < 100) throw ConfigError("lq_riccati_reference needs steps >= 100");
    LQReference coarse = detail::lq_solve_once(p, steps);
    LQReference fine = detail::lq_solve_once(p, 2 * steps);
    double err = detail::lq_diff(coarse, fine);
    if (!(err < 1e-8))
        throw StiffnessFailure("Riccati step-halving error " + std::to_string(err));
    return fine;
}

namespace detail {

inline void compositions(int total, int parts, std::vector<int>& cur,
                         const std::function<void(const std::vector<int>&)>& emit) {
    if (parts == 1) {
        cur.push_back(total);
        emit(cur);
        cur.pop_back();
        return;
    }
    for (int k = 0; k <= total; ++k) {
        cur.push_back(k);
        compositions(total - k, parts - 1, cur, emit);
        cur.pop_back();
    }
}

}  // namespace detail

// Brute-force F: enumerate qb candidates (simplex mesh points plus basic
// solutions of the covariance system obtained by direct elimination),
// retain those matching Sigma within the relaxed tolerance, and maximize H
// over them; the qa maximum of the resulting linear form sits at a vertex
// of the drift simplex, so the drift mesh reduces to the pure actions.
inline double brute_force_F(const ModelSpec& spec, double t, const Vector& x, const Vector& z,
                            const Matrix& sigma, const MeasureSummary& m, int mesh) {
    const int ka = spec.drift_actions.size();
    const int kb = spec.diffusion_actions.size();
    const int d = spec.dim_state;
    if (ka > 6 || kb > 6) throw ConfigError("brute_force_F limited to K <= 6");
    if (d > 2) throw ConfigError("brute_force_F limited to d <= 2");
    if (mesh < 1 || mesh > 40) throw ConfigError("brute_force_F mesh in [1, 40]");

    std::vector<Matrix> cov(kb);
    std::vector<Vector> sl(static_cast<size_t>(ka) * kb);
    std::vector<double> fv(static_cast<size_t>(ka) * kb);
    for (int b = 0; b < kb; ++b) {
        Matrix sig = spec.diffusion(t, x, m, b);
        cov[b] = aat(sig);
        symmetrize(cov[b]);
    }
    for (int a = 0; a < ka; ++a) {
        Vector lam = spec.drift_factor(t, x, m, a);
        for (int b = 0; b < kb; ++b) {
            Matrix sig = spec.diffusion(t, x, m, b);
            sl[static_cast<size_t>(a) * kb + b] = matvec(sig, lam);
            fv[static_cast<size_t>(a) * kb + b] = spec.running_cost(t, x, m, a, b);
        }
    }

    const double hull_tol = 1e-9 * (1.0 + frobenius(sigma));
    const double tol = hull_tol * (1.0 + 2.0 / mesh);
    auto residual = [&](const Vector& qb) {
        Matrix mix(d, d);
        for (int b = 0; b < kb; ++b)
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) mix(r, c) += qb[b] * cov[b](r, c);
        return frobenius_dist(mix, sigma);
    };
    auto score = [&](const Vector& qb) {
        double best = 0.0;
        for (int a = 0; a < ka; ++a) {
            double v = 0.0;
            for (int b = 0; b < kb; ++b)
                v += qb[b] * (fv[static_cast<size_t>(a) * kb + b] +
                              dot(z, sl[static_cast<size_t>(a) * kb + b]));
            if (a == 0 || v > best) best = v;
        }
        return best;
    };

    bool any = false;
    double bf = 0.0;
    auto consider = [&](const Vector& qb) {
        if (residual(qb) > tol) return;
        double v = score(qb);
        if (!any || v > bf) bf = v;
        any = true;
    };

    // mesh points: integer compositions of `mesh` into kb parts
    std::vector<int> cur;
    detail::compositions(mesh, kb, cur, [&](const std::vector<int>& comp) {
        Vector qb(kb);
        for (int b = 0; b < kb; ++b) qb[b] = static_cast<double>(comp[b]) / mesh;
        consider(qb);
    });

    // basic solutions: pick subsets of supports of size = #equations and
    // solve the covariance system directly
    const int nut = d * (d + 1) / 2;
    const int rows = nut + 1;
    std::vector<int> subset;
    std::function<void(int)> rec = [&](int start) {
        if (static_cast<int>(subset.size()) == std::min(rows, kb)) {
            int nsz = static_cast<int>(subset.size());
            Matrix A(rows, nsz);
            Vector rhs(rows, 0.0);
            for (int jj = 0; jj < nsz; ++jj) A(0, jj) = 1.0;
            rhs[0] = 1.0;
            int row = 1;
            for (int r = 0; r < d; ++r)
                for (int c = r; c < d; ++c) {
                    for (int jj = 0; jj < nsz; ++jj) A(row, jj) = cov[subset[jj]](r, c);
                    rhs[row] = sigma(r, c);
                    ++row;
                }
            // least-squares via normal equations when over-determined
            Matrix G(nsz, nsz);
            Vector g(nsz, 0.0);
            for (int i = 0; i < nsz; ++i)
                for (int jj = 0; jj < nsz; ++jj) {
                    double s = 0.0;
                    for (int r = 0; r < rows; ++r) s += A(r, i) * A(r, jj);
                    G(i, jj) = s;
                }
            for (int i = 0; i < nsz; ++i) {
                double s = 0.0;
                for (int r = 0; r < rows; ++r) s += A(r, i) * rhs[r];
                g[i] = s;
            }
            Vector w;
            if (solve_dense(G, g, w)) {
                bool ok = true;
                double sum = 0.0;
                for (double v : w) {
                    if (v < -1e-10) ok = false;
                    sum += v;
                }
                if (ok && std::abs(sum - 1.0) < 1e-8) {
                    Vector qb(kb, 0.0);
                    for (int jj = 0; jj < nsz; ++jj) qb[subset[jj]] = std::max(0.0, w[jj]);
                    consider(qb);
                }
            }
            return;
        }
        for (int b = start; b < kb; ++b) {
            subset.push_back(b);
            rec(b + 1);
            subset.pop_back();
        }
    };
    rec(0);

    if (!any)
        throw InfeasibleSigma("no mesh point feasible at the coarsest relaxation", 0.0);
    return bf;
}

// ---------------------------------------------------------------------------
// constant-coefficient table models and random driver instances
// ---------------------------------------------------------------------------

struct TableModel {
    ModelSpec spec;
    // owning storage captured by the coefficient closures
    std::shared_ptr<std::vector<Vector>> lambdas;
    std::shared_ptr<std::vector<Matrix>> sigmas;
    std::shared_ptr<std::vector<double>> costs;  // [a * kb + b]
};

inline TableModel table_model(int d, int p, std::vector<Vector> lambdas_in,
                              std::vector<Matrix> sigmas_in, std::vector<double> costs_in,
                              double xi_const = 0.0) {
    TableModel tm;
    tm.lambdas = std::make_shared<std::vector<Vector>>(std::move(lambdas_in));
    tm.sigmas = std::make_shared<std::vector<Matrix>>(std::move(sigmas_in));
    tm.costs = std::make_shared<std::vector<double>>(std::move(costs_in));
    auto& s = tm.spec;
    s.dim_state = d;
    s.noise_dim = p;
    s.horizon = 1.0;
    s.x0.assign(d, 0.0);
    const int ka = static_cast<int>(tm.lambdas->size());
    const int kb = static_cast<int>(tm.sigmas->size());
    {
        std::vector<Vector> pts;
        for (int a = 0; a < ka; ++a) pts.push_back({static_cast<double>(a)});
        s.drift_actions = ActionGrid(pts);
        pts.clear();
        for (int b = 0; b < kb; ++b) pts.push_back({static_cast<double>(b)});
        s.diffusion_actions = ActionGrid(pts);
    }
    auto lam = tm.lambdas;
    auto sig = tm.sigmas;
    auto cost = tm.costs;
    s.drift_factor = [lam](double, const Vector&, const MeasureSummary&, int a) {
        return (*lam)[a];
    };
    s.diffusion = [sig](double, const Vector&, const MeasureSummary&, int b) { return (*sig)[b]; };
    s.running_cost = [cost, kb](double, const Vector&, const MeasureSummary&, int a, int b) {
        return (*cost)[static_cast<size_t>(a) * kb + b];
    };
    s.terminal_cost = [xi_const](const Vector&) { return xi_const; };
    s.bounds = {10.0, 10.0, 10.0, 10.0, 0.0};
    return tm;
}

// Random bounded-coefficient instance with a strictly interior covariance
// target and a random gradient, for driver-vs-oracle sweeps.
struct RandomInstance {
    TableModel model;
    Matrix sigma;
    Vector z;
    Vector hull_weights;
};

inline RandomInstance random_instance(std::uint64_t seed, std::uint64_t k) {
    auto u = [&](std::uint64_t tag, std::uint64_t i) {
        return rng::uniform(seed, rng::Purpose::Bench, k, tag, i);
    };
    const int d = 1 + static_cast<int>(u(1, 0) * 2.0);      // 1..2
    const int ka = 1 + static_cast<int>(u(2, 0) * 5.0) % 5; // 1..5
    const int kb = 1 + static_cast<int>(u(3, 0) * 5.0) % 5;
    const int p = d;
    std::vector<Vector> lambdas(ka);
    for (int a = 0; a < ka; ++a) {
        lambdas[a].resize(p);
        for (int c = 0; c < p; ++c) lambdas[a][c] = 2.0 * u(10 + a, c) - 1.0;
    }
    std::vector<Matrix> sigmas(kb);
    for (int b = 0; b < kb; ++b) {
        sigmas[b] = Matrix(d, p);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < p; ++c) sigmas[b](r, c) = 2.0 * u(40 + b, r * p + c) - 1.0;
    }
    std::vector<double> costs(static_cast<size_t>(ka) * kb);
    for (size_t i = 0; i < costs.size(); ++i) costs[i] = 2.0 * u(90, i) - 1.0;

    RandomInstance inst;
    inst.model = table_model(d, p, std::move(lambdas), std::move(sigmas), std::move(costs));
    inst.hull_weights.resize(kb);
    double tot = 0.0;
    for (int b = 0; b < kb; ++b) {
        inst.hull_weights[b] = 0.1 + u(120, b);
        tot += inst.hull_weights[b];
    }
    for (double& w : inst.hull_weights) w /= tot;
    inst.sigma = Matrix(d, d);
    for (int b = 0; b < kb; ++b) {
        Matrix cov = aat((*inst.model.sigmas)[b]);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) inst.sigma(r, c) += inst.hull_weights[b] * cov(r, c);
    }
    symmetrize(inst.sigma);
    inst.z.resize(d);
    for (int c = 0; c < d; ++c) inst.z[c] = 4.0 * u(150, c) - 2.0;
    return inst;
}

struct McEstimate {
    double y0 = 0.0;
    double se = 0.0;
};

// Plain Euler Monte Carlo of E[xi + int f dt] for singleton action grids.
inline McEstimate uncontrolled_reference(const ModelSpec& spec, int n_paths, std::uint64_t seed,
                                         int steps = 100) {
    if (spec.drift_actions.size() != 1 || spec.diffusion_actions.size() != 1)
        throw ConfigError("uncontrolled_reference requires singleton action grids");
    const double T = spec.horizon;
    const double dt = T / steps;
    const double sdt = std::sqrt(dt);
    const int d = spec.dim_state;
    const int p = spec.noise_dim;
    MeasureSummary empty;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n_paths; ++i) {
        Vector xv = spec.x0;
        double cost = 0.0;
        for (int j = 0; j < steps; ++j) {
            double t = dt * j;
            cost += dt * spec.running_cost(t, xv, empty, 0, 0);
            Vector lam = spec.drift_factor(t, xv, empty, 0);
            Matrix sig = spec.diffusion(t, xv, empty, 0);
            Vector drift = matvec(sig, lam);
            Vector xi(p);
            for (int c = 0; c < p; ++c)
                xi[c] = rng::gaussian(seed, rng::Purpose::Bench, i, j, c);
            for (int r = 0; r < d; ++r) {
                double inc = drift[r] * dt;
                for (int c = 0; c < p; ++c) inc += sig(r, c) * sdt * xi[c];
                xv[r] += inc;
            }
        }
        cost += spec.terminal_cost(xv);
        sum += cost;
        sumsq += cost * cost;
    }
    McEstimate est;
    est.y0 = sum / n_paths;
    double var = std::max(0.0, sumsq / n_paths - est.y0 * est.y0);
    est.se = std::sqrt(var / n_paths);
    return est;
}

}  // namespace mfg::bench
