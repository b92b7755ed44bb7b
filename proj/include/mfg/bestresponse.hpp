// SPDX-License-Identifier: MIT
//
// Individual best response against a frozen measure: a monotone grid HJB
// solver (d = 1 reference), least-squares Monte Carlo for the BSDE under a
// fixed diffusion law, the sup-over-measures value estimator, feedback
// extraction through the driver selector, and generator-matching forward
// simulation with counter-based noise.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mfg/errors.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/measures.hpp"
#include "mfg/model.hpp"
#include "mfg/parallel.hpp"
#include "mfg/rng.hpp"

namespace mfg {

// ---------------------------------------------------------------------------
// forward simulation
// ---------------------------------------------------------------------------

enum class CommonNoiseMode { None, Shared, PerParticle };

struct SimOptions {
    int n_particles = 1000;
    int time_steps = 100;
    std::uint64_t seed = 1;
    std::uint64_t salt = 0;  // folded into every stream id (iteration, member, ...)
    CommonNoiseMode common_noise = CommonNoiseMode::None;
    bool include_drift = true;
    const std::vector<double>* preset_noise0 = nullptr;  // N*(L+1)*p0 cumulative paths
};

using ControlHook = std::function<MixedStrategy(int particle, int step, const Vector& x)>;
using MeasureHook = std::function<const MeasureSummary&(int particle)>;

namespace detail {

inline int categorical(const Vector& w, double u) {
    double acc = 0.0;
    for (size_t k = 0; k < w.size(); ++k) {
        acc += w[k];
        if (u <= acc) return static_cast<int>(k);
    }
    return static_cast<int>(w.size()) - 1;
}

}  // namespace detail

// Euler scheme matching the relaxed generator: one categorical action draw
// per particle per step, increment sigma(b)lambda(a) dt + sigma^1 dW^1 +
// sigma^0 dW^0, recording the applied covariance and drift per step.
inline std::shared_ptr<ParticleEnsemble> simulate_paths(const ModelSpec& spec,
                                                        const ControlHook& control,
                                                        const MeasureHook& measure,
                                                        const SimOptions& opt) {
    spec.check_structure();
    const int N = opt.n_particles;
    const int L = opt.time_steps;
    const int d = spec.dim_state;
    const int p = spec.noise_dim;
    const int p0 = opt.common_noise == CommonNoiseMode::None ? 0 : spec.noise0_dim;
    const int p1 = p - p0;
    const double T = spec.horizon;
    const double dt = T / L;
    const double sdt = std::sqrt(dt);
    const std::uint64_t seed = rng::mix(opt.seed ^ rng::mix(opt.salt));

    auto ens = std::make_shared<ParticleEnsemble>();
    ens->times.resize(L + 1);
    for (int j = 0; j <= L; ++j) ens->times[j] = T * static_cast<double>(j) / L;
    ens->n_particles = N;
    ens->dim = d;
    ens->noise0_dim = p0;
    ens->states.assign(static_cast<size_t>(N) * (L + 1) * d, 0.0);
    ens->weights.assign(N, 1.0 / N);
    ens->applied_cov.assign(static_cast<size_t>(N) * L * d * d, 0.0);
    ens->applied_drift.assign(static_cast<size_t>(N) * L * d, 0.0);
    ens->actions.assign(static_cast<size_t>(N) * L * 2, 0);
    if (p0 > 0) ens->noise0.assign(static_cast<size_t>(N) * (L + 1) * p0, 0.0);

    parallel_for(N, [&](long pi) {
        const int i = static_cast<int>(pi);
        Vector x = spec.x0;
        for (int c = 0; c < d; ++c) ens->state(i, 0, c) = x[c];
        for (int j = 0; j < L; ++j) {
            const double t = ens->times[j];
            MixedStrategy q = control(i, j, x);
            int a = detail::categorical(q.qa, rng::uniform(seed, rng::Purpose::ActionA, i, j, 0));
            int b = detail::categorical(q.qb, rng::uniform(seed, rng::Purpose::ActionB, i, j, 0));
            ens->actions[(static_cast<size_t>(i) * L + j) * 2] = a;
            ens->actions[(static_cast<size_t>(i) * L + j) * 2 + 1] = b;
            auto pt = eval_coefficients(spec, t, x, measure(i), a, b);

            Vector dw(p, 0.0);
            for (int c = 0; c < p1; ++c)
                dw[c] = sdt * rng::gaussian(seed, rng::Purpose::IndivNoise, i, j, c);
            if (p0 > 0) {
                if (opt.preset_noise0) {
                    const auto& w0 = *opt.preset_noise0;
                    for (int c = 0; c < p0; ++c)
                        dw[p1 + c] = w0[(static_cast<size_t>(i) * (L + 1) + j + 1) * p0 + c] -
                                     w0[(static_cast<size_t>(i) * (L + 1) + j) * p0 + c];
                } else {
                    const std::uint64_t id = opt.common_noise == CommonNoiseMode::Shared ? 0 : i;
                    for (int c = 0; c < p0; ++c)
                        dw[p1 + c] = sdt * rng::gaussian(seed, rng::Purpose::CommonNoise, id, j, c);
                }
                for (int c = 0; c < p0; ++c)
                    ens->noise0_at(i, j + 1, c) = ens->noise0_at(i, j, c) + dw[p1 + c];
            }

            for (int r = 0; r < d; ++r) {
                double inc = opt.include_drift ? pt.drift[r] * dt : 0.0;
                ens->applied_drift[(static_cast<size_t>(i) * L + j) * d + r] =
                    opt.include_drift ? pt.drift[r] : 0.0;
                for (int c = 0; c < p; ++c) inc += pt.diffusion(r, c) * dw[c];
                x[r] += inc;
                for (int c = 0; c < d; ++c)
                    ens->applied_cov[((static_cast<size_t>(i) * L + j) * d + r) * d + c] =
                        pt.cov(r, c);
            }
            for (int c = 0; c < d; ++c) ens->state(i, j + 1, c) = x[c];
        }
    });
    return ens;
}

// ---------------------------------------------------------------------------
// value field and grid HJB (d = 1)
// ---------------------------------------------------------------------------

struct SpaceGrid {
    double lo = -4.0;
    double hi = 4.0;
    int nodes = 161;
};

enum class HjbScheme { Explicit, ImplicitDrift };

struct HjbOptions {
    SpaceGrid grid;
    int time_steps = 100;
    HjbScheme scheme = HjbScheme::Explicit;
    bool auto_substep = true;   // refine dt internally until the CFL bound holds
    double cfl_safety = 0.9;
};

struct ValueField {
    std::vector<double> times;  // L+1
    std::vector<double> xs;     // M+1
    std::vector<double> y, z;   // (L+1) x (M+1)
    std::vector<MixedStrategy> argmax;

    int n_x() const { return static_cast<int>(xs.size()); }
    double Y(int j, int i) const { return y[static_cast<size_t>(j) * xs.size() + i]; }
    double& Y(int j, int i) { return y[static_cast<size_t>(j) * xs.size() + i]; }
    double Z(int j, int i) const { return z[static_cast<size_t>(j) * xs.size() + i]; }
    double& Z(int j, int i) { return z[static_cast<size_t>(j) * xs.size() + i]; }
    const MixedStrategy& strat(int j, int i) const {
        return argmax[static_cast<size_t>(j) * xs.size() + i];
    }
    MixedStrategy& strat(int j, int i) { return argmax[static_cast<size_t>(j) * xs.size() + i]; }

    int nearest_node(double x) const {
        double dx = xs[1] - xs[0];
        int i = static_cast<int>(std::lround((x - xs[0]) / dx));
        return std::clamp(i, 0, n_x() - 1);
    }

    // quadratic interpolation in x, linear extrapolation outside the grid
    double interp(const std::vector<double>& field, int j, double x) const {
        const int M = n_x();
        const double dx = xs[1] - xs[0];
        auto val = [&](int i) { return field[static_cast<size_t>(j) * M + i]; };
        if (x <= xs.front())
            return val(0) + (x - xs.front()) * (val(1) - val(0)) / dx;
        if (x >= xs.back())
            return val(M - 1) + (x - xs.back()) * (val(M - 1) - val(M - 2)) / dx;
        int i = std::clamp(static_cast<int>((x - xs[0]) / dx + 0.5), 1, M - 2);
        double u = (x - xs[i]) / dx;  // u in [-0.5, 0.5] around the nearest node
        return 0.5 * u * (u - 1.0) * val(i - 1) + (1.0 - u * u) * val(i) +
               0.5 * u * (u + 1.0) * val(i + 1);
    }
    double y_at(int j, double x) const { return interp(y, j, x); }
    double z_at(int j, double x) const { return interp(z, j, x); }
};

// Backward monotone sweep: at each node the value maximizes over pure
// action pairs with upwind drift and central diffusion; the internal step
// is refined until the explicit positivity (CFL) condition holds.
inline ValueField solve_hjb_grid(const ModelSpec& spec, const MeasureSummary& m,
                                 const HjbOptions& opt) {
    if (spec.dim_state != 1) throw ConfigError("solve_hjb_grid requires d = 1");
    const int M = opt.grid.nodes;
    if (M < 5) throw GridTooSmall("need at least 5 space nodes");
    const int L = opt.time_steps;
    const int ka = spec.drift_actions.size();
    const int kb = spec.diffusion_actions.size();
    const double dx = (opt.grid.hi - opt.grid.lo) / (M - 1);
    const double T = spec.horizon;
    const double dt = T / L;

    ValueField vf;
    vf.times.resize(L + 1);
    for (int j = 0; j <= L; ++j) vf.times[j] = T * static_cast<double>(j) / L;
    vf.xs.resize(M);
    for (int i = 0; i < M; ++i) vf.xs[i] = opt.grid.lo + dx * i;
    vf.y.assign(static_cast<size_t>(L + 1) * M, 0.0);
    vf.z.assign(static_cast<size_t>(L + 1) * M, 0.0);
    vf.argmax.assign(static_cast<size_t>(L + 1) * M, MixedStrategy::dirac(ka, 0, kb, 0));

    for (int i = 0; i < M; ++i) vf.Y(L, i) = spec.terminal_cost({vf.xs[i]});

    std::vector<double> drift(static_cast<size_t>(M) * ka * kb);
    std::vector<double> cost(static_cast<size_t>(M) * ka * kb);
    std::vector<double> cov(static_cast<size_t>(M) * kb);
    Vector cur(M), nxt(M), rhs(M);

    for (int j = L - 1; j >= 0; --j) {
        const double t = vf.times[j];
        double rate = 0.0;
        for (int i = 0; i < M; ++i) {
            Vector x{vf.xs[i]};
            std::vector<Matrix> sigs(kb);
            for (int b = 0; b < kb; ++b) {
                sigs[b] = spec.diffusion(t, x, m, b);
                if (!all_finite(sigs[b])) throw NonFiniteCoefficient("sigma non-finite in HJB sweep");
                double s2 = 0.0;
                for (int c = 0; c < sigs[b].cols; ++c) s2 += sigs[b](0, c) * sigs[b](0, c);
                cov[static_cast<size_t>(i) * kb + b] = s2;
            }
            for (int a = 0; a < ka; ++a) {
                Vector lam = spec.drift_factor(t, x, m, a);
                for (int b = 0; b < kb; ++b) {
                    double mu = 0.0;
                    for (int c = 0; c < sigs[b].cols; ++c) mu += sigs[b](0, c) * lam[c];
                    drift[(static_cast<size_t>(i) * ka + a) * kb + b] = mu;
                    double f = spec.running_cost(t, x, m, a, b);
                    if (!std::isfinite(f)) throw NonFiniteCoefficient("f non-finite in HJB sweep");
                    cost[(static_cast<size_t>(i) * ka + a) * kb + b] = f;
                    double s2 = cov[static_cast<size_t>(i) * kb + b];
                    double r = s2 / (dx * dx);
                    // central drift stays monotone when diffusion dominates;
                    // only the upwind fallback tightens the CFL rate
                    if (opt.scheme == HjbScheme::Explicit && s2 < std::abs(mu) * dx)
                        r += std::abs(mu) / dx;
                    rate = std::max(rate, r);
                }
            }
        }

        int nsub = 1;
        if (rate > 0.0) {
            double max_dt = opt.cfl_safety / rate;
            if (dt > max_dt) {
                if (!opt.auto_substep)
                    throw CFLViolation("explicit step " + std::to_string(dt) +
                                       " exceeds CFL bound " + std::to_string(max_dt));
                nsub = static_cast<int>(std::ceil(dt / max_dt));
            }
        }
        const double h = dt / nsub;

        for (int i = 0; i < M; ++i) cur[i] = vf.Y(j + 1, i);
        for (int sub = 0; sub < nsub; ++sub) {
            const bool record = sub == nsub - 1;
            if (opt.scheme == HjbScheme::Explicit) {
                for (int i = 0; i < M; ++i) {
                    double vl = cur[std::max(i - 1, 0)];
                    double vr = cur[std::min(i + 1, M - 1)];
                    double vc = cur[i];
                    double diff2 = (vr - 2.0 * vc + vl) / (dx * dx);
                    double best = 0.0;
                    int ba = 0, bb = 0;
                    bool have = false;
                    for (int a = 0; a < ka; ++a)
                        for (int b = 0; b < kb; ++b) {
                            double mu = drift[(static_cast<size_t>(i) * ka + a) * kb + b];
                            double s2 = cov[static_cast<size_t>(i) * kb + b];
                            double dv = s2 >= std::abs(mu) * dx
                                            ? (vr - vl) / (2.0 * dx)
                                            : (mu >= 0.0 ? (vr - vc) / dx : (vc - vl) / dx);
                            double cand =
                                vc + h * (mu * dv + 0.5 * s2 * diff2 +
                                          cost[(static_cast<size_t>(i) * ka + a) * kb + b]);
                            if (!have || cand > best) {
                                have = true;
                                best = cand;
                                ba = a;
                                bb = b;
                            }
                        }
                    nxt[i] = best;
                    if (record) vf.strat(j, i) = MixedStrategy::dirac(ka, ba, kb, bb);
                }
            } else {
                // diffusion and cost explicit, drift implicit per candidate
                // action applied uniformly, then the pointwise maximum
                std::vector<double> best(M);
                std::vector<int> ba(M, 0), bb(M, 0);
                bool have = false;
                Vector cand(M);
                for (int a = 0; a < ka; ++a)
                    for (int b = 0; b < kb; ++b) {
                        for (int i = 0; i < M; ++i) {
                            double vl = cur[std::max(i - 1, 0)];
                            double vr = cur[std::min(i + 1, M - 1)];
                            double diff2 = (vr - 2.0 * cur[i] + vl) / (dx * dx);
                            rhs[i] = cur[i] +
                                     h * (0.5 * cov[static_cast<size_t>(i) * kb + b] * diff2 +
                                          cost[(static_cast<size_t>(i) * ka + a) * kb + b]);
                        }
                        // bidiagonal solves along the upwind direction
                        for (int i = M - 1; i >= 0; --i) {
                            double mu = drift[(static_cast<size_t>(i) * ka + a) * kb + b];
                            if (mu >= 0.0) {
                                double c = h * mu / dx;
                                double vnext = i + 1 < M ? cand[i + 1] : 0.0;
                                cand[i] = i + 1 < M ? (rhs[i] + c * vnext) / (1.0 + c)
                                                    : rhs[i];  // ghost = self at the edge
                            } else {
                                cand[i] = 0.0;  // filled by the forward sweep below
                            }
                        }
                        for (int i = 0; i < M; ++i) {
                            double mu = drift[(static_cast<size_t>(i) * ka + a) * kb + b];
                            if (mu < 0.0) {
                                double c = -h * mu / dx;
                                double vprev = i > 0 ? cand[i - 1] : 0.0;
                                cand[i] = i > 0 ? (rhs[i] + c * vprev) / (1.0 + c) : rhs[i];
                            }
                        }
                        for (int i = 0; i < M; ++i) {
                            if (!have || cand[i] > best[i]) {
                                best[i] = cand[i];
                                ba[i] = a;
                                bb[i] = b;
                            }
                        }
                        have = true;
                    }
                for (int i = 0; i < M; ++i) {
                    nxt[i] = best[i];
                    if (record) vf.strat(j, i) = MixedStrategy::dirac(ka, ba[i], kb, bb[i]);
                }
            }
            std::swap(cur, nxt);
        }
        for (int i = 0; i < M; ++i) vf.Y(j, i) = cur[i];
    }

    for (int j = 0; j <= L; ++j) {
        for (int i = 1; i + 1 < M; ++i) vf.Z(j, i) = (vf.Y(j, i + 1) - vf.Y(j, i - 1)) / (2 * dx);
        vf.Z(j, 0) = (vf.Y(j, 1) - vf.Y(j, 0)) / dx;
        vf.Z(j, M - 1) = (vf.Y(j, M - 1) - vf.Y(j, M - 2)) / dx;
    }
    return vf;
}

// ---------------------------------------------------------------------------
// regression BSDE under a fixed diffusion law
// ---------------------------------------------------------------------------

struct RegressionBasis {
    int degree = 3;
    bool pairwise = true;

    int size(int d) const {
        int n = 1 + d * degree;
        if (pairwise && d > 1) n += d * (d - 1) / 2;
        return n;
    }
    void eval(const Vector& x, double* out) const {
        const int d = static_cast<int>(x.size());
        int k = 0;
        out[k++] = 1.0;
        for (int c = 0; c < d; ++c) {
            double pw = 1.0;
            for (int e = 1; e <= degree; ++e) {
                pw *= x[c];
                out[k++] = pw;
            }
        }
        if (pairwise && d > 1)
            for (int c1 = 0; c1 < d; ++c1)
                for (int c2 = c1 + 1; c2 < d; ++c2) out[k++] = x[c1] * x[c2];
    }
};

namespace detail {

// Weighted ridge regression on standardized features. Returns fitted values
// at the sample points; constant columns are dropped by the standardization
// so a degenerate slice falls back to the weighted mean.
class StepRegression {
public:
    StepRegression(const std::vector<double>& phi, int n, int nb, const Vector& w)
        : n_(n), nb_(nb), phi_(phi), w_(w), mean_(nb, 0.0), scale_(nb, 1.0) {
        if (n_ < nb_) throw SingularRegression("more basis functions than samples");
        for (int k = 1; k < nb_; ++k) {
            double mu = 0.0;
            for (int i = 0; i < n_; ++i) mu += w_[i] * phi_[static_cast<size_t>(i) * nb_ + k];
            double var = 0.0;
            for (int i = 0; i < n_; ++i) {
                double c = phi_[static_cast<size_t>(i) * nb_ + k] - mu;
                var += w_[i] * c * c;
            }
            mean_[k] = mu;
            scale_[k] = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
        }
        gram_ = Matrix(nb_, nb_);
        for (int i = 0; i < n_; ++i) {
            Vector row(nb_);
            for (int k = 0; k < nb_; ++k) row[k] = feat(i, k);
            for (int r = 0; r < nb_; ++r)
                for (int c = r; c < nb_; ++c) gram_(r, c) += w_[i] * row[r] * row[c];
        }
        for (int r = 0; r < nb_; ++r)
            for (int c = 0; c < r; ++c) gram_(r, c) = gram_(c, r);
        for (int r = 0; r < nb_; ++r) gram_(r, r) += 1e-8;  // ridge damping
    }

    // coefficients in standardized space for target y
    Vector fit(const Vector& y) const {
        Vector rhs(nb_, 0.0);
        for (int i = 0; i < n_; ++i) {
            double wy = w_[i] * y[i];
            for (int k = 0; k < nb_; ++k) rhs[k] += wy * feat(i, k);
        }
        Vector beta;
        if (!solve_spd(gram_, rhs, beta))
            throw SingularRegression("normal equations not positive definite");
        return beta;
    }

    double predict(int i, const Vector& beta) const {
        double v = 0.0;
        for (int k = 0; k < nb_; ++k) v += beta[k] * feat(i, k);
        return v;
    }

private:
    double feat(int i, int k) const {
        if (k == 0) return 1.0;
        return (phi_[static_cast<size_t>(i) * nb_ + k] - mean_[k]) * scale_[k];
    }
    int n_, nb_;
    const std::vector<double>& phi_;
    const Vector& w_;
    Vector mean_, scale_;
    Matrix gram_;
};

}  // namespace detail

struct FixedMeasureBSDEResult {
    double y0 = 0.0;
    double y0_se = 0.0;  // Monte Carlo error proxy: sd of xi + sum F dt over paths
    std::vector<double> y;         // N x (L+1)
    std::vector<double> z;         // N x L x d
    std::vector<double> residual;  // N x L, empirical orthogonal martingale increments
    std::shared_ptr<const ParticleEnsemble> ensemble;  // sigma_hat lives in applied_cov

    double Yp(int i, int j, int L1) const { return y[static_cast<size_t>(i) * L1 + j]; }
};

// Backward least-squares induction: Z from the covariance regression of
// Y_{t+dt} dX normalized by the applied per-path covariance, Y from the
// conditional mean plus dt F, terminal condition bitwise exact.
inline FixedMeasureBSDEResult solve_bsde_fixed_measure(const ModelSpec& spec,
                                                       const MeasureSummary& m,
                                                       std::shared_ptr<const ParticleEnsemble> ens,
                                                       const RegressionBasis& basis) {
    const int N = ens->n_particles;
    const int L = ens->n_steps();
    const int d = ens->dim;
    if (ens->applied_cov.empty())
        throw ConfigError("ensemble must carry per-step applied covariance");
    const int nb = basis.size(d);

    FixedMeasureBSDEResult out;
    out.ensemble = ens;
    out.y.assign(static_cast<size_t>(N) * (L + 1), 0.0);
    out.z.assign(static_cast<size_t>(N) * L * d, 0.0);
    out.residual.assign(static_cast<size_t>(N) * L, 0.0);
    std::vector<double> path_value(N, 0.0);

    for (int i = 0; i < N; ++i) {
        double xi = spec.terminal_cost(ens->state_vec(i, L));
        out.y[static_cast<size_t>(i) * (L + 1) + L] = xi;
        path_value[i] = xi;
    }

    std::vector<double> phi(static_cast<size_t>(N) * nb);
    Vector ynext(N), target(N);

    for (int j = L - 1; j >= 0; --j) {
        const double t = ens->times[j];
        const double dt = ens->times[j + 1] - ens->times[j];
        for (int i = 0; i < N; ++i) {
            Vector x = ens->state_vec(i, j);
            basis.eval(x, &phi[static_cast<size_t>(i) * nb]);
            ynext[i] = out.y[static_cast<size_t>(i) * (L + 1) + j + 1];
        }
        detail::StepRegression reg(phi, N, nb, ens->weights);

        // Z: per coordinate, regress Y_{t+dt} * dX_k then normalize
        std::vector<Vector> zbeta(d);
        for (int k = 0; k < d; ++k) {
            for (int i = 0; i < N; ++i)
                target[i] = ynext[i] * (ens->state(i, j + 1, k) - ens->state(i, j, k));
            zbeta[k] = reg.fit(target);
        }
        Vector ybeta = reg.fit(ynext);

        parallel_for(N, [&](long pi) {
            const int i = static_cast<int>(pi);
            Vector num(d);
            for (int k = 0; k < d; ++k) num[k] = reg.predict(i, zbeta[k]);
            Vector zi(d, 0.0);
            if (d == 1) {
                double s2 = ens->cov_at(i, j, 0, 0) * dt;
                zi[0] = s2 > 1e-14 ? num[0] / s2 : 0.0;
            } else {
                Matrix s2 = ens->cov_mat(i, j);
                for (auto& v : s2.a) v *= dt;
                for (int r = 0; r < d; ++r) s2(r, r) += 1e-12;
                if (!solve_spd(s2, num, zi)) zi.assign(d, 0.0);
            }
            Vector x = ens->state_vec(i, j);
            double f = driver_F(spec, t, x, zi, ens->cov_mat(i, j), m).value;
            double yi = reg.predict(i, ybeta) + dt * f;
            path_value[i] += dt * f;
            for (int k = 0; k < d; ++k) out.z[(static_cast<size_t>(i) * L + j) * d + k] = zi[k];
            out.y[static_cast<size_t>(i) * (L + 1) + j] = yi;
            double zdx = 0.0;
            for (int k = 0; k < d; ++k)
                zdx += zi[k] * (ens->state(i, j + 1, k) - ens->state(i, j, k));
            out.residual[static_cast<size_t>(i) * L + j] = ynext[i] - yi + dt * f - zdx;
        });
    }
    double y0 = 0.0;
    for (int i = 0; i < N; ++i) y0 += ens->weights[i] * out.y[static_cast<size_t>(i) * (L + 1)];
    out.y0 = y0;
    double pv = 0.0, pv2 = 0.0;
    for (int i = 0; i < N; ++i) {
        pv += ens->weights[i] * path_value[i];
        pv2 += ens->weights[i] * path_value[i] * path_value[i];
    }
    out.y0_se = std::sqrt(std::max(0.0, pv2 - pv * pv) / N);
    return out;
}

// ---------------------------------------------------------------------------
// sup over a family of zero-drift diffusion selections
// ---------------------------------------------------------------------------

// b-index as a feedback function of (step, state)
using DiffusionSelection = std::function<int(int step, const Vector& x)>;

struct SupOverMeasuresResult {
    double y0_sup = 0.0;
    std::vector<double> member_y0;
    int argmax = 0;
};

inline SupOverMeasuresResult sup_over_measures(const ModelSpec& spec, const MeasureSummary& m,
                                               const std::vector<DiffusionSelection>& family,
                                               int n_particles, std::uint64_t seed,
                                               const RegressionBasis& basis, int time_steps) {
    if (family.empty()) throw ConfigError("sup_over_measures needs a nonempty family");
    SupOverMeasuresResult out;
    const int ka = spec.drift_actions.size();
    const int kb = spec.diffusion_actions.size();
    for (size_t k = 0; k < family.size(); ++k) {
        SimOptions opt;
        opt.n_particles = n_particles;
        opt.time_steps = time_steps;
        opt.seed = seed;
        opt.salt = 1000 + k;
        opt.include_drift = false;
        const auto& sel = family[k];
        auto ctrl = [&](int, int j, const Vector& x) {
            return MixedStrategy::dirac(ka, 0, kb, sel(j, x));
        };
        auto meas = [&m](int) -> const MeasureSummary& { return m; };
        auto ens = simulate_paths(spec, ctrl, meas, opt);
        auto bsde = solve_bsde_fixed_measure(spec, m, ens, basis);
        out.member_y0.push_back(bsde.y0);
        if (k == 0 || bsde.y0 > out.y0_sup) {
            out.y0_sup = bsde.y0;
            out.argmax = static_cast<int>(k);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// feedback controls
// ---------------------------------------------------------------------------

struct FeedbackControl {
    std::vector<double> times;
    std::vector<double> xs;
    std::vector<MixedStrategy> table;  // (L+1) x (M+1), nearest-node lookup

    const MixedStrategy& at(int j, double x) const {
        const int M = static_cast<int>(xs.size());
        double dx = xs[1] - xs[0];
        int i = std::clamp(static_cast<int>(std::lround((x - xs[0]) / dx)), 0, M - 1);
        int jj = std::clamp(j, 0, static_cast<int>(times.size()) - 1);
        return table[static_cast<size_t>(jj) * M + i];
    }

    static FeedbackControl from_argmax(const ValueField& vf) {
        return FeedbackControl{vf.times, vf.xs, vf.argmax};
    }
};

// Per node: run the driver at (Z, Sigma = cov of the HJB argmax diffusion)
// and store the maximizing mixed strategy.
inline FeedbackControl extract_feedback(const ModelSpec& spec, const MeasureSummary& m,
                                        const ValueField& vf) {
    FeedbackControl ctrl;
    ctrl.times = vf.times;
    ctrl.xs = vf.xs;
    ctrl.table.resize(vf.argmax.size());
    const int M = vf.n_x();
    for (size_t j = 0; j < vf.times.size(); ++j)
        for (int i = 0; i < M; ++i) {
            const auto& node = vf.strat(static_cast<int>(j), i);
            int bstar = 0;
            for (size_t b = 0; b < node.qb.size(); ++b)
                if (node.qb[b] > 0.5) bstar = static_cast<int>(b);
            Vector x{vf.xs[i]};
            auto pt = eval_coefficients(spec, vf.times[j], x, m, 0, bstar);
            auto ev = driver_F(spec, vf.times[j], x, {vf.Z(static_cast<int>(j), i)}, pt.cov, m);
            ctrl.table[j * M + i] = ev.strategy;
        }
    return ctrl;
}

// Public forward simulation under a grid feedback control (d = 1).
inline std::shared_ptr<ParticleEnsemble> simulate_forward(const ModelSpec& spec,
                                                          const FeedbackControl& ctrl,
                                                          const MeasureSummary& m,
                                                          const SimOptions& opt) {
    auto hook = [&ctrl](int, int j, const Vector& x) { return ctrl.at(j, x[0]); };
    auto meas = [&m](int) -> const MeasureSummary& { return m; };
    return simulate_paths(spec, hook, meas, opt);
}

}  // namespace mfg
