// SPDX-License-Identifier: MIT
//
// Relaxed Hamiltonian H over product mixed strategies, the constrained
// driver F = sup { H(q) : int sigma sigma^T dq^B = Sigma }, and the argmax
// selector q-hat. The inner problem is linear in q^B at fixed pure drift
// action, so F reduces to K_A small LPs solved exactly by the in-repo
// simplex; the outer maximum over the drift grid takes the smallest index
// on ties.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mfg/errors.hpp"
#include "mfg/model.hpp"
#include "mfg/simplex.hpp"

namespace mfg {

struct MixedStrategy {
    Vector qa;  // over drift_actions
    Vector qb;  // over diffusion_actions

    static MixedStrategy dirac(int ka, int a, int kb, int b) {
        MixedStrategy s;
        s.qa.assign(ka, 0.0);
        s.qb.assign(kb, 0.0);
        s.qa[a] = 1.0;
        s.qb[b] = 1.0;
        return s;
    }
    bool valid(double tol = 1e-12) const {
        double sa = 0.0, sb = 0.0;
        for (double v : qa) {
            if (v < -tol) return false;
            sa += v;
        }
        for (double v : qb) {
            if (v < -tol) return false;
            sb += v;
        }
        return std::abs(sa - 1.0) <= tol && std::abs(sb - 1.0) <= tol;
    }
};

struct DriverEvaluation {
    double value = 0.0;          // F
    MixedStrategy strategy;      // q-hat
    double feasibility_gap = 0.0;  // ||int sigma sigma^T dq^B - Sigma||_F
};

struct FeasibilityResult {
    bool feasible = false;
    Vector qb;       // feasible witness, or the closest phase-1 point
    double gap = 0.0;  // Frobenius residual at the witness
};

namespace detail {

struct CoefficientTables {
    std::vector<Vector> sigma_lambda;  // [a][b] flattened: drift vector sigma(b)lambda(a)
    std::vector<double> cost;          // [a*Kb + b] = f
    std::vector<Matrix> cov;           // [b] = sigma sigma^T
    int ka = 0, kb = 0, d = 0;

    const Vector& sl(int a, int b) const { return sigma_lambda[static_cast<size_t>(a) * kb + b]; }
    double f(int a, int b) const { return cost[static_cast<size_t>(a) * kb + b]; }
};

inline CoefficientTables tabulate(const ModelSpec& spec, double t, const Vector& x,
                                  const MeasureSummary& m) {
    CoefficientTables tab;
    tab.ka = spec.drift_actions.size();
    tab.kb = spec.diffusion_actions.size();
    tab.d = spec.dim_state;
    std::vector<Vector> lams(tab.ka);
    std::vector<Matrix> sigs(tab.kb);
    for (int a = 0; a < tab.ka; ++a) {
        lams[a] = spec.drift_factor(t, x, m, a);
        if (!all_finite(lams[a])) throw NonFiniteCoefficient("lambda non-finite");
    }
    for (int b = 0; b < tab.kb; ++b) {
        sigs[b] = spec.diffusion(t, x, m, b);
        if (!all_finite(sigs[b])) throw NonFiniteCoefficient("sigma non-finite");
        tab.cov.push_back(aat(sigs[b]));
        symmetrize(tab.cov.back());
    }
    tab.sigma_lambda.resize(static_cast<size_t>(tab.ka) * tab.kb);
    tab.cost.resize(static_cast<size_t>(tab.ka) * tab.kb);
    for (int a = 0; a < tab.ka; ++a)
        for (int b = 0; b < tab.kb; ++b) {
            tab.sigma_lambda[static_cast<size_t>(a) * tab.kb + b] = matvec(sigs[b], lams[a]);
            double f = spec.running_cost(t, x, m, a, b);
            if (!std::isfinite(f)) throw NonFiniteCoefficient("f non-finite");
            tab.cost[static_cast<size_t>(a) * tab.kb + b] = f;
        }
    return tab;
}

constexpr double kSigmaRelax = 1e-9;  // interval half-width around each equality

// Constraint system over qb: simplex plus the d(d+1)/2 upper-triangular
// covariance equalities relaxed to +-kSigmaRelax intervals.
inline lp::Simplex make_sigma_lp(const CoefficientTables& tab, const Matrix& sigma) {
    const int kb = tab.kb, d = tab.d;
    const int nut = d * (d + 1) / 2;
    Matrix A(1 + 2 * nut, kb);
    Vector b(1 + 2 * nut, 0.0);
    std::vector<lp::Rel> rel(1 + 2 * nut, lp::Rel::Eq);
    for (int j = 0; j < kb; ++j) A(0, j) = 1.0;
    b[0] = 1.0;
    int row = 1;
    for (int r = 0; r < d; ++r)
        for (int c = r; c < d; ++c) {
            for (int j = 0; j < kb; ++j) {
                A(row, j) = tab.cov[j](r, c);
                A(row + 1, j) = tab.cov[j](r, c);
            }
            b[row] = sigma(r, c) + kSigmaRelax;
            rel[row] = lp::Rel::Le;
            b[row + 1] = sigma(r, c) - kSigmaRelax;
            rel[row + 1] = lp::Rel::Ge;
            row += 2;
        }
    return lp::Simplex(A, b, rel);
}

inline double witness_gap(const CoefficientTables& tab, const Vector& qb, const Matrix& sigma) {
    Matrix mix(tab.d, tab.d);
    for (int j = 0; j < tab.kb; ++j)
        for (int r = 0; r < tab.d; ++r)
            for (int c = 0; c < tab.d; ++c) mix(r, c) += qb[j] * tab.cov[j](r, c);
    return frobenius_dist(mix, sigma);
}

}  // namespace detail

// H(t, x, z, m, q) = sum_{a,b} qa_a qb_b [ f(a,b) + z . sigma(b) lambda(a) ].
inline double hamiltonian_H(const ModelSpec& spec, double t, const Vector& x, const Vector& z,
                            const MeasureSummary& m, const MixedStrategy& q) {
    auto tab = detail::tabulate(spec, t, x, m);
    double h = 0.0;
    for (int a = 0; a < tab.ka; ++a) {
        if (q.qa[a] == 0.0) continue;
        double inner = 0.0;
        for (int b = 0; b < tab.kb; ++b) {
            if (q.qb[b] == 0.0) continue;
            inner += q.qb[b] * (tab.f(a, b) + dot(z, tab.sl(a, b)));
        }
        h += q.qa[a] * inner;
    }
    return h;
}

// Is Sigma in the convex hull of { sigma sigma^T(b) : b in the grid }?
// Decided by LP phase 1 on the relaxed equality system; the witness is the
// feasible point, or the minimum-infeasibility point when outside.
inline FeasibilityResult sigma_hull_feasible(const ModelSpec& spec, double t, const Vector& x,
                                             const MeasureSummary& m, const Matrix& sigma) {
    auto tab = detail::tabulate(spec, t, x, m);
    auto lpsys = detail::make_sigma_lp(tab, sigma);
    FeasibilityResult res;
    res.qb = lpsys.feasible() ? lpsys.minimize(Vector(tab.kb, 0.0)).x : lpsys.phase1_point();
    // renormalize the witness onto the simplex for reporting
    double s = 0.0;
    for (double v : res.qb) s += v;
    if (s > 1e-12)
        for (double& v : res.qb) v /= s;
    res.gap = detail::witness_gap(tab, res.qb, sigma);
    res.feasible = lpsys.feasible() && res.gap <= 1e-9 * (1.0 + frobenius(sigma)) + 10 * detail::kSigmaRelax;
    return res;
}

// F = max over pure drift actions a of the LP over qb maximizing
// sum_b qb_b (f(a,b) + z . sigma(b) lambda(a)) under the Sigma constraint.
// The outer sup over qa is attained at a vertex because H is linear in qa
// at fixed qb. Smallest index wins drift ties; the LP's Bland pivoting
// makes the qb choice deterministic.
inline DriverEvaluation driver_F(const ModelSpec& spec, double t, const Vector& x, const Vector& z,
                                 const Matrix& sigma, const MeasureSummary& m) {
    auto tab = detail::tabulate(spec, t, x, m);
    auto lpsys = detail::make_sigma_lp(tab, sigma);
    if (!lpsys.feasible()) {
        Vector qb = lpsys.phase1_point();
        double s = 0.0;
        for (double v : qb) s += v;
        if (s > 1e-12)
            for (double& v : qb) v /= s;
        throw InfeasibleSigma("Sigma outside the covariance hull",
                              detail::witness_gap(tab, qb, sigma));
    }
    DriverEvaluation out;
    bool have = false;
    Vector c(tab.kb);
    for (int a = 0; a < tab.ka; ++a) {
        for (int b = 0; b < tab.kb; ++b) c[b] = -(tab.f(a, b) + dot(z, tab.sl(a, b)));
        auto sol = lpsys.minimize(c);
        if (sol.status != lp::Status::Optimal)
            throw Error("driver LP did not reach an optimum");
        double val = -sol.objective + 0.0;  // normalize -0
        if (!have || val > out.value) {
            have = true;
            out.value = val;
            out.strategy.qa.assign(tab.ka, 0.0);
            out.strategy.qa[a] = 1.0;
            out.strategy.qb = sol.x;
        }
    }
    // clean tiny LP round-off so the strategy is a valid simplex point
    double s = 0.0;
    for (double& v : out.strategy.qb) {
        if (v < 0.0) v = 0.0;
        s += v;
    }
    if (s > 0.0)
        for (double& v : out.strategy.qb) v /= s;
    out.feasibility_gap = detail::witness_gap(tab, out.strategy.qb, sigma);
    return out;
}

// |F(z1) - F(z2)| / ||z1 - z2||; bounded by the sup norm of sigma lambda.
inline double lipschitz_probe_F(const ModelSpec& spec, double t, const Vector& x,
                                const Matrix& sigma, const MeasureSummary& m, const Vector& z1,
                                const Vector& z2) {
    Vector diff(z1.size());
    for (size_t i = 0; i < z1.size(); ++i) diff[i] = z1[i] - z2[i];
    double dz = norm2(diff);
    if (dz == 0.0) throw ConfigError("z1 and z2 must differ");
    double f1 = driver_F(spec, t, x, z1, sigma, m).value;
    double f2 = driver_F(spec, t, x, z2, sigma, m).value;
    return std::abs(f1 - f2) / dz;
}

}  // namespace mfg
