// SPDX-License-Identifier: MIT
//
// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are fixed here, not calibrated at run time. Runtime
// budgets are asserted where the criterion carries one.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mfg/bench.hpp"
#include "mfg/bestresponse.hpp"
#include "mfg/equilibrium.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/io.hpp"
#include "mfg/measures.hpp"
#include "mfg/scenario.hpp"

using namespace mfg;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int g_failures = 0;

void run_criterion(int id, const std::string& name, double budget_s,
                   const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out.pass = false;
        out.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_budget = budget_s <= 0.0 || secs < budget_s;
    bool pass = out.pass && in_budget;
    std::printf("[%s] criterion %2d: %-28s %s%s(%.1f s%s)\n", pass ? "PASS" : "FAIL", id,
                name.c_str(), out.detail.c_str(), out.detail.empty() ? "" : " ", secs,
                in_budget ? "" : ", over budget");
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

const MeasureSummary kNoMeasure{};

std::string fm(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// shared random instances for criteria 1-3
constexpr std::uint64_t kInstanceSeed = 20240817;
constexpr int kInstances = 200;

// the builtin LQ scenario of criterion 6, shared with criterion 7 and 10
LqScenario lq_scenario() {
    LqScenario p;
    p.q = 1.0;
    p.r = 1.0;
    p.kappa = 0.5;
    p.g = std::sqrt(p.q * (1.0 - p.kappa) * p.r);
    p.sigma0 = 0.5;
    p.sigma_alt = 1.0;
    p.alt_penalty = 1.0;
    p.x0 = 1.0;
    p.horizon = 1.0;
    p.amax = 3.0;
    p.n_actions = 41;
    return p;
}

SolverParams lq_params() {
    SolverParams params;
    params.n_particles = 20000;
    params.time_steps = 100;
    params.max_iter = 40;
    params.beta = 0.5;
    params.tol = 0.004;
    params.seed = 7;
    params.hjb.grid = {-3.0, 4.0, 176};
    params.bins = 50;
    return params;
}

EquilibriumResult& lq_equilibrium() {
    static EquilibriumResult eq = [] {
        auto spec = lq_model(lq_scenario());
        return solve_mfg_no_common(spec, lq_params(), false);
    }();
    return eq;
}

}  // namespace

// --------------------------------------------------------------------------

static Outcome criterion1() {
    double max_gap = 0.0;
    for (std::uint64_t k = 0; k < kInstances; ++k) {
        auto inst = bench::random_instance(kInstanceSeed, k);
        const auto& spec = inst.model.spec;
        auto ev = driver_F(spec, 0.0, spec.x0, inst.z, inst.sigma, kNoMeasure);
        double bf = bench::brute_force_F(spec, 0.0, spec.x0, inst.z, inst.sigma, kNoMeasure, 40);
        max_gap = std::max(max_gap, std::abs(ev.value - bf));
        if (std::abs(ev.value - bf) > 1e-3)
            return {false, "gap " + fm(std::abs(ev.value - bf)) + " at instance " + std::to_string(k)};
        if (bf > ev.value + 1e-9)
            return {false, "oracle above driver at instance " + std::to_string(k)};
    }
    return {true, "max |F - brute force| = " + fm(max_gap)};
}

static Outcome criterion2() {
    double worst_ratio_excess = -1e300;
    for (std::uint64_t k = 0; k < kInstances; ++k) {
        auto inst = bench::random_instance(kInstanceSeed, k);
        const auto& spec = inst.model.spec;
        const int d = spec.dim_state;
        double bound = 0.0;
        for (int a = 0; a < spec.drift_actions.size(); ++a)
            for (int b = 0; b < spec.diffusion_actions.size(); ++b) {
                auto pt = eval_coefficients(spec, 0.0, spec.x0, kNoMeasure, a, b);
                bound = std::max(bound, norm2(pt.drift));
            }
        for (int probe = 0; probe < 1000; ++probe) {
            Vector z1(d), z2(d);
            for (int c = 0; c < d; ++c) {
                z1[c] = 6.0 * rng::uniform(kInstanceSeed + 1, rng::Purpose::Probe, k, probe, c) - 3.0;
                z2[c] = 6.0 * rng::uniform(kInstanceSeed + 2, rng::Purpose::Probe, k, probe, c) - 3.0;
            }
            if (z1 == z2) continue;
            double ratio = lipschitz_probe_F(spec, 0.0, spec.x0, inst.sigma, kNoMeasure, z1, z2);
            worst_ratio_excess = std::max(worst_ratio_excess, ratio - bound);
            if (ratio > bound + 1e-9)
                return {false, "ratio excess " + fm(ratio - bound) + " at instance " +
                                   std::to_string(k)};
        }
    }
    return {true, "max(ratio - bound) = " + fm(worst_ratio_excess)};
}

static Outcome criterion3() {
    double max_gap = 0.0, max_hdiff = 0.0;
    for (std::uint64_t k = 0; k < kInstances; ++k) {
        auto inst = bench::random_instance(kInstanceSeed, k);
        const auto& spec = inst.model.spec;
        auto ev = driver_F(spec, 0.0, spec.x0, inst.z, inst.sigma, kNoMeasure);
        double h = hamiltonian_H(spec, 0.0, spec.x0, inst.z, kNoMeasure, ev.strategy);
        max_gap = std::max(max_gap, ev.feasibility_gap);
        max_hdiff = std::max(max_hdiff, std::abs(h - ev.value));
        if (ev.feasibility_gap > 1e-8)
            return {false, "feasibility gap " + fm(ev.feasibility_gap)};
        if (std::abs(h - ev.value) > 1e-10)
            return {false, "H(q-hat) off by " + fm(std::abs(h - ev.value))};
    }
    return {true, "max gap " + fm(max_gap) + ", max |H - F| " + fm(max_hdiff)};
}

static Outcome criterion4() {
    // state-independent two-action tables, random mixtures per step
    Matrix s1(1, 1), s2(1, 1);
    s1(0, 0) = 0.8;
    s2(0, 0) = 1.6;
    auto tm = bench::table_model(1, 1, {{-1.0}, {0.5}}, {s1, s2}, {0, 0, 0, 0});
    const int N = 50000, L = 10;
    SimOptions opt;
    opt.n_particles = N;
    opt.time_steps = L;
    opt.seed = 52;
    std::vector<MixedStrategy> qs(L);
    for (int j = 0; j < L; ++j) {
        double u1 = rng::uniform(500, rng::Purpose::Probe, j, 0, 0);
        double u2 = rng::uniform(500, rng::Purpose::Probe, j, 1, 0);
        qs[j].qa = {u1, 1.0 - u1};
        qs[j].qb = {u2, 1.0 - u2};
    }
    auto ctrl = [&](int, int j, const Vector&) { return qs[j]; };
    auto meas = [](int) -> const MeasureSummary& { return kNoMeasure; };
    auto ens = simulate_paths(tm.spec, ctrl, meas, opt);
    const double dt = tm.spec.horizon / L;
    double worst_t = 0.0;
    for (int j = 0; j < L; ++j) {
        double mu = 0.0, s2q = 0.0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                mu += qs[j].qa[a] * qs[j].qb[b] * (*tm.sigmas)[b](0, 0) * (*tm.lambdas)[a][0];
        for (int b = 0; b < 2; ++b)
            s2q += qs[j].qb[b] * (*tm.sigmas)[b](0, 0) * (*tm.sigmas)[b](0, 0);
        double m1 = 0.0, r2 = 0.0, r4 = 0.0;
        for (int i = 0; i < N; ++i) {
            double inc = ens->state(i, j + 1, 0) - ens->state(i, j, 0);
            m1 += inc;
            // remove the applied drift: the residual's variance is exactly
            // the generator covariance integral
            double res = inc - ens->drift_at(i, j, 0) * dt;
            r2 += res * res;
            r4 += res * res * res * res;
        }
        m1 /= N;
        r2 /= N;
        r4 /= N;
        double se_mean = std::sqrt(r2 / N);
        double se_var = std::sqrt(std::max(0.0, r4 - r2 * r2) / N);
        double t_mean = std::abs(m1 - mu * dt) / se_mean;
        double t_var = std::abs(r2 - s2q * dt) / se_var;
        worst_t = std::max({worst_t, t_mean, t_var});
        if (t_mean > 3.0) return {false, "drift mismatch t = " + fm(t_mean) + " at step " + std::to_string(j)};
        if (t_var > 3.0) return {false, "covariance mismatch t = " + fm(t_var) + " at step " + std::to_string(j)};
    }
    return {true, "worst |t| = " + fm(worst_t)};
}

static Outcome criterion5() {
    // two volatilities, zero drift, convex terminal cost
    Matrix sa(1, 1), sb(1, 1);
    sa(0, 0) = 1.0;
    sb(0, 0) = 2.0;
    auto tm = bench::table_model(1, 1, {{0.0}}, {sa, sb}, {0.0, 0.0});
    tm.spec.x0 = {0.3};
    tm.spec.terminal_cost = [](const Vector& x) { return x[0] * x[0]; };

    HjbOptions hjb;
    hjb.grid = {-9.0, 9.0, 181};
    hjb.time_steps = 50;
    auto vf = solve_hjb_grid(tm.spec, kNoMeasure, hjb);
    double v_grid = vf.y_at(0, 0.3);

    std::vector<DiffusionSelection> family = {[](int, const Vector&) { return 0; },
                                              [](int, const Vector&) { return 1; }};
    RegressionBasis basis;
    auto sup = sup_over_measures(tm.spec, kNoMeasure, family, 20000, 55, basis, 50);

    // member standard errors for the tolerance
    std::vector<double> ses;
    for (size_t k = 0; k < family.size(); ++k) {
        SimOptions opt;
        opt.n_particles = 20000;
        opt.time_steps = 50;
        opt.seed = 55;
        opt.salt = 1000 + k;
        opt.include_drift = false;
        const auto& sel = family[k];
        auto ctrl = [&](int, int j, const Vector& x) { return MixedStrategy::dirac(1, 0, 2, sel(j, x)); };
        auto meas = [](int) -> const MeasureSummary& { return kNoMeasure; };
        auto bs = solve_bsde_fixed_measure(tm.spec, kNoMeasure, simulate_paths(tm.spec, ctrl, meas, opt), basis);
        ses.push_back(bs.y0_se);
    }
    double tol = std::max(0.01 * std::abs(v_grid), 3.0 * ses[sup.argmax]);
    if (std::abs(sup.y0_sup - v_grid) > tol)
        return {false, "sup " + fm(sup.y0_sup) + " vs grid " + fm(v_grid) + " exceeds " + fm(tol)};
    for (size_t k = 0; k < sup.member_y0.size(); ++k) {
        double scheme_tol = 0.01 * std::max(1.0, std::abs(v_grid)) + 3.0 * ses[k];
        if (sup.member_y0[k] > v_grid + scheme_tol)
            return {false, "member " + std::to_string(k) + " above the grid value"};
    }
    return {true, "sup gap " + fm(std::abs(sup.y0_sup - v_grid)) + " (tol " + fm(tol) + ")"};
}

static Outcome criterion6() {
    auto lqs = lq_scenario();
    const auto& eq = lq_equilibrium();

    bench::LQParams bp;
    bp.q = lqs.q;
    bp.r = lqs.r;
    bp.g = lqs.g;
    bp.kappa = lqs.kappa;
    bp.sigma0 = lqs.sigma0;
    bp.x0 = lqs.x0;
    bp.horizon = lqs.horizon;
    auto ref = bench::lq_riccati_reference(bp, 400);

    double worst = 0.0, scale = 0.0;
    for (size_t j = 0; j < eq.measure.times.size(); ++j) {
        double want = ref.mean_at(eq.measure.times[j]);
        worst = std::max(worst, std::abs(eq.measure.means[j][0] - want));
        scale = std::max(scale, std::abs(want));
    }
    if (worst > 0.02 * scale)
        return {false, "mean path sup error " + fm(worst) + " > 2% of " + fm(scale)};
    if (eq.exploitability > 3.0 * eq.exploitability_se)
        return {false, "exploitability " + fm(eq.exploitability) + " > 3 se " +
                           fm(3.0 * eq.exploitability_se)};
    return {true, "mean sup err " + fm(worst) + " (" + fm(100 * worst / scale) +
                      "%), exploitability " + fm(eq.exploitability) + " +- " +
                      fm(eq.exploitability_se)};
}

static Outcome criterion7() {
    auto spec = lq_model(lq_scenario());
    const auto& eq = lq_equilibrium();
    // the +-3 SE per-step window must clear the O(dt^2) quadrature term of
    // the discrete dU plus the max over 100 steps; this caps the useful
    // certificate resolution
    const int kCertN = 1000;

    // three perturbed test laws plus the deliberately suboptimal one
    std::vector<DiffusionSelection> perturbed = {
        [](int j, const Vector&) { return j % 7 == 0 ? 1 : 0; },
        [](int, const Vector& x) { return x[0] < 0.2 ? 1 : 0; },
        [](int j, const Vector&) { return j > 50 ? 1 : 0; },
    };
    auto rep = mkv2bsde_certificate(spec, eq, perturbed, kCertN, 7077);
    for (const auto& law : rep.test_laws)
        if (!law.supermartingale_ok)
            return {false, law.name + " violates the supermartingale bound"};
    double worst_t = 0.0;
    for (size_t j = 0; j < rep.equilibrium.mean_du.size(); ++j)
        worst_t = std::max(worst_t,
                           std::abs(rep.equilibrium.mean_du[j]) / rep.equilibrium.se_du[j]);
    if (!rep.equilibrium.martingale_ok)
        return {false, "equilibrium law max |t| = " + fm(worst_t)};

    std::vector<DiffusionSelection> subopt = {[](int, const Vector&) { return 1; }};
    auto rep2 = mkv2bsde_certificate(spec, eq, subopt, kCertN, 7078);
    if (rep2.test_laws[0].frac_strictly_negative < 0.8)
        return {false, "suboptimal law strict on only " +
                           fm(100 * rep2.test_laws[0].frac_strictly_negative) + "% of steps"};
    return {true, "eq max |t| " + fm(worst_t) + ", suboptimal strict on " +
                      fm(100 * rep2.test_laws[0].frac_strictly_negative) + "% of steps"};
}

static Outcome criterion8() {
    VolchoiceScenario vs;
    vs.vols = {0.5};
    vs.n_drift = 15;
    vs.s0 = 0.4;
    vs.cv = 0.0;
    vs.cm = 0.5;
    vs.x0 = 0.0;
    auto spec = volchoice_model(vs);

    SolverParams params;
    params.n_particles = 40000;
    params.time_steps = 64;
    params.max_iter = 30;
    params.beta = 0.5;
    params.tol = 1e-9;  // run the full 30 iterations, judge by the floor
    params.seed = 11;
    params.min_bucket = 50;
    params.bins = 40;
    params.hjb.grid = {-3.5, 3.5, 115};

    auto eq1 = solve_mfg_common(spec, 1, params);

    // frozen-control Monte Carlo noise floor: bucket distance between two
    // rollouts of the final control differing only in individual noise
    auto st = detail::prepare_buckets(spec, 1, params);
    auto part = build_partition(1, spec.noise0_dim);
    auto ensA = simulate_common_equilibrium(spec, eq1, 0xAAAA);
    auto ensB = simulate_common_equilibrium(spec, eq1, 0xBBBB);
    auto bmA = conditional_buckets(std::shared_ptr<const ParticleEnsemble>(ensA), part);
    auto bmB = conditional_buckets(std::shared_ptr<const ParticleEnsemble>(ensB), part);
    double floor = 0.0;
    for (const auto& [key, bucket] : bmA.buckets) {
        double w = static_cast<double>(st.counts.at(key)) / params.n_particles;
        floor += w * measure_distance(summarize(bucket, params.bins),
                                      summarize(bmB.buckets.at(key), params.bins));
    }
    double best_residual = 1e300;
    for (double r : eq1.residual_history) best_residual = std::min(best_residual, r);
    if (eq1.residual_history.size() > 30)
        return {false, "took more than 30 iterations"};
    if (best_residual > 2.0 * floor)
        return {false, "residual " + fm(best_residual) + " above 2x floor " + fm(floor)};

    // refinement: level-2 solve at the matched seed, coarsened to level 1
    auto params2 = params;
    params2.max_iter = 12;
    auto eq2 = solve_mfg_common(spec, 2, params2);
    auto ens2 = simulate_common_equilibrium(spec, eq2, 0xCC);
    auto bm2 = conditional_buckets(std::shared_ptr<const ParticleEnsemble>(ens2), part);
    for (const auto& [key, m1] : eq1.bucket_measures) {
        auto it = bm2.buckets.find(key);
        if (it == bm2.buckets.end()) return {false, "coarsened bucket " + key.str() + " missing"};
        auto mc = summarize(it->second, params.bins);
        size_t jl = mc.times.size() - 1;
        double n1 = eq1.bucket_weights.at(key) * params.n_particles;
        double n2 = static_cast<double>(it->second.indices.size());
        double se = std::sqrt(m1.covs[jl](0, 0) / n1 + mc.covs[jl](0, 0) / n2);
        double diff = std::abs(m1.means[jl][0] - mc.means[jl][0]);
        if (diff > 3.0 * se + 0.02)
            return {false, "coarsened bucket " + key.str() + " off by " + fm(diff)};
    }

    // inert common noise: bucket summaries match the unconditional solve
    auto vs0 = vs;
    vs0.s0 = 1e-8;
    auto spec0 = volchoice_model(vs0);
    auto params0 = params;
    params0.max_iter = 15;
    auto eqc = solve_mfg_common(spec0, 1, params0);
    auto vsn = vs;
    vsn.s0 = 0.0;
    auto specn = volchoice_model(vsn);
    auto eqn = solve_mfg_no_common(specn, params0, false);
    for (const auto& [key, m] : eqc.bucket_measures) {
        size_t jl = m.times.size() - 1;
        double nb = eqc.bucket_weights.at(key) * params.n_particles;
        double se = std::sqrt(m.covs[jl](0, 0) / nb +
                              eqn.measure.covs[jl](0, 0) / params.n_particles);
        double diff = std::abs(m.means[jl][0] - eqn.measure.means[jl][0]);
        if (diff > 3.0 * se + 0.01)
            return {false, "inert-noise bucket " + key.str() + " off by " + fm(diff)};
    }
    return {true, "residual " + fm(best_residual) + " vs floor " + fm(floor)};
}

static Outcome criterion9() {
    // adaptedness on 1000 random paths
    const int n = 3;
    std::vector<double> times((1 << n) + 1);
    for (size_t j = 0; j < times.size(); ++j)
        times[j] = static_cast<double>(j) / (times.size() - 1);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Vector> vals(times.size());
        for (size_t j = 0; j < times.size(); ++j)
            vals[j] = {rng::gaussian(900, rng::Purpose::Probe, trial, j, 0)};
        double t = rng::uniform(901, rng::Purpose::Probe, trial, 0, 0);
        int k = static_cast<int>(t * (1 << n));
        auto before = adapted_interpolate(times, vals, n, {t});
        auto perturbed = vals;
        for (size_t j = k + 1; j < times.size(); ++j)
            perturbed[j][0] += 1.0 + rng::uniform(902, rng::Purpose::Probe, trial, j, 0);
        auto after = adapted_interpolate(times, perturbed, n, {t});
        if (before[0][0] != after[0][0])
            return {false, "adaptedness violated at trial " + std::to_string(trial)};
    }
    // uniform error bound for Lipschitz paths, n = 2..8
    const double lip = 3.0, T = 1.0;
    for (int lvl = 2; lvl <= 8; ++lvl) {
        std::vector<double> ts((1 << lvl) + 1);
        for (size_t j = 0; j < ts.size(); ++j) ts[j] = T * static_cast<double>(j) / (ts.size() - 1);
        std::vector<Vector> vals(ts.size());
        for (size_t j = 0; j < ts.size(); ++j)
            vals[j] = {lip * std::abs(ts[j] - 0.41) - 0.5 * lip * ts[j]};
        std::vector<double> query(2000);
        for (size_t q = 0; q < query.size(); ++q)
            query[q] = T * static_cast<double>(q) / (query.size() - 1);
        auto out = adapted_interpolate(ts, vals, lvl, query);
        double bound = lip * T * std::pow(2.0, -(lvl - 1));
        for (size_t q = 0; q < query.size(); ++q) {
            double exact = lip * std::abs(query[q] - 0.41) - 0.5 * lip * query[q];
            if (std::abs(out[q][0] - exact) > bound + 1e-12)
                return {false, "error bound broken at level " + std::to_string(lvl)};
        }
    }
    return {true, ""};
}

static Outcome criterion10() {
    auto spec = lq_model(lq_scenario());
    auto params = lq_params();
    auto eq1 = solve_mfg_no_common(spec, params, false);
    auto eq2 = solve_mfg_no_common(spec, params, false);
    auto s1 = io::summary_json(eq1).dump(2);
    auto s2 = io::summary_json(eq2).dump(2);
    if (s1 != s2) return {false, "summary.json differs between identical runs"};
    return {true, std::to_string(s1.size()) + " bytes identical"};
}

int main() {
    std::printf("acceptance suite\n");
    run_criterion(1, "hamiltonian exactness", 60.0, criterion1);
    run_criterion(2, "Lipschitz bound in z", 10.0, criterion2);
    run_criterion(3, "selector feasibility", 0.0, criterion3);
    run_criterion(4, "generator matching", 30.0, criterion4);
    run_criterion(5, "value representation", 120.0, criterion5);
    run_criterion(6, "LQ equilibrium", 300.0, criterion6);
    run_criterion(7, "2BSDE certificate", 0.0, criterion7);
    run_criterion(8, "common-noise consistency", 600.0, criterion8);
    run_criterion(9, "interpolation properties", 0.0, criterion9);
    run_criterion(10, "determinism", 0.0, criterion10);
    std::printf("%d criterion failure(s)\n", g_failures);
    return g_failures;
}
