// SPDX-License-Identifier: MIT
#include <doctest.h>

#include <cmath>

#include "mfg/bench.hpp"
#include "mfg/equilibrium.hpp"
#include "mfg/scenario.hpp"
#include "support.hpp"

using namespace mfg;
using mfg::testing::table_model;

TEST_SUITE_BEGIN("equilibrium");

namespace {

SolverParams small_params(int n_particles = 4000, int steps = 40) {
    SolverParams p;
    p.n_particles = n_particles;
    p.time_steps = steps;
    p.max_iter = 12;
    p.beta = 0.6;
    p.tol = 0.02;
    p.seed = 7;
    p.hjb.grid = {-4.0, 4.0, 121};
    p.bins = 40;
    return p;
}

}  // namespace

TEST_CASE("no coupling: converges immediately with vanishing exploitability") {
    Matrix s(1, 1);
    s(0, 0) = 0.7;
    auto tm = table_model(1, 1, {{0.0}}, {s}, {0.0});
    tm.spec.terminal_cost = [](const Vector& x) { return -x[0] * x[0]; };
    auto params = small_params();
    params.tol = 0.05;
    auto eq = solve_mfg_no_common(tm.spec, params, false);
    CHECK(eq.converged);
    CHECK(eq.residual_history.size() <= 2);
    CHECK(std::abs(eq.exploitability) <= 3.0 * eq.exploitability_se + 0.02);
}

TEST_CASE("unreachable tolerance reports NotConverged with the residual history") {
    Matrix s(1, 1);
    s(0, 0) = 0.7;
    auto tm = table_model(1, 1, {{0.0}}, {s}, {0.0});
    auto params = small_params(1500, 20);
    params.tol = 0.0;  // below the Monte Carlo noise floor
    params.max_iter = 3;
    auto eq = solve_mfg_no_common(tm.spec, params, false);
    CHECK_FALSE(eq.converged);
    CHECK(eq.residual_history.size() == 3);
    for (double r : eq.residual_history) CHECK(r >= 0.0);
}

TEST_CASE("picard: beta = 1 at a fixed point returns m_star up to rebinning") {
    Matrix s(1, 1);
    s(0, 0) = 0.7;
    auto tm = table_model(1, 1, {{0.0}}, {s}, {0.0});
    auto params = small_params();
    auto m0 = detail::bootstrap_measure(tm.spec, params);
    auto step = picard_step(tm.spec, m0, 1.0, params, 0);
    // measure-independent model: m* is the same law re-sampled, so the
    // blended next measure stays within noise of the input
    CHECK(step.residual <= 0.05);
    CHECK(measure_distance(step.m_next, m0) <= 0.05);
}

TEST_CASE("lq equilibrium mean path tracks the consistency ODE") {
    LqScenario lqs;
    lqs.q = 1.0;
    lqs.r = 1.0;
    lqs.kappa = 0.5;
    lqs.g = std::sqrt(lqs.q * (1.0 - lqs.kappa) * lqs.r);
    lqs.sigma0 = 0.5;
    lqs.x0 = 1.0;
    lqs.n_actions = 41;
    auto spec = lq_model(lqs);

    bench::LQParams bp;
    bp.q = lqs.q;
    bp.r = lqs.r;
    bp.g = lqs.g;
    bp.kappa = lqs.kappa;
    bp.sigma0 = lqs.sigma0;
    bp.x0 = lqs.x0;
    auto ref = bench::lq_riccati_reference(bp, 200);

    auto params = small_params(6000, 50);
    params.hjb.grid = {-3.0, 4.0, 141};
    params.max_iter = 20;
    params.tol = 0.004;
    auto eq = solve_mfg_no_common(spec, params, false);

    double worst = 0.0;
    for (size_t j = 0; j < eq.measure.times.size(); j += 5) {
        double got = eq.measure.means[j][0];
        double want = ref.mean_at(eq.measure.times[j]);
        worst = std::max(worst, std::abs(got - want));
    }
    CHECK(worst <= 0.05);  // acceptance runs the strict 2% version at scale
    // residuals trend down
    CHECK(eq.residual_history.back() <= eq.residual_history.front());
}

TEST_CASE("exploitability detects a deliberately broken control") {
    Matrix s(1, 1);
    s(0, 0) = 0.7;
    // drift helps reach the reward peak; the broken control drives away
    auto tm = table_model(1, 1, {{-1.5}, {0.0}, {1.5}}, {s}, {0.0, 0.0, 0.0});
    tm.spec.terminal_cost = [](const Vector& x) { return -(x[0] - 1.0) * (x[0] - 1.0); };
    auto params = small_params(5000, 30);
    auto eq = solve_mfg_no_common(tm.spec, params, false);
    CHECK(std::abs(eq.exploitability) <= 3.0 * eq.exploitability_se + 0.02);

    auto broken = eq;
    for (auto& q : broken.control.table) {
        q.qa.assign(q.qa.size(), 0.0);
        q.qa[0] = 1.0;  // always push down, away from the peak
    }
    auto ex = exploitability(tm.spec, broken, 5000, 99);
    CHECK(ex.value > 3.0 * ex.se);
}

TEST_CASE("certificate: singleton actions give a martingale under the unique law") {
    Matrix s(1, 1);
    s(0, 0) = 0.8;
    auto tm = table_model(1, 1, {{0.0}}, {s}, {0.0});
    tm.spec.terminal_cost = [](const Vector& x) { return -x[0] * x[0]; };
    auto params = small_params(8000, 30);
    params.hjb.grid = {-5.0, 5.0, 161};
    auto eq = solve_mfg_no_common(tm.spec, params, false);
    std::vector<DiffusionSelection> laws = {[](int, const Vector&) { return 0; }};
    auto rep = mkv2bsde_certificate(tm.spec, eq, laws, 8000, params.seed ^ 0xCE);
    CHECK(rep.equilibrium.martingale_ok);
    CHECK(rep.test_laws[0].supermartingale_ok);
    CHECK(rep.y0_vs_value_gap <= 3.0 * eq.exploitability_se + 0.02 * std::abs(eq.y0) + 0.02);
}

TEST_CASE("certificate: suboptimal volatility is a strict supermartingale") {
    // two volatilities, concave value, high volatility strictly suboptimal
    LqScenario lqs;
    lqs.q = 1.0;
    lqs.r = 1.0;
    lqs.g = 0.7;
    lqs.kappa = 0.0;
    lqs.sigma0 = 0.5;
    lqs.sigma_alt = 1.0;
    lqs.x0 = 1.0;
    lqs.n_actions = 21;
    auto spec = lq_model(lqs);
    auto params = small_params(8000, 40);
    params.hjb.grid = {-3.0, 4.0, 141};
    auto eq = solve_mfg_no_common(spec, params, false);
    std::vector<DiffusionSelection> laws = {[](int, const Vector&) { return 1; }};
    auto rep = mkv2bsde_certificate(spec, eq, laws, 8000, 123);
    CHECK(rep.test_laws[0].supermartingale_ok);
    CHECK(rep.test_laws[0].frac_strictly_negative >= 0.8);
    // at this coarse dt the per-step means carry an O(dt^2) quadrature
    // term; the +-3 SE martingale flag is exercised at the acceptance
    // resolution, here the means must stay at scheme scale and far above
    // the suboptimal-law slack
    double worst_eq = 0.0, best_sub = 0.0;
    for (int j = 0; j < static_cast<int>(rep.equilibrium.mean_du.size()); ++j) {
        worst_eq = std::max(worst_eq, std::abs(rep.equilibrium.mean_du[j]));
        best_sub = std::min(best_sub, rep.test_laws[0].mean_du[j]);
    }
    CHECK(worst_eq <= 1e-3);
    CHECK(best_sub < -5.0 * worst_eq);
}

TEST_CASE("results are bit reproducible for a fixed seed") {
    Matrix s(1, 1);
    s(0, 0) = 0.7;
    auto tm = table_model(1, 1, {{-0.5}, {0.5}}, {s}, {0.0, 0.0});
    tm.spec.terminal_cost = [](const Vector& x) { return -x[0] * x[0]; };
    auto params = small_params(2000, 20);
    auto e1 = solve_mfg_no_common(tm.spec, params, false);
    auto e2 = solve_mfg_no_common(tm.spec, params, false);
    CHECK(e1.y0 == e2.y0);
    CHECK(e1.residual_history == e2.residual_history);
    CHECK(e1.exploitability == e2.exploitability);
    for (size_t j = 0; j < e1.measure.times.size(); ++j)
        CHECK(e1.measure.means[j][0] == e2.measure.means[j][0]);
}

TEST_CASE("common noise: inert channel reproduces the unconditional solution") {
    // sigma0 common channel set to zero: buckets must agree with the
    // no-common solution within Monte Carlo tolerance
    VolchoiceScenario vs;
    vs.vols = {0.6};
    vs.n_drift = 11;
    vs.s0 = 1e-8;  // keep the channel alive for bucketing, dynamically inert
    vs.cv = 0.0;
    vs.cm = 0.4;
    vs.x0 = 0.5;
    auto spec = volchoice_model(vs);
    auto params = small_params(4000, 16);
    params.min_bucket = 100;
    params.max_iter = 8;
    params.tol = 0.01;
    params.hjb.grid = {-3.0, 3.5, 101};
    auto eqc = solve_mfg_common(spec, 1, params);

    auto vs2 = vs;
    vs2.s0 = 0.0;
    auto spec2 = volchoice_model(vs2);
    auto eqn = solve_mfg_no_common(spec2, params, false);

    long total = 0;
    for (const auto& [key, w] : eqc.bucket_weights)
        total += static_cast<long>(std::lround(w * params.n_particles));
    CHECK(total == params.n_particles);
    for (const auto& [key, m] : eqc.bucket_measures) {
        size_t jlast = m.times.size() - 1;
        double nb = eqc.bucket_weights.at(key) * params.n_particles;
        double se = std::sqrt(m.covs[jlast](0, 0) / nb +
                              eqn.measure.covs[jlast](0, 0) / params.n_particles);
        CHECK(std::abs(m.means[jlast][0] - eqn.measure.means[jlast][0]) <= 3.0 * se + 0.01);
    }
}

TEST_CASE("common noise: starvation guard") {
    VolchoiceScenario vs;
    vs.vols = {0.6};
    vs.n_drift = 5;
    vs.s0 = 0.3;
    auto spec = volchoice_model(vs);
    auto params = small_params(100, 16);
    params.min_bucket = 50;  // 4 cells at n = 1 cannot each hold 50 of 100
    CHECK_THROWS_AS(solve_mfg_common(spec, 1, params), BucketStarvation);
}

TEST_CASE("common noise: conditioning separates bucket means with the right sign") {
    VolchoiceScenario vs;
    vs.vols = {0.5};
    vs.n_drift = 15;
    vs.s0 = 0.4;
    vs.cv = 0.0;
    vs.cm = 0.6;
    vs.x0 = 0.0;
    auto spec = volchoice_model(vs);
    auto params = small_params(6000, 16);
    params.min_bucket = 200;
    params.max_iter = 8;
    params.tol = 0.005;
    params.hjb.grid = {-3.0, 3.0, 101};
    auto eq = solve_mfg_common(spec, 1, params);
    // keys at level 1 are (first-increment bin, second-increment bin);
    // up-up buckets must sit above down-down buckets at the horizon
    double up = 0.0, down = 0.0;
    for (const auto& [key, m] : eq.bucket_measures) {
        if (key.codes[0] == 1 && key.codes[1] == 1) up = m.means.back()[0];
        if (key.codes[0] == 0 && key.codes[1] == 0) down = m.means.back()[0];
    }
    CHECK(up > down);
    CHECK(up > 0.0);
    CHECK(down < 0.0);
}

TEST_SUITE_END();
