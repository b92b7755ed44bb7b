// SPDX-License-Identifier: MIT
#include <doctest.h>

#include <cmath>

#include "mfg/bench.hpp"
#include "mfg/hamiltonian.hpp"
#include "support.hpp"

using namespace mfg;
using mfg::testing::table_model;
using mfg::testing::random_instance;

namespace {
const MeasureSummary kNoMeasure{};
}

TEST_SUITE_BEGIN("hamiltonian");

TEST_CASE("H of a constant cost is the cost for any strategy") {
    auto tm = table_model(1, 1, {{0.0}, {0.0}}, {Matrix(1, 1), Matrix(1, 1)},
                          {3.25, 3.25, 3.25, 3.25});
    MixedStrategy q;
    q.qa = {0.7, 0.3};
    q.qb = {0.2, 0.8};
    CHECK(hamiltonian_H(tm.spec, 0.0, {0.0}, {0.0}, kNoMeasure, q) == doctest::Approx(3.25));
}

TEST_CASE("H at a Dirac strategy is the pointwise payoff") {
    auto inst = random_instance(11, 0);
    const auto& spec = inst.model.spec;
    int a = spec.drift_actions.size() - 1, b = 0;
    auto q = MixedStrategy::dirac(spec.drift_actions.size(), a, spec.diffusion_actions.size(), b);
    auto pt = eval_coefficients(spec, 0.0, spec.x0, kNoMeasure, a, b);
    double expect = pt.cost + dot(inst.z, pt.drift);
    CHECK(hamiltonian_H(spec, 0.0, spec.x0, inst.z, kNoMeasure, q) == doctest::Approx(expect));
}

TEST_CASE("H of the 2x2 drift table [[1,2],[3,4]] under uniform mixing is 2.5") {
    // sigma(b) lambda(a) realizes the table with p = 2 factor channels
    Matrix s0(1, 2), s1(1, 2);
    s0(0, 0) = 1.0; s0(0, 1) = 3.0;
    s1(0, 0) = 2.0; s1(0, 1) = 4.0;
    auto tm = table_model(1, 2, {{1.0, 0.0}, {0.0, 1.0}}, {s0, s1}, {0, 0, 0, 0});
    MixedStrategy q;
    q.qa = {0.5, 0.5};
    q.qb = {0.5, 0.5};
    CHECK(hamiltonian_H(tm.spec, 0.0, {0.0}, {1.0}, kNoMeasure, q) == doctest::Approx(2.5));
}

TEST_CASE("sigma hull feasibility in d=1 with covariances {1, 4}") {
    Matrix s0(1, 1), s1(1, 1);
    s0(0, 0) = 1.0;
    s1(0, 0) = 2.0;
    auto tm = table_model(1, 1, {{0.0}}, {s0, s1}, {0.0, 0.0});
    Matrix target(1, 1);
    SUBCASE("interior point 2.5 mixes half and half") {
        target(0, 0) = 2.5;
        auto res = sigma_hull_feasible(tm.spec, 0.0, {0.0}, kNoMeasure, target);
        CHECK(res.feasible);
        CHECK(res.qb[0] == doctest::Approx(0.5).epsilon(1e-8));
        CHECK(res.qb[1] == doctest::Approx(0.5).epsilon(1e-8));
        CHECK(res.gap <= 1e-8);
    }
    SUBCASE("vertex is feasible with a Dirac witness") {
        target(0, 0) = 1.0;
        auto res = sigma_hull_feasible(tm.spec, 0.0, {0.0}, kNoMeasure, target);
        CHECK(res.feasible);
        CHECK(res.qb[0] == doctest::Approx(1.0).epsilon(1e-8));
    }
    SUBCASE("5 is outside the hull [1,4] at gap 1") {
        target(0, 0) = 5.0;
        auto res = sigma_hull_feasible(tm.spec, 0.0, {0.0}, kNoMeasure, target);
        CHECK_FALSE(res.feasible);
        CHECK(res.gap == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("driver on singleton grids is the pointwise payoff") {
    Matrix s(1, 1);
    s(0, 0) = 1.5;
    auto tm = table_model(1, 1, {{0.8}}, {s}, {0.3});
    Matrix target(1, 1);
    target(0, 0) = 2.25;
    auto ev = driver_F(tm.spec, 0.0, {0.0}, {2.0}, target, kNoMeasure);
    CHECK(ev.value == doctest::Approx(0.3 + 2.0 * 1.5 * 0.8));
    CHECK(ev.strategy.qa[0] == 1.0);
    CHECK(ev.strategy.qb[0] == doctest::Approx(1.0));
    CHECK(ev.feasibility_gap <= 1e-8);
}

TEST_CASE("driver with a binding covariance constraint forces the high volatility") {
    // lambda(a) = a on {-1, 1}, sigma(b) = b on {1, 2}, Sigma = 4, z = 1
    Matrix s0(1, 1), s1(1, 1);
    s0(0, 0) = 1.0;
    s1(0, 0) = 2.0;
    auto tm = table_model(1, 1, {{-1.0}, {1.0}}, {s0, s1}, {0, 0, 0, 0});
    Matrix target(1, 1);
    target(0, 0) = 4.0;
    auto ev = driver_F(tm.spec, 0.0, {0.0}, {1.0}, target, kNoMeasure);
    CHECK(ev.value == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(ev.strategy.qa[1] == 1.0);
    CHECK(ev.strategy.qb[1] == doctest::Approx(1.0).epsilon(1e-9));
    SUBCASE("infeasible Sigma throws") {
        target(0, 0) = 9.0;
        CHECK_THROWS_AS(driver_F(tm.spec, 0.0, {0.0}, {1.0}, target, kNoMeasure), InfeasibleSigma);
    }
}

TEST_CASE("driver matches the brute-force oracle on random instances") {
    for (std::uint64_t k = 0; k < 40; ++k) {
        auto inst = random_instance(2024, k);
        const auto& spec = inst.model.spec;
        auto ev = driver_F(spec, 0.0, spec.x0, inst.z, inst.sigma, kNoMeasure);
        double bf = bench::brute_force_F(spec, 0.0, spec.x0, inst.z, inst.sigma, kNoMeasure, 40);
        CHECK(std::abs(ev.value - bf) <= 1e-3);
        CHECK(bf <= ev.value + 1e-9);
        // selector optimality: H(q-hat) = F and the mix matches Sigma
        double h = hamiltonian_H(spec, 0.0, spec.x0, inst.z, kNoMeasure, ev.strategy);
        CHECK(std::abs(h - ev.value) <= 1e-10);
        CHECK(ev.feasibility_gap <= 1e-8);
    }
}

TEST_CASE("F dominates H at any feasible strategy") {
    for (std::uint64_t k = 0; k < 25; ++k) {
        auto inst = random_instance(77, k);
        const auto& spec = inst.model.spec;
        const int ka = spec.drift_actions.size(), kb = spec.diffusion_actions.size();
        MixedStrategy q;
        q.qa.resize(ka);
        q.qb = inst.hull_weights;  // feasible for inst.sigma by construction
        double tot = 0.0;
        for (int a = 0; a < ka; ++a) {
            q.qa[a] = 0.05 + rng::uniform(5, rng::Purpose::Probe, k, a, 0);
            tot += q.qa[a];
        }
        for (double& v : q.qa) v /= tot;
        double h = hamiltonian_H(spec, 0.0, spec.x0, inst.z, kNoMeasure, q);
        double f = driver_F(spec, 0.0, spec.x0, inst.z, inst.sigma, kNoMeasure).value;
        CHECK(f >= h - 1e-10);
    }
}

TEST_CASE("F is convex in z") {
    for (std::uint64_t k = 0; k < 25; ++k) {
        auto inst = random_instance(99, k);
        const auto& spec = inst.model.spec;
        const int d = spec.dim_state;
        Vector z1(d), z2(d);
        for (int c = 0; c < d; ++c) {
            z1[c] = 4.0 * rng::uniform(6, rng::Purpose::Probe, k, c, 0) - 2.0;
            z2[c] = 4.0 * rng::uniform(6, rng::Purpose::Probe, k, c, 1) - 2.0;
        }
        double theta = rng::uniform(6, rng::Purpose::Probe, k, 0, 2);
        Vector zm(d);
        for (int c = 0; c < d; ++c) zm[c] = theta * z1[c] + (1.0 - theta) * z2[c];
        double f1 = driver_F(spec, 0.0, spec.x0, z1, inst.sigma, kNoMeasure).value;
        double f2 = driver_F(spec, 0.0, spec.x0, z2, inst.sigma, kNoMeasure).value;
        double fm = driver_F(spec, 0.0, spec.x0, zm, inst.sigma, kNoMeasure).value;
        CHECK(fm <= theta * f1 + (1.0 - theta) * f2 + 1e-10);
    }
}

TEST_CASE("selector is deterministic, ties break to the smallest index") {
    // two drift actions with identical payoffs
    Matrix s(1, 1);
    s(0, 0) = 1.0;
    auto tm = table_model(1, 1, {{0.5}, {0.5}}, {s}, {1.0, 1.0});
    Matrix target(1, 1);
    target(0, 0) = 1.0;
    auto e1 = driver_F(tm.spec, 0.0, {0.0}, {1.0}, target, kNoMeasure);
    auto e2 = driver_F(tm.spec, 0.0, {0.0}, {1.0}, target, kNoMeasure);
    CHECK(e1.strategy.qa == e2.strategy.qa);
    CHECK(e1.strategy.qb == e2.strategy.qb);
    CHECK(e1.strategy.qa[0] == 1.0);
}

TEST_CASE("lipschitz probe") {
    SUBCASE("affine model: ratio equals |sigma lambda| exactly") {
        Matrix s(1, 1);
        s(0, 0) = 1.5;
        auto tm = table_model(1, 1, {{0.8}}, {s}, {0.0});
        Matrix target(1, 1);
        target(0, 0) = 2.25;
        double r = lipschitz_probe_F(tm.spec, 0.0, {0.0}, target, kNoMeasure, {1.0}, {3.0});
        CHECK(r == doctest::Approx(1.2).epsilon(1e-12));
    }
    SUBCASE("cost-only model: F independent of z") {
        Matrix s(1, 1);
        s(0, 0) = 1.0;
        auto tm = table_model(1, 1, {{0.0}}, {s}, {0.7});
        Matrix target(1, 1);
        target(0, 0) = 1.0;
        double r = lipschitz_probe_F(tm.spec, 0.0, {0.0}, target, kNoMeasure, {1.0}, {-2.0});
        CHECK(r == doctest::Approx(0.0));
    }
    SUBCASE("random probes stay below the drift sup bound") {
        for (std::uint64_t k = 0; k < 10; ++k) {
            auto inst = random_instance(55, k);
            const auto& spec = inst.model.spec;
            double bound = 0.0;
            for (int a = 0; a < spec.drift_actions.size(); ++a)
                for (int b = 0; b < spec.diffusion_actions.size(); ++b) {
                    auto pt = eval_coefficients(spec, 0.0, spec.x0, kNoMeasure, a, b);
                    bound = std::max(bound, norm2(pt.drift));
                }
            for (int probe = 0; probe < 20; ++probe) {
                Vector z1(spec.dim_state), z2(spec.dim_state);
                for (int c = 0; c < spec.dim_state; ++c) {
                    z1[c] = 6.0 * rng::uniform(7, rng::Purpose::Probe, k, probe, c) - 3.0;
                    z2[c] = 6.0 * rng::uniform(8, rng::Purpose::Probe, k, probe, c) - 3.0;
                }
                if (z1 == z2) continue;
                double r = lipschitz_probe_F(spec, 0.0, spec.x0, inst.sigma, kNoMeasure, z1, z2);
                CHECK(r <= bound + 1e-9);
            }
        }
    }
}

TEST_CASE("scaling sigma by 2 scales the feasible hull by 4") {
    Matrix s0(1, 1), s1(1, 1);
    s0(0, 0) = 1.0;
    s1(0, 0) = 2.0;
    auto base = table_model(1, 1, {{0.0}}, {s0, s1}, {0.0, 0.0});
    Matrix s0c(1, 1), s1c(1, 1);
    s0c(0, 0) = 2.0;
    s1c(0, 0) = 4.0;
    auto scaled = table_model(1, 1, {{0.0}}, {s0c, s1c}, {0.0, 0.0});
    for (double v : {0.5, 1.0, 2.5, 4.0, 5.0}) {
        Matrix t1(1, 1), t4(1, 1);
        t1(0, 0) = v;
        t4(0, 0) = 4.0 * v;
        auto r1 = sigma_hull_feasible(base.spec, 0.0, {0.0}, kNoMeasure, t1);
        auto r4 = sigma_hull_feasible(scaled.spec, 0.0, {0.0}, kNoMeasure, t4);
        CHECK(r1.feasible == r4.feasible);
    }
}

TEST_SUITE_END();
