// SPDX-License-Identifier: MIT
//
// Outer fixed point: damped Picard iteration between the best response and
// the empirical law it induces. Without common noise the state of the
// iteration is one measure summary; with common noise it is one summary per
// cell-path bucket, updated Jacobi-style with the bucket summaries frozen
// one iteration behind. Exploitability and the McKean-Vlasov 2BSDE
// certificate quantify how close the output is to an equilibrium.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfg/bestresponse.hpp"
#include "mfg/errors.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/measures.hpp"
#include "mfg/model.hpp"

namespace mfg {

struct SolverParams {
    int max_iter = 40;
    double beta = 0.5;       // damping
    double tol = 1e-2;       // residual threshold
    int n_particles = 20000;
    int time_steps = 100;
    std::uint64_t seed = 1;
    HjbOptions hjb;
    RegressionBasis basis;
    int bins = 50;           // histogram resolution of measure summaries
    int min_bucket = 50;     // common-noise occupancy floor
};

struct CertificateReport {
    struct LawSeries {
        std::string name;
        std::vector<double> mean_du;  // per-step mean of dU = dY + F dt - Z dX
        std::vector<double> se_du;
        bool supermartingale_ok = false;   // mean <= +3 se at every step
        bool martingale_ok = false;         // |mean| <= 3 se at every step
        double frac_strictly_negative = 0.0;  // steps with mean < -3 se
    };
    std::vector<LawSeries> test_laws;
    LawSeries equilibrium;
    double y0_vs_value_gap = 0.0;
};

enum class MfgMode { NoCommon, Common };

struct EquilibriumResult {
    MfgMode mode = MfgMode::NoCommon;
    int level = 0;  // common-noise discretization order n
    MeasureSummary measure;
    std::map<CellPathIndex, MeasureSummary> bucket_measures;
    std::map<CellPathIndex, double> bucket_weights;
    double y0 = 0.0;
    ValueField value_field;
    FeedbackControl control;
    std::map<CellPathIndex, ValueField> bucket_fields;
    std::map<CellPathIndex, FeedbackControl> bucket_controls;
    std::vector<double> residual_history;
    double exploitability = 0.0;
    double exploitability_se = 0.0;
    std::optional<CertificateReport> certificate;
    bool converged = false;
    SolverParams params;
};

struct McValue {
    double value = 0.0;
    double se = 0.0;
};

// Realized cost of an already-simulated ensemble: running cost at the
// sampled actions plus the terminal cost.
inline McValue rollout_value(const ModelSpec& spec, const ParticleEnsemble& ens,
                             const MeasureHook& measure) {
    const int N = ens.n_particles;
    const int L = ens.n_steps();
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < N; ++i) {
        double c = 0.0;
        for (int j = 0; j < L; ++j) {
            double dt = ens.times[j + 1] - ens.times[j];
            c += dt * spec.running_cost(ens.times[j], ens.state_vec(i, j), measure(i),
                                        ens.action_a(i, j), ens.action_b(i, j));
        }
        c += spec.terminal_cost(ens.state_vec(i, L));
        sum += ens.weights[i] * c;
        sum2 += ens.weights[i] * c * c;
    }
    McValue out;
    out.value = sum;
    out.se = std::sqrt(std::max(0.0, sum2 - sum * sum) / N);
    return out;
}

struct PicardStep {
    MeasureSummary m_next;
    double residual = 0.0;
    double y0 = 0.0;
    ValueField value_field;
    FeedbackControl control;
    std::shared_ptr<ParticleEnsemble> ensemble;
};

// One damped iteration: best response to m_k, simulate its law, blend.
inline PicardStep picard_step(const ModelSpec& spec, const MeasureSummary& m_k, double beta,
                              const SolverParams& params, int iteration) {
    PicardStep out;
    HjbOptions hjb = params.hjb;
    hjb.time_steps = params.time_steps;
    out.value_field = solve_hjb_grid(spec, m_k, hjb);
    out.control = FeedbackControl::from_argmax(out.value_field);
    out.y0 = out.value_field.y_at(0, spec.x0[0]);

    SimOptions opt;
    opt.n_particles = params.n_particles;
    opt.time_steps = params.time_steps;
    opt.seed = params.seed;
    opt.salt = 0x5049 + static_cast<std::uint64_t>(iteration);
    opt.common_noise = spec.noise0_dim > 0 ? CommonNoiseMode::PerParticle : CommonNoiseMode::None;
    out.ensemble = simulate_forward(spec, out.control, m_k, opt);
    MeasureSummary m_star = summarize(out.ensemble, params.bins);
    out.residual = measure_distance(m_k, m_star);
    out.m_next = blend_summaries(m_k, m_star, beta);
    return out;
}

namespace detail {

inline MeasureSummary bootstrap_measure(const ModelSpec& spec, const SolverParams& params) {
    // law of the zero-drift rollout at the first grid actions, started from
    // a point-mass summary
    std::vector<double> ts(params.time_steps + 1);
    for (int j = 0; j <= params.time_steps; ++j)
        ts[j] = spec.horizon * static_cast<double>(j) / params.time_steps;
    MeasureSummary point = MeasureSummary::point_mass(ts, spec.x0);
    SimOptions opt;
    opt.n_particles = params.n_particles;
    opt.time_steps = params.time_steps;
    opt.seed = params.seed;
    opt.salt = 0xB00;
    opt.include_drift = false;
    opt.common_noise = spec.noise0_dim > 0 ? CommonNoiseMode::PerParticle : CommonNoiseMode::None;
    const int ka = spec.drift_actions.size();
    const int kb = spec.diffusion_actions.size();
    auto ctrl = [ka, kb](int, int, const Vector&) { return MixedStrategy::dirac(ka, 0, kb, 0); };
    auto meas = [&point](int) -> const MeasureSummary& { return point; };
    auto ens = simulate_paths(spec, ctrl, meas, opt);
    return summarize(std::shared_ptr<const ParticleEnsemble>(ens), params.bins);
}

}  // namespace detail

// (fresh best-response value against eq.measure) - (Monte Carlo value of
// eq.control against eq.measure); near an equilibrium this vanishes.
inline McValue exploitability(const ModelSpec& spec, const EquilibriumResult& eq, int n_particles,
                              std::uint64_t seed);

inline CertificateReport mkv2bsde_certificate(const ModelSpec& spec, const EquilibriumResult& eq,
                                              const std::vector<DiffusionSelection>& test_laws,
                                              int n_particles, std::uint64_t seed);

inline EquilibriumResult solve_mfg_no_common(const ModelSpec& spec, const SolverParams& params,
                                             bool with_certificate = true) {
    spec.check_structure();
    EquilibriumResult eq;
    eq.mode = MfgMode::NoCommon;
    eq.params = params;

    MeasureSummary m = detail::bootstrap_measure(spec, params);
    for (int it = 0; it < params.max_iter; ++it) {
        auto step = picard_step(spec, m, params.beta, params, it);
        eq.residual_history.push_back(step.residual);
        m = std::move(step.m_next);
        if (step.residual < params.tol) {
            eq.converged = true;
            break;
        }
    }
    eq.measure = std::move(m);

    HjbOptions hjb = params.hjb;
    hjb.time_steps = params.time_steps;
    eq.value_field = solve_hjb_grid(spec, eq.measure, hjb);
    eq.control = FeedbackControl::from_argmax(eq.value_field);
    eq.y0 = eq.value_field.y_at(0, spec.x0[0]);

    auto expl = exploitability(spec, eq, params.n_particles, params.seed ^ 0xE1);
    eq.exploitability = expl.value;
    eq.exploitability_se = expl.se;
    if (with_certificate) {
        std::vector<DiffusionSelection> laws;
        const int kb = spec.diffusion_actions.size();
        for (int b = 0; b < std::min(kb, 3); ++b)
            laws.push_back([b](int, const Vector&) { return b; });
        // the per-step +-3 SE window must sit above the O(dt^2) quadrature
        // term of the discrete dU, which caps the useful sample size
        int cert_n = std::min(params.n_particles, 1000);
        eq.certificate = mkv2bsde_certificate(spec, eq, laws, cert_n, params.seed ^ 0xCE);
    }
    return eq;
}

// ---------------------------------------------------------------------------
// common noise: bucketed iteration at discretization order n
// ---------------------------------------------------------------------------

namespace detail {

struct BucketState {
    CellPartition partition;
    std::vector<double> w0;                    // N * (L+1) * p0 cumulative paths
    std::vector<CellPathIndex> particle_key;   // per particle
    std::map<CellPathIndex, long> counts;
};

inline BucketState prepare_buckets(const ModelSpec& spec, int n, const SolverParams& params) {
    if (spec.noise0_dim < 1) throw ConfigError("common-noise solve requires noise0_dim >= 1");
    BucketState st;
    st.partition = build_partition(n, spec.noise0_dim);
    double cells = std::pow(static_cast<double>(st.partition.codes_per_step()),
                            static_cast<double>(st.partition.dyadic_steps()));
    double expected = static_cast<double>(params.n_particles) / cells;
    if (expected < params.min_bucket)
        throw BucketStarvation("expected bucket occupancy " + std::to_string(expected) +
                                   " below the minimum " + std::to_string(params.min_bucket),
                               "(expected)", static_cast<long>(expected));

    const int N = params.n_particles;
    const int L = params.time_steps;
    const int p0 = spec.noise0_dim;
    const double dt = spec.horizon / L;
    const double sdt = std::sqrt(dt);
    const std::uint64_t seed = rng::mix(params.seed ^ 0xC033);
    st.w0.assign(static_cast<size_t>(N) * (L + 1) * p0, 0.0);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < L; ++j)
            for (int c = 0; c < p0; ++c)
                st.w0[(static_cast<size_t>(i) * (L + 1) + j + 1) * p0 + c] =
                    st.w0[(static_cast<size_t>(i) * (L + 1) + j) * p0 + c] +
                    sdt * rng::gaussian(seed, rng::Purpose::CommonNoise, i, j, c);

    std::vector<double> ts(L + 1);
    for (int j = 0; j <= L; ++j) ts[j] = spec.horizon * static_cast<double>(j) / L;
    st.particle_key.resize(N);
    std::vector<Vector> path(L + 1, Vector(p0));
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j <= L; ++j)
            for (int c = 0; c < p0; ++c)
                path[j][c] = st.w0[(static_cast<size_t>(i) * (L + 1) + j) * p0 + c];
        st.particle_key[i] = cell_path(ts, path, st.partition);
        st.counts[st.particle_key[i]]++;
    }
    for (const auto& [key, count] : st.counts)
        if (count < params.min_bucket)
            throw BucketStarvation("bucket " + key.str() + " has " + std::to_string(count) +
                                       " particles",
                                   key.str(), count);
    return st;
}

}  // namespace detail

// Discretized strong equilibrium of order n: bucket measures keyed by the
// cell path of the common noise, best response per bucket against the
// frozen summary, shared common-noise draws across iterations.
inline EquilibriumResult solve_mfg_common(const ModelSpec& spec, int n, const SolverParams& params) {
    spec.check_structure();
    EquilibriumResult eq;
    eq.mode = MfgMode::Common;
    eq.level = n;
    eq.params = params;

    auto st = detail::prepare_buckets(spec, n, params);
    const int N = params.n_particles;
    HjbOptions hjb = params.hjb;
    hjb.time_steps = params.time_steps;

    // initial bucket summaries from the zero-drift rollout under the same W0
    std::map<CellPathIndex, MeasureSummary> M;
    {
        SimOptions opt;
        opt.n_particles = N;
        opt.time_steps = params.time_steps;
        opt.seed = params.seed;
        opt.salt = 0xB01;
        opt.include_drift = false;
        opt.common_noise = CommonNoiseMode::PerParticle;
        opt.preset_noise0 = &st.w0;
        std::vector<double> ts(params.time_steps + 1);
        for (int j = 0; j <= params.time_steps; ++j)
            ts[j] = spec.horizon * static_cast<double>(j) / params.time_steps;
        MeasureSummary point = MeasureSummary::point_mass(ts, spec.x0);
        const int ka = spec.drift_actions.size();
        const int kb = spec.diffusion_actions.size();
        auto ctrl = [ka, kb](int, int, const Vector&) { return MixedStrategy::dirac(ka, 0, kb, 0); };
        auto meas = [&point](int) -> const MeasureSummary& { return point; };
        auto ens = simulate_paths(spec, ctrl, meas, opt);
        auto bm = conditional_buckets(std::shared_ptr<const ParticleEnsemble>(ens), st.partition);
        for (const auto& [key, bucket] : bm.buckets) M[key] = summarize(bucket, params.bins);
    }

    std::map<CellPathIndex, FeedbackControl> controls;
    for (int it = 0; it < params.max_iter; ++it) {
        controls.clear();
        for (const auto& [key, mk] : M)
            controls[key] = FeedbackControl::from_argmax(solve_hjb_grid(spec, mk, hjb));

        SimOptions opt;
        opt.n_particles = N;
        opt.time_steps = params.time_steps;
        opt.seed = params.seed;
        opt.salt = 0x5050 + static_cast<std::uint64_t>(it);
        opt.common_noise = CommonNoiseMode::PerParticle;
        opt.preset_noise0 = &st.w0;
        auto ctrl = [&](int i, int j, const Vector& x) {
            return controls.at(st.particle_key[i]).at(j, x[0]);
        };
        auto meas = [&](int i) -> const MeasureSummary& { return M.at(st.particle_key[i]); };
        auto ens = simulate_paths(spec, ctrl, meas, opt);

        auto bm = conditional_buckets(std::shared_ptr<const ParticleEnsemble>(ens), st.partition);
        double residual = 0.0;
        std::map<CellPathIndex, MeasureSummary> M_star;
        for (const auto& [key, bucket] : bm.buckets) {
            M_star[key] = summarize(bucket, params.bins);
            double w = static_cast<double>(st.counts.at(key)) / N;
            residual += w * measure_distance(M.at(key), M_star.at(key));
        }
        eq.residual_history.push_back(residual);
        for (auto& [key, mk] : M) mk = blend_summaries(mk, M_star.at(key), params.beta);
        if (residual < params.tol) {
            eq.converged = true;
            break;
        }
    }

    double y0 = 0.0;
    for (const auto& [key, mk] : M) {
        auto vf = solve_hjb_grid(spec, mk, hjb);
        double w = static_cast<double>(st.counts.at(key)) / N;
        y0 += w * vf.y_at(0, spec.x0[0]);
        eq.bucket_controls[key] = FeedbackControl::from_argmax(vf);
        eq.bucket_fields[key] = std::move(vf);
        eq.bucket_weights[key] = w;
    }
    eq.bucket_measures = std::move(M);
    eq.y0 = y0;
    eq.value_field = eq.bucket_fields.begin()->second;
    eq.control = eq.bucket_controls.begin()->second;
    eq.measure = eq.bucket_measures.begin()->second;

    auto expl = exploitability(spec, eq, params.n_particles, params.seed ^ 0xE1);
    eq.exploitability = expl.value;
    eq.exploitability_se = expl.se;
    return eq;
}

// Fresh rollout of a common-noise equilibrium: the W0 paths are re-derived
// from the stored seed (so bucket membership matches the solve), controls
// and measures are the per-bucket frozen ones, and `salt` varies only the
// individual noise.
inline std::shared_ptr<ParticleEnsemble> simulate_common_equilibrium(const ModelSpec& spec,
                                                                     const EquilibriumResult& eq,
                                                                     std::uint64_t salt) {
    auto st = detail::prepare_buckets(spec, eq.level, eq.params);
    SimOptions opt;
    opt.n_particles = eq.params.n_particles;  // tied to the stored W0 draws
    opt.time_steps = eq.params.time_steps;
    opt.seed = eq.params.seed;
    opt.salt = salt;
    opt.common_noise = CommonNoiseMode::PerParticle;
    opt.preset_noise0 = &st.w0;
    auto ctrl = [&](int i, int j, const Vector& x) {
        return eq.bucket_controls.at(st.particle_key[i]).at(j, x[0]);
    };
    auto meas = [&](int i) -> const MeasureSummary& {
        return eq.bucket_measures.at(st.particle_key[i]);
    };
    return simulate_paths(spec, ctrl, meas, opt);
}

inline McValue exploitability(const ModelSpec& spec, const EquilibriumResult& eq, int n_particles,
                              std::uint64_t seed) {
    HjbOptions hjb = eq.params.hjb;
    hjb.time_steps = eq.params.time_steps;

    if (eq.mode == MfgMode::NoCommon) {
        auto vf = solve_hjb_grid(spec, eq.measure, hjb);
        double v_br = vf.y_at(0, spec.x0[0]);
        SimOptions opt;
        opt.n_particles = n_particles;
        opt.time_steps = eq.params.time_steps;
        opt.seed = seed;
        opt.salt = 0xE2;
        opt.common_noise = spec.noise0_dim > 0 ? CommonNoiseMode::PerParticle : CommonNoiseMode::None;
        auto ens = simulate_forward(spec, eq.control, eq.measure, opt);
        auto meas = [&eq](int) -> const MeasureSummary& { return eq.measure; };
        auto mc = rollout_value(spec, *ens, meas);
        return {v_br - mc.value, mc.se};
    }

    // common mode: occupancy-weighted best response minus the rollout with
    // per-bucket controls and frozen bucket summaries under the stored W0
    double v_br = 0.0;
    for (const auto& [key, mk] : eq.bucket_measures) {
        auto vf = solve_hjb_grid(spec, mk, hjb);
        v_br += eq.bucket_weights.at(key) * vf.y_at(0, spec.x0[0]);
    }
    auto st = detail::prepare_buckets(spec, eq.level, eq.params);
    auto ens = simulate_common_equilibrium(spec, eq, seed ^ 0xE2);
    auto meas = [&](int i) -> const MeasureSummary& {
        return eq.bucket_measures.at(st.particle_key[i]);
    };
    auto mc = rollout_value(spec, *ens, meas);
    return {v_br - mc.value, mc.se};
}

// Per-path increments dU = dY + F(X, Z, sigma-hat^2, m) dt - Z dX evaluated
// on the equilibrium value field: supermartingale under every zero-drift
// test law, martingale under the equilibrium law.
inline CertificateReport mkv2bsde_certificate(const ModelSpec& spec, const EquilibriumResult& eq,
                                              const std::vector<DiffusionSelection>& test_laws,
                                              int n_particles, std::uint64_t seed) {
    if (eq.mode != MfgMode::NoCommon)
        throw ConfigError("the 2BSDE certificate is defined for the no-common-noise mode");
    CertificateReport rep;
    const auto& vf = eq.value_field;
    const int L = static_cast<int>(vf.times.size()) - 1;

    auto du_series = [&](const ParticleEnsemble& ens, CertificateReport::LawSeries& out) {
        const int N = ens.n_particles;
        out.mean_du.assign(L, 0.0);
        out.se_du.assign(L, 0.0);
        std::vector<double> du(static_cast<size_t>(N));
        for (int j = 0; j < L; ++j) {
            const double t = ens.times[j];
            const double dt = ens.times[j + 1] - ens.times[j];
            parallel_for(N, [&](long pi) {
                const int i = static_cast<int>(pi);
                double x = ens.state(i, j, 0);
                double xn = ens.state(i, j + 1, 0);
                double yj = vf.y_at(j, x);
                double yn = vf.y_at(j + 1, xn);
                double zj = vf.z_at(j, x);
                double f = driver_F(spec, t, {x}, {zj}, ens.cov_mat(i, j), eq.measure).value;
                du[static_cast<size_t>(i)] = yn - yj + f * dt - zj * (xn - x);
            });
            double m1 = 0.0, m2 = 0.0;
            for (int i = 0; i < N; ++i) {
                m1 += du[static_cast<size_t>(i)];
                m2 += du[static_cast<size_t>(i)] * du[static_cast<size_t>(i)];
            }
            m1 /= N;
            m2 = m2 / N - m1 * m1;
            out.mean_du[j] = m1;
            out.se_du[j] = std::sqrt(std::max(0.0, m2) / N);
        }
        out.supermartingale_ok = true;
        out.martingale_ok = true;
        int strict = 0;
        for (int j = 0; j < L; ++j) {
            if (out.mean_du[j] > 3.0 * out.se_du[j]) out.supermartingale_ok = false;
            if (std::abs(out.mean_du[j]) > 3.0 * out.se_du[j]) out.martingale_ok = false;
            if (out.mean_du[j] < -3.0 * out.se_du[j]) ++strict;
        }
        out.frac_strictly_negative = static_cast<double>(strict) / L;
    };

    const int ka = spec.drift_actions.size();
    const int kb = spec.diffusion_actions.size();
    for (size_t k = 0; k < test_laws.size(); ++k) {
        SimOptions opt;
        opt.n_particles = n_particles;
        opt.time_steps = L;
        opt.seed = seed;
        opt.salt = 0xCE00 + k;
        opt.include_drift = false;
        const auto& sel = test_laws[k];
        auto ctrl = [&](int, int j, const Vector& x) {
            return MixedStrategy::dirac(ka, 0, kb, sel(j, x));
        };
        auto meas = [&eq](int) -> const MeasureSummary& { return eq.measure; };
        auto ens = simulate_paths(spec, ctrl, meas, opt);
        CertificateReport::LawSeries series;
        series.name = "test_law_" + std::to_string(k);
        du_series(*ens, series);
        rep.test_laws.push_back(std::move(series));
    }

    SimOptions opt;
    opt.n_particles = n_particles;
    opt.time_steps = L;
    opt.seed = seed;
    opt.salt = 0xCEEE;
    auto ens = simulate_forward(spec, eq.control, eq.measure, opt);
    rep.equilibrium.name = "equilibrium";
    du_series(*ens, rep.equilibrium);
    auto meas = [&eq](int) -> const MeasureSummary& { return eq.measure; };
    auto mc = rollout_value(spec, *ens, meas);
    rep.y0_vs_value_gap = std::abs(eq.y0 - mc.value);
    return rep;
}

}  // namespace mfg
