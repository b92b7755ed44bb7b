// SPDX-License-Identifier: MIT
//
// Command-line entry point: scenario loading, subcommand dispatch, output
// persistence. Exit codes: 0 success, 2 solver finished without reaching
// the residual tolerance (partial outputs written), 1 any other error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfg/bench.hpp"
#include "mfg/equilibrium.hpp"
#include "mfg/io.hpp"
#include "mfg/parallel.hpp"
#include "mfg/scenario.hpp"

namespace {

using namespace mfg;

struct CommonOpts {
    std::string config;
    std::string out;
    std::int64_t seed = -1;
    bool quiet = false;
    int threads = 1;
};

ScenarioConfig load_with_overrides(const CommonOpts& o) {
    auto cfg = load_scenario(o.config);
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.out.empty()) cfg.outputs = o.out;
    return cfg;
}

void say(const CommonOpts& o, const std::string& line) {
    if (!o.quiet) std::cout << line << "\n";
}

nlohmann::json validation_json(const ValidationReport& rep) {
    nlohmann::json j;
    j["probes"] = rep.probes;
    j["clean"] = rep.clean();
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& s : rep.stats) {
        nlohmann::json e;
        e["name"] = s.name;
        e["max_abs"] = s.max_abs;
        e["bound"] = s.bound;
        e["exceeded"] = s.exceeded;
        stats.push_back(std::move(e));
    }
    j["stats"] = std::move(stats);
    nlohmann::json viols = nlohmann::json::array();
    for (const auto& v : rep.violations) {
        nlohmann::json e;
        e["kind"] = v.kind;
        e["name"] = v.name;
        e["value"] = v.value;
        e["bound"] = v.bound;
        e["location"] = v.location;
        viols.push_back(std::move(e));
    }
    j["violations"] = std::move(viols);
    return j;
}

int cmd_validate(const CommonOpts& o) {
    auto cfg = load_with_overrides(o);
    auto rep = validate_model(cfg.model, 512, cfg.seed);
    std::filesystem::create_directories(cfg.outputs);
    io::write_file(std::filesystem::path(cfg.outputs) / "validation_report.json",
                   validation_json(rep).dump(2) + "\n");
    say(o, std::string("validation ") + (rep.clean() ? "clean" : "found violations") + ", report in " +
               cfg.outputs + "/validation_report.json");
    if (!rep.clean()) {
        for (const auto& v : rep.violations)
            std::cerr << v.kind << " " << v.name << " value=" << v.value << " bound=" << v.bound
                      << " at " << v.location << "\n";
        return 1;
    }
    return 0;
}

int cmd_solve(const CommonOpts& o) {
    auto cfg = load_with_overrides(o);
    auto params = cfg.to_params();
    EquilibriumResult eq;
    if (cfg.common_noise_level) {
        say(o, "solving with common noise at level " + std::to_string(*cfg.common_noise_level));
        eq = solve_mfg_common(cfg.model, *cfg.common_noise_level, params);
    } else {
        say(o, "solving without common noise");
        eq = solve_mfg_no_common(cfg.model, params);
    }
    io::write_result_dir(cfg.outputs, eq);
    say(o, "y0 = " + std::to_string(eq.y0) + ", exploitability = " +
               std::to_string(eq.exploitability) + " (se " + std::to_string(eq.exploitability_se) +
               "), residual iterations = " + std::to_string(eq.residual_history.size()));
    say(o, "outputs in " + cfg.outputs);
    if (!eq.converged) {
        std::cerr << "did not reach tol " << params.tol << "; best residual "
                  << (eq.residual_history.empty() ? 0.0 : eq.residual_history.back()) << "\n";
        return 2;
    }
    return 0;
}

int cmd_best_response(const CommonOpts& o, const std::string& mode) {
    auto cfg = load_with_overrides(o);
    auto params = cfg.to_params();
    // frozen measure: the law of the zero-drift rollout at the first actions
    auto m = detail::bootstrap_measure(cfg.model, params);
    std::filesystem::create_directories(cfg.outputs);
    nlohmann::json j;
    j["mode"] = mode;
    if (mode == "hjb") {
        HjbOptions hjb = params.hjb;
        hjb.time_steps = params.time_steps;
        auto vf = solve_hjb_grid(cfg.model, m, hjb);
        j["y0"] = vf.y_at(0, cfg.model.x0[0]);
        io::write_file(std::filesystem::path(cfg.outputs) / "value_field.csv",
                       io::value_field_csv(vf));
    } else if (mode == "regression") {
        std::vector<DiffusionSelection> family;
        for (int b = 0; b < cfg.model.diffusion_actions.size(); ++b)
            family.push_back([b](int, const Vector&) { return b; });
        auto sup = sup_over_measures(cfg.model, m, family, params.n_particles, params.seed,
                                     params.basis, params.time_steps);
        j["y0"] = sup.y0_sup;
        j["member_y0"] = sup.member_y0;
        j["argmax_member"] = sup.argmax;
    } else {
        throw ConfigError("best-response mode must be hjb or regression");
    }
    io::write_file(std::filesystem::path(cfg.outputs) / "best_response.json", j.dump(2) + "\n");
    say(o, "y0 = " + std::to_string(j["y0"].get<double>()) + ", outputs in " + cfg.outputs);
    return 0;
}

int cmd_hamiltonian_check(const CommonOpts& o, double t, const std::vector<double>& xv,
                          const std::vector<double>& zv, const std::vector<double>& sv) {
    auto cfg = load_with_overrides(o);
    const int d = cfg.model.dim_state;
    Vector x = xv.empty() ? cfg.model.x0 : Vector(xv);
    Vector z = zv;
    if (static_cast<int>(z.size()) != d) throw ConfigError("--z needs dim_state entries");
    Matrix sigma(d, d);
    if (static_cast<int>(sv.size()) == 1 && d == 1) {
        sigma(0, 0) = sv[0];
    } else if (static_cast<int>(sv.size()) == d * d) {
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) sigma(r, c) = sv[static_cast<size_t>(r) * d + c];
    } else {
        throw ConfigError("--sigma needs 1 (d=1) or d*d entries");
    }
    MeasureSummary none;
    nlohmann::json j;
    try {
        auto ev = driver_F(cfg.model, t, x, z, sigma, none);
        j["F"] = ev.value;
        j["qa"] = ev.strategy.qa;
        j["qb"] = ev.strategy.qb;
        j["gap"] = ev.feasibility_gap;
        j["feasible"] = true;
    } catch (const InfeasibleSigma& e) {
        auto res = sigma_hull_feasible(cfg.model, t, x, none, sigma);
        j["feasible"] = false;
        j["gap"] = res.gap;
        j["closest_qb"] = res.qb;
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_benchmark(const CommonOpts&) {
    int failures = 0;
    auto row = [&](const std::string& name, bool ok, const std::string& detail) {
        std::printf("%-34s %s  %s\n", name.c_str(), ok ? "PASS" : "FAIL", detail.c_str());
        if (!ok) ++failures;
    };

    {
        bench::LQParams p;
        p.q = 1.0; p.r = 1.0; p.g = 0.5; p.kappa = 0.0; p.sigma0 = 0.7; p.x0 = 1.0;
        bool ok = true;
        std::string detail;
        try {
            auto ref = bench::lq_riccati_reference(p, 400);
            double exact = std::tanh(1.0 + std::atanh(p.g));
            double err = std::abs(ref.P[0] - exact);
            ok = err < 1e-7;
            detail = "P(0) error " + std::to_string(err);
        } catch (const Error& e) {
            ok = false;
            detail = e.what();
        }
        row("riccati tanh closed form", ok, detail);
    }
    {
        bench::LQParams p;
        p.q = 1.0; p.r = 1.0; p.kappa = 0.5;
        p.g = std::sqrt(p.q * (1.0 - p.kappa) * p.r);
        p.sigma0 = 0.5; p.x0 = 1.0;
        auto ref = bench::lq_riccati_reference(p, 400);
        double worst = 0.0;
        for (size_t j = 0; j < ref.ts.size(); j += 13)
            worst = std::max(worst,
                             std::abs(ref.mean[j] - p.x0 * std::exp(-p.g * ref.ts[j] / p.r)));
        row("riccati constant-gain mean path", worst < 1e-6, "sup error " + std::to_string(worst));
    }
    {
        // driver against the brute-force oracle on random instances
        double worst = 0.0;
        bool from_below = true;
        MeasureSummary none;
        for (std::uint64_t k = 0; k < 50; ++k) {
            auto inst = mfg::bench::random_instance(4242, k);
            const auto& spec = inst.model.spec;
            auto ev = driver_F(spec, 0.0, spec.x0, inst.z, inst.sigma, none);
            double bf = bench::brute_force_F(spec, 0.0, spec.x0, inst.z, inst.sigma, none, 40);
            worst = std::max(worst, std::abs(ev.value - bf));
            if (bf > ev.value + 1e-9) from_below = false;
        }
        row("driver vs brute force (50 cases)", worst <= 1e-3 && from_below,
            "max gap " + std::to_string(worst));
    }
    {
        MeasureSummary none;
        bool ok = true;
        for (std::uint64_t k = 0; k < 10 && ok; ++k) {
            auto inst = mfg::bench::random_instance(777, k);
            const auto& spec = inst.model.spec;
            double bound = 0.0;
            for (int a = 0; a < spec.drift_actions.size(); ++a)
                for (int b = 0; b < spec.diffusion_actions.size(); ++b) {
                    auto pt = eval_coefficients(spec, 0.0, spec.x0, none, a, b);
                    bound = std::max(bound, norm2(pt.drift));
                }
            for (int probe = 0; probe < 40 && ok; ++probe) {
                Vector z1(spec.dim_state), z2(spec.dim_state);
                for (int c = 0; c < spec.dim_state; ++c) {
                    z1[c] = 6.0 * rng::uniform(12, rng::Purpose::Probe, k, probe, c) - 3.0;
                    z2[c] = 6.0 * rng::uniform(13, rng::Purpose::Probe, k, probe, c) - 3.0;
                }
                if (z1 == z2) continue;
                ok = lipschitz_probe_F(spec, 0.0, spec.x0, inst.sigma, none, z1, z2) <=
                     bound + 1e-9;
            }
        }
        row("driver Lipschitz in z", ok, "400 probes");
    }
    {
        Matrix s(1, 1);
        s(0, 0) = 0.8;
        auto tm = mfg::bench::table_model(1, 1, {{0.0}}, {s}, {0.0});
        tm.spec.x0 = {0.4};
        tm.spec.terminal_cost = [](const Vector& x) { return x[0] * x[0]; };
        auto est = bench::uncontrolled_reference(tm.spec, 40000, 3);
        double expect = 0.4 * 0.4 + 0.8 * 0.8;
        bool ok = std::abs(est.y0 - expect) <= 3.0 * est.se;
        row("uncontrolled Monte Carlo moment", ok,
            "err " + std::to_string(std::abs(est.y0 - expect)) + " vs 3se " +
                std::to_string(3.0 * est.se));
    }
    std::printf("%d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mean field game solver with controlled volatility"};
    app.require_subcommand(1);

    CommonOpts o;
    if (const char* env = std::getenv("MFG_THREADS")) o.threads = std::atoi(env);

    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* copt = sub->add_option("--config", o.config, "scenario JSON file");
        if (needs_config) copt->required();
        sub->add_option("--out", o.out, "output directory override");
        sub->add_option("--seed", o.seed, "seed override");
        sub->add_flag("--quiet", o.quiet, "suppress progress lines");
        sub->add_option("--threads", o.threads, "worker threads (0 = auto)");
    };

    auto* validate = app.add_subcommand("validate", "probe the model against its declared bounds");
    add_common(validate);

    auto* solve = app.add_subcommand("solve-mfg", "run the equilibrium fixed point");
    add_common(solve);

    std::string br_mode = "hjb";
    auto* br = app.add_subcommand("best-response", "solve the frozen-measure control problem");
    add_common(br);
    br->add_option("--mode", br_mode, "hjb | regression");

    double hc_t = 0.0;
    std::vector<double> hc_x, hc_z, hc_sigma;
    auto* hc = app.add_subcommand("hamiltonian-check", "evaluate the driver F at one point");
    add_common(hc);
    hc->add_option("--t", hc_t, "time");
    hc->add_option("--x", hc_x, "state (defaults to x0)");
    hc->add_option("--z", hc_z, "gradient z")->required();
    hc->add_option("--sigma", hc_sigma, "target covariance (scalar or row-major d*d)")->required();

    auto* bench_cmd = app.add_subcommand("benchmark", "run the oracle suite");
    add_common(bench_cmd, false);

    CLI11_PARSE(app, argc, argv);
    mfg::set_threads(o.threads);

    try {
        if (validate->parsed()) return cmd_validate(o);
        if (solve->parsed()) return cmd_solve(o);
        if (br->parsed()) return cmd_best_response(o, br_mode);
        if (hc->parsed()) return cmd_hamiltonian_check(o, hc_t, hc_x, hc_z, hc_sigma);
        if (bench_cmd->parsed()) return cmd_benchmark(o);
    } catch (const mfg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
