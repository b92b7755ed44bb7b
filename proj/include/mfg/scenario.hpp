// SPDX-License-Identifier: MIT
//
// Scenario loading: builtin named models ("lq", "volchoice"), an
// expression-table model with polynomial state/measure terms per action
// index, and the strict JSON config schema consumed by the CLI. Unknown
// keys are rejected; physical parameters have no defaults.
#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfg/equilibrium.hpp"
#include "mfg/errors.hpp"
#include "mfg/model.hpp"

namespace mfg {

// ---------------------------------------------------------------------------
// builtin: linear-quadratic mean field game
// ---------------------------------------------------------------------------

struct LqScenario {
    double q = 1.0;
    double r = 1.0;
    double g = 0.5;
    double kappa = 0.5;      // mean-coupling weight in the tracking cost
    double sigma0 = 0.5;
    double sigma_alt = 0.0;  // optional second volatility, kept off-equilibrium
    double alt_penalty = 1.0;
    double x0 = 1.0;
    double horizon = 1.0;
    double amax = 3.0;
    int n_actions = 41;
};

// Maximization form of the scalar LQ game: drift = action, volatility
// sigma0, reward -(q/2)(x - kappa mean)^2 - (r/2)a^2, terminal -(g/2)x^2.
// When sigma_alt > 0 a second diffusion action exists but carries a flat
// cost penalty and the value is concave, so the equilibrium stays on
// sigma0 while volatility misspecification remains expressible for
// certificate test laws. The drift rides a dedicated factor channel so its
// range does not scale with the volatility choice.
inline ModelSpec lq_model(const LqScenario& p) {
    ModelSpec s;
    s.dim_state = 1;
    const bool two_vol = p.sigma_alt > 0.0;
    s.noise_dim = two_vol ? 2 : 1;
    s.horizon = p.horizon;
    s.x0 = {p.x0};
    Vector acts(p.n_actions);
    for (int i = 0; i < p.n_actions; ++i)
        acts[i] = -p.amax + 2.0 * p.amax * i / (p.n_actions - 1);
    s.drift_actions = ActionGrid::scalars(acts);
    Vector vols = {p.sigma0};
    if (two_vol) vols.push_back(p.sigma_alt);
    s.diffusion_actions = ActionGrid::scalars(vols);
    const double s0 = p.sigma0;
    constexpr double kDriftChannel = 1e-6;
    if (two_vol) {
        s.drift_factor = [acts](double, const Vector&, const MeasureSummary&, int a) {
            return Vector{0.0, acts[a] / kDriftChannel};
        };
        s.diffusion = [vols](double, const Vector&, const MeasureSummary&, int b) {
            Matrix m(1, 2);
            m(0, 0) = vols[b];
            m(0, 1) = kDriftChannel;
            return m;
        };
    } else {
        s.drift_factor = [acts, s0](double, const Vector&, const MeasureSummary&, int a) {
            return Vector{acts[a] / s0};
        };
        s.diffusion = [vols](double, const Vector&, const MeasureSummary&, int b) {
            Matrix m(1, 1);
            m(0, 0) = vols[b];
            return m;
        };
    }
    const double q = p.q, r = p.r, kap = p.kappa, pen = p.alt_penalty;
    s.running_cost = [acts, q, r, kap, pen](double t, const Vector& x, const MeasureSummary& m,
                                            int a, int b) {
        double target = kap * (m.empty() ? 0.0 : m.mean_at(t, 0));
        double dx = x[0] - target;
        return -(0.5 * q * dx * dx + 0.5 * r * acts[a] * acts[a]) - (b > 0 ? pen : 0.0);
    };
    const double g = p.g;
    s.terminal_cost = [g](const Vector& x) { return -0.5 * g * x[0] * x[0]; };
    double fb = 0.5 * q * 9.0 * (1 + kap) * (1 + kap) + 0.5 * r * p.amax * p.amax + pen;
    double lsup = two_vol ? p.amax / kDriftChannel : p.amax / s0;
    s.bounds = {lsup + 1.0, std::max(p.sigma0, p.sigma_alt), fb, 0.5 * g * 4.0, 0.0};
    return s;
}

// ---------------------------------------------------------------------------
// builtin: drift grid x volatility grid with congestion cost
// ---------------------------------------------------------------------------

struct VolchoiceScenario {
    double amax = 2.0;
    int n_drift = 21;
    Vector vols = {0.5, 1.0};
    double s0 = 0.3;        // common-noise volatility; 0 disables the channel
    double ra = 1.0;        // drift effort cost
    double cv = 0.5;        // congestion weight on the crowd variance
    double cm = 0.5;        // anchor weight toward the crowd mean
    double cb = 0.0;        // direct volatility reward
    double x0 = 0.0;
    double horizon = 1.0;
};

inline ModelSpec volchoice_model(const VolchoiceScenario& p) {
    ModelSpec s;
    s.dim_state = 1;
    const bool common = p.s0 > 0.0;
    s.noise_dim = common ? 2 : 1;
    s.noise0_dim = common ? 1 : 0;
    s.horizon = p.horizon;
    s.x0 = {p.x0};
    Vector acts(p.n_drift);
    for (int i = 0; i < p.n_drift; ++i)
        acts[i] = -p.amax + 2.0 * p.amax * i / (p.n_drift - 1);
    s.drift_actions = ActionGrid::scalars(acts);
    s.diffusion_actions = ActionGrid::scalars(p.vols);
    s.drift_factor = [acts](double, const Vector&, const MeasureSummary&, int a) {
        return Vector{acts[a], 0.0};
    };
    Vector vols = p.vols;
    double s0 = p.s0;
    if (common) {
        s.diffusion = [vols, s0](double, const Vector&, const MeasureSummary&, int b) {
            Matrix m(1, 2);
            m(0, 0) = vols[b];
            m(0, 1) = s0;
            return m;
        };
    } else {
        s.drift_factor = [acts](double, const Vector&, const MeasureSummary&, int a) {
            return Vector{acts[a]};
        };
        s.diffusion = [vols](double, const Vector&, const MeasureSummary&, int b) {
            Matrix m(1, 1);
            m(0, 0) = vols[b];
            return m;
        };
    }
    const double ra = p.ra, cv = p.cv, cm = p.cm, cb = p.cb;
    s.running_cost = [acts, vols, ra, cv, cm, cb](double t, const Vector& x,
                                                  const MeasureSummary& m, int a, int b) {
        double mean = m.empty() ? 0.0 : m.mean_at(t, 0);
        double var = m.empty() ? 0.0 : m.var_at(t, 0);
        double dx = x[0] - mean;
        return -(0.5 * ra * acts[a] * acts[a] + cv * var + cm * dx * dx) + cb * vols[b];
    };
    s.terminal_cost = [](const Vector&) { return 0.0; };
    double vmax = 0.0;
    for (double v : p.vols) vmax = std::max(vmax, v);
    s.bounds = {p.amax, std::max(vmax, p.s0), 0.5 * p.ra * p.amax * p.amax + 10 * (cv + cm) + cb * vmax + 1.0,
                1.0, 0.0};
    return s;
}

// ---------------------------------------------------------------------------
// expression-table model
// ---------------------------------------------------------------------------

// one monomial: c * prod_i x_i^xpow_i * t^tpow * mean(coord)^mpow * var(coord)^vpow
struct PolyTerm {
    double c = 0.0;
    std::vector<int> xpow;
    int tpow = 0;
    int mean_pow = 0;
    int var_pow = 0;
    int coord = 0;
};

inline double eval_terms(const std::vector<PolyTerm>& terms, double t, const Vector& x,
                         const MeasureSummary& m) {
    double acc = 0.0;
    for (const auto& tm : terms) {
        double v = tm.c;
        for (size_t c = 0; c < tm.xpow.size() && c < x.size(); ++c)
            for (int e = 0; e < tm.xpow[c]; ++e) v *= x[c];
        for (int e = 0; e < tm.tpow; ++e) v *= t;
        if (tm.mean_pow > 0) {
            double mu = m.empty() ? 0.0 : m.mean_at(t, tm.coord);
            for (int e = 0; e < tm.mean_pow; ++e) v *= mu;
        }
        if (tm.var_pow > 0) {
            double va = m.empty() ? 0.0 : m.var_at(t, tm.coord);
            for (int e = 0; e < tm.var_pow; ++e) v *= va;
        }
        acc += v;
    }
    return acc;
}

struct TableCoefficients {
    std::vector<std::vector<std::vector<PolyTerm>>> lambda;  // [a][p_component]
    std::vector<std::vector<std::vector<std::vector<PolyTerm>>>> sigma;  // [b][d][p]
    std::vector<std::vector<std::vector<PolyTerm>>> f;  // [a][b]
    std::vector<PolyTerm> xi;
};

// ---------------------------------------------------------------------------
// JSON scenario schema (schema_version 1)
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    std::string model_name;
    ModelSpec model;
    int time_steps = 0;
    int particles = 0;
    std::optional<int> common_noise_level;
    SpaceGrid space_grid;
    double beta = 0.5;
    int max_iter = 40;
    double tol = 1e-2;
    int basis_degree = 3;
    int min_bucket = 50;
    int bins = 50;
    std::uint64_t seed = 1;
    std::string outputs = "out";

    SolverParams to_params() const {
        SolverParams p;
        p.max_iter = max_iter;
        p.beta = beta;
        p.tol = tol;
        p.n_particles = particles;
        p.time_steps = time_steps;
        p.seed = seed;
        p.hjb.grid = space_grid;
        p.hjb.time_steps = time_steps;
        p.basis.degree = basis_degree;
        p.bins = bins;
        p.min_bucket = min_bucket;
        return p;
    }
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

inline double require_num(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number())
        throw ConfigError("missing numeric '" + key + "' in " + where);
    return j[key].get<double>();
}

inline PolyTerm parse_term(const json& j, const std::string& where) {
    check_keys(j, {"c", "x", "t", "mean", "var", "coord"}, where);
    PolyTerm t;
    t.c = require_num(j, "c", where);
    if (j.contains("x")) t.xpow = j["x"].get<std::vector<int>>();
    if (j.contains("t")) t.tpow = j["t"].get<int>();
    if (j.contains("mean")) t.mean_pow = j["mean"].get<int>();
    if (j.contains("var")) t.var_pow = j["var"].get<int>();
    if (j.contains("coord")) t.coord = j["coord"].get<int>();
    return t;
}

inline std::vector<PolyTerm> parse_terms(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError("expected a term list in " + where);
    std::vector<PolyTerm> out;
    for (const auto& t : j) out.push_back(parse_term(t, where));
    return out;
}

inline ActionGrid parse_actions(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError("empty action grid in " + where);
    ActionGrid g;
    for (const auto& v : j) {
        if (v.is_number())
            g.points.push_back({v.get<double>()});
        else
            g.points.push_back(v.get<Vector>());
    }
    return g;
}

inline ModelSpec parse_table_model(const json& j) {
    check_keys(j, {"name", "dim_state", "noise_dim", "noise0_dim", "horizon", "x0",
                   "drift_actions", "diffusion_actions", "lambda", "sigma", "f", "xi", "bounds"},
               "model");
    ModelSpec s;
    s.dim_state = static_cast<int>(require_num(j, "dim_state", "model"));
    s.noise_dim = static_cast<int>(require_num(j, "noise_dim", "model"));
    if (j.contains("noise0_dim")) s.noise0_dim = j["noise0_dim"].get<int>();
    s.horizon = require_num(j, "horizon", "model");
    if (!j.contains("x0")) throw ConfigError("missing 'x0' in model");
    s.x0 = j["x0"].get<Vector>();
    s.drift_actions = parse_actions(j.at("drift_actions"), "model.drift_actions");
    s.diffusion_actions = parse_actions(j.at("diffusion_actions"), "model.diffusion_actions");

    auto tab = std::make_shared<TableCoefficients>();
    const int ka = s.drift_actions.size();
    const int kb = s.diffusion_actions.size();
    const int d = s.dim_state;
    const int p = s.noise_dim;
    {
        const auto& lj = j.at("lambda");
        if (static_cast<int>(lj.size()) != ka) throw ConfigError("lambda table size != K_A");
        tab->lambda.resize(ka);
        for (int a = 0; a < ka; ++a) {
            if (static_cast<int>(lj[a].size()) != p)
                throw ConfigError("lambda[" + std::to_string(a) + "] must have noise_dim entries");
            for (int c = 0; c < p; ++c)
                tab->lambda[a].push_back(parse_terms(lj[a][c], "model.lambda"));
        }
    }
    {
        const auto& sj = j.at("sigma");
        if (static_cast<int>(sj.size()) != kb) throw ConfigError("sigma table size != K_B");
        tab->sigma.resize(kb);
        for (int b = 0; b < kb; ++b) {
            if (static_cast<int>(sj[b].size()) != d)
                throw ConfigError("sigma[" + std::to_string(b) + "] must have dim_state rows");
            tab->sigma[b].resize(d);
            for (int r = 0; r < d; ++r) {
                if (static_cast<int>(sj[b][r].size()) != p)
                    throw ConfigError("sigma rows must have noise_dim entries");
                for (int c = 0; c < p; ++c)
                    tab->sigma[b][r].push_back(parse_terms(sj[b][r][c], "model.sigma"));
            }
        }
    }
    {
        const auto& fj = j.at("f");
        if (static_cast<int>(fj.size()) != ka) throw ConfigError("f table size != K_A");
        tab->f.resize(ka);
        for (int a = 0; a < ka; ++a) {
            if (static_cast<int>(fj[a].size()) != kb)
                throw ConfigError("f[" + std::to_string(a) + "] must have K_B entries");
            for (int b = 0; b < kb; ++b) tab->f[a].push_back(parse_terms(fj[a][b], "model.f"));
        }
    }
    tab->xi = parse_terms(j.at("xi"), "model.xi");

    s.drift_factor = [tab, p](double t, const Vector& x, const MeasureSummary& m, int a) {
        Vector out(p);
        for (int c = 0; c < p; ++c) out[c] = eval_terms(tab->lambda[a][c], t, x, m);
        return out;
    };
    s.diffusion = [tab, d, p](double t, const Vector& x, const MeasureSummary& m, int b) {
        Matrix out(d, p);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < p; ++c) out(r, c) = eval_terms(tab->sigma[b][r][c], t, x, m);
        return out;
    };
    s.running_cost = [tab](double t, const Vector& x, const MeasureSummary& m, int a, int b) {
        return eval_terms(tab->f[a][b], t, x, m);
    };
    s.terminal_cost = [tab](const Vector& x) {
        return eval_terms(tab->xi, 0.0, x, MeasureSummary{});
    };

    const auto& bj = j.at("bounds");
    check_keys(bj, {"lambda", "sigma", "f", "xi", "lipschitz_x"}, "model.bounds");
    s.bounds.lambda_sup = require_num(bj, "lambda", "bounds");
    s.bounds.sigma_sup = require_num(bj, "sigma", "bounds");
    s.bounds.f_sup = require_num(bj, "f", "bounds");
    s.bounds.xi_sup = require_num(bj, "xi", "bounds");
    if (bj.contains("lipschitz_x")) s.bounds.lipschitz_x = bj["lipschitz_x"].get<double>();
    return s;
}

inline ModelSpec parse_builtin(const std::string& name, const json& params) {
    if (name == "lq") {
        check_keys(params, {"q", "r", "g", "kappa", "sigma0", "sigma_alt", "alt_penalty", "x0",
                            "horizon", "amax", "actions"},
                   "model.params");
        LqScenario p;
        p.q = require_num(params, "q", "lq");
        p.r = require_num(params, "r", "lq");
        p.g = require_num(params, "g", "lq");
        p.kappa = require_num(params, "kappa", "lq");
        p.sigma0 = require_num(params, "sigma0", "lq");
        p.x0 = require_num(params, "x0", "lq");
        p.horizon = require_num(params, "horizon", "lq");
        if (params.contains("sigma_alt")) p.sigma_alt = params["sigma_alt"].get<double>();
        if (params.contains("alt_penalty")) p.alt_penalty = params["alt_penalty"].get<double>();
        if (params.contains("amax")) p.amax = params["amax"].get<double>();
        if (params.contains("actions")) p.n_actions = params["actions"].get<int>();
        return lq_model(p);
    }
    if (name == "volchoice") {
        check_keys(params, {"amax", "n_drift", "vols", "s0", "ra", "cv", "cm", "cb", "x0",
                            "horizon"},
                   "model.params");
        VolchoiceScenario p;
        p.s0 = require_num(params, "s0", "volchoice");
        p.x0 = require_num(params, "x0", "volchoice");
        p.horizon = require_num(params, "horizon", "volchoice");
        if (params.contains("amax")) p.amax = params["amax"].get<double>();
        if (params.contains("n_drift")) p.n_drift = params["n_drift"].get<int>();
        if (params.contains("vols")) p.vols = params["vols"].get<Vector>();
        if (params.contains("ra")) p.ra = params["ra"].get<double>();
        if (params.contains("cv")) p.cv = params["cv"].get<double>();
        if (params.contains("cm")) p.cm = params["cm"].get<double>();
        if (params.contains("cb")) p.cb = params["cb"].get<double>();
        return volchoice_model(p);
    }
    throw ConfigError("unknown builtin model '" + name + "'");
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::require_num;
    check_keys(j, {"schema_version", "model", "discretization", "solver", "seed", "outputs"},
               "scenario");
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        throw ConfigError("scenario requires \"schema_version\": 1");

    ScenarioConfig cfg;
    const auto& mj = j.at("model");
    if (!mj.contains("name")) throw ConfigError("model needs a 'name'");
    cfg.model_name = mj["name"].get<std::string>();
    if (cfg.model_name == "table") {
        cfg.model = detail::parse_table_model(mj);
    } else {
        check_keys(mj, {"name", "params"}, "model");
        cfg.model = detail::parse_builtin(cfg.model_name, mj.value("params", nlohmann::json::object()));
    }

    const auto& dj = j.at("discretization");
    check_keys(dj, {"time_steps", "particles", "common_noise_level", "space_grid"},
               "discretization");
    cfg.time_steps = static_cast<int>(require_num(dj, "time_steps", "discretization"));
    cfg.particles = static_cast<int>(require_num(dj, "particles", "discretization"));
    if (dj.contains("common_noise_level") && !dj["common_noise_level"].is_null())
        cfg.common_noise_level = dj["common_noise_level"].get<int>();
    if (dj.contains("space_grid")) {
        const auto& gj = dj["space_grid"];
        check_keys(gj, {"lo", "hi", "nodes"}, "space_grid");
        cfg.space_grid.lo = require_num(gj, "lo", "space_grid");
        cfg.space_grid.hi = require_num(gj, "hi", "space_grid");
        cfg.space_grid.nodes = static_cast<int>(require_num(gj, "nodes", "space_grid"));
    }
    if (cfg.time_steps < 1 || cfg.particles < 1)
        throw ConfigError("time_steps and particles must be positive");

    if (j.contains("solver")) {
        const auto& sj = j.at("solver");
        check_keys(sj, {"beta", "max_iter", "tol", "basis_degree", "min_bucket", "bins"}, "solver");
        if (sj.contains("beta")) cfg.beta = sj["beta"].get<double>();
        if (sj.contains("max_iter")) cfg.max_iter = sj["max_iter"].get<int>();
        if (sj.contains("tol")) cfg.tol = sj["tol"].get<double>();
        if (sj.contains("basis_degree")) cfg.basis_degree = sj["basis_degree"].get<int>();
        if (sj.contains("min_bucket")) cfg.min_bucket = sj["min_bucket"].get<int>();
        if (sj.contains("bins")) cfg.bins = sj["bins"].get<int>();
        if (cfg.beta <= 0.0 || cfg.beta > 1.0) throw ConfigError("beta must lie in (0, 1]");
    }
    if (!j.contains("seed")) throw ConfigError("scenario needs a 'seed'");
    cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("outputs")) cfg.outputs = j["outputs"].get<std::string>();
    return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("scenario parse error: ") + e.what());
    }
    return parse_scenario(j);
}

}  // namespace mfg
