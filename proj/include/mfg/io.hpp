// SPDX-License-Identifier: MIT
//
// Plain CSV/JSON persistence for equilibrium results, measure summaries,
// value fields, and particle ensembles. Doubles are written with 17
// significant digits so text round trips are exact and repeated runs are
// byte-identical.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfg/equilibrium.hpp"
#include "mfg/errors.hpp"
#include "mfg/measures.hpp"

namespace mfg::io {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// measure summaries
// ---------------------------------------------------------------------------

inline std::string moments_csv(const MeasureSummary& m) {
    std::ostringstream os;
    const int d = m.dim();
    os << "time_idx,time";
    for (int c = 0; c < d; ++c) os << ",mean_" << c;
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) os << ",cov_" << r << "_" << c;
    os << "\n";
    for (size_t j = 0; j < m.times.size(); ++j) {
        os << j << "," << fmt(m.times[j]);
        for (int c = 0; c < d; ++c) os << "," << fmt(m.means[j][c]);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) os << "," << fmt(m.covs[j](r, c));
        os << "\n";
    }
    return os.str();
}

inline std::string histograms_csv(const MeasureSummary& m) {
    std::ostringstream os;
    os << "time_idx,coord,bin_lo,bin_hi,mass\n";
    for (size_t j = 0; j < m.times.size(); ++j)
        for (int c = 0; c < m.dim(); ++c) {
            const auto& h = m.hists[j][c];
            for (size_t k = 0; k < h.masses.size(); ++k)
                os << j << "," << c << "," << fmt(h.edges[k]) << "," << fmt(h.edges[k + 1]) << ","
                   << fmt(h.masses[k]) << "\n";
        }
    return os.str();
}

inline MeasureSummary load_measure_csvs(const std::string& moments_path,
                                        const std::string& hist_path) {
    MeasureSummary m;
    std::ifstream mo(moments_path);
    if (!mo) throw ConfigError("cannot open " + moments_path);
    std::string line;
    std::getline(mo, line);
    int d = 0;
    {
        size_t fields = 1;
        for (char ch : line)
            if (ch == ',') ++fields;
        // time_idx,time + d means + d^2 cov entries
        d = static_cast<int>(std::lround((std::sqrt(4.0 * (fields - 2) + 1.0) - 1.0) / 2.0));
    }
    while (std::getline(mo, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(is, tok, ',')) vals.push_back(std::stod(tok));
        m.times.push_back(vals[1]);
        Vector mu(d);
        for (int c = 0; c < d; ++c) mu[c] = vals[2 + c];
        Matrix cov(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) cov(r, c) = vals[2 + d + r * d + c];
        m.means.push_back(std::move(mu));
        m.covs.push_back(std::move(cov));
        m.hists.emplace_back(d);
    }
    std::ifstream hi(hist_path);
    if (!hi) throw ConfigError("cannot open " + hist_path);
    std::getline(hi, line);
    while (std::getline(hi, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(is, tok, ',')) vals.push_back(std::stod(tok));
        size_t j = static_cast<size_t>(vals[0]);
        int c = static_cast<int>(vals[1]);
        auto& h = m.hists[j][c];
        if (h.edges.empty()) h.edges.push_back(vals[2]);
        h.edges.push_back(vals[3]);
        h.masses.push_back(vals[4]);
    }
    return m;
}

// ---------------------------------------------------------------------------
// value fields and ensembles
// ---------------------------------------------------------------------------

inline std::string value_field_csv(const ValueField& vf) {
    std::ostringstream os;
    os << "time_idx,x_idx,t,x,y,z,argmax_a,argmax_b\n";
    for (size_t j = 0; j < vf.times.size(); ++j)
        for (int i = 0; i < vf.n_x(); ++i) {
            const auto& q = vf.strat(static_cast<int>(j), i);
            int a = 0, b = 0;
            for (size_t k = 0; k < q.qa.size(); ++k)
                if (q.qa[k] > 0.5) a = static_cast<int>(k);
            for (size_t k = 0; k < q.qb.size(); ++k)
                if (q.qb[k] > 0.5) b = static_cast<int>(k);
            os << j << "," << i << "," << fmt(vf.times[j]) << "," << fmt(vf.xs[i]) << ","
               << fmt(vf.Y(static_cast<int>(j), i)) << "," << fmt(vf.Z(static_cast<int>(j), i))
               << "," << a << "," << b << "\n";
        }
    return os.str();
}

// times header row, then one row per particle per time
inline std::string ensemble_csv(const ParticleEnsemble& ens) {
    std::ostringstream os;
    os << "# times";
    for (double t : ens.times) os << "," << fmt(t);
    os << "\nparticle,time_idx,weight";
    for (int c = 0; c < ens.dim; ++c) os << ",x_" << c;
    for (int c = 0; c < ens.noise0_dim; ++c) os << ",w0_" << c;
    os << "\n";
    for (int i = 0; i < ens.n_particles; ++i)
        for (size_t j = 0; j < ens.times.size(); ++j) {
            os << i << "," << j << "," << fmt(ens.weights[i]);
            for (int c = 0; c < ens.dim; ++c) os << "," << fmt(ens.state(i, static_cast<int>(j), c));
            for (int c = 0; c < ens.noise0_dim; ++c)
                os << "," << fmt(ens.noise0_at(i, static_cast<int>(j), c));
            os << "\n";
        }
    return os.str();
}

inline ParticleEnsemble load_ensemble_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    std::getline(in, line);
    ParticleEnsemble ens;
    {
        std::istringstream is(line);
        std::string tok;
        std::getline(is, tok, ',');  // "# times"
        while (std::getline(is, tok, ',')) ens.times.push_back(std::stod(tok));
    }
    std::getline(in, line);
    int fields = 1;
    for (char ch : line)
        if (ch == ',') ++fields;
    int w0cols = 0;
    {
        std::istringstream is(line);
        std::string tok;
        while (std::getline(is, tok, ','))
            if (tok.rfind("w0_", 0) == 0) ++w0cols;
    }
    ens.dim = fields - 3 - w0cols;
    ens.noise0_dim = w0cols;
    std::vector<double> vals;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        vals.clear();
        std::istringstream is(line);
        std::string tok;
        while (std::getline(is, tok, ',')) vals.push_back(std::stod(tok));
        rows.push_back(vals);
    }
    const size_t L1 = ens.times.size();
    ens.n_particles = static_cast<int>(rows.size() / L1);
    ens.states.assign(static_cast<size_t>(ens.n_particles) * L1 * ens.dim, 0.0);
    if (w0cols > 0) ens.noise0.assign(static_cast<size_t>(ens.n_particles) * L1 * w0cols, 0.0);
    ens.weights.assign(ens.n_particles, 0.0);
    for (const auto& r : rows) {
        int i = static_cast<int>(r[0]);
        int j = static_cast<int>(r[1]);
        ens.weights[i] = r[2];
        for (int c = 0; c < ens.dim; ++c) ens.state(i, j, c) = r[3 + c];
        for (int c = 0; c < w0cols; ++c) ens.noise0_at(i, j, c) = r[3 + ens.dim + c];
    }
    return ens;
}

// ---------------------------------------------------------------------------
// equilibrium result directory
// ---------------------------------------------------------------------------

inline nlohmann::json certificate_json(const CertificateReport& rep) {
    nlohmann::json c;
    c["y0_vs_value_gap"] = rep.y0_vs_value_gap;
    c["equilibrium_martingale_ok"] = rep.equilibrium.martingale_ok;
    nlohmann::json laws = nlohmann::json::array();
    for (const auto& law : rep.test_laws) {
        nlohmann::json l;
        l["name"] = law.name;
        l["supermartingale_ok"] = law.supermartingale_ok;
        l["frac_strictly_negative"] = law.frac_strictly_negative;
        laws.push_back(std::move(l));
    }
    c["test_laws"] = std::move(laws);
    return c;
}

inline nlohmann::json summary_json(const EquilibriumResult& eq) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["mode"] = eq.mode == MfgMode::NoCommon ? "no_common" : "common";
    j["level"] = eq.level;
    j["y0"] = eq.y0;
    j["converged"] = eq.converged;
    j["residuals"] = eq.residual_history;
    j["exploitability"] = eq.exploitability;
    j["exploitability_se"] = eq.exploitability_se;
    if (eq.certificate) j["certificate"] = certificate_json(*eq.certificate);
    if (eq.mode == MfgMode::Common) {
        nlohmann::json w;
        for (const auto& [key, weight] : eq.bucket_weights) w[key.str()] = weight;
        j["bucket_weights"] = std::move(w);
    }
    return j;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
}

// summary.json + measure CSVs + value-field CSV (+ per-bucket CSVs and a
// bucket JSON keyed by the cell-path code)
inline void write_result_dir(const std::string& dir, const EquilibriumResult& eq) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_file(fs::path(dir) / "summary.json", summary_json(eq).dump(2) + "\n");
    write_file(fs::path(dir) / "measure_moments.csv", moments_csv(eq.measure));
    write_file(fs::path(dir) / "measure_histograms.csv", histograms_csv(eq.measure));
    write_file(fs::path(dir) / "value_field.csv", value_field_csv(eq.value_field));
    if (eq.mode == MfgMode::Common) {
        fs::create_directories(fs::path(dir) / "buckets");
        nlohmann::json bj;
        for (const auto& [key, m] : eq.bucket_measures) {
            std::string code = key.str();
            write_file(fs::path(dir) / "buckets" / (code + "_moments.csv"), moments_csv(m));
            write_file(fs::path(dir) / "buckets" / (code + "_histograms.csv"), histograms_csv(m));
            nlohmann::json entry;
            entry["weight"] = eq.bucket_weights.at(key);
            entry["terminal_mean"] = m.means.back();
            bj[code] = std::move(entry);
        }
        write_file(fs::path(dir) / "buckets.json", bj.dump(2) + "\n");
    }
}

struct LoadedResult {
    nlohmann::json summary;
    MeasureSummary measure;
};

inline LoadedResult load_result_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    LoadedResult out;
    std::ifstream in(fs::path(dir) / "summary.json");
    if (!in) throw ConfigError("cannot open " + dir + "/summary.json");
    in >> out.summary;
    out.measure = load_measure_csvs((fs::path(dir) / "measure_moments.csv").string(),
                                    (fs::path(dir) / "measure_histograms.csv").string());
    return out;
}

}  // namespace mfg::io
