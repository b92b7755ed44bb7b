// SPDX-License-Identifier: MIT
//
// Particle representations of path measures and the common-noise cell
// machinery: dyadic quantile partitions of the noise increments, lagged
// adapted interpolation of state paths, conditional buckets keyed by
// cell paths, and sliced Wasserstein-1 distances between marginals.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "mfg/errors.hpp"
#include "mfg/model.hpp"
#include "mfg/rng.hpp"

namespace mfg {

struct ParticleEnsemble {
    std::vector<double> times;  // t_0 = 0 < ... < t_L = T
    int n_particles = 0;
    int dim = 0;
    int noise0_dim = 0;
    std::vector<double> states;        // N * (L+1) * d
    std::vector<double> noise0;        // N * (L+1) * p0, empty when p0 = 0
    std::vector<double> weights;       // N, nonnegative, sums to 1
    std::vector<double> applied_cov;   // N * L * d * d, per-step sigma sigma^T actually applied
    std::vector<double> applied_drift; // N * L * d
    std::vector<int> actions;          // N * L * 2, sampled (a, b) per step

    int action_a(int i, int j) const { return actions[(static_cast<size_t>(i) * n_steps() + j) * 2]; }
    int action_b(int i, int j) const { return actions[(static_cast<size_t>(i) * n_steps() + j) * 2 + 1]; }

    int n_steps() const { return static_cast<int>(times.size()) - 1; }

    double state(int i, int j, int c) const {
        return states[(static_cast<size_t>(i) * times.size() + j) * dim + c];
    }
    double& state(int i, int j, int c) {
        return states[(static_cast<size_t>(i) * times.size() + j) * dim + c];
    }
    Vector state_vec(int i, int j) const {
        Vector x(dim);
        for (int c = 0; c < dim; ++c) x[c] = state(i, j, c);
        return x;
    }
    double noise0_at(int i, int j, int c) const {
        return noise0[(static_cast<size_t>(i) * times.size() + j) * noise0_dim + c];
    }
    double& noise0_at(int i, int j, int c) {
        return noise0[(static_cast<size_t>(i) * times.size() + j) * noise0_dim + c];
    }
    double cov_at(int i, int j, int r, int c) const {
        return applied_cov[((static_cast<size_t>(i) * n_steps() + j) * dim + r) * dim + c];
    }
    Matrix cov_mat(int i, int j) const {
        Matrix m(dim, dim);
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c) m(r, c) = cov_at(i, j, r, c);
        return m;
    }
    double drift_at(int i, int j, int c) const {
        return applied_drift[(static_cast<size_t>(i) * n_steps() + j) * dim + c];
    }

    void check() const {
        if (times.size() < 2 || times.front() != 0.0) throw GridMismatch("ensemble grid must start at 0");
        for (size_t j = 1; j < times.size(); ++j)
            if (times[j] <= times[j - 1]) throw GridMismatch("ensemble times must be strictly increasing");
        double w = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (std::abs(w - 1.0) > 1e-12) throw GridMismatch("ensemble weights must sum to 1");
    }
};

// Reference to an ensemble subset with renormalized weights; the empirical
// law of the referenced paths.
struct EmpiricalPathMeasure {
    std::shared_ptr<const ParticleEnsemble> source;
    std::vector<int> indices;
    std::vector<double> weights;  // renormalized over the subset

    static EmpiricalPathMeasure whole(std::shared_ptr<const ParticleEnsemble> ens) {
        EmpiricalPathMeasure m;
        m.source = std::move(ens);
        m.indices.resize(m.source->n_particles);
        std::iota(m.indices.begin(), m.indices.end(), 0);
        m.weights = m.source->weights;
        return m;
    }
    size_t size() const { return indices.size(); }
};

// Dyadic quantile partition of standardized noise increments. At level n
// each coordinate gets 2^n equiprobable standard-normal quantile bins;
// level n+1 splits every bin in two, so the partitions refine.
struct CellPartition {
    int level = 1;       // n
    int noise0_dim = 1;  // p0
    Vector zedges;       // 2^n - 1 standard normal quantiles, shared by all steps/coords

    int bins_per_coord() const { return 1 << level; }
    int codes_per_step() const {
        int c = 1;
        for (int k = 0; k < noise0_dim; ++k) c *= bins_per_coord();
        return c;
    }
    int dyadic_steps() const { return 1 << level; }

    int classify_one(double z) const {
        int lo = 0, hi = static_cast<int>(zedges.size());
        while (lo < hi) {
            int mid = (lo + hi) / 2;
            if (z <= zedges[mid]) hi = mid;
            else lo = mid + 1;
        }
        return lo;
    }
    // flat code across coordinates, coordinate 0 most significant
    int classify(const double* z) const {
        int code = 0;
        for (int c = 0; c < noise0_dim; ++c) code = code * bins_per_coord() + classify_one(z[c]);
        return code;
    }
    // per-step bin edges in raw increment space for step length dt
    Vector raw_edges(double dt) const {
        Vector e(zedges.size());
        double s = std::sqrt(dt);
        for (size_t k = 0; k < e.size(); ++k) e[k] = s * zedges[k];
        return e;
    }
    // every bin of *this (finer) lies inside exactly one bin of `coarse`
    bool refines(const CellPartition& coarse) const {
        if (level < coarse.level || noise0_dim != coarse.noise0_dim) return false;
        for (double e : coarse.zedges)
            if (std::none_of(zedges.begin(), zedges.end(),
                             [e](double z) { return std::abs(z - e) < 1e-12; }))
                return false;
        return true;
    }
};

inline CellPartition build_partition(int n, int p0) {
    if (n < 1) throw ConfigError("partition level must be >= 1");
    if (p0 < 1) throw ConfigError("noise dimension must be >= 1");
    CellPartition part;
    part.level = n;
    part.noise0_dim = p0;
    int bins = 1 << n;
    part.zedges.resize(bins - 1);
    for (int k = 1; k < bins; ++k)
        part.zedges[k - 1] = rng::normal_quantile(static_cast<double>(k) / bins);
    return part;
}

struct CellPathIndex {
    std::vector<int> codes;  // one per dyadic step, length 2^n

    bool operator<(const CellPathIndex& o) const { return codes < o.codes; }
    bool operator==(const CellPathIndex& o) const { return codes == o.codes; }

    std::string str() const {
        std::string s;
        for (size_t k = 0; k < codes.size(); ++k) {
            if (k) s += '-';
            s += std::to_string(codes[k]);
        }
        return s;
    }
};

namespace detail {

// indices of the dyadic grid t_k = k T / 2^n inside `times`
inline std::vector<int> dyadic_indices(const std::vector<double>& times, int n) {
    const double T = times.back();
    const int steps = 1 << n;
    std::vector<int> idx(steps + 1, -1);
    for (int k = 0; k <= steps; ++k) {
        double target = T * static_cast<double>(k) / steps;
        for (size_t j = 0; j < times.size(); ++j)
            if (std::abs(times[j] - target) <= 1e-9 * std::max(1.0, T)) {
                idx[k] = static_cast<int>(j);
                break;
            }
        if (idx[k] < 0)
            throw IncompatibleGrid("path grid does not contain dyadic point " + std::to_string(target));
    }
    return idx;
}

}  // namespace detail

// Codes of the standardized increments of one noise path over the dyadic grid.
inline CellPathIndex cell_path(const std::vector<double>& times,
                               const std::vector<Vector>& w0, const CellPartition& part) {
    auto idx = detail::dyadic_indices(times, part.level);
    const double T = times.back();
    const double dt = T / part.dyadic_steps();
    const double sdt = std::sqrt(dt);
    CellPathIndex out;
    out.codes.resize(part.dyadic_steps());
    Vector z(part.noise0_dim);
    for (int k = 1; k <= part.dyadic_steps(); ++k) {
        for (int c = 0; c < part.noise0_dim; ++c)
            z[c] = (w0[idx[k]][c] - w0[idx[k - 1]][c]) / sdt;
        out.codes[k - 1] = part.classify(z.data());
    }
    return out;
}

// Lagged piecewise-linear interpolation: on [t_k, t_{k+1}) the output runs
// from X_{t_{k-1}} at t_k to X_{t_k} at t_{k+1}; constant X_0 on [t_0, t_1).
// The value at any t therefore depends only on the path up to the last
// dyadic point <= t.
inline std::vector<Vector> adapted_interpolate(const std::vector<double>& times,
                                               const std::vector<Vector>& values, int n,
                                               const std::vector<double>& query_times) {
    auto idx = detail::dyadic_indices(times, n);
    const double T = times.back();
    const int steps = 1 << n;
    const double dt = T / steps;
    std::vector<Vector> out;
    out.reserve(query_times.size());
    const size_t dim = values[0].size();
    for (double t : query_times) {
        int k = static_cast<int>(std::floor(t / dt + 1e-12));
        if (k >= steps) k = steps - 1;  // t = T takes the left limit X_{t_{steps-1}}
        Vector v(dim);
        if (k == 0) {
            v = values[idx[0]];
        } else {
            double wr = (t - k * dt) / dt;       // weight on X_{t_k}
            double wl = 1.0 - wr;                // weight on X_{t_{k-1}}
            if (k == steps - 1 && t >= T) { wr = 1.0; wl = 0.0; }
            const Vector& xl = values[idx[k - 1]];
            const Vector& xr = values[idx[k]];
            for (size_t c = 0; c < dim; ++c) v[c] = wl * xl[c] + wr * xr[c];
        }
        out.push_back(std::move(v));
    }
    return out;
}

struct BucketMap {
    std::shared_ptr<const ParticleEnsemble> interpolated;  // X-hat paths on the source grid
    std::map<CellPathIndex, EmpiricalPathMeasure> buckets;
};

// Group particles by the cell path of their common-noise path; each bucket
// is the weighted empirical law of the adapted-interpolated states of its
// members. Empty buckets are absent.
inline BucketMap conditional_buckets(const std::shared_ptr<const ParticleEnsemble>& ens,
                                     const CellPartition& part) {
    if (ens->noise0.empty() || ens->noise0_dim == 0)
        throw MissingCommonNoise("ensemble has no common-noise paths");
    const int N = ens->n_particles;
    const size_t L1 = ens->times.size();

    auto interp = std::make_shared<ParticleEnsemble>();
    interp->times = ens->times;
    interp->n_particles = N;
    interp->dim = ens->dim;
    interp->weights = ens->weights;
    interp->states.resize(static_cast<size_t>(N) * L1 * ens->dim);

    BucketMap out;
    std::vector<Vector> path(L1), w0(L1);
    for (int i = 0; i < N; ++i) {
        for (size_t j = 0; j < L1; ++j) {
            path[j] = ens->state_vec(i, static_cast<int>(j));
            w0[j].resize(ens->noise0_dim);
            for (int c = 0; c < ens->noise0_dim; ++c) w0[j][c] = ens->noise0_at(i, static_cast<int>(j), c);
        }
        auto xhat = adapted_interpolate(ens->times, path, part.level, ens->times);
        for (size_t j = 0; j < L1; ++j)
            for (int c = 0; c < ens->dim; ++c) interp->state(i, static_cast<int>(j), c) = xhat[j][c];
        CellPathIndex key = cell_path(ens->times, w0, part);
        auto& bucket = out.buckets[key];
        bucket.indices.push_back(i);
        bucket.weights.push_back(ens->weights[i]);
    }
    out.interpolated = interp;
    for (auto& [key, bucket] : out.buckets) {
        bucket.source = interp;
        double w = std::accumulate(bucket.weights.begin(), bucket.weights.end(), 0.0);
        if (w > 0.0)
            for (double& x : bucket.weights) x /= w;
    }
    return out;
}

namespace detail {

// Wasserstein-1 between two weighted 1-D samples via the merged-CDF sweep.
inline double w1_sorted(std::vector<std::pair<double, double>>& a,
                        std::vector<std::pair<double, double>>& b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double dist = 0.0, cdfa = 0.0, cdfb = 0.0;
    size_t ia = 0, ib = 0;
    double prev = 0.0;
    bool first = true;
    while (ia < a.size() || ib < b.size()) {
        double x = (ia < a.size() && (ib >= b.size() || a[ia].first <= b[ib].first))
                       ? a[ia].first
                       : b[ib].first;
        if (!first) dist += std::abs(cdfa - cdfb) * (x - prev);
        while (ia < a.size() && a[ia].first == x) cdfa += a[ia++].second;
        while (ib < b.size() && b[ib].first == x) cdfb += b[ib++].second;
        prev = x;
        first = false;
    }
    return dist;
}

}  // namespace detail

// Average over time-grid points and coordinates of the 1-D W1 distances
// between marginals.
inline double measure_distance(const EmpiricalPathMeasure& m1, const EmpiricalPathMeasure& m2) {
    const auto& e1 = *m1.source;
    const auto& e2 = *m2.source;
    if (e1.times != e2.times) throw GridMismatch("empirical measures on different time grids");
    if (e1.dim != e2.dim) throw GridMismatch("empirical measures of different dimension");
    double acc = 0.0;
    const size_t L1 = e1.times.size();
    for (size_t j = 0; j < L1; ++j)
        for (int c = 0; c < e1.dim; ++c) {
            std::vector<std::pair<double, double>> a, b;
            a.reserve(m1.indices.size());
            b.reserve(m2.indices.size());
            for (size_t k = 0; k < m1.indices.size(); ++k)
                a.emplace_back(e1.state(m1.indices[k], static_cast<int>(j), c), m1.weights[k]);
            for (size_t k = 0; k < m2.indices.size(); ++k)
                b.emplace_back(e2.state(m2.indices[k], static_cast<int>(j), c), m2.weights[k]);
            acc += detail::w1_sorted(a, b);
        }
    return acc / (static_cast<double>(L1) * e1.dim);
}

inline double measure_distance(const MeasureSummary& m1, const MeasureSummary& m2) {
    if (m1.times != m2.times) throw GridMismatch("summaries on different marginal grids");
    if (m1.dim() != m2.dim()) throw GridMismatch("summaries of different dimension");
    double acc = 0.0;
    for (size_t j = 0; j < m1.times.size(); ++j)
        for (int c = 0; c < m1.dim(); ++c) {
            const auto& h1 = m1.hists[j][c];
            const auto& h2 = m2.hists[j][c];
            std::vector<std::pair<double, double>> a, b;
            for (size_t k = 0; k < h1.masses.size(); ++k)
                a.emplace_back(h1.center(static_cast<int>(k)), h1.masses[k]);
            for (size_t k = 0; k < h2.masses.size(); ++k)
                b.emplace_back(h2.center(static_cast<int>(k)), h2.masses[k]);
            acc += detail::w1_sorted(a, b);
        }
    return acc / (static_cast<double>(m1.times.size()) * m1.dim());
}

// Per-time weighted means, covariances, and equal-width histograms spanning
// the positive-weight sample range.
inline MeasureSummary summarize(const EmpiricalPathMeasure& m, int bins) {
    if (bins < 1) throw ConfigError("bins must be >= 1");
    const auto& ens = *m.source;
    MeasureSummary out;
    out.times = ens.times;
    const int d = ens.dim;
    for (size_t j = 0; j < ens.times.size(); ++j) {
        Vector mu(d, 0.0);
        for (size_t k = 0; k < m.indices.size(); ++k)
            for (int c = 0; c < d; ++c) mu[c] += m.weights[k] * ens.state(m.indices[k], static_cast<int>(j), c);
        Matrix cov(d, d);
        for (size_t k = 0; k < m.indices.size(); ++k)
            for (int r = 0; r < d; ++r) {
                double dr = ens.state(m.indices[k], static_cast<int>(j), r) - mu[r];
                for (int c = r; c < d; ++c) {
                    double dc = ens.state(m.indices[k], static_cast<int>(j), c) - mu[c];
                    cov(r, c) += m.weights[k] * dr * dc;
                }
            }
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < r; ++c) cov(r, c) = cov(c, r);

        std::vector<Histogram1D> hs(d);
        for (int c = 0; c < d; ++c) {
            double lo = 0.0, hi = 0.0;
            bool seen = false;
            for (size_t k = 0; k < m.indices.size(); ++k) {
                if (m.weights[k] <= 0.0) continue;
                double v = ens.state(m.indices[k], static_cast<int>(j), c);
                if (!seen) { lo = hi = v; seen = true; }
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            Histogram1D h;
            if (!seen || hi <= lo) {
                h.edges = {lo, hi <= lo ? lo : hi};
                h.masses = {1.0};
            } else {
                h.edges.resize(bins + 1);
                for (int k = 0; k <= bins; ++k)
                    h.edges[k] = lo + (hi - lo) * static_cast<double>(k) / bins;
                h.masses.assign(bins, 0.0);
                for (size_t k = 0; k < m.indices.size(); ++k) {
                    if (m.weights[k] <= 0.0) continue;
                    double v = ens.state(m.indices[k], static_cast<int>(j), c);
                    int bin = static_cast<int>((v - lo) / (hi - lo) * bins);
                    bin = std::clamp(bin, 0, bins - 1);
                    h.masses[bin] += m.weights[k];
                }
            }
            hs[c] = std::move(h);
        }
        out.means.push_back(std::move(mu));
        out.covs.push_back(std::move(cov));
        out.hists.push_back(std::move(hs));
    }
    return out;
}

inline MeasureSummary summarize(const std::shared_ptr<const ParticleEnsemble>& ens, int bins) {
    return summarize(EmpiricalPathMeasure::whole(ens), bins);
}

// Convex blend toward m_star: moments linearly, histograms as mixtures
// reallocated onto a fresh equal-width grid spanning both supports.
inline MeasureSummary blend_summaries(const MeasureSummary& m, const MeasureSummary& m_star,
                                      double beta) {
    if (m.times != m_star.times) throw GridMismatch("blend requires matching marginal grids");
    MeasureSummary out;
    out.times = m.times;
    const int d = m.dim();
    for (size_t j = 0; j < m.times.size(); ++j) {
        Vector mu(d);
        for (int c = 0; c < d; ++c) mu[c] = (1.0 - beta) * m.means[j][c] + beta * m_star.means[j][c];
        Matrix cov(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c)
                cov(r, c) = (1.0 - beta) * m.covs[j](r, c) + beta * m_star.covs[j](r, c);
        std::vector<Histogram1D> hs(d);
        for (int c = 0; c < d; ++c) {
            const auto& ha = m.hists[j][c];
            const auto& hb = m_star.hists[j][c];
            double lo = std::min(ha.edges.front(), hb.edges.front());
            double hi = std::max(ha.edges.back(), hb.edges.back());
            int bins = static_cast<int>(std::max(ha.masses.size(), hb.masses.size()));
            Histogram1D h;
            if (hi <= lo) {
                h.edges = {lo, hi <= lo ? lo : hi};
                h.masses = {1.0};
            } else {
                h.edges.resize(bins + 1);
                for (int k = 0; k <= bins; ++k)
                    h.edges[k] = lo + (hi - lo) * static_cast<double>(k) / bins;
                h.masses.assign(bins, 0.0);
                auto add = [&](const Histogram1D& src, double w) {
                    for (size_t k = 0; k < src.masses.size(); ++k) {
                        double a = src.edges[k], b = src.edges[k + 1];
                        double mass = w * src.masses[k];
                        if (mass == 0.0) continue;
                        if (b <= a) {  // atom: place by center
                            int bin = static_cast<int>((a - lo) / (hi - lo) * bins);
                            h.masses[std::clamp(bin, 0, bins - 1)] += mass;
                            continue;
                        }
                        // distribute proportionally to overlap
                        for (int t = 0; t < bins; ++t) {
                            double tl = h.edges[t], tr = h.edges[t + 1];
                            double ov = std::min(b, tr) - std::max(a, tl);
                            if (ov > 0.0) h.masses[t] += mass * ov / (b - a);
                        }
                    }
                };
                add(ha, 1.0 - beta);
                add(hb, beta);
            }
            hs[c] = std::move(h);
        }
        out.means.push_back(std::move(mu));
        out.covs.push_back(std::move(cov));
        out.hists.push_back(std::move(hs));
    }
    return out;
}

}  // namespace mfg
