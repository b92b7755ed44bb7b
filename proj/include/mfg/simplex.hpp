// SPDX-License-Identifier: MIT
//
// Dense two-phase primal simplex for the tiny linear programs behind the
// constrained Hamiltonian: a handful of variables, a handful of rows.
// Bland's rule throughout, so pivoting is deterministic and cycle-free.
// A Simplex object can be re-minimized with a new objective over the same
// constraints; repeat calls skip phase 1 and restart from the last basis.
#pragma once

#include <cmath>
#include <vector>

#include "mfg/linalg.hpp"

namespace mfg::lp {

enum class Rel { Eq, Le, Ge };
enum class Status { Optimal, Infeasible, Unbounded };

struct Result {
    Status status = Status::Optimal;
    Vector x;            // values of the original variables
    double objective = 0.0;
    double infeasibility = 0.0;  // phase-1 optimum when Infeasible
};

class Simplex {
public:
    // min c.x subject to A x (rel) b, x >= 0.
    Simplex(const Matrix& A, const Vector& b, const std::vector<Rel>& rel) : n_orig_(A.cols) {
        const int m = A.rows;
        int n_slack = 0;
        for (auto r : rel)
            if (r != Rel::Eq) ++n_slack;
        n_cols_ = n_orig_ + n_slack;
        rows_ = m;
        stride_ = n_cols_ + rows_;  // room for one artificial per row
        total_cols_ = stride_;

        tab_.assign(static_cast<size_t>(m) * stride_, 0.0);
        rhs_.assign(m, 0.0);
        int slack = n_orig_;
        for (int i = 0; i < m; ++i) {
            double sgn = b[i] < 0.0 ? -1.0 : 1.0;
            for (int j = 0; j < A.cols; ++j) at(i, j) = sgn * A(i, j);
            rhs_[i] = sgn * b[i];
            if (rel[i] != Rel::Eq) {
                double s = rel[i] == Rel::Le ? 1.0 : -1.0;
                at(i, slack++) = sgn * s;
            }
        }
        phase1();
    }

    Result minimize(const Vector& c_orig) {
        Result res;
        if (!feasible_) {
            res.status = Status::Infeasible;
            res.x = extract();
            res.infeasibility = phase1_obj_;
            return res;
        }
        Vector c(n_cols_, 0.0);
        for (int j = 0; j < n_orig_; ++j) c[j] = c_orig[j];
        Status st = iterate(c);
        res.status = st;
        res.x = extract();
        res.objective = 0.0;
        for (int j = 0; j < n_orig_; ++j) res.objective += c_orig[j] * res.x[j];
        return res;
    }

    bool feasible() const { return feasible_; }
    double phase1_objective() const { return phase1_obj_; }
    Vector phase1_point() const { return extract(); }

private:
    static constexpr double kPivEps = 1e-11;
    static constexpr double kCostEps = 1e-11;

    int n_orig_;
    int n_cols_ = 0;
    int rows_ = 0;
    std::vector<double> tab_;   // rows_ x (n_cols_ + artificials during phase 1)
    Vector rhs_;
    std::vector<int> basis_;
    int total_cols_ = 0;
    bool feasible_ = false;
    double phase1_obj_ = 0.0;

    double& at(int i, int j) { return tab_[static_cast<size_t>(i) * stride_ + j]; }
    double atc(int i, int j) const { return tab_[static_cast<size_t>(i) * stride_ + j]; }
    int stride_ = 0;

    void phase1() {
        // one artificial per row; start from the all-artificial basis
        basis_.resize(rows_);
        for (int i = 0; i < rows_; ++i) {
            at(i, n_cols_ + i) = 1.0;
            basis_[i] = n_cols_ + i;
        }
        Vector c(total_cols_, 0.0);
        for (int i = 0; i < rows_; ++i) c[n_cols_ + i] = 1.0;
        iterate(c);
        phase1_obj_ = 0.0;
        for (int i = 0; i < rows_; ++i)
            if (basis_[i] >= n_cols_) phase1_obj_ += rhs_[i];
        if (phase1_obj_ > 1e-9) {
            feasible_ = false;
            return;
        }
        // pivot zero-valued artificials out; drop rows that turn out redundant
        for (int i = rows_ - 1; i >= 0; --i) {
            if (basis_[i] < n_cols_) continue;
            int enter = -1;
            for (int j = 0; j < n_cols_; ++j)
                if (std::abs(atc(i, j)) > kPivEps) {
                    enter = j;
                    break;
                }
            if (enter >= 0) {
                pivot(i, enter);
            } else {
                drop_row(i);
            }
        }
        total_cols_ = n_cols_;  // artificials can no longer enter
        feasible_ = true;
    }

    void drop_row(int r) {
        for (int i = r; i + 1 < rows_; ++i) {
            for (int j = 0; j < stride_; ++j) at(i, j) = atc(i + 1, j);
            rhs_[i] = rhs_[i + 1];
            basis_[i] = basis_[i + 1];
        }
        --rows_;
        rhs_.resize(rows_);
        basis_.resize(rows_);
    }

    Status iterate(const Vector& c) {
        for (;;) {
            // reduced costs from scratch: z_j = c_j - c_B . column_j
            int enter = -1;
            for (int j = 0; j < total_cols_; ++j) {
                bool basic = false;
                for (int i = 0; i < rows_; ++i)
                    if (basis_[i] == j) {
                        basic = true;
                        break;
                    }
                if (basic) continue;
                double z = c[j];
                for (int i = 0; i < rows_; ++i) z -= c[basis_[i]] * atc(i, j);
                if (z < -kCostEps) {
                    enter = j;  // Bland: first improving index
                    break;
                }
            }
            if (enter < 0) return Status::Optimal;
            int leave = -1;
            double best = 0.0;
            for (int i = 0; i < rows_; ++i) {
                double a = atc(i, enter);
                if (a > kPivEps) {
                    double ratio = rhs_[i] / a;
                    if (leave < 0 || ratio < best - 1e-14 ||
                        (ratio < best + 1e-14 && basis_[i] < basis_[leave])) {
                        leave = i;
                        best = ratio;
                    }
                }
            }
            if (leave < 0) return Status::Unbounded;
            pivot(leave, enter);
        }
    }

    void pivot(int r, int jc) {
        double p = atc(r, jc);
        for (int j = 0; j < stride_; ++j) at(r, j) /= p;
        rhs_[r] /= p;
        for (int i = 0; i < rows_; ++i) {
            if (i == r) continue;
            double f = atc(i, jc);
            if (f == 0.0) continue;
            for (int j = 0; j < stride_; ++j) at(i, j) -= f * atc(r, j);
            rhs_[i] -= f * rhs_[r];
            if (rhs_[i] < 0.0 && rhs_[i] > -1e-12) rhs_[i] = 0.0;
        }
        basis_[r] = jc;
    }

    Vector extract() const {
        Vector x(n_orig_, 0.0);
        for (int i = 0; i < rows_; ++i)
            if (basis_[i] < n_orig_) x[basis_[i]] = rhs_[i];
        return x;
    }
};

}  // namespace mfg::lp
