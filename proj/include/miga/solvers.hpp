#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "miga/sparse.hpp"

namespace miga {

struct CgResult {
    Vector x;
    int iterations = 0;
    std::vector<double> residual_history;
    bool converged = false;
};

/// Conjugate Gradient for SPD systems, optionally Jacobi preconditioned.
/// Stops when ||b - A x||_2 <= rel_tol ||b||_2. A breakdown (p^T A p <= 0)
/// signals a non-SPD matrix and throws.
inline CgResult cg_solve(const SparseMatrix& a, const Vector& b, Vector x0, double rel_tol,
                         int max_iter, const Vector* diag_precond = nullptr) {
    if (a.n_rows != a.n_cols || static_cast<int>(b.size()) != a.n_rows)
        throw std::invalid_argument("cg_solve: dimension mismatch");
    CgResult res;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        res.x.assign(a.n_rows, 0.0);
        res.converged = true;
        return res;
    }
    if (x0.empty()) x0.assign(a.n_rows, 0.0);
    res.x = std::move(x0);

    Vector r = subtract(b, spmv(a, res.x));
    double rnorm = norm2(r);
    res.residual_history.push_back(rnorm);
    if (rnorm <= rel_tol * bnorm) {
        res.converged = true;
        return res;
    }

    auto apply_precond = [&](const Vector& v) {
        if (!diag_precond) return v;
        Vector z(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) z[i] = v[i] / (*diag_precond)[i];
        return z;
    };

    Vector z = apply_precond(r);
    Vector p = z;
    double rz = dot(r, z);
    Vector q;
    for (int it = 1; it <= max_iter; ++it) {
        spmv(a, p, q);
        const double pq = dot(p, q);
        if (pq <= 0.0) throw std::runtime_error("cg_solve: breakdown, matrix not SPD");
        const double alpha = rz / pq;
        axpy(alpha, p, res.x);
        axpy(-alpha, q, r);
        rnorm = norm2(r);
        res.iterations = it;
        res.residual_history.push_back(rnorm);
        if (rnorm <= rel_tol * bnorm) {
            res.converged = true;
            return res;
        }
        z = apply_precond(r);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = z[i] + beta * p[i];
    }
    return res;
}

enum class SweepDirection { forward, backward };

/// One lexicographic Gauss-Seidel sweep, updating x in place.
inline void gauss_seidel_sweep(const SparseMatrix& a, const Vector& b, Vector& x,
                               SweepDirection dir) {
    if (a.n_rows != a.n_cols || b.size() != x.size() || static_cast<int>(x.size()) != a.n_rows)
        throw std::invalid_argument("gauss_seidel_sweep: dimension mismatch");
    const int n = a.n_rows;
    const int begin = dir == SweepDirection::forward ? 0 : n - 1;
    const int step = dir == SweepDirection::forward ? 1 : -1;
    for (int i = begin; i >= 0 && i < n; i += step) {
        double diag = 0.0, s = b[i];
        for (int e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e) {
            const int j = a.col_indices[e];
            if (j == i)
                diag = a.values[e];
            else
                s -= a.values[e] * x[j];
        }
        if (diag == 0.0) throw std::runtime_error("gauss_seidel_sweep: zero diagonal entry");
        x[i] = s / diag;
    }
}

/// Dense LU with partial pivoting, intended for coarsest-grid systems.
class DenseLU {
public:
    DenseLU() = default;

    explicit DenseLU(const SparseMatrix& a) {
        if (a.n_rows != a.n_cols) throw std::invalid_argument("DenseLU: matrix not square");
        n_ = a.n_rows;
        lu_.assign(static_cast<std::size_t>(n_) * n_, 0.0);
        for (int i = 0; i < n_; ++i)
            for (int e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e)
                lu_[static_cast<std::size_t>(i) * n_ + a.col_indices[e]] = a.values[e];
        factor();
    }

    int size() const { return n_; }

    Vector solve(const Vector& b) const {
        if (static_cast<int>(b.size()) != n_) throw std::invalid_argument("DenseLU::solve: size mismatch");
        Vector x(n_);
        for (int i = 0; i < n_; ++i) x[i] = b[piv_[i]];
        for (int i = 0; i < n_; ++i) {
            double s = x[i];
            for (int j = 0; j < i; ++j) s -= lu_[static_cast<std::size_t>(i) * n_ + j] * x[j];
            x[i] = s;
        }
        for (int i = n_ - 1; i >= 0; --i) {
            double s = x[i];
            for (int j = i + 1; j < n_; ++j) s -= lu_[static_cast<std::size_t>(i) * n_ + j] * x[j];
            x[i] = s / lu_[static_cast<std::size_t>(i) * n_ + i];
        }
        return x;
    }

private:
    void factor() {
        piv_.resize(n_);
        std::vector<int> perm(n_);
        for (int i = 0; i < n_; ++i) perm[i] = i;
        for (int k = 0; k < n_; ++k) {
            int pivot = k;
            double best = std::abs(lu_[static_cast<std::size_t>(k) * n_ + k]);
            for (int i = k + 1; i < n_; ++i) {
                const double v = std::abs(lu_[static_cast<std::size_t>(i) * n_ + k]);
                if (v > best) {
                    best = v;
                    pivot = i;
                }
            }
            if (best == 0.0) throw std::runtime_error("DenseLU: singular matrix");
            if (pivot != k) {
                for (int j = 0; j < n_; ++j)
                    std::swap(lu_[static_cast<std::size_t>(k) * n_ + j],
                              lu_[static_cast<std::size_t>(pivot) * n_ + j]);
                std::swap(perm[k], perm[pivot]);
            }
            const double d = lu_[static_cast<std::size_t>(k) * n_ + k];
            for (int i = k + 1; i < n_; ++i) {
                const double m = lu_[static_cast<std::size_t>(i) * n_ + k] / d;
                lu_[static_cast<std::size_t>(i) * n_ + k] = m;
                if (m == 0.0) continue;
                for (int j = k + 1; j < n_; ++j)
                    lu_[static_cast<std::size_t>(i) * n_ + j] -= m * lu_[static_cast<std::size_t>(k) * n_ + j];
            }
        }
        piv_ = perm;
    }

    int n_ = 0;
    std::vector<double> lu_;
    std::vector<int> piv_;
};

inline Vector direct_solve(const SparseMatrix& a, const Vector& b) {
    return DenseLU(a).solve(b);
}

}  // namespace miga
