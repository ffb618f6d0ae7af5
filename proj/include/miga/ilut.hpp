#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <vector>

#include "miga/sparse.hpp"

namespace miga {

/// Dual-threshold incomplete LU factors. L is strictly lower triangular with
/// an implicit unit diagonal; U carries its diagonal as the first entry of
/// each row. With drop_tolerance 0 and fill_limit n the factors reproduce the
/// exact (unpivoted) LU decomposition.
struct IlutFactors {
    SparseMatrix lower;
    SparseMatrix upper;
    double drop_tolerance = 0.0;
    int fill_limit = 0;
};

/// Row-wise ILUT after Saad: eliminating row i, any computed entry below
/// tau * ||row_i(A)||_2 is dropped, then only the fill_limit largest entries
/// of the L-part and of the strict U-part are kept (diagonal always kept).
/// fill_limit <= 0 selects the average row fill ceil(nnz / n). Rows are
/// processed in natural order without pivoting; a vanished pivot throws.
inline IlutFactors ilut_factor(const SparseMatrix& a, double tau, int fill_limit) {
    if (a.n_rows != a.n_cols) throw std::invalid_argument("ilut_factor: matrix not square");
    const int n = a.n_rows;
    if (fill_limit <= 0) fill_limit = (a.nnz() + n - 1) / std::max(n, 1);

    IlutFactors f;
    f.drop_tolerance = tau;
    f.fill_limit = fill_limit;
    f.lower.n_rows = f.lower.n_cols = n;
    f.upper.n_rows = f.upper.n_cols = n;
    f.lower.row_offsets.assign(1, 0);
    f.upper.row_offsets.assign(1, 0);

    // U row start offsets double as direct access to the diagonal (first
    // entry of each finished row).
    Vector w(n, 0.0);
    std::vector<char> active(n, 0);
    std::vector<int> touched;
    touched.reserve(4 * fill_limit + 16);
    std::priority_queue<int, std::vector<int>, std::greater<int>> pending;

    struct Entry {
        int col;
        double val;
    };
    std::vector<Entry> lpart, upart;

    for (int i = 0; i < n; ++i) {
        double row_norm_sq = 0.0;
        for (int e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e) {
            const int j = a.col_indices[e];
            const double v = a.values[e];
            row_norm_sq += v * v;
            w[j] = v;
            if (!active[j]) {
                active[j] = 1;
                touched.push_back(j);
                if (j < i) pending.push(j);
            }
        }
        const double drop = tau * std::sqrt(row_norm_sq);

        while (!pending.empty()) {
            const int k = pending.top();
            pending.pop();
            const int urow = f.upper.row_offsets[k];
            const double beta = w[k] / f.upper.values[urow];
            if (std::abs(beta) < drop) {
                w[k] = 0.0;
                continue;
            }
            w[k] = beta;
            for (int e = urow + 1; e < f.upper.row_offsets[k + 1]; ++e) {
                const int j = f.upper.col_indices[e];
                if (!active[j]) {
                    active[j] = 1;
                    touched.push_back(j);
                    w[j] = 0.0;
                    if (j < i) pending.push(j);
                }
                w[j] -= beta * f.upper.values[e];
            }
        }

        lpart.clear();
        upart.clear();
        double diag = 0.0;
        bool diag_present = false;
        for (int j : touched) {
            const double v = w[j];
            w[j] = 0.0;
            active[j] = 0;
            if (j == i) {
                diag = v;
                diag_present = true;
            } else if (v != 0.0 && std::abs(v) >= drop) {
                (j < i ? lpart : upart).push_back({j, v});
            }
        }
        touched.clear();
        if (!diag_present || diag == 0.0)
            throw std::runtime_error("ilut_factor: zero pivot in row " + std::to_string(i));

        auto keep_largest = [fill_limit](std::vector<Entry>& part) {
            if (static_cast<int>(part.size()) > fill_limit) {
                std::nth_element(part.begin(), part.begin() + fill_limit, part.end(),
                                 [](const Entry& x, const Entry& y) {
                                     if (std::abs(x.val) != std::abs(y.val))
                                         return std::abs(x.val) > std::abs(y.val);
                                     return x.col < y.col;
                                 });
                part.resize(fill_limit);
            }
            std::sort(part.begin(), part.end(),
                      [](const Entry& x, const Entry& y) { return x.col < y.col; });
        };
        keep_largest(lpart);
        keep_largest(upart);

        for (const auto& e : lpart) {
            f.lower.col_indices.push_back(e.col);
            f.lower.values.push_back(e.val);
        }
        f.lower.row_offsets.push_back(f.lower.nnz());

        f.upper.col_indices.push_back(i);
        f.upper.values.push_back(diag);
        for (const auto& e : upart) {
            f.upper.col_indices.push_back(e.col);
            f.upper.values.push_back(e.val);
        }
        f.upper.row_offsets.push_back(f.upper.nnz());
    }
    return f;
}

/// z = U^{-1} L^{-1} r by forward then backward substitution.
inline void ilut_apply(const IlutFactors& f, const Vector& r, Vector& z) {
    const int n = f.lower.n_rows;
    if (static_cast<int>(r.size()) != n) throw std::invalid_argument("ilut_apply: size mismatch");
    z = r;
    for (int i = 0; i < n; ++i) {
        double s = z[i];
        for (int e = f.lower.row_offsets[i]; e < f.lower.row_offsets[i + 1]; ++e)
            s -= f.lower.values[e] * z[f.lower.col_indices[e]];
        z[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = z[i];
        const int begin = f.upper.row_offsets[i];
        for (int e = begin + 1; e < f.upper.row_offsets[i + 1]; ++e)
            s -= f.upper.values[e] * z[f.upper.col_indices[e]];
        z[i] = s / f.upper.values[begin];
    }
}

inline Vector ilut_apply(const IlutFactors& f, const Vector& r) {
    Vector z;
    ilut_apply(f, r, z);
    return z;
}

}  // namespace miga
