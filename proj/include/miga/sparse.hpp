#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <vector>

namespace miga {

using Vector = std::vector<double>;

/// Compressed sparse row matrix. Column indices are sorted and unique within
/// each row; all routines that build one keep that invariant so downstream
/// factorizations see a reproducible layout.
struct SparseMatrix {
    int n_rows = 0;
    int n_cols = 0;
    std::vector<int> row_offsets;  // size n_rows + 1
    std::vector<int> col_indices;  // size nnz, sorted per row
    Vector values;

    int nnz() const { return static_cast<int>(col_indices.size()); }

    static SparseMatrix identity(int n) {
        SparseMatrix a;
        a.n_rows = a.n_cols = n;
        a.row_offsets.resize(n + 1);
        a.col_indices.resize(n);
        a.values.assign(n, 1.0);
        for (int i = 0; i < n; ++i) {
            a.row_offsets[i] = i;
            a.col_indices[i] = i;
        }
        a.row_offsets[n] = n;
        return a;
    }

    /// Entry lookup by binary search; zero when the entry is not stored.
    double get(int i, int j) const {
        const int lo = row_offsets[i], hi = row_offsets[i + 1];
        auto begin = col_indices.begin();
        auto it = std::lower_bound(begin + lo, begin + hi, j);
        if (it != begin + hi && *it == j) return values[it - begin];
        return 0.0;
    }

    SparseMatrix transpose() const {
        SparseMatrix t;
        t.n_rows = n_cols;
        t.n_cols = n_rows;
        t.row_offsets.assign(n_cols + 1, 0);
        for (int c : col_indices) ++t.row_offsets[c + 1];
        for (int i = 0; i < n_cols; ++i) t.row_offsets[i + 1] += t.row_offsets[i];
        t.col_indices.resize(col_indices.size());
        t.values.resize(values.size());
        std::vector<int> next(t.row_offsets.begin(), t.row_offsets.end() - 1);
        for (int i = 0; i < n_rows; ++i) {
            for (int e = row_offsets[i]; e < row_offsets[i + 1]; ++e) {
                const int pos = next[col_indices[e]]++;
                t.col_indices[pos] = i;  // rows visited in order, so cols stay sorted
                t.values[pos] = values[e];
            }
        }
        return t;
    }
};

/// Row-wise ordered accumulator for matrices whose sparsity pattern is not
/// known up front. Intended for setup-time construction, not inner loops.
class SparseBuilder {
public:
    SparseBuilder(int n_rows, int n_cols) : n_rows_(n_rows), n_cols_(n_cols), rows_(n_rows) {}

    void add(int i, int j, double v) {
        if (i < 0 || i >= n_rows_ || j < 0 || j >= n_cols_)
            throw std::out_of_range("SparseBuilder::add: index out of range");
        rows_[i][j] += v;
    }

    void set(int i, int j, double v) {
        if (i < 0 || i >= n_rows_ || j < 0 || j >= n_cols_)
            throw std::out_of_range("SparseBuilder::set: index out of range");
        rows_[i][j] = v;
    }

    SparseMatrix build() const {
        SparseMatrix a;
        a.n_rows = n_rows_;
        a.n_cols = n_cols_;
        a.row_offsets.resize(n_rows_ + 1);
        a.row_offsets[0] = 0;
        std::size_t nnz = 0;
        for (const auto& r : rows_) nnz += r.size();
        a.col_indices.reserve(nnz);
        a.values.reserve(nnz);
        for (int i = 0; i < n_rows_; ++i) {
            for (const auto& [j, v] : rows_[i]) {
                a.col_indices.push_back(j);
                a.values.push_back(v);
            }
            a.row_offsets[i + 1] = static_cast<int>(a.col_indices.size());
        }
        return a;
    }

private:
    int n_rows_, n_cols_;
    std::vector<std::map<int, double>> rows_;
};

/// y = A x with a fixed per-row summation order.
inline void spmv(const SparseMatrix& a, const Vector& x, Vector& y) {
    if (static_cast<int>(x.size()) != a.n_cols)
        throw std::invalid_argument("spmv: dimension mismatch");
    y.resize(a.n_rows);
    for (int i = 0; i < a.n_rows; ++i) {
        double s = 0.0;
        for (int e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e)
            s += a.values[e] * x[a.col_indices[e]];
        y[i] = s;
    }
}

inline Vector spmv(const SparseMatrix& a, const Vector& x) {
    Vector y;
    spmv(a, x, y);
    return y;
}

/// y = A^T x without materializing the transpose.
inline void spmv_transpose(const SparseMatrix& a, const Vector& x, Vector& y) {
    if (static_cast<int>(x.size()) != a.n_rows)
        throw std::invalid_argument("spmv_transpose: dimension mismatch");
    y.assign(a.n_cols, 0.0);
    for (int i = 0; i < a.n_rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (int e = a.row_offsets[i]; e < a.row_offsets[i + 1]; ++e)
            y[a.col_indices[e]] += a.values[e] * xi;
    }
}

/// C = alpha A + beta B for matrices sharing row/col dimensions. The result
/// pattern is the union; when A and B share a pattern (the usual M, K case)
/// the layout is preserved.
inline SparseMatrix sparse_add(double alpha, const SparseMatrix& a, double beta, const SparseMatrix& b) {
    if (a.n_rows != b.n_rows || a.n_cols != b.n_cols)
        throw std::invalid_argument("sparse_add: dimension mismatch");
    SparseMatrix c;
    c.n_rows = a.n_rows;
    c.n_cols = a.n_cols;
    c.row_offsets.resize(a.n_rows + 1);
    c.row_offsets[0] = 0;
    c.col_indices.reserve(a.col_indices.size());
    c.values.reserve(a.values.size());
    for (int i = 0; i < a.n_rows; ++i) {
        int pa = a.row_offsets[i], ea = a.row_offsets[i + 1];
        int pb = b.row_offsets[i], eb = b.row_offsets[i + 1];
        while (pa < ea || pb < eb) {
            int ja = pa < ea ? a.col_indices[pa] : c.n_cols;
            int jb = pb < eb ? b.col_indices[pb] : c.n_cols;
            if (ja == jb) {
                c.col_indices.push_back(ja);
                c.values.push_back(alpha * a.values[pa++] + beta * b.values[pb++]);
            } else if (ja < jb) {
                c.col_indices.push_back(ja);
                c.values.push_back(alpha * a.values[pa++]);
            } else {
                c.col_indices.push_back(jb);
                c.values.push_back(beta * b.values[pb++]);
            }
        }
        c.row_offsets[i + 1] = static_cast<int>(c.col_indices.size());
    }
    return c;
}

inline Vector diagonal_of(const SparseMatrix& a) {
    Vector d(a.n_rows, 0.0);
    for (int i = 0; i < a.n_rows; ++i) d[i] = a.get(i, i);
    return d;
}

// Small dense-vector helpers shared by the solvers. Reductions run in index
// order so results do not depend on scheduling.
inline double dot(const Vector& x, const Vector& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(const Vector& x) { return std::sqrt(dot(x, x)); }

inline void axpy(double alpha, const Vector& x, Vector& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(double alpha, Vector& x) {
    for (double& v : x) v *= alpha;
}

inline Vector subtract(const Vector& x, const Vector& y) {
    Vector r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] - y[i];
    return r;
}

}  // namespace miga
