#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "miga/geometry.hpp"
#include "miga/quadrature.hpp"
#include "miga/sparse.hpp"
#include "miga/spline.hpp"
#include "miga/thread_pool.hpp"

namespace miga {

/// Map between the full tensor-product dof set and the free dofs left after
/// eliminating homogeneous-Dirichlet boundary functions. With open knot
/// vectors exactly the first/last row and column of the tensor grid touch
/// the boundary.
struct DofMap {
    int n_total = 0;
    int n_free = 0;
    std::vector<int> free_of_global;  // -1 for constrained dofs
    std::vector<int> global_of_free;

    static DofMap interior(const TensorBasis2D& basis) {
        DofMap dm;
        const int nu = basis.basis_u.n_basis, nv = basis.basis_v.n_basis;
        dm.n_total = nu * nv;
        dm.free_of_global.assign(dm.n_total, -1);
        for (int iv = 1; iv < nv - 1; ++iv) {
            for (int iu = 1; iu < nu - 1; ++iu) {
                const int g = basis.global_index(iu, iv);
                dm.free_of_global[g] = dm.n_free++;
                dm.global_of_free.push_back(g);
            }
        }
        return dm;
    }

    bool constrained(int global) const { return free_of_global[global] < 0; }
};

inline Vector restrict_vector(const DofMap& dm, const Vector& full) {
    if (static_cast<int>(full.size()) != dm.n_total)
        throw std::invalid_argument("restrict_vector: dimension mismatch");
    Vector v(dm.n_free);
    for (int i = 0; i < dm.n_free; ++i) v[i] = full[dm.global_of_free[i]];
    return v;
}

inline Vector extend_vector(const DofMap& dm, const Vector& free) {
    if (static_cast<int>(free.size()) != dm.n_free)
        throw std::invalid_argument("extend_vector: dimension mismatch");
    Vector v(dm.n_total, 0.0);
    for (int i = 0; i < dm.n_free; ++i) v[dm.global_of_free[i]] = free[i];
    return v;
}

/// Principal submatrix over the free dofs.
inline SparseMatrix eliminate_dirichlet(const SparseMatrix& a, const DofMap& dm) {
    if (a.n_rows != dm.n_total || a.n_cols != dm.n_total)
        throw std::invalid_argument("eliminate_dirichlet: dimension mismatch");
    SparseMatrix r;
    r.n_rows = r.n_cols = dm.n_free;
    r.row_offsets.assign(1, 0);
    for (int i = 0; i < dm.n_free; ++i) {
        const int g = dm.global_of_free[i];
        for (int e = a.row_offsets[g]; e < a.row_offsets[g + 1]; ++e) {
            const int jf = dm.free_of_global[a.col_indices[e]];
            if (jf >= 0) {
                r.col_indices.push_back(jf);
                r.values.push_back(a.values[e]);
            }
        }
        r.row_offsets.push_back(r.nnz());
    }
    return r;
}

/// Per-element 1D quadrature data; weights carry the span length so that
/// per-span weights sum to the span measure.
struct SpanQuadrature {
    int n_per_span = 0;
    std::vector<double> span_begin, span_end;
    std::vector<double> nodes;    // [element * n_per_span + q], parametric coordinates
    std::vector<double> weights;  // same layout

    int n_elements() const { return static_cast<int>(span_begin.size()); }

    static SpanQuadrature build(const KnotVector& kv, int n_per_span) {
        const GaussRule rule = gauss_legendre_01(n_per_span);
        SpanQuadrature q;
        q.n_per_span = n_per_span;
        for (int s : kv.nonempty_spans()) {
            const double a = kv.knots[s], b = kv.knots[s + 1];
            q.span_begin.push_back(a);
            q.span_end.push_back(b);
            for (int i = 0; i < n_per_span; ++i) {
                q.nodes.push_back(a + rule.nodes[i] * (b - a));
                q.weights.push_back(rule.weights[i] * (b - a));
            }
        }
        return q;
    }
};

/// Tensor Gauss-Legendre rule over all knot spans of a 2D basis.
struct QuadratureRule {
    SpanQuadrature u, v;

    static QuadratureRule tensor_gauss(const TensorBasis2D& basis, int n_per_dir) {
        return {SpanQuadrature::build(basis.basis_u, n_per_dir),
                SpanQuadrature::build(basis.basis_v, n_per_dir)};
    }
};

namespace detail {

// Quadrature nodes plus basis values/derivatives per element of one
// parametric direction.
struct DirTables {
    int p = 0;
    SpanQuadrature quad;
    std::vector<double> vals;  // [(e * nq + q) * (p + 1) + a]
    std::vector<double> ders;
    std::vector<int> first;    // first non-zero basis index per element

    static DirTables build(const KnotVector& kv, int n_per_span) {
        DirTables t;
        t.p = kv.degree;
        t.quad = SpanQuadrature::build(kv, n_per_span);
        const int nel = t.quad.n_elements(), nq = n_per_span;
        t.vals.resize(static_cast<std::size_t>(nel) * nq * (t.p + 1));
        t.ders.resize(t.vals.size());
        t.first.resize(nel);
        BasisSpan vs, ds;
        for (int e = 0; e < nel; ++e) {
            for (int q = 0; q < nq; ++q) {
                eval_values_and_derivs(kv, t.quad.nodes[e * nq + q], vs, ds);
                t.first[e] = vs.first_index;
                const std::size_t base = (static_cast<std::size_t>(e) * nq + q) * (t.p + 1);
                for (int a = 0; a <= t.p; ++a) {
                    t.vals[base + a] = vs.values[a];
                    t.ders[base + a] = ds.values[a];
                }
            }
        }
        return t;
    }
};

// CSR skeleton whose row (iu, iv) holds the column rectangle
// [iu + lo, iu + hi] x [iv + lo, iv + hi], clamped to the column grid. For a
// Galerkin matrix (lo, hi) = (-p, p); for the p-to-linear transfer (-p, 1).
// This reproduces exactly the union of shared-element supports.
inline SparseMatrix band_pattern(int n_row_u, int n_row_v, int n_col_u, int n_col_v, int lo, int hi) {
    SparseMatrix a;
    a.n_rows = n_row_u * n_row_v;
    a.n_cols = n_col_u * n_col_v;
    a.row_offsets.resize(a.n_rows + 1);
    a.row_offsets[0] = 0;
    std::size_t nnz = 0;
    for (int iv = 0; iv < n_row_v; ++iv) {
        const int wv = std::min(n_col_v - 1, iv + hi) - std::max(0, iv + lo) + 1;
        for (int iu = 0; iu < n_row_u; ++iu) {
            const int wu = std::min(n_col_u - 1, iu + hi) - std::max(0, iu + lo) + 1;
            nnz += static_cast<std::size_t>(wu) * wv;
            a.row_offsets[iu + n_row_u * iv + 1] = static_cast<int>(nnz);
        }
    }
    a.col_indices.resize(nnz);
    a.values.assign(nnz, 0.0);
    for (int iv = 0; iv < n_row_v; ++iv) {
        const int jvlo = std::max(0, iv + lo), jvhi = std::min(n_col_v - 1, iv + hi);
        for (int iu = 0; iu < n_row_u; ++iu) {
            const int julo = std::max(0, iu + lo), juhi = std::min(n_col_u - 1, iu + hi);
            int pos = a.row_offsets[iu + n_row_u * iv];
            for (int jv = jvlo; jv <= jvhi; ++jv)
                for (int ju = julo; ju <= juhi; ++ju) a.col_indices[pos++] = ju + n_col_u * jv;
        }
    }
    return a;
}

// Position of column (ju, jv) inside the banded row (iu, iv).
inline int band_position(const SparseMatrix& a, int n_row_u, int n_col_u, int n_col_v, int lo,
                         int hi, int iu, int iv, int ju, int jv) {
    const int julo = std::max(0, iu + lo), juhi = std::min(n_col_u - 1, iu + hi);
    const int jvlo = std::max(0, iv + lo);
    const int wu = juhi - julo + 1;
    return a.row_offsets[iu + n_row_u * iv] + (jv - jvlo) * wu + (ju - julo);
}

}  // namespace detail

/// Mass and stiffness over all dofs (boundary included), assembled with
/// tensor Gauss quadrature per knot span. Element blocks are computed in
/// parallel over fixed-size chunks and scattered serially in element order,
/// so results are bit-identical for any worker count.
struct SystemMatrices {
    SparseMatrix mass;
    SparseMatrix stiffness;
};

namespace detail {

struct AssemblyRequest {
    bool want_mass = false;
    bool want_stiffness = false;
    const std::function<double(double, double)>* load_fn = nullptr;  // physical coordinates
};

struct AssemblyResult {
    SparseMatrix mass, stiffness;
    Vector load;
};

inline AssemblyResult assemble_core(const TensorBasis2D& basis, const GeometryMap& geom,
                                    const AssemblyRequest& req, int n_quad, ThreadPool* pool) {
    const int pu = basis.basis_u.degree, pv = basis.basis_v.degree;
    if (n_quad <= 0) n_quad = std::max(pu, pv) + 1;
    const DirTables tu = DirTables::build(basis.basis_u, n_quad);
    const DirTables tv = DirTables::build(basis.basis_v, n_quad);
    const int nel_u = tu.quad.n_elements(), nel_v = tv.quad.n_elements();
    const int n_el = nel_u * nel_v;
    const int nq = n_quad;
    const int bs = (pu + 1) * (pv + 1);
    const int nu = basis.basis_u.n_basis, nv = basis.basis_v.n_basis;

    AssemblyResult out;
    if (req.want_mass) out.mass = band_pattern(nu, nv, nu, nv, -pu, pu);
    if (req.want_stiffness) out.stiffness = band_pattern(nu, nv, nu, nv, -pu, pu);
    if (req.load_fn) out.load.assign(basis.n_dof(), 0.0);

    const int chunk = 64;  // fixed, so the scatter order never depends on workers
    std::vector<double> mass_blocks, stiff_blocks, load_blocks;
    if (req.want_mass) mass_blocks.resize(static_cast<std::size_t>(chunk) * bs * bs);
    if (req.want_stiffness) stiff_blocks.resize(static_cast<std::size_t>(chunk) * bs * bs);
    if (req.load_fn) load_blocks.resize(static_cast<std::size_t>(chunk) * bs);

    auto element_kernel = [&](int el, double* me, double* ke, double* fe) {
        const int eu = el % nel_u, ev = el / nel_u;
        if (me) std::fill(me, me + bs * bs, 0.0);
        if (ke) std::fill(ke, ke + bs * bs, 0.0);
        if (fe) std::fill(fe, fe + bs, 0.0);
        std::vector<double> nvals(bs), gx(bs), gy(bs);
        for (int qv = 0; qv < nq; ++qv) {
            const std::size_t vbase = (static_cast<std::size_t>(ev) * nq + qv) * (pv + 1);
            const double eta = tv.quad.nodes[ev * nq + qv];
            const double wv = tv.quad.weights[ev * nq + qv];
            for (int qu = 0; qu < nq; ++qu) {
                const std::size_t ubase = (static_cast<std::size_t>(eu) * nq + qu) * (pu + 1);
                const double xi = tu.quad.nodes[eu * nq + qu];
                const double wu = tu.quad.weights[eu * nq + qu];
                const auto j = geom.jacobian(xi, eta);
                const double det = jacobian_det(j);
                const double w = wu * wv * det;
                for (int b = 0; b <= pv; ++b) {
                    for (int a = 0; a <= pu; ++a) {
                        const int loc = a + (pu + 1) * b;
                        nvals[loc] = tu.vals[ubase + a] * tv.vals[vbase + b];
                        if (ke) {
                            const double gxp = tu.ders[ubase + a] * tv.vals[vbase + b];
                            const double gyp = tu.vals[ubase + a] * tv.ders[vbase + b];
                            gx[loc] = (j[3] * gxp - j[2] * gyp) / det;
                            gy[loc] = (-j[1] * gxp + j[0] * gyp) / det;
                        }
                    }
                }
                if (me || ke) {
                    for (int r = 0; r < bs; ++r) {
                        for (int c = r; c < bs; ++c) {
                            if (me) {
                                const double m = w * nvals[r] * nvals[c];
                                me[r * bs + c] += m;
                                if (c != r) me[c * bs + r] += m;
                            }
                            if (ke) {
                                const double k = w * (gx[r] * gx[c] + gy[r] * gy[c]);
                                ke[r * bs + c] += k;
                                if (c != r) ke[c * bs + r] += k;
                            }
                        }
                    }
                }
                if (fe) {
                    double x, y;
                    geom.map(xi, eta, x, y);
                    const double fv = (*req.load_fn)(x, y) * w;
                    for (int r = 0; r < bs; ++r) fe[r] += fv * nvals[r];
                }
            }
        }
    };

    for (int begin = 0; begin < n_el; begin += chunk) {
        const int count = std::min(chunk, n_el - begin);
        auto run = [&](std::size_t c) {
            const int el = begin + static_cast<int>(c);
            element_kernel(el, req.want_mass ? &mass_blocks[c * bs * bs] : nullptr,
                           req.want_stiffness ? &stiff_blocks[c * bs * bs] : nullptr,
                           req.load_fn ? &load_blocks[c * bs] : nullptr);
        };
        if (pool)
            pool->parallel_for(count, run);
        else
            for (int c = 0; c < count; ++c) run(c);

        for (int c = 0; c < count; ++c) {
            const int el = begin + c;
            const int eu = el % nel_u, ev = el / nel_u;
            const int fu = tu.first[eu], fv = tv.first[ev];
            for (int b = 0; b <= pv; ++b) {
                for (int a = 0; a <= pu; ++a) {
                    const int r = a + (pu + 1) * b;
                    const int iu = fu + a, iv = fv + b;
                    if (req.load_fn) out.load[basis.global_index(iu, iv)] += load_blocks[c * bs + r];
                    if (!req.want_mass && !req.want_stiffness) continue;
                    for (int d = 0; d <= pv; ++d) {
                        for (int e = 0; e <= pu; ++e) {
                            const int cl = e + (pu + 1) * d;
                            const int ju = fu + e, jv = fv + d;
                            if (req.want_mass) {
                                const int pos = band_position(out.mass, nu, nu, nv, -pu, pu, iu, iv, ju, jv);
                                out.mass.values[pos] += mass_blocks[static_cast<std::size_t>(c) * bs * bs + r * bs + cl];
                            }
                            if (req.want_stiffness) {
                                const int pos = band_position(out.stiffness, nu, nu, nv, -pu, pu, iu, iv, ju, jv);
                                out.stiffness.values[pos] += stiff_blocks[static_cast<std::size_t>(c) * bs * bs + r * bs + cl];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace detail

inline SystemMatrices assemble_system(const TensorBasis2D& basis, const GeometryMap& geom,
                                      int n_quad = 0, ThreadPool* pool = nullptr) {
    detail::AssemblyRequest req;
    req.want_mass = req.want_stiffness = true;
    auto r = detail::assemble_core(basis, geom, req, n_quad, pool);
    return {std::move(r.mass), std::move(r.stiffness)};
}

inline SparseMatrix assemble_mass(const TensorBasis2D& basis, const GeometryMap& geom,
                                  int n_quad = 0, ThreadPool* pool = nullptr) {
    detail::AssemblyRequest req;
    req.want_mass = true;
    return detail::assemble_core(basis, geom, req, n_quad, pool).mass;
}

inline SparseMatrix assemble_stiffness(const TensorBasis2D& basis, const GeometryMap& geom,
                                       int n_quad = 0, ThreadPool* pool = nullptr) {
    detail::AssemblyRequest req;
    req.want_stiffness = true;
    return detail::assemble_core(basis, geom, req, n_quad, pool).stiffness;
}

inline Vector assemble_load(const TensorBasis2D& basis, const GeometryMap& geom,
                            const std::function<double(double, double)>& f, int n_quad = 0,
                            ThreadPool* pool = nullptr) {
    detail::AssemblyRequest req;
    req.load_fn = &f;
    return detail::assemble_core(basis, geom, req, n_quad, pool).load;
}

/// Cross mass matrix (P^p_1)_{ij} = integral of Phi_{i,p} Phi_{j,1}; rows run
/// over the high-order basis, columns over the order-1 basis on the same
/// knot spans.
inline SparseMatrix assemble_mixed_transfer(const TensorBasis2D& basis_high,
                                            const TensorBasis2D& basis_low,
                                            const GeometryMap& geom) {
    const int p = basis_high.basis_u.degree;
    if (basis_low.basis_u.degree != 1 || basis_low.basis_v.degree != 1)
        throw std::invalid_argument("assemble_mixed_transfer: low-order basis must have degree 1");
    const auto tu_hi = detail::DirTables::build(basis_high.basis_u, p + 1);
    const auto tv_hi = detail::DirTables::build(basis_high.basis_v, p + 1);
    const auto spans_hi = basis_high.basis_u.nonempty_spans();
    const auto spans_lo = basis_low.basis_u.nonempty_spans();
    if (tu_hi.quad.n_elements() != basis_low.basis_u.n_elements() ||
        tv_hi.quad.n_elements() != basis_low.basis_v.n_elements())
        throw std::invalid_argument("assemble_mixed_transfer: bases on different meshes");
    for (std::size_t e = 0; e < spans_hi.size(); ++e) {
        if (std::abs(basis_high.basis_u.knots[spans_hi[e]] - basis_low.basis_u.knots[spans_lo[e]]) > 1e-14)
            throw std::invalid_argument("assemble_mixed_transfer: bases on different meshes");
    }

    const int nu_h = basis_high.basis_u.n_basis, nv_h = basis_high.basis_v.n_basis;
    const int nu_l = basis_low.basis_u.n_basis, nv_l = basis_low.basis_v.n_basis;
    SparseMatrix t = detail::band_pattern(nu_h, nv_h, nu_l, nv_l, -p, 1);

    const int nq = p + 1;
    const int nel_u = tu_hi.quad.n_elements(), nel_v = tv_hi.quad.n_elements();
    BasisSpan lv_u, lv_v;
    for (int ev = 0; ev < nel_v; ++ev) {
        for (int eu = 0; eu < nel_u; ++eu) {
            for (int qv = 0; qv < nq; ++qv) {
                const double eta = tv_hi.quad.nodes[ev * nq + qv];
                lv_v = eval_nonzero(basis_low.basis_v, eta);
                const std::size_t vbase = (static_cast<std::size_t>(ev) * nq + qv) * (p + 1);
                for (int qu = 0; qu < nq; ++qu) {
                    const double xi = tu_hi.quad.nodes[eu * nq + qu];
                    lv_u = eval_nonzero(basis_low.basis_u, xi);
                    const std::size_t ubase = (static_cast<std::size_t>(eu) * nq + qu) * (p + 1);
                    const double w = tu_hi.quad.weights[eu * nq + qu] * tv_hi.quad.weights[ev * nq + qv] *
                                     jacobian_det(geom.jacobian(xi, eta));
                    for (int b = 0; b <= p; ++b) {
                        for (int a = 0; a <= p; ++a) {
                            const double hi_val = tu_hi.vals[ubase + a] * tv_hi.vals[vbase + b];
                            const int iu = tu_hi.first[eu] + a, iv = tv_hi.first[ev] + b;
                            for (int d = 0; d <= 1; ++d) {
                                for (int e = 0; e <= 1; ++e) {
                                    const int ju = lv_u.first_index + e, jv = lv_v.first_index + d;
                                    const double lo_val = lv_u.values[e] * lv_v.values[d];
                                    const int pos = detail::band_position(t, nu_h, nu_l, nv_l, -p, 1,
                                                                          iu, iv, ju, jv);
                                    t.values[pos] += w * hi_val * lo_val;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return t;
}

/// Row-sum lumped mass diagonal; valid because B-spline products are
/// non-negative and the basis sums to one.
inline Vector lump_mass(const SparseMatrix& m) {
    Vector d(m.n_rows, 0.0);
    for (int i = 0; i < m.n_rows; ++i) {
        double s = 0.0;
        for (int e = m.row_offsets[i]; e < m.row_offsets[i + 1]; ++e) s += m.values[e];
        if (!(s > 0.0)) throw std::runtime_error("lump_mass: non-positive row sum");
        d[i] = s;
    }
    return d;
}

}  // namespace miga
