#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace miga {

/// Univariate B-spline basis described by a non-decreasing knot sequence.
///
/// Sizes follow the usual convention: n_basis functions of degree `degree`
/// need n_basis + degree + 1 knots. The valid parameter range is
/// [knots[degree], knots[n_basis]]; the right endpoint is assigned to the
/// last non-empty span so the basis stays interpolatory there.
struct KnotVector {
    std::vector<double> knots;
    int degree = 0;
    int n_basis = 0;

    double param_begin() const { return knots[degree]; }
    double param_end() const { return knots[n_basis]; }

    /// 0-based index of the non-empty span [knots[s], knots[s+1]) containing
    /// xi. Repeated interior knots are skipped; xi == param_end() maps to the
    /// last span.
    int find_span(double xi) const {
        if (xi >= knots[n_basis]) return n_basis - 1;
        auto it = std::upper_bound(knots.begin() + degree, knots.begin() + n_basis + 1, xi);
        return static_cast<int>(it - knots.begin()) - 1;
    }

    /// Knot spans carrying positive measure, i.e. the elements of the mesh.
    std::vector<int> nonempty_spans() const {
        std::vector<int> spans;
        for (int s = degree; s < n_basis; ++s)
            if (knots[s + 1] > knots[s]) spans.push_back(s);
        return spans;
    }

    int n_elements() const { return static_cast<int>(nonempty_spans().size()); }
};

/// Open knot vector over [a, b] with n_elements uniform spans: end knots of
/// multiplicity degree + 1, interior knots simple, n_elements + degree basis
/// functions.
inline KnotVector open_uniform_knots(int degree, int n_elements, double a, double b) {
    if (degree < 1) throw std::invalid_argument("open_uniform_knots: degree must be >= 1");
    if (n_elements < 1) throw std::invalid_argument("open_uniform_knots: n_elements must be >= 1");
    if (!(a < b)) throw std::invalid_argument("open_uniform_knots: need a < b");
    KnotVector kv;
    kv.degree = degree;
    kv.n_basis = n_elements + degree;
    kv.knots.resize(kv.n_basis + degree + 1);
    const double h = (b - a) / n_elements;
    for (int i = 0; i <= degree; ++i) {
        kv.knots[i] = a;
        kv.knots[kv.knots.size() - 1 - i] = b;
    }
    for (int i = 1; i < n_elements; ++i) kv.knots[degree + i] = a + i * h;
    return kv;
}

/// Values (or first derivatives) of the degree + 1 basis functions that can
/// be non-zero at xi; first_index is the global index of the first of them.
struct BasisSpan {
    int first_index = 0;
    std::vector<double> values;
};

namespace detail {

// Triangular Cox-de Boor scheme for the non-zero functions on a span.
// Denominators are knot windows around a non-empty span and stay positive;
// the 0/0-as-0 convention is realized structurally by never touching
// functions outside the span.
inline void basis_on_span(const KnotVector& kv, int span, double xi, int up_to_degree,
                          double* out) {
    const auto& t = kv.knots;
    std::array<double, 32> left{}, right{};
    out[0] = 1.0;
    for (int j = 1; j <= up_to_degree; ++j) {
        left[j] = xi - t[span + 1 - j];
        right[j] = t[span + j] - xi;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double tmp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        out[j] = saved;
    }
}

inline void check_param(const KnotVector& kv, double xi) {
    if (!(xi >= kv.param_begin() && xi <= kv.param_end()))
        throw std::out_of_range("B-spline evaluation: parameter outside valid range");
}

}  // namespace detail

/// Values and first derivatives of the non-zero basis functions at xi.
inline void eval_values_and_derivs(const KnotVector& kv, double xi, BasisSpan& vals, BasisSpan& ders) {
    detail::check_param(kv, xi);
    const int p = kv.degree;
    const int span = kv.find_span(xi);
    vals.first_index = ders.first_index = span - p;
    vals.values.assign(p + 1, 0.0);
    ders.values.assign(p + 1, 0.0);
    detail::basis_on_span(kv, span, xi, p, vals.values.data());
    if (p == 0) return;
    // degree p-1 functions on the same span: indices span-p+1 .. span
    std::array<double, 32> lower{};
    detail::basis_on_span(kv, span, xi, p - 1, lower.data());
    const auto& t = kv.knots;
    for (int r = 0; r <= p; ++r) {
        const int i = span - p + r;
        double d = 0.0;
        if (r >= 1) {
            const double den = t[i + p] - t[i];
            if (den > 0.0) d += lower[r - 1] / den;
        }
        if (r <= p - 1) {
            const double den = t[i + p + 1] - t[i + 1];
            if (den > 0.0) d -= lower[r] / den;
        }
        ders.values[r] = p * d;
    }
}

/// deriv_order 0 returns basis values, 1 returns first derivatives.
inline BasisSpan eval_nonzero(const KnotVector& kv, double xi, int deriv_order = 0) {
    if (deriv_order != 0 && deriv_order != 1)
        throw std::invalid_argument("eval_nonzero: deriv_order must be 0 or 1");
    BasisSpan vals, ders;
    eval_values_and_derivs(kv, xi, vals, ders);
    return deriv_order == 0 ? vals : ders;
}

/// Tensor-product B-spline basis on the parameter square; global dof index
/// is iu + n_basis_u * iv (row-major over the first direction, shared with
/// assembly and the multigrid transfers).
struct TensorBasis2D {
    KnotVector basis_u;
    KnotVector basis_v;

    int n_dof() const { return basis_u.n_basis * basis_v.n_basis; }
    int global_index(int iu, int iv) const { return iu + basis_u.n_basis * iv; }
};

inline TensorBasis2D tensor_basis(int degree, int n_elements_per_dir) {
    return TensorBasis2D{open_uniform_knots(degree, n_elements_per_dir, 0.0, 1.0),
                         open_uniform_knots(degree, n_elements_per_dir, 0.0, 1.0)};
}

enum class TensorDeriv { value, grad };

struct TensorSample {
    std::vector<int> indices;                   // global dof indices
    std::vector<double> values;                 // filled for TensorDeriv::value
    std::vector<std::array<double, 2>> grads;   // filled for TensorDeriv::grad
};

inline TensorSample eval_tensor(const TensorBasis2D& basis, double xi, double eta, TensorDeriv which) {
    BasisSpan vu, du, vv, dv;
    eval_values_and_derivs(basis.basis_u, xi, vu, du);
    eval_values_and_derivs(basis.basis_v, eta, vv, dv);
    const int pu = basis.basis_u.degree, pv = basis.basis_v.degree;
    TensorSample s;
    s.indices.reserve((pu + 1) * (pv + 1));
    if (which == TensorDeriv::value)
        s.values.reserve((pu + 1) * (pv + 1));
    else
        s.grads.reserve((pu + 1) * (pv + 1));
    for (int b = 0; b <= pv; ++b) {
        for (int a = 0; a <= pu; ++a) {
            s.indices.push_back(basis.global_index(vu.first_index + a, vv.first_index + b));
            if (which == TensorDeriv::value)
                s.values.push_back(vu.values[a] * vv.values[b]);
            else
                s.grads.push_back({du.values[a] * vv.values[b], vu.values[a] * dv.values[b]});
        }
    }
    return s;
}

}  // namespace miga
