#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace miga {

/// Invertible map from the parameter square onto the physical domain.
/// The quarter annulus is the analytic polar map r(xi) (cos, sin)(pi eta / 2)
/// with r linear between the two radii; its Jacobian determinant is positive
/// on the whole closed square.
struct GeometryMap {
    enum class Kind { unit_square, quarter_annulus };

    Kind kind = Kind::unit_square;
    double r_inner = 1.0;
    double r_outer = 2.0;

    static GeometryMap unit_square() { return GeometryMap{}; }

    static GeometryMap quarter_annulus(double r_inner = 1.0, double r_outer = 2.0) {
        if (!(0.0 < r_inner && r_inner < r_outer))
            throw std::invalid_argument("quarter_annulus: need 0 < r_inner < r_outer");
        return GeometryMap{Kind::quarter_annulus, r_inner, r_outer};
    }

    void map(double xi, double eta, double& x, double& y) const {
        if (kind == Kind::unit_square) {
            x = xi;
            y = eta;
            return;
        }
        const double r = r_inner + xi * (r_outer - r_inner);
        const double phi = 0.5 * M_PI * eta;
        x = r * std::cos(phi);
        y = r * std::sin(phi);
    }

    /// Jacobian as [dx/dxi, dx/deta, dy/dxi, dy/deta].
    std::array<double, 4> jacobian(double xi, double eta) const {
        if (kind == Kind::unit_square) return {1.0, 0.0, 0.0, 1.0};
        const double dr = r_outer - r_inner;
        const double r = r_inner + xi * dr;
        const double phi = 0.5 * M_PI * eta;
        const double c = std::cos(phi), s = std::sin(phi);
        return {dr * c, -r * 0.5 * M_PI * s, dr * s, r * 0.5 * M_PI * c};
    }

    std::string name() const {
        return kind == Kind::unit_square ? "unit-square" : "quarter-annulus";
    }
};

inline double jacobian_det(const std::array<double, 4>& j) {
    return j[0] * j[3] - j[1] * j[2];
}

}  // namespace miga
