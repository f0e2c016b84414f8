#pragma once

// Palm-frame geometry: planar three-link finger chains and convex objects.
//
// Palm frame: x distal along the fingers, y radial (toward the thumb), z
// palmar (out of the palm). Each chain lies in the plane spanned by its
// straight direction and its flexion direction, so an object only matters
// through its cross-section in that plane.

#include <algorithm>
#include <array>
#include <cmath>
#include <string_view>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace handadapt::handsim {

using Vec3 = Eigen::Vector3d;

enum class ShapeClass : std::uint8_t { Sphere, Cylinder, Box };

constexpr std::string_view to_string(ShapeClass s) {
    switch (s) {
    case ShapeClass::Sphere: return "sphere";
    case ShapeClass::Cylinder: return "cylinder";
    case ShapeClass::Box: return "box";
    }
    return "sphere";
}

/// Cylinders lie across the palm (axis along y); boxes are cubes of side
/// 2 * radius.
struct SimObject {
    ShapeClass shape = ShapeClass::Sphere;
    double radius = 0.03;       ///< m, > 0
    Vec3 position = Vec3::Zero(); ///< palm frame, m
    double length = 0.10;       ///< cylinder length along y, m
};

/// Signed distance from p to the object surface, negative inside.
inline double signed_distance(const SimObject& o, const Vec3& p) {
    const Vec3 d = p - o.position;
    switch (o.shape) {
    case ShapeClass::Sphere: return d.norm() - o.radius;
    case ShapeClass::Cylinder: {
        const double radial = std::hypot(d.x(), d.z()) - o.radius;
        const double axial = std::abs(d.y()) - o.length / 2;
        const double outside = std::hypot(std::max(radial, 0.0), std::max(axial, 0.0));
        return outside + std::min(std::max(radial, axial), 0.0);
    }
    case ShapeClass::Box: {
        const Vec3 q = d.cwiseAbs() - Vec3::Constant(o.radius);
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    }
    return 0.0;
}

/// Minimum distance from segment [a, b] to the object. The distance to a
/// convex set is convex along a line, so a golden-section search is exact up
/// to its tolerance.
inline double segment_distance(const SimObject& o, const Vec3& a, const Vec3& b) {
    const double phi = (std::sqrt(5.0) - 1) / 2;
    double lo = 0.0, hi = 1.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = signed_distance(o, a + x1 * (b - a)), f2 = signed_distance(o, a + x2 * (b - a));
    for (int i = 0; i < 60; ++i) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = signed_distance(o, a + x1 * (b - a));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = signed_distance(o, a + x2 * (b - a));
        }
    }
    return std::min({f1, f2, signed_distance(o, a), signed_distance(o, b)});
}

/// A planar chain: joint i rotates link i and everything distal to it
/// toward `flex`.
struct Chain {
    Vec3 base = Vec3::Zero();
    Vec3 straight = Vec3::UnitX(); ///< link direction at zero flexion
    Vec3 flex = Vec3::UnitZ();     ///< direction flexion curls toward, orthogonal to `straight`
    std::array<double, 3> links{0.045, 0.025, 0.020}; ///< proximal to distal, m
    double radius = 0.008;                            ///< link half-thickness, m
};

using JointAngles = std::array<double, 3>;

/// Joint positions base, and the three link ends.
inline std::array<Vec3, 4> chain_points(const Chain& c, const JointAngles& q) {
    std::array<Vec3, 4> p;
    p[0] = c.base;
    double phi = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        phi += q[i];
        p[i + 1] = p[i] + c.links[i] * (std::cos(phi) * c.straight + std::sin(phi) * c.flex);
    }
    return p;
}

/// Smallest clearance between the chain's links and the object surface,
/// negative when a link penetrates.
inline double chain_clearance(const Chain& c, const JointAngles& q, const SimObject& o) {
    const auto p = chain_points(c, q);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 3; ++i) best = std::min(best, segment_distance(o, p[i], p[i + 1]) - c.radius);
    return best;
}

/// Rotation about the palm x axis by psi (y toward z).
inline Vec3 rotate_x(const Vec3& v, double psi) { return Eigen::AngleAxisd(psi, Vec3::UnitX()) * v; }

} // namespace handadapt::handsim
