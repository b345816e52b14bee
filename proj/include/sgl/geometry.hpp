#pragma once

#include "sgl/graph.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace sgl {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
    Vec3 operator/(double k) const { return {x / k, y / k, z / k}; }
    bool operator==(const Vec3&) const = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return v / norm(v); }

enum class Axis { X = 0, Y = 1, Z = 2 };

inline constexpr Axis kAxes[] = {Axis::X, Axis::Y, Axis::Z};

inline double component(const Vec3& v, Axis a) {
    switch (a) {
    case Axis::X: return v.x;
    case Axis::Y: return v.y;
    case Axis::Z: return v.z;
    }
    return 0.0;
}

inline double& component(Vec3& v, Axis a) {
    switch (a) {
    case Axis::X: return v.x;
    case Axis::Y: return v.y;
    default: return v.z;
    }
}

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline Vec3 rotate_z(const Vec3& v, double yaw_deg) {
    const double c = std::cos(deg_to_rad(yaw_deg));
    const double s = std::sin(deg_to_rad(yaw_deg));
    return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

struct OrientedBox {
    Vec3 center;
    Vec3 half_extents{0.5, 0.5, 0.5};
    double yaw = 0.0;
};

struct SizeEstimate {
    double width = 1.0;
    double depth = 1.0;
    double height = 1.0;
    SizeProvenance provenance = SizeProvenance::Default;

    Extent3 extent() const { return {width, depth, height}; }
};

/// Fallback when neither a model answer nor configuration provides a size.
inline SizeEstimate default_size() { return {1.0, 1.0, 1.0, SizeProvenance::Default}; }

inline OrientedBox world_box(const ObjectNode& node) {
    const auto& f = node.feature;
    return {{f.x, f.y, f.z},
            {f.s * node.base_size.width / 2.0, f.s * node.base_size.depth / 2.0,
             f.s * node.base_size.height / 2.0},
            f.r};
}

inline std::array<Vec3, 8> corners(const OrientedBox& box) {
    std::array<Vec3, 8> out;
    for (int i = 0; i < 8; ++i) {
        const Vec3 local{(i & 1) ? box.half_extents.x : -box.half_extents.x,
                         (i & 2) ? box.half_extents.y : -box.half_extents.y,
                         (i & 4) ? box.half_extents.z : -box.half_extents.z};
        out[static_cast<std::size_t>(i)] = box.center + rotate_z(local, box.yaw);
    }
    return out;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double center() const { return 0.5 * (lo + hi); }
    double half_width() const { return 0.5 * (hi - lo); }
    bool contains(const Interval& inner) const { return inner.lo >= lo && inner.hi <= hi; }
};

/// Exact axis interval of a (possibly yawed) box from its vertex projections.
inline Interval project(const OrientedBox& box, Axis axis) {
    Interval iv{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& c : corners(box)) {
        const double v = component(c, axis);
        iv.lo = std::min(iv.lo, v);
        iv.hi = std::max(iv.hi, v);
    }
    return iv;
}

/// Distance between the boxes' intervals on `axis`; negative by the overlap
/// length when they overlap. Symmetric in its box arguments.
inline double signed_gap(const OrientedBox& a, const OrientedBox& b, Axis axis) {
    const Interval ia = project(a, axis);
    const Interval ib = project(b, axis);
    return std::max(ia.lo, ib.lo) - std::min(ia.hi, ib.hi);
}

inline double bounding_diameter(const OrientedBox& box) { return 2.0 * norm(box.half_extents); }

/// Mean of the two bounding-sphere diameters; the unit for relative distances.
inline double characteristic_length(const OrientedBox& a, const OrientedBox& b) {
    return 0.5 * (bounding_diameter(a) + bounding_diameter(b));
}

struct Aabb {
    Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};

    bool valid() const { return lo.x <= hi.x; }
    void expand(const Vec3& p) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    void expand(const OrientedBox& b) {
        for (const auto& c : corners(b))
            expand(c);
    }
    Vec3 center() const { return (lo + hi) * 0.5; }
    Vec3 size() const { return hi - lo; }
    Interval on(Axis a) const { return {component(lo, a), component(hi, a)}; }
};

inline Aabb bounds_of(std::span<const OrientedBox> boxes) {
    Aabb out;
    for (const auto& b : boxes)
        out.expand(b);
    return out;
}

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; std distributions are not
/// reproducible across standard libraries.
inline double unit_real(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace detail

/// Deterministic pseudo-random points on the box surface, area-weighted.
inline std::vector<Vec3> sample_points(const OrientedBox& box, std::size_t n, std::uint64_t seed) {
    if (n == 0)
        throw Error(ErrorCode::InvalidArgument, "sample_points needs n >= 1");
    std::mt19937_64 rng(seed);
    const Vec3& h = box.half_extents;
    // Face pairs normal to x, y, z.
    const std::array<double, 3> area{h.y * h.z, h.x * h.z, h.x * h.y};
    const double total = area[0] + area[1] + area[2];
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pick = detail::unit_real(rng) * total;
        const int axis = pick < area[0] ? 0 : (pick < area[0] + area[1] ? 1 : 2);
        const double side = detail::unit_real(rng) < 0.5 ? -1.0 : 1.0;
        const double u = 2.0 * detail::unit_real(rng) - 1.0;
        const double v = 2.0 * detail::unit_real(rng) - 1.0;
        Vec3 local;
        switch (axis) {
        case 0: local = {side * h.x, u * h.y, v * h.z}; break;
        case 1: local = {u * h.x, side * h.y, v * h.z}; break;
        default: local = {u * h.x, v * h.y, side * h.z}; break;
        }
        pts.push_back(box.center + rotate_z(local, box.yaw));
    }
    return pts;
}

} // namespace sgl
