#pragma once

// Procedural camera frames of the seven household objects.
//
// Each class has its own silhouette and palette. Scale, position, hue,
// rotation, lighting and sensor noise vary per seed; the magnitudes live in
// JitterConfig so the confusability of small objects is tunable from config.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

#include "handadapt/core/config.hpp"
#include "handadapt/core/random.hpp"
#include "handadapt/core/types.hpp"
#include "handadapt/vision/image.hpp"

namespace handadapt::vision {

enum class ObjectClass : std::uint8_t { Apple, Cup, Pitcher, Box, Spoon, Dice, Banana };

inline constexpr std::array<ObjectClass, 7> kAllObjects = {
    ObjectClass::Apple, ObjectClass::Cup,  ObjectClass::Pitcher, ObjectClass::Box,
    ObjectClass::Spoon, ObjectClass::Dice, ObjectClass::Banana};

/// The six objects of the initial training set (banana is the novel one).
inline constexpr std::array<ObjectClass, 6> kInitialObjects = {
    ObjectClass::Apple, ObjectClass::Cup,   ObjectClass::Pitcher,
    ObjectClass::Box,   ObjectClass::Spoon, ObjectClass::Dice};

inline constexpr std::array<std::string_view, 7> kObjectNames = {"apple", "cup",  "pitcher", "box",
                                                                "spoon", "dice", "banana"};

constexpr std::string_view to_string(ObjectClass o) { return kObjectNames[static_cast<std::size_t>(o)]; }

inline std::optional<ObjectClass> object_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kObjectNames.size(); ++i)
        if (kObjectNames[i] == s) return static_cast<ObjectClass>(i);
    return std::nullopt;
}

/// Grasp each object is taught with.
constexpr GraspType canonical_grasp(ObjectClass o) {
    switch (o) {
    case ObjectClass::Apple: return GraspType::Spherical;
    case ObjectClass::Cup: return GraspType::Cylindrical;
    case ObjectClass::Pitcher: return GraspType::Hook;
    case ObjectClass::Box: return GraspType::Lateral;
    case ObjectClass::Spoon: return GraspType::Tripod;
    case ObjectClass::Dice: return GraspType::Pinch;
    case ObjectClass::Banana: return GraspType::Tripod;
    }
    return GraspType::Cylindrical;
}

struct ObjectSpec {
    ObjectClass cls = ObjectClass::Apple;
    double scale = 1.0;        ///< [0.5, 1.5]
    double dx = 0.0, dy = 0.0; ///< position jitter, pixels
    double hue_shift = 0.0;    ///< degrees
    double rotation = 0.0;     ///< radians
    double brightness = 1.0;   ///< lighting gain
    double noise = 0.0;        ///< per-pixel sensor noise (std dev, [0,1] units)
    std::uint64_t seed = 0;    ///< drives sensor noise and background texture
};

/// Ranges used to draw ObjectSpecs for corpora.
struct JitterConfig {
    double scale_min = 0.8, scale_max = 1.2;
    double position_px = 6.0;
    double hue_deg = 10.0;
    double rotation_rad = 0.5;
    double brightness = 0.15;
    double noise = 0.03;
    /// Extra rotation freedom for elongated objects (spoon, banana).
    double elongated_rotation_rad = 1.2;

    static JitterConfig from_config(const KeyValueConfig& cfg) {
        JitterConfig j;
        j.scale_min = cfg.get_double_or("jitter.scale_min", j.scale_min);
        j.scale_max = cfg.get_double_or("jitter.scale_max", j.scale_max);
        j.position_px = cfg.get_double_or("jitter.position_px", j.position_px);
        j.hue_deg = cfg.get_double_or("jitter.hue_deg", j.hue_deg);
        j.rotation_rad = cfg.get_double_or("jitter.rotation_rad", j.rotation_rad);
        j.brightness = cfg.get_double_or("jitter.brightness", j.brightness);
        j.noise = cfg.get_double_or("jitter.noise", j.noise);
        j.elongated_rotation_rad = cfg.get_double_or("jitter.elongated_rotation_rad", j.elongated_rotation_rad);
        return j;
    }
};

inline ObjectSpec draw_spec(ObjectClass cls, const JitterConfig& j, std::uint64_t seed) {
    auto rng = make_rng(seed);
    ObjectSpec s;
    s.cls = cls;
    s.scale = uniform(rng, j.scale_min, j.scale_max);
    s.dx = uniform(rng, -j.position_px, j.position_px);
    s.dy = uniform(rng, -j.position_px, j.position_px);
    s.hue_shift = uniform(rng, -j.hue_deg, j.hue_deg);
    const bool elongated = cls == ObjectClass::Spoon || cls == ObjectClass::Banana;
    const double rot = elongated ? j.elongated_rotation_rad : j.rotation_rad;
    s.rotation = uniform(rng, -rot, rot);
    s.brightness = 1.0 + uniform(rng, -j.brightness, j.brightness);
    s.noise = j.noise;
    s.seed = rng();
    return s;
}

namespace detail {

using Rgb = std::array<double, 3>;

inline Rgb hsv(double h_deg, double s, double v) {
    h_deg = std::fmod(h_deg, 360.0);
    if (h_deg < 0) h_deg += 360.0;
    const double c = v * s;
    const double hp = h_deg / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    Rgb rgb{};
    switch (static_cast<int>(hp)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
    }
    const double m = v - c;
    return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

inline double sq(double v) { return v * v; }

/// Shades a point in object-local coordinates (pixels at scale 1, origin at
/// the object centre, +v pointing down). Returns nullopt outside the object.
inline std::optional<Rgb> shade(ObjectClass cls, double u, double v, double hue) {
    switch (cls) {
    case ObjectClass::Apple: {
        if (std::fabs(u) < 1.0 && v > -18.0 && v < -12.0) return hsv(30 + hue, 0.7, 0.35); // stem
        const double r = std::hypot(u, v * 1.05);
        if (r >= 14.0) return std::nullopt;
        if (std::hypot(u + 5.0, v + 5.0) < 3.0) return hsv(hue, 0.3, 1.0); // highlight
        return hsv(hue, 0.8, 0.78 * (1.0 - 0.35 * r / 14.0));
    }
    case ObjectClass::Cup: {
        const double half = 9.0 - 0.08 * v;
        if (std::fabs(v) < 12.0 && std::fabs(u) < half) {
            if (sq(u / half) + sq((v + 11.0) / 2.0) < 1.0) return hsv(200 + hue, 0.5, 0.55); // rim
            return hsv(200 + hue, 0.35, 0.92 * (1.0 - 0.25 * std::fabs(u) / half));
        }
        const double hr = std::hypot(u - 10.5, v + 1.0);
        if (u > 9.0 && hr > 3.5 && hr < 6.0) return hsv(200 + hue, 0.35, 0.8);
        return std::nullopt;
    }
    case ObjectClass::Pitcher: {
        const double half = 11.0 + 0.12 * v;
        if (std::fabs(v) < 17.0 && std::fabs(u) < half)
            return hsv(218 + hue, 0.75, 0.5 * (1.0 - 0.3 * std::fabs(u) / half));
        if (v > -17.0 && v < -12.0 && u < -half && u > -half - 5.0 + (v + 17.0)) return hsv(218 + hue, 0.75, 0.45);
        const double hr = std::hypot(u - 13.0, v + 2.0);
        if (u > 9.0 && hr > 5.0 && hr < 8.5) return hsv(218 + hue, 0.75, 0.4);
        return std::nullopt;
    }
    case ObjectClass::Box: {
        if (std::fabs(u) >= 13.0 || std::fabs(v) >= 9.0) return std::nullopt;
        if (std::fabs(v) < 2.0) return hsv(0, 0.0, 0.95);
        if (u > 11.0 || v > 7.0) return hsv(28 + hue, 0.85, 0.55); // side faces
        return hsv(28 + hue, 0.8, 0.85);
    }
    case ObjectClass::Spoon: {
        const bool handle = u > -16.0 && u < 9.0 && std::fabs(v) < 1.6;
        const bool bowl = sq((u - 13.0) / 6.0) + sq(v / 3.8) < 1.0;
        if (!handle && !bowl) return std::nullopt;
        const double glint = bowl && std::hypot(u - 11.5, v + 1.0) < 1.5 ? 0.15 : 0.0;
        return hsv(210 + hue, 0.06, std::min(1.0, 0.72 + glint));
    }
    case ObjectClass::Dice: {
        if (std::fabs(u) >= 5.0 || std::fabs(v) >= 5.0) return std::nullopt;
        static constexpr std::array<std::array<double, 2>, 5> pips = {
            {{-2.8, -2.8}, {2.8, -2.8}, {0.0, 0.0}, {-2.8, 2.8}, {2.8, 2.8}}};
        for (const auto& p : pips)
            if (std::hypot(u - p[0], v - p[1]) < 1.0) return hsv(0, 0.0, 0.1);
        return hsv(45 + hue, 0.05, 0.96);
    }
    case ObjectClass::Banana: {
        const double r = std::hypot(u, v - 12.0);
        const double ang = std::atan2(u, -(v - 12.0)); // 0 straight up
        if (std::fabs(ang) > 1.0) return std::nullopt;
        const double taper = 3.5 * (1.0 - 0.6 * std::fabs(ang));
        if (std::fabs(r - 17.5) > taper) return std::nullopt;
        if (std::fabs(ang) > 0.88) return hsv(30 + hue, 0.7, 0.3); // tips
        return hsv(50 + hue, 0.85, 0.9 * (1.0 - 0.2 * std::fabs(r - 17.5) / 3.5));
    }
    }
    return std::nullopt;
}

struct Sample {
    bool inside = false;
    Rgb rgb{};
};

inline Sample sample_object(const ObjectSpec& spec, double px, double py) {
    const double cx = Image::kWidth / 2.0 + spec.dx;
    const double cy = Image::kHeight / 2.0 + spec.dy;
    const double c = std::cos(spec.rotation), s = std::sin(spec.rotation);
    const double x = (px - cx) / spec.scale, y = (py - cy) / spec.scale;
    const double u = c * x + s * y;
    const double v = -s * x + c * y;
    if (auto rgb = shade(spec.cls, u, v, spec.hue_shift)) return {true, *rgb};
    return {};
}

} // namespace detail

/// Renders the object over a table-top background. Pure and deterministic.
inline Image render(const ObjectSpec& spec) {
    Image img;
    auto rng = make_rng(spec.seed);
    const double cx = Image::kWidth / 2.0 + spec.dx;
    const double cy = Image::kHeight / 2.0 + spec.dy;
    const double shadow_r = 16.0 * spec.scale;
    for (int y = 0; y < Image::kHeight; ++y) {
        for (int x = 0; x < Image::kWidth; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            auto smp = detail::sample_object(spec, px, py);
            detail::Rgb rgb;
            if (smp.inside) {
                rgb = smp.rgb;
            } else {
                // table top with a vertical light gradient and a soft shadow
                const double grad = 0.62 + 0.12 * (1.0 - py / Image::kHeight);
                rgb = detail::hsv(35, 0.12, grad);
                const double d = std::hypot((px - cx - 3.0) / 1.2, py - cy - 4.0) / shadow_r;
                if (d < 1.0) {
                    const double k = 1.0 - 0.25 * (1.0 - d);
                    for (auto& ch : rgb) ch *= k;
                }
            }
            for (std::size_t c = 0; c < 3; ++c) {
                const double n = spec.noise > 0.0 ? spec.noise * normal01(rng) : 0.0;
                img.set(x, y, static_cast<int>(c), rgb[c] * spec.brightness + n);
            }
        }
    }
    return img;
}

/// Pixels covered by the object itself (no shadow).
inline std::vector<bool> object_mask(const ObjectSpec& spec) {
    std::vector<bool> mask(std::size_t{Image::kWidth} * Image::kHeight, false);
    for (int y = 0; y < Image::kHeight; ++y)
        for (int x = 0; x < Image::kWidth; ++x)
            mask[static_cast<std::size_t>(y) * Image::kWidth + static_cast<std::size_t>(x)] =
                detail::sample_object(spec, x + 0.5, y + 0.5).inside;
    return mask;
}

inline BoundingBox bounding_box(const std::vector<bool>& mask) {
    BoundingBox b{Image::kWidth, Image::kHeight, 0, 0};
    for (int y = 0; y < Image::kHeight; ++y)
        for (int x = 0; x < Image::kWidth; ++x)
            if (mask[static_cast<std::size_t>(y) * Image::kWidth + static_cast<std::size_t>(x)]) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x + 1);
                b.y1 = std::max(b.y1, y + 1);
            }
    if (b.x1 <= b.x0) return {};
    return b;
}

} // namespace handadapt::vision
