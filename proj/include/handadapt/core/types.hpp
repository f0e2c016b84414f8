#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace handadapt {

/// Simulation time in milliseconds.
using Tick = std::int64_t;

/// The six-grasp taxonomy. Order is the classifier's output order.
enum class GraspType : std::uint8_t { Cylindrical, Spherical, Hook, Lateral, Pinch, Tripod };

inline constexpr std::size_t kGraspCount = 6;

inline constexpr std::array<GraspType, kGraspCount> kAllGrasps = {
    GraspType::Cylindrical, GraspType::Spherical, GraspType::Hook,
    GraspType::Lateral,     GraspType::Pinch,     GraspType::Tripod};

inline constexpr std::array<std::string_view, kGraspCount> kGraspNames = {
    "cylindrical", "spherical", "hook", "lateral", "pinch", "tripod"};

constexpr std::string_view to_string(GraspType g) { return kGraspNames[static_cast<std::size_t>(g)]; }

constexpr std::size_t index_of(GraspType g) { return static_cast<std::size_t>(g); }

inline std::optional<GraspType> grasp_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kGraspCount; ++i)
        if (kGraspNames[i] == s) return static_cast<GraspType>(i);
    return std::nullopt;
}

constexpr bool is_power_grasp(GraspType g) {
    return g == GraspType::Cylindrical || g == GraspType::Spherical || g == GraspType::Hook;
}

/// Grounding symbols: the six grasps followed by the three hand commands.
enum class Grounding : std::uint8_t {
    Cylindrical, Spherical, Hook, Lateral, Pinch, Tripod, OpenHand, CloseHand, StopHand
};

inline constexpr std::size_t kGroundingCount = 9;

inline constexpr std::array<std::string_view, kGroundingCount> kGroundingNames = {
    "cylindrical", "spherical", "hook",      "lateral",  "pinch",
    "tripod",      "open_hand", "close_hand", "stop_hand"};

constexpr std::string_view to_string(Grounding g) { return kGroundingNames[static_cast<std::size_t>(g)]; }

inline std::optional<Grounding> grounding_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kGroundingCount; ++i)
        if (kGroundingNames[i] == s) return static_cast<Grounding>(i);
    return std::nullopt;
}

constexpr std::optional<GraspType> as_grasp(Grounding g) {
    const auto i = static_cast<std::size_t>(g);
    if (i < kGraspCount) return static_cast<GraspType>(i);
    return std::nullopt;
}

constexpr Grounding as_grounding(GraspType g) { return static_cast<Grounding>(static_cast<std::uint8_t>(g)); }

/// A command for the hand: execute a grasp, or open/close/stop.
struct HandAction {
    enum class Kind : std::uint8_t { Grasp, Open, Close, Stop };

    Kind kind = Kind::Open;
    GraspType grasp = GraspType::Cylindrical; ///< meaningful only for Kind::Grasp

    static constexpr HandAction make_grasp(GraspType g) { return {Kind::Grasp, g}; }
    static constexpr HandAction open() { return {Kind::Open, {}}; }
    static constexpr HandAction close() { return {Kind::Close, {}}; }
    static constexpr HandAction stop() { return {Kind::Stop, {}}; }

    static constexpr HandAction from(Grounding g) {
        switch (g) {
        case Grounding::OpenHand: return open();
        case Grounding::CloseHand: return close();
        case Grounding::StopHand: return stop();
        default: return make_grasp(*as_grasp(g));
        }
    }

    constexpr Grounding grounding() const {
        switch (kind) {
        case Kind::Grasp: return as_grounding(grasp);
        case Kind::Open: return Grounding::OpenHand;
        case Kind::Close: return Grounding::CloseHand;
        case Kind::Stop: return Grounding::StopHand;
        }
        return Grounding::OpenHand;
    }

    friend constexpr bool operator==(const HandAction& a, const HandAction& b) {
        return a.kind == b.kind && (a.kind != Kind::Grasp || a.grasp == b.grasp);
    }
};

inline std::string to_string(const HandAction& a) { return std::string(to_string(a.grounding())); }

inline std::optional<HandAction> action_from_string(std::string_view s) {
    if (auto g = grounding_from_string(s)) return HandAction::from(*g);
    return std::nullopt;
}

/// Base for errors raised by handadapt components.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace handadapt
