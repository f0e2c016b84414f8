#pragma once

// Payloads and channel names for the arrows between components.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "handadapt/core/types.hpp"
#include "handadapt/vision/dataset.hpp"

namespace handadapt::bus {

namespace channels {
inline constexpr std::string_view kPose = "pose";
inline constexpr std::string_view kImage = "image";
inline constexpr std::string_view kPredictedGrasp = "predicted_grasp";
inline constexpr std::string_view kOverride = "override";
inline constexpr std::string_view kUpdatedModel = "updated_model";
inline constexpr std::string_view kSetpoints = "setpoints";
inline constexpr std::string_view kHandState = "hand_state";
inline constexpr std::string_view kFeedback = "feedback";
} // namespace channels

/// Capacity for channels whose drops count as failures.
inline constexpr std::size_t kControlCapacity = 256;

enum class PoseCommand : std::uint8_t { OpenHand, CloseHand };

constexpr std::string_view to_string(PoseCommand p) { return p == PoseCommand::OpenHand ? "open_hand" : "close_hand"; }

struct PoseEvent {
    PoseCommand command = PoseCommand::OpenHand;
    friend bool operator==(const PoseEvent&, const PoseEvent&) = default;
};

/// A GUI or NLU command. `capture` asks the camera side to save the latest
/// frame labelled with the grasp.
struct OverrideCommand {
    HandAction action;
    vision::Source source = vision::Source::Gui;
    bool capture = false;

    static OverrideCommand from(HandAction a, vision::Source s) {
        return {a, s, a.kind == HandAction::Kind::Grasp};
    }
    friend bool operator==(const OverrideCommand&, const OverrideCommand&) = default;
};

struct PredictedGrasp {
    GraspType grasp = GraspType::Cylindrical;
    std::array<double, kGraspCount> posterior{};
    std::uint64_t model_version = 0;
};

enum class FeedbackLevel : std::uint8_t { Info, Warning, Error };

constexpr std::string_view to_string(FeedbackLevel l) {
    switch (l) {
    case FeedbackLevel::Info: return "info";
    case FeedbackLevel::Warning: return "warning";
    case FeedbackLevel::Error: return "error";
    }
    return "info";
}

struct Feedback {
    FeedbackLevel level = FeedbackLevel::Info;
    std::string source; ///< emitting component
    std::string text;
    friend bool operator==(const Feedback&, const Feedback&) = default;
};

} // namespace handadapt::bus
