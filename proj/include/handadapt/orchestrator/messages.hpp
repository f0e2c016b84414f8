#pragma once

// Payloads the orchestrator adds to the shared ones, and the one place every
// channel of the running system is registered.

#include <string>

#include "handadapt/handsim/hand.hpp"
#include "handadapt/msgbus/bus.hpp"
#include "handadapt/msgbus/messages.hpp"
#include "handadapt/vision/image.hpp"

namespace handadapt::orchestrator {

namespace channels {
using namespace bus::channels;
inline constexpr std::string_view kMotorPower = "motor_power";
inline constexpr std::string_view kGraspOutcome = "grasp_outcome";
inline constexpr std::string_view kTextCommand = "text_command";
inline constexpr std::string_view kSystem = "system";
inline constexpr std::string_view kControllerStatus = "controller_status";
} // namespace channels

enum class ControllerState : std::uint8_t { Idle, Executing, Holding, Stopped, PoweredDown };

constexpr std::string_view to_string(ControllerState s) {
    switch (s) {
    case ControllerState::Idle: return "idle";
    case ControllerState::Executing: return "executing";
    case ControllerState::Holding: return "holding";
    case ControllerState::Stopped: return "stopped";
    case ControllerState::PoweredDown: return "powered_down";
    }
    return "idle";
}

struct CameraFrame {
    std::uint64_t index = 0;
    vision::Image image;
};

/// What the hand should do. A grasp is run as a motion (open if needed,
/// pre-shape, close); open drives every motor to its lower stop.
struct SetpointCommand {
    enum class Kind : std::uint8_t { Grasp, Open };
    Kind kind = Kind::Open;
    GraspType grasp = GraspType::Cylindrical;
    handsim::Setpoints targets{};
    std::uint64_t id = 0; ///< echoed in the outcome
};

/// Off means zero duty on every motor; the springs return the hand to open.
struct MotorPower {
    bool enabled = true;
};

struct GraspReport {
    std::uint64_t id = 0;
    GraspType grasp = GraspType::Cylindrical;
    handsim::GraspOutcome outcome;
    bool interrupted = false; ///< superseded or stopped before it finished
};

struct TextCommand {
    std::string text;
};

struct SystemCommand {
    enum class Kind : std::uint8_t { PowerDown, Retrain };
    Kind kind = Kind::Retrain;
};

struct ModelUpdate {
    std::uint64_t version = 0;
    double val_accuracy = 0.0;
    std::size_t examples = 0;
};

struct ControllerStatus {
    ControllerState state = ControllerState::Idle;
    std::optional<GraspType> active;
    bool pending_retrain = false;
    bool retraining = false;
    std::uint64_t model_version = 0;
    std::size_t captured = 0;
    friend bool operator==(const ControllerStatus&, const ControllerStatus&) = default;
};

/// Registers every channel of the system with its payload type. Idempotent.
inline void register_channels(bus::MessageBus& b) {
    const auto cap = bus::kControlCapacity;
    b.register_channel<bus::PoseEvent>(std::string(channels::kPose), cap, "PoseEvent");
    // Frames are only ever wanted fresh; a short queue bounds memory.
    b.register_channel<CameraFrame>(std::string(channels::kImage), 4, "CameraFrame");
    b.register_channel<bus::PredictedGrasp>(std::string(channels::kPredictedGrasp), cap, "PredictedGrasp");
    b.register_channel<bus::OverrideCommand>(std::string(channels::kOverride), cap, "OverrideCommand");
    b.register_channel<ModelUpdate>(std::string(channels::kUpdatedModel), cap, "ModelUpdate");
    b.register_channel<SetpointCommand>(std::string(channels::kSetpoints), cap, "SetpointCommand");
    b.register_channel<handsim::HandState>(std::string(channels::kHandState), cap, "HandState");
    b.register_channel<bus::Feedback>(std::string(channels::kFeedback), 1024, "Feedback");
    b.register_channel<MotorPower>(std::string(channels::kMotorPower), cap, "MotorPower");
    b.register_channel<GraspReport>(std::string(channels::kGraspOutcome), cap, "GraspReport");
    b.register_channel<TextCommand>(std::string(channels::kTextCommand), cap, "TextCommand");
    b.register_channel<SystemCommand>(std::string(channels::kSystem), cap, "SystemCommand");
    b.register_channel<ControllerStatus>(std::string(channels::kControllerStatus), cap, "ControllerStatus");
}

} // namespace handadapt::orchestrator
