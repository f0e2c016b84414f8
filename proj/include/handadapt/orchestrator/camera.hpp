#pragma once

// Wrist camera stand-in. While an object is in view it publishes a rendered
// frame per call; the pose is drawn once per presentation and only the
// sensor noise changes from frame to frame.

#include <optional>

#include "handadapt/orchestrator/messages.hpp"
#include "handadapt/vision/render.hpp"

namespace handadapt::orchestrator {

class CameraSim {
public:
    CameraSim(bus::MessageBus& b, std::uint64_t seed, vision::JitterConfig jitter = {})
        : bus_(b), seed_(seed), jitter_(jitter) {
        register_channels(b);
    }

    /// nullopt: nothing in view and no frames.
    void present(std::optional<vision::ObjectClass> obj) {
        object_ = obj;
        ++presentation_;
        if (obj) spec_ = vision::draw_spec(*obj, jitter_, derive_seed(seed_, presentation_));
    }

    std::optional<vision::ObjectClass> in_view() const { return object_; }

    /// Publishes one frame when something is in view.
    void capture() {
        if (!object_) return;
        auto s = spec_;
        s.seed = derive_seed(seed_, presentation_, frames_);
        bus_.publish(std::string(channels::kImage), CameraFrame{frames_++, vision::render(s)});
    }

    std::uint64_t frames() const { return frames_; }

private:
    bus::MessageBus& bus_;
    std::uint64_t seed_;
    vision::JitterConfig jitter_;
    std::optional<vision::ObjectClass> object_;
    vision::ObjectSpec spec_;
    std::uint64_t presentation_ = 0;
    std::uint64_t frames_ = 0;
};

} // namespace handadapt::orchestrator
