#pragma once

// Motor-control side of the setpoint channel: turns SetpointCommands into
// grasp motions on a HandSim, one control tick per call, and reports how each
// grasp ended.

#include <optional>

#include "handadapt/handsim/hand.hpp"
#include "handadapt/orchestrator/messages.hpp"

namespace handadapt::orchestrator {

class HandDriver {
public:
    HandDriver(bus::MessageBus& b, handsim::HandSim& hand) : bus_(b), hand_(hand) {
        register_channels(b);
        setpoints_ = b.subscribe<SetpointCommand>(std::string(channels::kSetpoints));
        power_ = b.subscribe<MotorPower>(std::string(channels::kMotorPower));
    }

    /// One control period: apply new commands, then step the hand once.
    void control_tick() {
        for (auto& e : power_.drain()) {
            hand_.set_enabled(e.payload.enabled);
            if (!e.payload.enabled) abandon();
        }
        for (auto& e : setpoints_.drain()) accept(e.payload);

        if (pending_ && !motion_ && hand_.enabled()) {
            if (hand_.is_open()) {
                motion_.emplace(hand_, pending_->grasp);
            } else if (hand_.tick() - pending_since_ >= hand_.config().timeout_ms) {
                // Could not get back to open; report the grasp as timed out.
                GraspReport r{pending_->id, pending_->grasp, {}, false};
                r.outcome.timed_out = true;
                r.outcome.settle_ticks = hand_.tick() - pending_since_;
                pending_.reset();
                report(r);
            }
        }
        if (motion_) {
            if (motion_->step(hand_, &bus_)) {
                report({pending_->id, pending_->grasp, motion_->outcome(), false});
                motion_.reset();
                pending_.reset();
            }
            return;
        }
        hand_.step();
        handsim::publish_state(hand_, &bus_);
    }

    bool busy() const { return pending_.has_value(); }

private:
    void accept(const SetpointCommand& c) {
        abandon();
        if (c.kind == SetpointCommand::Kind::Open) {
            hand_.command({});
            return;
        }
        pending_ = c;
        pending_since_ = hand_.tick();
        // A closed hand opens before the new grasp starts.
        if (!hand_.is_open()) hand_.command({});
    }

    /// Drops the motion in progress, reporting it as interrupted.
    void abandon() {
        if (!pending_) return;
        GraspReport r{pending_->id, pending_->grasp, motion_ ? motion_->outcome() : handsim::GraspOutcome{}, true};
        r.outcome.contacts = hand_.state().contacts;
        r.outcome.contact_count = hand_.state().contact_count();
        motion_.reset();
        pending_.reset();
        report(r);
    }

    void report(const GraspReport& r) { bus_.publish(std::string(channels::kGraspOutcome), r); }

    bus::MessageBus& bus_;
    handsim::HandSim& hand_;
    bus::Subscription<SetpointCommand> setpoints_;
    bus::Subscription<MotorPower> power_;
    std::optional<SetpointCommand> pending_;
    Tick pending_since_ = 0;
    std::optional<handsim::GraspMotion> motion_;
};

} // namespace handadapt::orchestrator
