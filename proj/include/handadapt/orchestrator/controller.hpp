#pragma once

// Hand controller state machine. Fuses pose events, operator overrides and
// system commands into setpoints, captures labelled frames for every grasp
// override, and starts retrain jobs.
//
// Runs single-threaded on the bus pump: pump() drains its inputs in a fixed
// channel order so a run is reproducible from its inputs alone.

#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "handadapt/core/config.hpp"
#include "handadapt/orchestrator/messages.hpp"
#include "handadapt/orchestrator/model_slot.hpp"

namespace handadapt::orchestrator {

struct ControllerConfig {
    Tick frame_staleness_ms = 500; ///< an older latest frame cannot be used
    Tick grasp_debounce_ms = 500;  ///< min spacing of accepted grasp overrides
    std::size_t retrain_every = 0; ///< auto-retrain after this many captures; 0 = operator only

    static ControllerConfig from_config(const KeyValueConfig& kv) {
        ControllerConfig c;
        c.frame_staleness_ms = kv.get_int_or("orchestrator.frame_staleness_ms", c.frame_staleness_ms);
        c.grasp_debounce_ms = kv.get_int_or("orchestrator.grasp_debounce_ms", c.grasp_debounce_ms);
        c.retrain_every = static_cast<std::size_t>(kv.get_int_or("orchestrator.retrain_every", 0));
        if (c.frame_staleness_ms <= 0 || c.grasp_debounce_ms < 0)
            throw ConfigError("orchestrator: staleness must be positive and debounce non-negative");
        return c;
    }
};

/// Where retrain jobs get their data: the initial corpus plus everything
/// captured since start-up.
struct RetrainSource {
    vision::DatasetStore base;
    classifier::TrainOptions options;
    std::filesystem::path model_path;
};

class SafetyViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class Controller {
public:
    Controller(bus::MessageBus& b, ModelSlot& slot, handsim::HandConfig hand, ControllerConfig cfg = {})
        : bus_(b), slot_(slot), hand_(std::move(hand)), cfg_(cfg), retrainer_(slot, b) {
        register_channels(b);
        frames_ = b.subscribe<CameraFrame>(std::string(channels::kImage));
        outcomes_ = b.subscribe<GraspReport>(std::string(channels::kGraspOutcome));
        updates_ = b.subscribe<ModelUpdate>(std::string(channels::kUpdatedModel));
        system_ = b.subscribe<SystemCommand>(std::string(channels::kSystem));
        overrides_ = b.subscribe<bus::OverrideCommand>(std::string(channels::kOverride));
        poses_ = b.subscribe<bus::PoseEvent>(std::string(channels::kPose));
    }

    void enable_retraining(RetrainSource src) { retrain_ = std::move(src); }

    /// Handles everything queued, channel by channel in a fixed order.
    void pump() {
        for (auto& e : frames_.drain()) latest_ = std::move(e);
        for (auto& e : outcomes_.drain()) on_outcome(e.payload);
        for (auto& e : updates_.drain()) on_model_update(e.payload);
        for (auto& e : system_.drain()) on_system(e.payload);
        for (auto& e : overrides_.drain()) on_override(e.payload);
        for (auto& e : poses_.drain()) on_pose(e.payload);
    }

    void on_pose(const bus::PoseEvent& ev) {
        const std::string what = "pose " + std::string(bus::to_string(ev.command));
        if (halted()) return ignore(what, "hand is " + std::string(to_string(state_)));
        if (ev.command == bus::PoseCommand::CloseHand) return close_from_prediction(what);
        if (state_ == ControllerState::Idle) return note(what, "already open");
        open_hand(what);
    }

    void on_override(const bus::OverrideCommand& cmd) {
        const std::string what = "override " + to_string(cmd.action) + " (" + std::string(vision::to_string(cmd.source)) + ")";
        using K = HandAction::Kind;
        if (state_ == ControllerState::PoweredDown) return ignore(what, "powered down");
        if (state_ == ControllerState::Stopped) {
            if (cmd.action.kind == K::Open) {
                transition(ControllerState::Idle, what, "motors re-enabled");
                bus_.publish(std::string(channels::kMotorPower), MotorPower{true});
                publish_setpoints(SetpointCommand{SetpointCommand::Kind::Open, {}, {}, ++next_id_});
                return;
            }
            if (cmd.action.kind == K::Stop) return note(what, "already stopped");
            return ignore(what, "stopped: only open or power down are accepted");
        }
        switch (cmd.action.kind) {
        case K::Grasp: return grasp_override(cmd, what);
        case K::Open:
            if (state_ == ControllerState::Idle) return note(what, "already open");
            return open_hand(what);
        case K::Close: return close_from_prediction(what);
        case K::Stop:
            active_.reset();
            executing_id_ = 0;
            transition(ControllerState::Stopped, what, "motors at zero duty");
            bus_.publish(std::string(channels::kMotorPower), MotorPower{false});
            feedback(bus::FeedbackLevel::Warning, "stopped; send open to resume");
            return;
        }
    }

    void on_system(const SystemCommand& cmd) {
        if (cmd.kind == SystemCommand::Kind::PowerDown) {
            if (state_ == ControllerState::PoweredDown) return note("power_down", "already powered down");
            active_.reset();
            executing_id_ = 0;
            transition(ControllerState::PoweredDown, "power_down", "motors off, springs return the hand open");
            bus_.publish(std::string(channels::kMotorPower), MotorPower{false});
            feedback(bus::FeedbackLevel::Warning, "powered down");
            return;
        }
        request_retrain("retrain");
    }

    void on_outcome(const GraspReport& r) {
        std::ostringstream d;
        d << to_string(r.grasp) << (r.outcome.success ? " held" : " not held") << ", " << r.outcome.contact_count
          << " contacts, " << r.outcome.settle_ticks << " ms" << (r.outcome.timed_out ? ", timed out" : "")
          << (r.interrupted ? ", interrupted" : "");
        // The outcome is only reported. What should follow a failed grasp is
        // left to the operator.
        if (r.id == executing_id_ && state_ == ControllerState::Executing) {
            executing_id_ = 0;
            transition(ControllerState::Holding, "grasp_outcome", d.str());
        } else {
            note("grasp_outcome", d.str());
        }
        if (!r.interrupted)
            feedback(r.outcome.success ? bus::FeedbackLevel::Info : bus::FeedbackLevel::Warning,
                     "grasp " + d.str());
    }

    void on_model_update(const ModelUpdate& u) {
        note("model_update", "v" + std::to_string(u.version));
        publish_status();
    }

    ControllerState state() const { return state_; }
    std::optional<GraspType> active_grasp() const { return active_; }
    bool pending_retrain() const { return pending_retrain_; }
    const vision::DatasetStore& captures() const { return captures_; }
    Retrainer& retrainer() { return retrainer_; }
    const ControllerConfig& config() const { return cfg_; }

    ControllerStatus status() const {
        return {state_, active_, pending_retrain_, retrainer_.running(), slot_.version(), captures_.size()};
    }

    /// One line per handled input: tick, input, state before and after, detail.
    const std::string& log() const { return log_; }

private:
    bool halted() const { return state_ == ControllerState::Stopped || state_ == ControllerState::PoweredDown; }

    /// The latest frame when it is fresh enough, else an error line.
    std::optional<vision::Image> fresh_frame(const std::string& what) {
        const Tick now = bus_.clock().now();
        if (!latest_) {
            ignore(what, "no camera frame available", bus::FeedbackLevel::Error);
            return std::nullopt;
        }
        if (now - latest_->timestamp > cfg_.frame_staleness_ms) {
            ignore(what, "latest camera frame is " + std::to_string(now - latest_->timestamp) + " ms old",
                   bus::FeedbackLevel::Error);
            return std::nullopt;
        }
        return latest_->payload.image;
    }

    void close_from_prediction(const std::string& what) {
        if (state_ != ControllerState::Idle) return note(what, "already closed");
        const auto frame = fresh_frame(what);
        if (!frame) return;
        bus::PredictedGrasp p;
        try {
            p = predict(slot_, *frame);
        } catch (const NoModel& e) {
            return ignore(what, e.what(), bus::FeedbackLevel::Error);
        }
        bus_.publish(std::string(channels::kPredictedGrasp), p);
        std::ostringstream d;
        d << "predicted " << to_string(p.grasp) << " p=" << std::fixed << std::setprecision(3)
          << p.posterior[index_of(p.grasp)] << " model v" << p.model_version;
        active_ = p.grasp;
        transition(ControllerState::Holding, what, d.str());
        publish_setpoints(grasp_command(p.grasp));
        feedback(bus::FeedbackLevel::Info, d.str());
    }

    void grasp_override(const bus::OverrideCommand& cmd, const std::string& what) {
        const Tick now = bus_.clock().now();
        if (last_grasp_override_ && now - *last_grasp_override_ < cfg_.grasp_debounce_ms)
            return ignore(what, "debounced, " + std::to_string(now - *last_grasp_override_) + " ms after the last one",
                          bus::FeedbackLevel::Warning);
        // Capture and execution go together: no frame, no grasp.
        const auto frame = fresh_frame(what);
        if (!frame) return;
        last_grasp_override_ = now;
        const auto g = cmd.action.grasp;
        const auto id = captures_.add_example(*frame, g, cmd.source, now);
        pending_retrain_ = true;
        active_ = g;
        auto sp = grasp_command(g);
        executing_id_ = sp.id;
        transition(ControllerState::Executing, what, "captured example " + std::to_string(id));
        publish_setpoints(sp);
        feedback(bus::FeedbackLevel::Info, "executing " + std::string(to_string(g)) + "; saved frame as " +
                                               std::string(to_string(g)) + " (" + std::to_string(captures_.size()) +
                                               " captured)");
        if (cfg_.retrain_every > 0 && captures_.size() % cfg_.retrain_every == 0) request_retrain("auto retrain");
    }

    void open_hand(const std::string& what) {
        active_.reset();
        executing_id_ = 0;
        transition(ControllerState::Idle, what, "opening");
        publish_setpoints(SetpointCommand{SetpointCommand::Kind::Open, {}, {}, ++next_id_});
    }

    void request_retrain(const std::string& what) {
        if (state_ == ControllerState::PoweredDown) return ignore(what, "powered down");
        if (!retrain_) return ignore(what, "retraining is not configured", bus::FeedbackLevel::Error);
        if (retrainer_.running()) return ignore(what, "a retrain job is already running", bus::FeedbackLevel::Warning);
        RetrainJob job{retrain_->base, captures_, retrain_->options, retrain_->model_path};
        retrainer_.start(std::move(job));
        pending_retrain_ = false;
        note(what, "started on " + std::to_string(retrain_->base.size() + captures_.size()) + " examples");
        feedback(bus::FeedbackLevel::Info, "retraining on " + std::to_string(captures_.size()) + " captured examples");
        publish_status();
    }

    SetpointCommand grasp_command(GraspType g) {
        return {SetpointCommand::Kind::Grasp, g, hand_.setpoints[index_of(g)], ++next_id_};
    }

    void publish_setpoints(const SetpointCommand& c) {
        if (halted()) throw SafetyViolation("setpoints while " + std::string(to_string(state_)));
        bus_.publish(std::string(channels::kSetpoints), c);
    }

    void transition(ControllerState to, const std::string& what, const std::string& detail) {
        record(what, to, detail);
        state_ = to;
        publish_status();
    }

    void note(const std::string& what, const std::string& detail) { record(what, state_, detail); }

    void ignore(const std::string& what, const std::string& why, bus::FeedbackLevel level = bus::FeedbackLevel::Warning) {
        record(what, state_, "ignored: " + why);
        feedback(level, what + " ignored: " + why);
    }

    void record(const std::string& what, ControllerState to, const std::string& detail) {
        log_ += std::to_string(bus_.clock().now()) + '\t' + what + '\t' + std::string(to_string(state_)) + '\t' +
                std::string(to_string(to)) + '\t' + detail + '\n';
    }

    void feedback(bus::FeedbackLevel level, std::string text) {
        bus_.publish(std::string(channels::kFeedback), bus::Feedback{level, "controller", std::move(text)});
    }

    void publish_status() { bus_.publish(std::string(channels::kControllerStatus), status()); }

    bus::MessageBus& bus_;
    ModelSlot& slot_;
    handsim::HandConfig hand_;
    ControllerConfig cfg_;

    bus::Subscription<CameraFrame> frames_;
    bus::Subscription<GraspReport> outcomes_;
    bus::Subscription<ModelUpdate> updates_;
    bus::Subscription<SystemCommand> system_;
    bus::Subscription<bus::OverrideCommand> overrides_;
    bus::Subscription<bus::PoseEvent> poses_;

    ControllerState state_ = ControllerState::Idle;
    std::optional<GraspType> active_;
    bool pending_retrain_ = false;
    std::optional<bus::Envelope<CameraFrame>> latest_;
    std::optional<Tick> last_grasp_override_;
    std::uint64_t next_id_ = 0;
    std::uint64_t executing_id_ = 0;
    vision::DatasetStore captures_{0};
    std::optional<RetrainSource> retrain_;
    std::string log_;
    Retrainer retrainer_; // last member: its worker may still publish on bus_
};

} // namespace handadapt::orchestrator
