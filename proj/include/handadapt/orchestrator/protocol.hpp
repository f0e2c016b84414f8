#pragma once

// Service wire protocol: one JSON object per transport message, discriminated
// by "type". Outbound: frame, hand_state, feedback. Inbound: grasp_button,
// text_command, stop, power_down, retrain. docs/protocol.schema.json is the
// reference; the tests hold the encoders to it.
//
// ServiceHub is the transport-independent half of the endpoint: it turns
// inbound text into bus messages and bus traffic into outbound text, with
// the rate limits and the replay buffer a reconnecting client needs.

#include <array>
#include <atomic>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <json.hpp>

#include "handadapt/orchestrator/messages.hpp"

namespace handadapt::orchestrator {

using Json = nlohmann::json;

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
    using namespace boost::archive::iterators;
    using It = base64_from_binary<transform_width<const std::uint8_t*, 6, 8>>;
    std::string out(It(bytes.data()), It(bytes.data() + bytes.size()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
    using namespace boost::archive::iterators;
    using It = transform_width<binary_from_base64<const char*>, 8, 6>;
    std::size_t pad = 0;
    while (!text.empty() && text.back() == '=') {
        text.remove_suffix(1);
        ++pad;
    }
    if (pad > 2 || text.size() % 4 == 1) throw Error("malformed base64");
    std::vector<std::uint8_t> out;
    try {
        for (It it(text.data()), end(text.data() + text.size()); it != end; ++it) out.push_back(static_cast<std::uint8_t>(*it));
    } catch (const boost::archive::iterators::dataflow_exception&) {
        throw Error("malformed base64");
    }
    // The iterator emits whole bytes only while bits remain; trim the spill.
    out.resize(text.size() * 3 / 4);
    return out;
}

// ---------------------------------------------------------------------------
// Outbound

inline Json encode_frame(const CameraFrame& f, Tick tick) {
    return {{"type", "frame"},
            {"tick", tick},
            {"index", f.index},
            {"width", vision::Image::kWidth},
            {"height", vision::Image::kHeight},
            {"encoding", "rgb8"},
            {"data", base64_encode(f.image.bytes())}};
}

inline Json encode_status(const ControllerStatus& s) {
    return {{"state", std::string(to_string(s.state))},
            {"active_grasp", s.active ? Json(std::string(to_string(*s.active))) : Json(nullptr)},
            {"pending_retrain", s.pending_retrain},
            {"retraining", s.retraining},
            {"model_version", s.model_version},
            {"captured", s.captured}};
}

inline Json encode_hand_state(const handsim::HandState& h, const ControllerStatus& s) {
    Json motors = Json::array();
    for (std::size_t m = 0; m < handsim::kMotors; ++m)
        motors.push_back({{"name", std::string(handsim::kMotorNames[m])},
                          {"angle", h.motors[m].angle},
                          {"target", h.targets[m]},
                          {"count", h.motors[m].encoder_count()},
                          {"stalled", h.motors[m].stalled}});
    Json joints = Json::array();
    for (const auto& q : h.joints) joints.push_back({q[0], q[1], q[2]});
    Json contacts = Json::array();
    for (bool c : h.contacts) contacts.push_back(c);
    return {{"type", "hand_state"}, {"tick", h.tick},     {"controller", encode_status(s)},
            {"motors", motors},     {"joints", joints},   {"contacts", contacts}};
}

inline Json encode_feedback(const bus::Feedback& f, Tick tick) {
    return {{"type", "feedback"},
            {"tick", tick},
            {"level", std::string(bus::to_string(f.level))},
            {"source", f.source},
            {"text", f.text}};
}

// ---------------------------------------------------------------------------
// Inbound

inline constexpr std::array<std::string_view, 5> kInboundTypes = {"grasp_button", "text_command", "stop", "power_down",
                                                                  "retrain"};

class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Publishes the bus message an inbound object stands for. Throws
/// ProtocolError on anything malformed, before publishing.
inline void dispatch_inbound(bus::MessageBus& b, std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error&) {
        throw ProtocolError("not valid JSON");
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw ProtocolError("expected an object with a string \"type\"");
    const auto type = j["type"].get<std::string>();
    auto field = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_string()) throw ProtocolError(type + " needs a string \"" + key + "\"");
        return j[key].get<std::string>();
    };
    const std::string ov(channels::kOverride);
    if (type == "grasp_button") {
        const auto g = grasp_from_string(field("grasp"));
        if (!g) throw ProtocolError("unknown grasp '" + field("grasp") + "'");
        b.publish(ov, bus::OverrideCommand::from(HandAction::make_grasp(*g), vision::Source::Gui));
    } else if (type == "text_command") {
        auto t = field("text");
        if (trim(t).empty()) throw ProtocolError("text_command is empty");
        b.publish(std::string(channels::kTextCommand), TextCommand{std::move(t)});
    } else if (type == "stop") {
        b.publish(ov, bus::OverrideCommand::from(HandAction::stop(), vision::Source::Gui));
    } else if (type == "power_down") {
        b.publish(std::string(channels::kSystem), SystemCommand{SystemCommand::Kind::PowerDown});
    } else if (type == "retrain") {
        b.publish(std::string(channels::kSystem), SystemCommand{SystemCommand::Kind::Retrain});
    } else {
        throw ProtocolError("unknown message type '" + type + "'");
    }
}

// ---------------------------------------------------------------------------
// Hub

struct ServiceConfig {
    Tick frame_period_ms = 100; ///< at most 10 frames per second
    Tick state_period_ms = 100; ///< hand_state at 10 Hz
    std::size_t replay_feedback = 50; ///< feedback lines replayed to a new client
};

class ServiceHub {
public:
    explicit ServiceHub(bus::MessageBus& b, ServiceConfig cfg = {}) : bus_(b), cfg_(cfg) {
        register_channels(b);
        frames_ = b.subscribe<CameraFrame>(std::string(channels::kImage));
        states_ = b.subscribe<handsim::HandState>(std::string(channels::kHandState));
        status_ = b.subscribe<ControllerStatus>(std::string(channels::kControllerStatus));
        feedback_ = b.subscribe<bus::Feedback>(std::string(channels::kFeedback));
    }

    /// Any thread. A malformed message is answered with an error feedback
    /// line on the bus; the returned text is the reason.
    std::optional<std::string> handle_inbound(std::string_view text) {
        try {
            dispatch_inbound(bus_, text);
            ++accepted_;
            return std::nullopt;
        } catch (const ProtocolError& e) {
            ++rejected_;
            bus_.publish(std::string(channels::kFeedback),
                         bus::Feedback{bus::FeedbackLevel::Error, "service", std::string("bad message: ") + e.what()});
            return std::string(e.what());
        }
    }

    /// Pump thread. Outbound messages due now, in send order.
    std::vector<std::string> poll() {
        const Tick now = bus_.clock().now();
        std::vector<std::string> out;
        std::lock_guard lock(mutex_);
        for (auto& e : status_.drain()) status_now_ = e.payload;
        for (auto& e : feedback_.drain()) {
            auto s = encode_feedback(e.payload, e.timestamp).dump();
            replay_.push_back(s);
            if (replay_.size() > cfg_.replay_feedback) replay_.pop_front();
            out.push_back(std::move(s));
        }
        for (auto& e : frames_.drain()) {
            pending_frame_ = encode_frame(e.payload, e.timestamp).dump();
        }
        if (pending_frame_ && (!last_frame_ || now - *last_frame_ >= cfg_.frame_period_ms)) {
            latest_frame_ = std::move(*pending_frame_);
            pending_frame_.reset();
            last_frame_ = now;
            out.push_back(latest_frame_);
        }
        for (auto& e : states_.drain()) state_now_ = e.payload;
        if (state_now_ && (!last_state_ || now - *last_state_ >= cfg_.state_period_ms)) {
            latest_state_ = encode_hand_state(*state_now_, status_now_).dump();
            last_state_ = now;
            out.push_back(latest_state_);
        }
        return out;
    }

    /// What a newly connected client is sent first: the latest frame and
    /// hand state, then recent feedback.
    std::vector<std::string> snapshot() const {
        std::lock_guard lock(mutex_);
        std::vector<std::string> out;
        if (!latest_frame_.empty()) out.push_back(latest_frame_);
        if (!latest_state_.empty()) out.push_back(latest_state_);
        out.insert(out.end(), replay_.begin(), replay_.end());
        return out;
    }

    std::uint64_t accepted() const { return accepted_.load(); }
    std::uint64_t rejected() const { return rejected_.load(); }

private:
    bus::MessageBus& bus_;
    ServiceConfig cfg_;
    bus::Subscription<CameraFrame> frames_;
    bus::Subscription<handsim::HandState> states_;
    bus::Subscription<ControllerStatus> status_;
    bus::Subscription<bus::Feedback> feedback_;

    mutable std::mutex mutex_;
    ControllerStatus status_now_;
    std::optional<handsim::HandState> state_now_;
    std::optional<std::string> pending_frame_;
    std::optional<Tick> last_frame_, last_state_;
    std::string latest_frame_, latest_state_;
    std::deque<std::string> replay_;
    std::atomic<std::uint64_t> accepted_{0}, rejected_{0};
};

} // namespace handadapt::orchestrator
