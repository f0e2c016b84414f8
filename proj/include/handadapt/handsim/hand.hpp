#pragma once

// Six-motor tendon hand: motors 0-4 flex the thumb, index, middle, ring and
// little chains; motor 5 rotates the thumb's flexion plane about the palm x
// axis (0 = beside the index, larger = opposed).
//
// A flexion motor at angle theta draws its tendon so that joint j sits at
// min(c_j * theta, qmax_j). Torsion springs at every joint pull back; their
// torque reaches the motor through the same coupling (virtual work). A chain
// whose links would enter the object is stopped at the touching angle, and
// its motor stalls there until the drive reverses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "handadapt/core/config.hpp"
#include "handadapt/core/types.hpp"
#include "handadapt/handsim/geometry.hpp"
#include "handadapt/handsim/motor.hpp"
#include "handadapt/msgbus/bus.hpp"
#include "handadapt/msgbus/messages.hpp"

namespace handadapt::handsim {

inline constexpr std::size_t kMotors = 6;
inline constexpr std::size_t kChains = 5;
inline constexpr std::size_t kThumb = 0, kIndex = 1, kMiddle = 2, kRing = 3, kLittle = 4, kThumbRotation = 5;
inline constexpr std::array<std::string_view, kMotors> kMotorNames = {
    "thumb", "index", "middle", "ring", "little", "thumb_rotation"};

using Setpoints = std::array<double, kMotors>; ///< motor angles, rad

struct HandConfig {
    MotorParams finger_motor;
    MotorParams rotation_motor;
    PidGains gains;
    int sim_hz = 1000;
    int control_hz = 100;
    std::array<double, 3> coupling{0.5, 0.3, 0.2};      ///< proximal to distal, sums to 1
    std::array<double, 3> max_flexion{1.60, 1.75, 1.40}; ///< rad
    double spring_torque = 0.04746;                      ///< N*m per joint at full flexion
    double spring_preload = 0.3;                         ///< fraction of the rating at zero deflection
    std::array<Chain, kChains> chains;                   ///< thumb at zero rotation
    std::array<Setpoints, kGraspCount> setpoints{};
    double settle_band = 0.02; ///< fraction of the commanded step
    Tick timeout_ms = 3000;

    static HandConfig defaults() {
        HandConfig c;
        c.gains = {4.0, 2.0, 0.05, 0.07, 1.0};
        c.rotation_motor.max_angle = 1.6;
        // Representative adult proportions; links proximal to distal.
        c.chains[kIndex] = {Vec3(0, 0.027, 0), Vec3::UnitX(), Vec3::UnitZ(), {0.045, 0.025, 0.020}, 0.008};
        c.chains[kMiddle] = {Vec3(0.004, 0.009, 0), Vec3::UnitX(), Vec3::UnitZ(), {0.050, 0.030, 0.022}, 0.008};
        c.chains[kRing] = {Vec3(0, -0.009, 0), Vec3::UnitX(), Vec3::UnitZ(), {0.046, 0.028, 0.021}, 0.008};
        c.chains[kLittle] = {Vec3(-0.008, -0.027, 0), Vec3::UnitX(), Vec3::UnitZ(), {0.036, 0.020, 0.018}, 0.007};
        // Thumb: metacarpal, proximal, distal. At zero rotation it points
        // distal-radial in the palm plane and flexes across toward the index.
        const double a = 0.7;
        c.chains[kThumb] = {Vec3(-0.04, 0.03, 0), Vec3(std::cos(a), std::sin(a), 0), Vec3(std::sin(a), -std::cos(a), 0),
                            {0.040, 0.032, 0.028}, 0.009};
        c.setpoints = {{
            {1.00, 2.40, 2.40, 2.40, 2.40, 1.20}, // cylindrical
            {1.00, 2.20, 2.20, 2.20, 2.20, 1.40}, // spherical
            {0.00, 2.80, 2.80, 2.80, 2.80, 0.00}, // hook
            {1.00, 3.00, 3.00, 3.00, 3.00, 0.30}, // lateral
            {1.20, 1.60, 0.00, 0.00, 0.00, 1.50}, // pinch
            {1.20, 1.60, 1.70, 0.00, 0.00, 1.40}, // tripod
        }};
        c.finger_motor.max_angle = c.finger_travel();
        return c;
    }

    /// Largest motor angle before some joint reaches its flexion limit.
    double finger_travel() const {
        double t = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < 3; ++j) t = std::min(t, max_flexion[j] / coupling[j]);
        return t;
    }

    const MotorParams& motor(std::size_t m) const { return m == kThumbRotation ? rotation_motor : finger_motor; }

    Tick control_period_ms() const { return 1000 / control_hz; }
    int sim_steps_per_control() const { return sim_hz / control_hz; }

    /// Keys under `hand.`; anything absent keeps its default.
    static HandConfig from_config(const KeyValueConfig& kv) {
        auto c = defaults();
        auto num = [&](const std::string& k, double& v) { v = kv.get_double_or(k, v); };
        auto arr3 = [&](const std::string& k, std::array<double, 3>& v) {
            if (!kv.has(k)) return;
            const auto d = kv.get_doubles(k);
            if (d.size() != 3) throw ConfigError(k + " needs 3 values");
            std::copy(d.begin(), d.end(), v.begin());
        };
        auto vec = [&](const std::string& k, Vec3& v) {
            if (!kv.has(k)) return;
            const auto d = kv.get_doubles(k);
            if (d.size() != 3) throw ConfigError(k + " needs 3 values");
            v = Vec3(d[0], d[1], d[2]);
        };
        num("hand.pid.kp", c.gains.kp);
        num("hand.pid.ki", c.gains.ki);
        num("hand.pid.kd", c.gains.kd);
        num("hand.pid.integral_limit", c.gains.integral_limit);
        for (auto* m : {&c.finger_motor, &c.rotation_motor}) {
            num("hand.motor.no_load_speed", m->no_load_speed);
            num("hand.motor.stall_torque", m->stall_torque);
            num("hand.motor.time_constant", m->time_constant);
            m->counts_per_rev = static_cast<int>(kv.get_int_or("hand.encoder.cpr", m->counts_per_rev));
        }
        num("hand.rotation.max_angle", c.rotation_motor.max_angle);
        arr3("hand.coupling", c.coupling);
        arr3("hand.max_flexion", c.max_flexion);
        num("hand.spring_torque", c.spring_torque);
        num("hand.spring_preload", c.spring_preload);
        for (std::size_t i = 0; i < kChains; ++i) {
            const auto p = "hand.chain." + std::string(kMotorNames[i]) + ".";
            vec(p + "base", c.chains[i].base);
            vec(p + "straight", c.chains[i].straight);
            vec(p + "flex", c.chains[i].flex);
            arr3(p + "links", c.chains[i].links);
            num(p + "radius", c.chains[i].radius);
        }
        for (std::size_t g = 0; g < kGraspCount; ++g) {
            const auto k = "hand.setpoint." + std::string(kGraspNames[g]);
            if (!kv.has(k)) continue;
            const auto d = kv.get_doubles(k);
            if (d.size() != kMotors) throw ConfigError(k + " needs 6 values");
            std::copy(d.begin(), d.end(), c.setpoints[g].begin());
        }
        c.finger_motor.max_angle = c.finger_travel();
        c.validate();
        return c;
    }

    void validate() const {
        if (gains.kp < 0 || gains.ki < 0 || gains.kd < 0) throw ConfigError("hand: PID gains must be >= 0");
        double s = 0;
        for (double x : coupling) {
            if (!(x > 0)) throw ConfigError("hand: coupling ratios must be positive");
            s += x;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ConfigError("hand: coupling ratios must sum to 1");
        if (sim_hz % control_hz != 0) throw ConfigError("hand: sim rate must be a multiple of the control rate");
        for (std::size_t g = 0; g < kGraspCount; ++g)
            for (std::size_t m = 0; m < kMotors; ++m)
                if (setpoints[g][m] < motor(m).min_angle || setpoints[g][m] > motor(m).max_angle)
                    throw ConfigError("hand: setpoint for " + std::string(kGraspNames[g]) + " outside motor travel");
    }
};

struct HandState {
    Tick tick = 0; ///< ms since the hand was created
    std::array<MotorState, kMotors> motors{};
    std::array<double, kMotors> targets{};
    std::array<JointAngles, kChains> joints{};
    std::array<bool, kChains> contacts{};

    std::size_t contact_count() const { return static_cast<std::size_t>(std::count(contacts.begin(), contacts.end(), true)); }
    friend bool operator==(const HandState&, const HandState&) = default;
};

class HandSim {
public:
    explicit HandSim(HandConfig config, std::optional<SimObject> object = std::nullopt)
        : cfg_(std::move(config)), object_(std::move(object)) {
        cfg_.validate();
        for (std::size_t m = 0; m < kMotors; ++m) {
            state_.motors[m].encoder = QuadratureEncoder(cfg_.motor(m).counts_per_rev);
            state_.motors[m].angle = cfg_.motor(m).min_angle;
        }
    }

    const HandConfig& config() const { return cfg_; }
    const std::optional<SimObject>& object() const { return object_; }
    const HandState& state() const { return state_; }
    Tick tick() const { return state_.tick; }

    /// Targets take effect at the next control tick.
    /// A changed target restarts that motor's PID so integral built up
    /// against a contact does not delay the next move.
    void command(const Setpoints& targets) {
        for (std::size_t m = 0; m < kMotors; ++m) {
            const double t = std::clamp(targets[m], cfg_.motor(m).min_angle, cfg_.motor(m).max_angle);
            if (t != state_.targets[m]) pid_[m] = {};
            state_.targets[m] = t;
        }
    }

    /// Disabled motors get zero duty and the springs take over. Re-enabling
    /// starts every PID from scratch.
    void set_enabled(bool on) {
        if (on && !enabled_) pid_.fill({});
        enabled_ = on;
    }
    bool enabled() const { return enabled_; }

    const PidState& pid(std::size_t m) const { return pid_.at(m); }

    /// Replaces the object in front of the hand. Contacts with the old one
    /// are dropped.
    void set_object(std::optional<SimObject> object) {
        object_ = std::move(object);
        state_.contacts.fill(false);
        thumb_flex_contact_ = false;
    }

    /// Every motor within one encoder count of its lower stop, no contacts.
    bool is_open() const {
        for (std::size_t m = 0; m < kMotors; ++m)
            if (std::abs(state_.motors[m].angle - cfg_.motor(m).min_angle) > count_angle(m)) return false;
        return state_.contact_count() == 0;
    }

    /// One control period: PID on the encoder readings, then the physics
    /// substeps with that duty held.
    const HandState& step() {
        const double dt_c = 1.0 / cfg_.control_hz;
        std::array<double, kMotors> duty{};
        if (enabled_)
            for (std::size_t m = 0; m < kMotors; ++m)
                duty[m] = pid_step(cfg_.gains, pid_[m], state_.targets[m], state_.motors[m].encoder.measured_angle(), dt_c);
        for (int k = 0; k < cfg_.sim_steps_per_control(); ++k) physics_step(duty);
        return state_;
    }

    /// One 1/sim_hz physics step with fixed duties.
    void physics_step(const std::array<double, kMotors>& duty) {
        const double dt = 1.0 / cfg_.sim_hz;
        // Thumb rotation first: it moves the thumb's plane.
        // A thumb stopped by its own flexion holds its plane too; one stopped
        // while rotating only blocks further rotation.
        if (state_.contacts[kThumb] && thumb_flex_contact_) {
            auto& s = state_.motors[kThumbRotation];
            s.duty = std::clamp(duty[kThumbRotation], -1.0, 1.0);
            s.velocity = 0.0;
            s.stalled = true;
        } else {
            auto& s = state_.motors[kThumbRotation];
            const double before = s.angle;
            MotorLoad load{spring_load(kThumbRotation, s.angle), state_.contacts[kThumb] ? kRigid : 0.0};
            s = motor_step(cfg_.rotation_motor, s, duty[kThumbRotation], load, dt);
            if (state_.contacts[kThumb] && s.angle < contact_rotation_ - kRelease) state_.contacts[kThumb] = false;
            if (!state_.contacts[kThumb] && s.angle > before && penetrates(kThumb, state_.motors[kThumb].angle, s.angle)) {
                stop_at_contact(kThumbRotation, before, [&](double r) {
                    return penetrates(kThumb, state_.motors[kThumb].angle, r);
                });
                mark_contact(kThumb);
                thumb_flex_contact_ = false;
            }
        }
        for (std::size_t f = 0; f < kChains; ++f) {
            auto& s = state_.motors[f];
            const double before = s.angle;
            const double rot = state_.motors[kThumbRotation].angle;
            MotorLoad load{spring_load(f, s.angle), state_.contacts[f] ? kRigid : 0.0};
            s = motor_step(cfg_.finger_motor, s, duty[f], load, dt);
            if (state_.contacts[f] && s.angle < contact_flex_[f] - kRelease) state_.contacts[f] = false;
            if (!state_.contacts[f] && s.angle > before && penetrates(f, s.angle, rot)) {
                stop_at_contact(f, before, [&](double a) { return penetrates(f, a, rot); });
                mark_contact(f);
                if (f == kThumb) thumb_flex_contact_ = true;
            }
        }
        for (std::size_t f = 0; f < kChains; ++f) state_.joints[f] = joints_for(state_.motors[f].angle);
        ++substeps_;
        state_.tick = static_cast<Tick>(substeps_ * 1000 / cfg_.sim_hz);
    }

    JointAngles joints_for(double motor_angle) const {
        JointAngles q{};
        for (std::size_t j = 0; j < 3; ++j) q[j] = std::clamp(cfg_.coupling[j] * motor_angle, 0.0, cfg_.max_flexion[j]);
        return q;
    }

    /// Chain `f` in the palm frame for a thumb rotation `rot`.
    Chain chain(std::size_t f, double rot) const {
        Chain c = cfg_.chains[f];
        if (f == kThumb) {
            c.straight = rotate_x(c.straight, rot);
            c.flex = rotate_x(c.flex, rot);
        }
        return c;
    }

    Chain chain(std::size_t f) const { return chain(f, state_.motors[kThumbRotation].angle); }

    /// Reflected spring torque on motor m.
    double spring_load(std::size_t m, double angle) const {
        if (m == kThumbRotation) {
            if (angle <= 0) return 0.0;
            return cfg_.spring_torque *
                   (cfg_.spring_preload + (1 - cfg_.spring_preload) * angle / cfg_.rotation_motor.max_angle);
        }
        double t = 0;
        const auto q = joints_for(angle);
        for (std::size_t j = 0; j < 3; ++j)
            if (q[j] > 0)
                t += cfg_.coupling[j] * cfg_.spring_torque *
                     (cfg_.spring_preload + (1 - cfg_.spring_preload) * q[j] / cfg_.max_flexion[j]);
        return t;
    }

    double count_angle(std::size_t m) const { return 2 * std::numbers::pi / cfg_.motor(m).counts_per_rev; }

private:
    static constexpr double kRigid = std::numeric_limits<double>::infinity();
    static constexpr double kRelease = 1e-9;

    bool penetrates(std::size_t f, double flex_angle, double rot) const {
        return object_ && chain_clearance(chain(f, rot), joints_for(flex_angle), *object_) < 0;
    }

    /// Bisects [before, current] for the touching angle and parks motor m
    /// there, stalled.
    template <class Hits>
    void stop_at_contact(std::size_t m, double before, Hits hits) {
        auto& s = state_.motors[m];
        double lo = before, hi = s.angle;
        if (hits(lo)) {
            hi = lo;
        } else {
            for (int i = 0; i < 50; ++i) {
                const double mid = 0.5 * (lo + hi);
                (hits(mid) ? hi : lo) = mid;
            }
        }
        s.angle = lo;
        s.velocity = 0.0;
        s.stalled = true;
        s.encoder.update(s.angle);
    }

    void mark_contact(std::size_t f) {
        state_.contacts[f] = true;
        contact_flex_[f] = state_.motors[f].angle;
        if (f == kThumb) contact_rotation_ = state_.motors[kThumbRotation].angle;
    }

    HandConfig cfg_;
    std::optional<SimObject> object_;
    HandState state_;
    std::array<PidState, kMotors> pid_{};
    std::array<double, kChains> contact_flex_{};
    double contact_rotation_ = 0.0;
    bool thumb_flex_contact_ = false;
    bool enabled_ = true;
    std::int64_t substeps_ = 0;
};

// ---------------------------------------------------------------------------
// Grasp execution

/// Which chains must touch for a grasp to count as held.
struct ContactRequirement {
    bool thumb = false;
    std::array<bool, 4> fingers{}; ///< index, middle, ring, little that must all touch
    std::size_t min_fingers = 0;   ///< among the four fingers

    bool satisfied(const std::array<bool, kChains>& c) const {
        if (thumb && !c[kThumb]) return false;
        std::size_t n = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            if (fingers[i] && !c[i + 1]) return false;
            n += c[i + 1];
        }
        return n >= min_fingers;
    }
};

inline ContactRequirement requirement_for(GraspType g) {
    switch (g) {
    case GraspType::Cylindrical:
    case GraspType::Spherical: return {true, {}, 3};
    case GraspType::Hook: return {false, {}, 3};
    case GraspType::Lateral:
    case GraspType::Pinch: return {true, {true, false, false, false}, 1};
    case GraspType::Tripod: return {true, {true, true, false, false}, 2};
    }
    return {};
}

struct GraspOutcome {
    bool success = false;
    bool timed_out = false;
    std::size_t contact_count = 0;
    Tick settle_ticks = 0; ///< ms from the command until the hand came to rest
    std::array<bool, kChains> contacts{};
};

/// Motor m is at rest: stalled against a contact, or inside the settle band
/// around its target and nearly still.
inline bool motor_settled(const HandSim& h, std::size_t m) {
    const auto& s = h.state().motors[m];
    if (s.stalled) return true;
    const double band = std::max(h.config().settle_band * std::abs(h.state().targets[m] - h.config().motor(m).min_angle),
                                 h.count_angle(m));
    return std::abs(s.angle - h.state().targets[m]) <= band && std::abs(s.velocity) < 0.05;
}

inline bool hand_settled(const HandSim& h) {
    for (std::size_t m = 0; m < kMotors; ++m)
        if (!motor_settled(h, m)) return false;
    return true;
}

/// Publishes the hand state on the hand_state channel when a bus is given.
inline void publish_state(const HandSim& h, bus::MessageBus* b) {
    if (b) b->publish(std::string(bus::channels::kHandState), h.state());
}

/// Drives `targets` until the hand holds still for `hold` control ticks or
/// `timeout` elapses. Returns the settle time in ms, or nullopt on timeout.
inline std::optional<Tick> run_until_settled(HandSim& h, const Setpoints& targets, Tick timeout, bus::MessageBus* b = nullptr,
                                             int hold = 5) {
    h.command(targets);
    const Tick start = h.tick();
    int still = 0;
    Tick first_still = start;
    while (h.tick() - start < timeout) {
        h.step();
        publish_state(h, b);
        if (hand_settled(h)) {
            if (still++ == 0) first_still = h.tick();
            if (still >= hold) return first_still - start;
        } else {
            still = 0;
        }
    }
    return std::nullopt;
}

/// A grasp advanced one control tick at a time: pre-shape the thumb rotation
/// with the fingers open, then close. Each step() is exactly one HandSim
/// step, so a control loop can run it alongside other work.
class GraspMotion {
public:
    static constexpr int kHold = 5; ///< still control ticks that count as settled

    /// The hand must be open.
    GraspMotion(HandSim& h, GraspType g) : grasp_(g), start_(h.tick()) {
        if (!h.is_open()) throw Error("execute_grasp: the hand must be open");
        Setpoints preshape{};
        preshape[kThumbRotation] = h.config().setpoints[index_of(g)][kThumbRotation];
        h.command(preshape);
    }

    GraspType grasp() const { return grasp_; }
    bool done() const { return phase_ == Phase::Done; }
    const GraspOutcome& outcome() const { return outcome_; }

    /// Returns true once the motion has finished.
    bool step(HandSim& h, bus::MessageBus* b = nullptr) {
        if (done()) return true;
        h.step();
        publish_state(h, b);
        if (hand_settled(h)) {
            if (still_++ == 0) first_still_ = h.tick();
        } else {
            still_ = 0;
        }
        if (still_ >= kHold) {
            if (phase_ == Phase::Preshape) {
                phase_ = Phase::Close;
                still_ = 0;
                h.command(h.config().setpoints[index_of(grasp_)]);
            } else {
                finish(h, false);
                return true;
            }
        }
        if (h.tick() - start_ >= h.config().timeout_ms) finish(h, true);
        return done();
    }

private:
    enum class Phase { Preshape, Close, Done };

    void finish(const HandSim& h, bool timed_out) {
        phase_ = Phase::Done;
        outcome_.timed_out = timed_out;
        outcome_.contacts = h.state().contacts;
        outcome_.contact_count = h.state().contact_count();
        outcome_.settle_ticks = (timed_out ? h.tick() : first_still_) - start_;
        outcome_.success = !timed_out && requirement_for(grasp_).satisfied(outcome_.contacts);
    }

    GraspType grasp_;
    Tick start_;
    Phase phase_ = Phase::Preshape;
    int still_ = 0;
    Tick first_still_ = 0;
    GraspOutcome outcome_;
};

/// Runs a GraspMotion to completion. A timeout is a failed outcome, not an
/// error.
inline GraspOutcome execute_grasp(HandSim& h, GraspType g, bus::MessageBus* b = nullptr) {
    GraspMotion m(h, g);
    while (!m.step(h, b)) {
    }
    return m.outcome();
}

inline GraspOutcome execute_grasp(const HandConfig& cfg, GraspType g, std::optional<SimObject> object,
                                  bus::MessageBus* b = nullptr) {
    HandSim h(cfg, std::move(object));
    return execute_grasp(h, g, b);
}

/// Step response of every motor from the open pose with no object.
struct MotorResponse {
    double settle_time = 0.0;  ///< s, last exit from the settle band
    double overshoot = 0.0;    ///< fraction of the step
    double final_error = 0.0;  ///< rad
    std::int64_t steady_count_span = 0; ///< max - min encoder count over the last second
};

inline std::array<MotorResponse, kMotors> step_response(const HandConfig& cfg, const Setpoints& targets,
                                                        double duration = 3.0) {
    HandSim h(cfg);
    h.command(targets);
    std::array<MotorResponse, kMotors> r{};
    std::array<std::int64_t, kMotors> lo{}, hi{};
    lo.fill(std::numeric_limits<std::int64_t>::max());
    hi.fill(std::numeric_limits<std::int64_t>::min());
    const int ticks = static_cast<int>(std::lround(duration * cfg.control_hz));
    for (int k = 1; k <= ticks; ++k) {
        h.step();
        const double t = static_cast<double>(h.tick()) / 1000.0;
        for (std::size_t m = 0; m < kMotors; ++m) {
            const auto& s = h.state().motors[m];
            const double step = targets[m] - cfg.motor(m).min_angle;
            const double band = std::max(cfg.settle_band * std::abs(step), 1e-12);
            if (std::abs(s.angle - targets[m]) > band) r[m].settle_time = t;
            if (step != 0) r[m].overshoot = std::max(r[m].overshoot, (s.angle - targets[m]) / step);
            if (t > duration - 1.0) {
                lo[m] = std::min(lo[m], s.encoder_count());
                hi[m] = std::max(hi[m], s.encoder_count());
            }
        }
    }
    for (std::size_t m = 0; m < kMotors; ++m) {
        r[m].final_error = h.state().motors[m].angle - targets[m];
        r[m].steady_count_span = hi[m] - lo[m];
    }
    return r;
}

} // namespace handadapt::handsim
