#pragma once

// Gear motor surrogate, quadrature encoder and PID position loop.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace handadapt::handsim {

/// Output-shaft model of a 130 RPM micro gear motor.
struct MotorParams {
    double no_load_speed = 13.61; ///< rad/s at duty 1 (130 RPM)
    double stall_torque = 0.35;   ///< N*m at duty 1
    double time_constant = 0.02;  ///< s, velocity response
    double min_angle = 0.0;       ///< hard stops, rad
    double max_angle = std::numbers::pi;
    int counts_per_rev = 1200;    ///< quadrature counts per output revolution
};

/// A/B levels as a 2-bit state: bit 0 is A, bit 1 is B. Forward rotation
/// walks 00 -> 01 -> 11 -> 10.
constexpr std::uint8_t quadrature_state(std::int64_t position) {
    constexpr std::array<std::uint8_t, 4> gray{0b00, 0b01, 0b11, 0b10};
    return gray[static_cast<std::size_t>(((position % 4) + 4) % 4)];
}

/// Edge decoder as on an interrupt-driven counter. A change of both lines at
/// once cannot be attributed to a direction and is counted as an error.
class QuadratureDecoder {
public:
    /// Returns false on an illegal transition.
    bool sample(std::uint8_t ab) {
        // [prev][cur]: +1 forward, -1 reverse, 0 no change, 2 illegal.
        static constexpr std::array<std::array<int, 4>, 4> kStep{{
            {0, +1, -1, 2},
            {-1, 0, 2, +1},
            {+1, 2, 0, -1},
            {2, -1, +1, 0},
        }};
        const int d = kStep[state_][ab & 0b11];
        state_ = ab & 0b11;
        if (d == 2) {
            ++errors_;
            return false;
        }
        count_ += d;
        return true;
    }

    std::int64_t count() const { return count_; }
    std::uint64_t errors() const { return errors_; }
    friend bool operator==(const QuadratureDecoder&, const QuadratureDecoder&) = default;

private:
    std::uint8_t state_ = 0;
    std::int64_t count_ = 0;
    std::uint64_t errors_ = 0;
};

/// Hall-effect quadrature pair on the output shaft feeding a decoder edge by
/// edge. The line index is floor(angle * cpr / 2pi).
class QuadratureEncoder {
public:
    QuadratureEncoder() = default;
    explicit QuadratureEncoder(int counts_per_rev) : cpr_(counts_per_rev) {}

    void update(double angle) {
        const auto target = static_cast<std::int64_t>(std::floor(angle * cpr_ / (2 * std::numbers::pi)));
        while (line_ != target) {
            line_ += line_ < target ? 1 : -1;
            decoder_.sample(quadrature_state(line_));
        }
    }

    std::int64_t count() const { return decoder_.count(); }
    std::uint64_t errors() const { return decoder_.errors(); }
    int counts_per_rev() const { return cpr_; }
    double measured_angle() const { return static_cast<double>(count()) * 2 * std::numbers::pi / cpr_; }
    friend bool operator==(const QuadratureEncoder&, const QuadratureEncoder&) = default;

private:
    int cpr_ = 1200;
    std::int64_t line_ = 0;
    QuadratureDecoder decoder_;
};

inline std::int64_t ideal_count(double angle, int cpr) {
    return static_cast<std::int64_t>(std::llround(angle * cpr / (2 * std::numbers::pi)));
}

struct MotorState {
    double angle = 0.0;    ///< rad, output shaft
    double velocity = 0.0; ///< rad/s
    double duty = 0.0;     ///< last applied, [-1, 1]
    bool stalled = false;
    QuadratureEncoder encoder;

    std::int64_t encoder_count() const { return encoder.count(); }
    friend bool operator==(const MotorState&, const MotorState&) = default;
};

struct MotorLoad {
    /// Passive torque opposing positive rotation (spring return). May
    /// back-drive the motor.
    double torque = 0.0;
    /// Reaction a contact can supply against positive rotation. Infinity for
    /// a rigid object.
    double contact_torque = 0.0;
};

/// Velocity relaxes toward the torque-speed line with time constant tau.
/// Pushing into a contact that can resist the available drive stalls the
/// motor in place.
inline MotorState motor_step(const MotorParams& p, MotorState s, double duty, const MotorLoad& load, double dt) {
    s.duty = std::clamp(duty, -1.0, 1.0);
    double drive = s.duty * p.stall_torque - load.torque;
    if (load.contact_torque > 0 && drive > 0) {
        if (load.contact_torque >= drive) {
            s.velocity = 0.0;
            s.stalled = true;
            return s;
        }
        drive -= load.contact_torque;
    }
    s.stalled = false;
    const double target = std::clamp(p.no_load_speed * drive / p.stall_torque, -p.no_load_speed, p.no_load_speed);
    s.velocity = target + (s.velocity - target) * std::exp(-dt / p.time_constant);
    s.angle += s.velocity * dt;
    if (s.angle <= p.min_angle) {
        s.angle = p.min_angle;
        s.velocity = std::max(s.velocity, 0.0);
    } else if (s.angle >= p.max_angle) {
        s.angle = p.max_angle;
        s.velocity = std::min(s.velocity, 0.0);
    }
    s.encoder.update(s.angle);
    return s;
}

struct PidGains {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    double integral_limit = std::numeric_limits<double>::infinity(); ///< |integral of e| bound
    double output_limit = 1.0;
};

struct PidState {
    double integral = 0.0;
    double prev_error = 0.0;
    bool primed = false; ///< no derivative term on the first call
    friend bool operator==(const PidState&, const PidState&) = default;
};

/// duty = clamp(kp e + ki integral + kd de/dt). The integral is clamped
/// (anti-windup).
inline double pid_step(const PidGains& g, PidState& s, double setpoint, double measured, double dt) {
    const double e = setpoint - measured;
    s.integral = std::clamp(s.integral + e * dt, -g.integral_limit, g.integral_limit);
    const double de = s.primed ? (e - s.prev_error) / dt : 0.0;
    s.prev_error = e;
    s.primed = true;
    return std::clamp(g.kp * e + g.ki * s.integral + g.kd * de, -g.output_limit, g.output_limit);
}

} // namespace handadapt::handsim
