#pragma once

// Simulated 8-channel forearm sEMG, RMS window classification and the
// debounced pose pump that turns gestures into open/close hand events.
//
// Channel c of a gesture with template amplitude A_c is sampled as
//
//   x_c[k] = clamp(A_c(t) * sqrt(2) * sin(pi/2 * k + phase_c) + sigma * n, -1, 1)
//
// with n standard normal. Any 4 consecutive carrier samples have mean square
// exactly 1, so a noise-free 40-frame window has RMS equal to A_c. A_c(t)
// ramps linearly between consecutive gestures.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "handadapt/core/config.hpp"
#include "handadapt/core/random.hpp"
#include "handadapt/core/types.hpp"
#include "handadapt/msgbus/bus.hpp"
#include "handadapt/msgbus/messages.hpp"

namespace handadapt::emg {

enum class Gesture : std::uint8_t { Fist, SpreadFingers, WaveIn, WaveOut, FingerTap, Rest };

inline constexpr std::size_t kGestureCount = 6;
inline constexpr std::array<std::string_view, kGestureCount> kGestureNames = {
    "fist", "spread_fingers", "wave_in", "wave_out", "finger_tap", "rest"};

constexpr std::string_view to_string(Gesture g) { return kGestureNames[static_cast<std::size_t>(g)]; }

inline std::optional<Gesture> gesture_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kGestureCount; ++i)
        if (kGestureNames[i] == s) return static_cast<Gesture>(i);
    return std::nullopt;
}

/// Only fist and spread fingers drive the hand.
constexpr std::optional<bus::PoseCommand> command_for(Gesture g) {
    if (g == Gesture::Fist) return bus::PoseCommand::CloseHand;
    if (g == Gesture::SpreadFingers) return bus::PoseCommand::OpenHand;
    return std::nullopt;
}

inline constexpr std::size_t kChannels = 8;
inline constexpr int kSampleRateHz = 200;
inline constexpr Tick kTicksPerFrame = 1000 / kSampleRateHz;
inline constexpr std::size_t kWindowFrames = 40; ///< 200 ms
inline constexpr std::size_t kHopFrames = 20;

using Rms = std::array<double, kChannels>;

struct EmgFrame {
    Tick tick = 0;
    std::array<double, kChannels> samples{};
    friend bool operator==(const EmgFrame&, const EmgFrame&) = default;
};

struct ScriptStep {
    Gesture gesture = Gesture::Rest;
    Tick duration = 0; ///< ms
    friend bool operator==(const ScriptStep&, const ScriptStep&) = default;
};

using GestureScript = std::vector<ScriptStep>;

/// Lines `gesture duration_ms`; `#` starts a comment.
inline GestureScript parse_script(std::string_view text) {
    GestureScript out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        const auto where = "gesture script line " + std::to_string(lineno);
        if (toks.size() != 2) throw ConfigError(where + ": expected 'gesture duration_ms'");
        const auto g = gesture_from_string(toks[0]);
        if (!g) throw ConfigError(where + ": unknown gesture '" + toks[0] + "'");
        const double d = parse_double(toks[1], "duration");
        if (!(d > 0)) throw ConfigError(where + ": duration must be positive");
        out.push_back({*g, static_cast<Tick>(d)});
    }
    return out;
}

inline GestureScript load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open gesture script '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return parse_script(s.str());
}

/// The synthetic arm (templates, noise) and the classifier's view of it
/// (centroids, rejection radius).
struct CalibrationProfile {
    std::array<Rms, kGestureCount> templates{};
    std::array<Rms, kGestureCount> centroids{};
    double noise_sigma = 0.1;
    double rejection_radius = 0.35;
    Tick ramp_ticks = 50;
    std::size_t debounce_windows = 3;

    /// Flexor-heavy fist, extensor-heavy spread, radial/ulnar wrist waves, a
    /// diffuse tap, silent rest. Peaks stay below 1/sqrt(2) so the carrier
    /// never clips without noise. Centroids start equal to the templates.
    static CalibrationProfile defaults() {
        CalibrationProfile p;
        p.templates = {{
            {0.65, 0.60, 0.50, 0.40, 0.15, 0.10, 0.10, 0.10}, // fist
            {0.10, 0.10, 0.15, 0.20, 0.45, 0.60, 0.65, 0.50}, // spread fingers
            {0.60, 0.40, 0.10, 0.05, 0.05, 0.10, 0.25, 0.45}, // wave in
            {0.10, 0.25, 0.50, 0.60, 0.45, 0.25, 0.10, 0.05}, // wave out
            {0.30, 0.35, 0.30, 0.25, 0.25, 0.30, 0.35, 0.30}, // finger tap
            {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},         // rest
        }};
        p.centroids = p.templates;
        return p;
    }

    /// Keys: emg.noise_sigma, emg.rejection_radius, emg.ramp_ms,
    /// emg.debounce_windows, emg.template.<gesture>, emg.centroid.<gesture>.
    static CalibrationProfile from_config(const KeyValueConfig& c) {
        auto p = defaults();
        p.noise_sigma = c.get_double_or("emg.noise_sigma", p.noise_sigma);
        p.rejection_radius = c.get_double_or("emg.rejection_radius", p.rejection_radius);
        p.ramp_ticks = c.get_int_or("emg.ramp_ms", p.ramp_ticks);
        p.debounce_windows = static_cast<std::size_t>(c.get_int_or("emg.debounce_windows", 3));
        for (std::size_t g = 0; g < kGestureCount; ++g) {
            const auto name = std::string(kGestureNames[g]);
            if (c.has("emg.template." + name)) p.templates[g] = read_rms(c, "emg.template." + name);
            p.centroids[g] = c.has("emg.centroid." + name) ? read_rms(c, "emg.centroid." + name) : p.templates[g];
        }
        if (p.noise_sigma < 0 || !(p.rejection_radius > 0) || p.debounce_windows == 0 || p.ramp_ticks < 0)
            throw ConfigError("emg profile: invalid noise, radius, ramp or debounce");
        return p;
    }

    KeyValueConfig to_config() const {
        KeyValueConfig c;
        std::ostringstream s;
        s.precision(17);
        auto num = [&](double v) {
            s.str({});
            s << v;
            return s.str();
        };
        c.set("emg.noise_sigma", num(noise_sigma));
        c.set("emg.rejection_radius", num(rejection_radius));
        c.set("emg.ramp_ms", std::to_string(ramp_ticks));
        c.set("emg.debounce_windows", std::to_string(debounce_windows));
        for (std::size_t g = 0; g < kGestureCount; ++g) {
            std::string t, m;
            for (std::size_t ch = 0; ch < kChannels; ++ch) {
                t += (ch ? " " : "") + num(templates[g][ch]);
                m += (ch ? " " : "") + num(centroids[g][ch]);
            }
            c.set("emg.template." + std::string(kGestureNames[g]), t);
            c.set("emg.centroid." + std::string(kGestureNames[g]), m);
        }
        return c;
    }

    double min_separation() const {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < kGestureCount; ++a)
            for (std::size_t b = a + 1; b < kGestureCount; ++b) best = std::min(best, distance(centroids[a], centroids[b]));
        return best;
    }

    /// Centroids pairwise further apart than 2 sigma.
    bool separated() const { return min_separation() > 2.0 * noise_sigma; }

    static double distance(const Rms& a, const Rms& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < kChannels; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    }

private:
    static Rms read_rms(const KeyValueConfig& c, const std::string& key) {
        const auto v = c.get_doubles(key);
        if (v.size() != kChannels) throw ConfigError(key + " needs 8 values");
        Rms r{};
        std::copy(v.begin(), v.end(), r.begin());
        return r;
    }
};

/// One frame every 5 ticks from tick 0. Deterministic per seed.
inline std::vector<EmgFrame> synth_stream(const GestureScript& script, const CalibrationProfile& profile,
                                          std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::vector<EmgFrame> out;
    Rms prev = profile.templates[static_cast<std::size_t>(Gesture::Rest)];
    Tick t0 = 0;
    std::uint64_t k = 0;
    for (const auto& step : script) {
        if (step.duration <= 0) throw Error("gesture durations must be positive");
        const auto& target = profile.templates[static_cast<std::size_t>(step.gesture)];
        const Tick t1 = t0 + step.duration;
        for (Tick t = static_cast<Tick>(k) * kTicksPerFrame; t < t1; t = static_cast<Tick>(++k) * kTicksPerFrame) {
            const double ramp =
                profile.ramp_ticks > 0 ? std::min(1.0, static_cast<double>(t - t0) / static_cast<double>(profile.ramp_ticks))
                                       : 1.0;
            EmgFrame f;
            f.tick = t;
            for (std::size_t c = 0; c < kChannels; ++c) {
                const double amp = prev[c] + (target[c] - prev[c]) * ramp;
                const double carrier =
                    std::numbers::sqrt2 * std::sin(std::numbers::pi / 2 * static_cast<double>(k) + 0.7 * static_cast<double>(c));
                const double noise = profile.noise_sigma > 0 ? profile.noise_sigma * normal01(rng) : 0.0;
                f.samples[c] = std::clamp(amp * carrier + noise, -1.0, 1.0);
            }
            out.push_back(f);
        }
        // The next gesture ramps from wherever this one ended.
        const double end_ramp =
            profile.ramp_ticks > 0 ? std::min(1.0, static_cast<double>(step.duration) / static_cast<double>(profile.ramp_ticks))
                                   : 1.0;
        for (std::size_t c = 0; c < kChannels; ++c) prev[c] = prev[c] + (target[c] - prev[c]) * end_ramp;
        t0 = t1;
    }
    return out;
}

inline Rms window_rms(std::span<const EmgFrame> frames) {
    Rms r{};
    for (const auto& f : frames)
        for (std::size_t c = 0; c < kChannels; ++c) r[c] += f.samples[c] * f.samples[c];
    for (auto& v : r) v = std::sqrt(v / static_cast<double>(frames.size()));
    return r;
}

/// Nearest centroid; ties go to the earlier gesture. Rest when the nearest is
/// Rest or lies beyond the rejection radius.
inline Gesture classify_rms(const Rms& x, const CalibrationProfile& p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < kGestureCount; ++g) {
        const double d = CalibrationProfile::distance(x, p.centroids[g]);
        if (d < best_d) {
            best_d = d;
            best = g;
        }
    }
    if (best_d > p.rejection_radius) return Gesture::Rest;
    return static_cast<Gesture>(best);
}

inline Gesture classify_window(std::span<const EmgFrame> frames, const CalibrationProfile& p) {
    if (frames.size() != kWindowFrames) throw Error("classify_window needs exactly 40 frames");
    return classify_rms(window_rms(frames), p);
}

/// Stand-in for the armband's calibration pass: each gesture is held for
/// `windows` windows and its centroid set to the mean steady-state RMS.
inline CalibrationProfile calibrate(CalibrationProfile p, std::uint64_t seed, std::size_t windows = 50) {
    for (std::size_t g = 0; g < kGestureCount; ++g) {
        const Tick hold = static_cast<Tick>(windows * kWindowFrames) * kTicksPerFrame;
        const auto frames = synth_stream({{static_cast<Gesture>(g), hold + p.ramp_ticks + kTicksPerFrame}}, p,
                                         derive_seed(seed, g));
        const std::size_t skip = static_cast<std::size_t>(p.ramp_ticks / kTicksPerFrame) + 1;
        Rms mean{};
        for (std::size_t w = 0; w < windows; ++w) {
            const auto r = window_rms(std::span<const EmgFrame>(frames).subspan(skip + w * kWindowFrames, kWindowFrames));
            for (std::size_t c = 0; c < kChannels; ++c) mean[c] += r[c] / static_cast<double>(windows);
        }
        p.centroids[g] = mean;
    }
    return p;
}

/// Emits a gesture once it has been seen in `length` consecutive windows and
/// differs from the last stable gesture.
class Debouncer {
public:
    explicit Debouncer(std::size_t length = 3) : length_(length) {}

    std::optional<Gesture> push(Gesture g) {
        if (count_ > 0 && g == candidate_) {
            ++count_;
        } else {
            candidate_ = g;
            count_ = 1;
        }
        if (count_ == length_ && stable_ != g) {
            stable_ = g;
            return g;
        }
        return std::nullopt;
    }

    std::optional<Gesture> stable() const { return stable_; }

private:
    std::size_t length_;
    Gesture candidate_ = Gesture::Rest;
    std::size_t count_ = 0;
    std::optional<Gesture> stable_;
};

/// Frame-by-frame windowing, classification and debouncing.
class PosePump {
public:
    explicit PosePump(CalibrationProfile profile) : profile_(std::move(profile)), debounce_(profile_.debounce_windows) {}

    /// A pose command when this frame completes a window that changes the
    /// stable gesture to fist or spread fingers.
    std::optional<bus::PoseCommand> push(const EmgFrame& f) {
        window_.push_back(f);
        if (window_.size() > kWindowFrames) window_.pop_front();
        ++frames_;
        if (frames_ < kWindowFrames || (frames_ - kWindowFrames) % kHopFrames != 0) return std::nullopt;
        return classify();
    }

    const std::vector<Gesture>& window_log() const { return log_; }

private:
    std::optional<bus::PoseCommand> classify() {
        const std::vector<EmgFrame> w(window_.begin(), window_.end());
        const auto g = classify_window(w, profile_);
        log_.push_back(g);
        if (auto stable = debounce_.push(g)) return command_for(*stable);
        return std::nullopt;
    }

    CalibrationProfile profile_;
    Debouncer debounce_;
    std::deque<EmgFrame> window_;
    std::size_t frames_ = 0;
    std::vector<Gesture> log_;
};

/// Runs a whole stream through a PosePump; publishes on the pose channel when
/// a bus is given. Returns the events in order.
inline std::vector<bus::PoseEvent> pose_pump(std::span<const EmgFrame> stream, const CalibrationProfile& profile,
                                             bus::MessageBus* b = nullptr) {
    PosePump pump(profile);
    std::vector<bus::PoseEvent> out;
    for (const auto& f : stream) {
        if (auto cmd = pump.push(f)) {
            out.push_back({*cmd});
            if (b) b->publish(std::string(bus::channels::kPose), bus::PoseEvent{*cmd});
        }
    }
    return out;
}

} // namespace handadapt::emg
