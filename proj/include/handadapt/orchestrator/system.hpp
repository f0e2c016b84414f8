#pragma once

// The whole pipeline on one bus and one simulated clock: EMG pose pump,
// camera, language front end, controller and hand, each a scheduler task.
// Also the headless scenario runner used by `run --headless`.

#include <deque>
#include <filesystem>
#include <memory>
#include <sstream>
#include <variant>

#include "handadapt/emg/emg.hpp"
#include "handadapt/handsim/objects.hpp"
#include "handadapt/nlu/grounding.hpp"
#include "handadapt/orchestrator/camera.hpp"
#include "handadapt/orchestrator/controller.hpp"
#include "handadapt/orchestrator/hand_driver.hpp"

namespace handadapt::orchestrator {

struct SystemConfig {
    std::uint64_t seed = 1;
    handsim::HandConfig hand = handsim::HandConfig::defaults();
    ControllerConfig controller;
    emg::CalibrationProfile emg = emg::CalibrationProfile::defaults();
    vision::JitterConfig jitter;
    Tick camera_period_ms = 100; ///< 10 Hz

    /// Keys: system.seed, system.camera_period_ms, plus the hand.*,
    /// orchestrator.*, emg.* and jitter.* families. The EMG centroids come
    /// from a calibration pass seeded by system.seed.
    static SystemConfig from_config(const KeyValueConfig& kv) {
        SystemConfig c;
        c.seed = static_cast<std::uint64_t>(kv.get_int_or("system.seed", 1));
        c.camera_period_ms = kv.get_int_or("system.camera_period_ms", c.camera_period_ms);
        if (c.camera_period_ms < 1) throw ConfigError("system.camera_period_ms must be positive");
        c.hand = handsim::HandConfig::from_config(kv);
        c.controller = ControllerConfig::from_config(kv);
        c.emg = emg::calibrate(emg::CalibrationProfile::from_config(kv), derive_seed(c.seed, 0xE3));
        c.jitter = vision::JitterConfig::from_config(kv);
        return c;
    }

    static SystemConfig defaults(std::uint64_t seed = 1) {
        SystemConfig c;
        c.seed = seed;
        c.emg = emg::calibrate(c.emg, derive_seed(seed, 0xE3));
        return c;
    }
};

class System {
public:
    /// `grounder` may be null; text commands then fail with feedback.
    System(SystemConfig cfg, std::optional<classifier::GraspModel> model = std::nullopt,
           std::shared_ptr<const nlu::Grounder> grounder = nullptr)
        : cfg_(std::move(cfg)), bus_(&clock_), sched_(clock_), hand_(cfg_.hand),
          camera_(bus_, derive_seed(cfg_.seed, 0xCA), cfg_.jitter), controller_(bus_, slot_, cfg_.hand, cfg_.controller),
          driver_(bus_, hand_), pump_(cfg_.emg), grounder_(std::move(grounder)) {
        if (model) slot_.install(std::move(*model));
        text_ = bus_.subscribe<TextCommand>(std::string(channels::kTextCommand));
        sched_.add_task("emg", emg::kTicksPerFrame, [this](Tick now) { emg_task(now); });
        sched_.add_task("camera", cfg_.camera_period_ms, [this](Tick) { camera_.capture(); });
        sched_.add_task("nlu", 1, [this](Tick) { nlu_task(); });
        sched_.add_task("controller", 1, [this](Tick) { controller_.pump(); });
        sched_.add_task("hand", cfg_.hand.control_period_ms(), [this](Tick) { driver_.control_tick(); });
    }

    bus::MessageBus& bus() { return bus_; }
    bus::Scheduler& scheduler() { return sched_; }
    Controller& controller() { return controller_; }
    const handsim::HandSim& hand() const { return hand_; }
    CameraSim& camera() { return camera_; }
    ModelSlot& models() { return slot_; }
    const SystemConfig& config() const { return cfg_; }
    Tick now() const { return clock_.now(); }

    /// Puts an object in front of the camera and the hand; nullopt clears it.
    void present(std::optional<vision::ObjectClass> obj) {
        camera_.present(obj);
        hand_.set_object(obj ? std::optional(handsim::staged_object(*obj)) : std::nullopt);
    }

    /// Queues EMG frames; their ticks are taken relative to now.
    void queue_emg(std::span<const emg::EmgFrame> frames) {
        const Tick base = (clock_.now() + emg::kTicksPerFrame - 1) / emg::kTicksPerFrame * emg::kTicksPerFrame;
        for (auto f : frames) {
            f.tick += base;
            emg_.push_back(f);
        }
    }

    /// Headless runs join each retrain job on the pump so logs stay
    /// reproducible; interactive runs let it overlap.
    void set_synchronous_retrain(bool on) { sync_retrain_ = on; }

    void step() {
        sched_.step();
        if (sync_retrain_ && controller_.retrainer().running()) controller_.retrainer().wait();
    }

    void run_for(Tick ms) {
        for (Tick i = 0; i < ms; ++i) step();
    }

private:
    void emg_task(Tick now) {
        while (!emg_.empty() && emg_.front().tick <= now) {
            if (auto cmd = pump_.push(emg_.front())) bus_.publish(std::string(channels::kPose), bus::PoseEvent{*cmd});
            emg_.pop_front();
        }
    }

    void nlu_task() {
        for (auto& e : text_.drain()) {
            if (grounder_) {
                nlu::ground_text(*grounder_, bus_, e.payload.text);
            } else {
                bus_.publish(std::string(channels::kFeedback),
                             bus::Feedback{bus::FeedbackLevel::Error, "nlu", "no language model loaded"});
            }
        }
    }

    SystemConfig cfg_;
    bus::SimClock clock_;
    bus::MessageBus bus_;
    bus::Scheduler sched_;
    ModelSlot slot_;
    handsim::HandSim hand_;
    CameraSim camera_;
    Controller controller_;
    HandDriver driver_;
    emg::PosePump pump_;
    std::deque<emg::EmgFrame> emg_;
    std::shared_ptr<const nlu::Grounder> grounder_;
    bus::Subscription<TextCommand> text_;
    bool sync_retrain_ = false;
};

// ---------------------------------------------------------------------------
// Scenarios

/// One line of a scenario script. Gesture lines (`fist 600`, `rest 1000`,
/// `wait 500` = rest) take time; every other line happens at the current
/// time: `object <name|none>`, `button <grasp>`, `text <sentence>`, `open`,
/// `stop`, `power_down`, `retrain`.
struct ScenarioStep {
    enum class Kind : std::uint8_t { Gesture, Object, Button, Text, Open, Stop, PowerDown, Retrain };
    Kind kind = Kind::Gesture;
    emg::Gesture gesture = emg::Gesture::Rest;
    Tick duration = 0;
    std::optional<vision::ObjectClass> object;
    GraspType grasp = GraspType::Cylindrical;
    std::string text;
};

using Scenario = std::vector<ScenarioStep>;

inline Scenario parse_scenario(std::string_view text) {
    Scenario out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        const auto where = "scenario line " + std::to_string(lineno) + ": ";
        using K = ScenarioStep::Kind;
        ScenarioStep s;
        const auto& w = toks[0];
        auto arity = [&](std::size_t n) {
            if (toks.size() != n) throw ConfigError(where + "'" + w + "' takes " + std::to_string(n - 1) + " argument(s)");
        };
        if (w == "object") {
            arity(2);
            s.kind = K::Object;
            if (toks[1] != "none") {
                s.object = vision::object_from_string(toks[1]);
                if (!s.object) throw ConfigError(where + "unknown object '" + toks[1] + "'");
            }
        } else if (w == "button") {
            arity(2);
            s.kind = K::Button;
            const auto g = grasp_from_string(toks[1]);
            if (!g) throw ConfigError(where + "unknown grasp '" + toks[1] + "'");
            s.grasp = *g;
        } else if (w == "text") {
            if (toks.size() < 2) throw ConfigError(where + "'text' needs a sentence");
            s.kind = K::Text;
            const auto start = line.find("text") + 4;
            s.text = std::string(trim(std::string_view(line).substr(start)));
        } else if (w == "open" || w == "stop" || w == "power_down" || w == "retrain") {
            arity(1);
            s.kind = w == "open" ? K::Open : w == "stop" ? K::Stop : w == "power_down" ? K::PowerDown : K::Retrain;
        } else {
            arity(2);
            const auto g = w == "wait" ? std::optional(emg::Gesture::Rest) : emg::gesture_from_string(w);
            if (!g) throw ConfigError(where + "unknown command or gesture '" + w + "'");
            const double d = parse_double(toks[1], "duration");
            if (!(d > 0)) throw ConfigError(where + "duration must be positive");
            s.kind = K::Gesture;
            s.gesture = *g;
            s.duration = static_cast<Tick>(d);
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return parse_scenario(s.str());
}

/// Publishes the command a non-gesture step stands for.
inline void apply_step(System& sys, const ScenarioStep& s) {
    using K = ScenarioStep::Kind;
    auto& b = sys.bus();
    const std::string ov(channels::kOverride);
    switch (s.kind) {
    case K::Gesture: break;
    case K::Object: sys.present(s.object); break;
    case K::Button: b.publish(ov, bus::OverrideCommand::from(HandAction::make_grasp(s.grasp), vision::Source::Gui)); break;
    case K::Text: b.publish(std::string(channels::kTextCommand), TextCommand{s.text}); break;
    case K::Open: b.publish(ov, bus::OverrideCommand::from(HandAction::open(), vision::Source::Gui)); break;
    case K::Stop: b.publish(ov, bus::OverrideCommand::from(HandAction::stop(), vision::Source::Gui)); break;
    case K::PowerDown: b.publish(std::string(channels::kSystem), SystemCommand{SystemCommand::Kind::PowerDown}); break;
    case K::Retrain: b.publish(std::string(channels::kSystem), SystemCommand{SystemCommand::Kind::Retrain}); break;
    }
}

struct ScenarioResult {
    std::string log;       ///< controller log, outcomes, final state
    ControllerState final_state = ControllerState::Idle;
    std::vector<GraspReport> outcomes;
    std::vector<bus::PredictedGrasp> predictions;
    std::vector<bus::Feedback> feedback;
};

/// Plays a scenario in simulated time, then runs `tail_ms` more so the last
/// motion can finish. The EMG stream is synthesized once from the gesture
/// lines with `emg_seed`.
inline ScenarioResult run_scenario(System& sys, const Scenario& sc, std::uint64_t emg_seed, Tick tail_ms = 3000) {
    auto& b = sys.bus();
    b.enable_delivery_log();
    auto outcomes = b.subscribe<GraspReport>(std::string(channels::kGraspOutcome));
    auto predictions = b.subscribe<bus::PredictedGrasp>(std::string(channels::kPredictedGrasp));
    auto fb = b.subscribe<bus::Feedback>(std::string(channels::kFeedback));
    sys.set_synchronous_retrain(true);

    emg::GestureScript script;
    std::vector<std::pair<Tick, const ScenarioStep*>> events;
    Tick t = 0;
    for (const auto& s : sc) {
        if (s.kind == ScenarioStep::Kind::Gesture) {
            script.push_back({s.gesture, s.duration});
            t += s.duration;
        } else {
            events.emplace_back(t, &s);
        }
    }
    if (!script.empty()) sys.queue_emg(emg::synth_stream(script, sys.config().emg, emg_seed));

    ScenarioResult r;
    auto collect = [&] {
        for (auto& e : outcomes.drain()) r.outcomes.push_back(e.payload);
        for (auto& e : predictions.drain()) r.predictions.push_back(e.payload);
        for (auto& e : fb.drain()) r.feedback.push_back(e.payload);
    };
    std::size_t next = 0;
    const Tick end = t + tail_ms;
    for (Tick k = 0; k < end; ++k) {
        while (next < events.size() && events[next].first <= k) apply_step(sys, *events[next++].second);
        sys.step();
        collect();
    }

    std::ostringstream log;
    log << sys.controller().log();
    for (const auto& o : r.outcomes)
        log << "outcome\t" << o.id << '\t' << to_string(o.grasp) << '\t' << (o.outcome.success ? "held" : "not held")
            << '\t' << o.outcome.contact_count << '\t' << o.outcome.settle_ticks << (o.interrupted ? "\tinterrupted" : "")
            << '\n';
    const auto& hs = sys.hand().state();
    log << "final\t" << to_string(sys.controller().state()) << "\tcontacts";
    for (bool c : hs.contacts) log << ' ' << c;
    log << "\tcounts";
    for (const auto& m : hs.motors) log << ' ' << m.encoder_count();
    log << "\nbus\t" << hex64(fnv1a(b.delivery_log())) << '\n';
    r.log = log.str();
    r.final_state = sys.controller().state();
    return r;
}

// ---------------------------------------------------------------------------
// Model and language resources

inline std::shared_ptr<const nlu::Grounder> make_grounder(const std::filesystem::path& grammar,
                                                          const std::filesystem::path& corpus) {
    nlu::Parser parser(nlu::Grammar::load(grammar));
    auto model = nlu::train_factors(nlu::load_corpus(corpus), parser);
    return std::make_shared<const nlu::Grounder>(std::move(parser), std::move(model));
}

/// The initial six-object corpus used to train the start-up model and as the
/// base of every retrain.
inline vision::DatasetStore initial_corpus(std::size_t per_class, std::uint64_t seed, const vision::JitterConfig& j = {}) {
    return vision::generate_corpus(vision::kInitialObjects, per_class, seed, j);
}

} // namespace handadapt::orchestrator
