// handadapt: experiments, language tools and the system runner.

#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "handadapt/experiments/adaptation.hpp"
#include "handadapt/experiments/control_report.hpp"
#include "handadapt/experiments/nlu_suite.hpp"
#include "handadapt/orchestrator/server.hpp"

namespace fs = std::filesystem;
using namespace handadapt;
using namespace handadapt::experiments;

namespace {

using steady = std::chrono::steady_clock;

double since(steady::time_point t0) { return std::chrono::duration<double>(steady::now() - t0).count(); }

KeyValueConfig load_config(const std::string& path) { return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path); }

/// Relative paths in a config file are taken from the file's directory.
fs::path resolve(const std::string& config_path, const std::string& p) {
    const fs::path f(p);
    if (f.is_absolute() || config_path.empty()) return f;
    return fs::path(config_path).parent_path() / f;
}

int report(const std::vector<Verdict>& verdicts) {
    for (const auto& v : verdicts)
        std::cout << (v.pass ? "PASS  " : "FAIL  ") << v.what << (v.detail.empty() ? "" : "  [" + v.detail + "]") << '\n';
    return all_pass(verdicts) ? 0 : 1;
}

void write_all(const fs::path& dir, const RunHeader& h, std::initializer_list<std::pair<std::string, const Table*>> files) {
    for (const auto& [name, t] : files) {
        t->write(dir / name, h);
        std::cout << "wrote " << (dir / name).string() << '\n';
    }
}

// --- exp ---------------------------------------------------------------------

struct ExpArgs {
    std::string config;
    std::string data = HANDADAPT_DATA_DIR;
    std::string out = "out";
};

int exp_nlu(const ExpArgs& a) {
    const auto kv = load_config(a.config);
    const auto cfg = NluSuiteConfig::from_config(kv, a.data);
    const auto t0 = steady::now();
    const auto res = run_nlu_suite(cfg);
    const auto dir = timestamped_dir(a.out);
    const auto table = res.table();
    write_all(dir, {"nlu", 0, cfg.hash()}, {{"nlu_suite.tsv", &table}});

    std::vector<Verdict> v;
    auto all = [](const std::vector<const SuiteRow*>& rows, auto pred) {
        return !rows.empty() && std::all_of(rows.begin(), rows.end(), pred);
    };
    v.push_back({"extended grammar: every trained sentence grounds correctly",
                 all(res.select("extended", true), [](auto* r) { return r->as_expected(); }), ""});
    v.push_back({"extended grammar: every untrained sentence meets its expectation",
                 all(res.select("extended", false), [](auto* r) { return r->as_expected(); }), ""});
    std::vector<const SuiteRow*> finger;
    for (const auto* r : res.select("base"))
        if (r->sentence.find("finger grasp") != std::string::npos) finger.push_back(r);
    v.push_back({"base grammar: finger-count sentences fail to parse",
                 all(finger, [](auto* r) { return r->fail_parse == r->repetitions(); }), ""});
    std::cout << "median grounding time (extended): " << res.median_seconds("extended") * 1e3 << " ms\n";
    std::cout << "wall time: " << since(t0) << " s\n";
    return report(v);
}

int exp_adapt(const ExpArgs& a, std::uint64_t seed, std::size_t seeds, std::optional<std::size_t> increments) {
    auto kv = load_config(a.config);
    if (increments) kv.set("adapt.increments", std::to_string(*increments));
    const auto cfg = AdaptConfig::from_config(kv);
    const auto dir = timestamped_dir(a.out);
    const auto t0 = steady::now();
    std::vector<AdaptRun> runs;
    for (std::size_t k = 0; k < seeds; ++k) {
        const auto s = seed + k;
        const auto ts = steady::now();
        runs.push_back(run_adaptation(s, cfg, [&](const AdaptStep& st) {
            const auto& b = st.of(vision::ObjectClass::Banana);
            std::cerr << "seed " << s << " step " << st.step << " banana tripod " << fixed(b[index_of(GraspType::Tripod)], 3)
                      << '\n';
        }));
        const RunHeader h{"adapt", s, cfg.hash()};
        const auto post = posterior_table(runs.back()), curve = curve_table(runs.back());
        const auto tag = "_seed" + std::to_string(s) + ".tsv";
        write_all(dir, h, {{"posteriors" + tag, &post}, {"curve" + tag, &curve}});
        std::cout << "seed " << s << ": " << since(ts) << " s\n";
    }
    const auto summary = summary_table(runs);
    write_all(dir, {"adapt-summary", seed, cfg.hash()}, {{"summary.tsv", &summary}});
    std::cout << "wall time: " << since(t0) << " s\n";
    return report(adaptation_verdicts(runs));
}

int exp_control(const ExpArgs& a) {
    const auto kv = load_config(a.config);
    const auto hand = handsim::HandConfig::from_config(kv);
    const auto t0 = steady::now();
    const auto r = run_control_report(hand);
    const RunHeader h{"control", 0, kv.fingerprint()};
    write_all(timestamped_dir(a.out), h,
              {{"steps.tsv", &r.steps},
               {"open_return.tsv", &r.open_return},
               {"windup.tsv", &r.windup},
               {"windup_summary.tsv", &r.windup_summary},
               {"encoder.tsv", &r.encoder}});
    std::cout << "wall time: " << since(t0) << " s\n";
    return report(r.verdicts);
}

// --- nlu ---------------------------------------------------------------------

std::vector<std::string> sentences_or_stdin(const std::vector<std::string>& args) {
    if (!args.empty()) return args;
    std::vector<std::string> out;
    for (std::string line; std::getline(std::cin, line);)
        if (!trim(line).empty()) out.emplace_back(trim(line));
    return out;
}

int nlu_parse(const std::string& grammar, const std::vector<std::string>& args) {
    const nlu::Parser p(nlu::Grammar::load(grammar));
    int failures = 0;
    for (const auto& s : sentences_or_stdin(args)) {
        try {
            const auto tree = p.parse(s).to_string();
            std::cout << s << '\t' << tree << '\n';
        } catch (const nlu::ParseFailure& e) {
            ++failures;
            std::cout << s << "\tfail-parse: " << e.what() << '\n';
        }
    }
    return failures ? 1 : 0;
}

int nlu_train(const std::string& grammar, const std::string& corpus, const std::string& output) {
    const nlu::Parser p(nlu::Grammar::load(grammar));
    const auto t0 = steady::now();
    const auto m = nlu::train_factors(nlu::load_corpus(corpus), p);
    std::ofstream out(output, std::ios::binary);
    out << m.to_text();
    if (!out) throw Error("cannot write " + output);
    std::cout << "wrote " << output << " (" << since(t0) << " s)\n";
    return 0;
}

int nlu_ground(const std::string& grammar, const std::string& corpus, const std::string& model,
               const std::vector<std::string>& args) {
    nlu::Parser p(nlu::Grammar::load(grammar));
    nlu::FactorModel m;
    if (!model.empty()) {
        std::ifstream in(model, std::ios::binary);
        if (!in) throw Error("cannot read " + model);
        m = nlu::FactorModel::from_text(std::string(std::istreambuf_iterator<char>(in), {}));
    } else {
        if (corpus.empty()) throw ConfigError("nlu ground needs --corpus or --model");
        m = nlu::train_factors(nlu::load_corpus(corpus), p);
    }
    const nlu::Grounder g(std::move(p), std::move(m));
    int failures = 0;
    for (const auto& s : sentences_or_stdin(args)) {
        const auto r = g.ground(s);
        std::cout << s << '\t' << (r.action ? to_string(*r.action) : std::string(nlu::to_string(r.outcome)));
        if (!r.action) {
            ++failures;
            std::cout << '\t' << r.message;
        }
        std::cout << '\t' << fixed(r.seconds * 1e3, 3) << " ms\n";
    }
    return failures ? 1 : 0;
}

// --- run ---------------------------------------------------------------------

struct RunArgs {
    std::string config;
    int port = -1;
    bool headless = false;
    std::string script;
    double speed = 1.0;
    double duration_s = -1;
};

/// Start-up model: loaded from model.path when that file exists, otherwise
/// trained on the initial corpus (and saved there if a path is given).
classifier::GraspModel startup_model(const KeyValueConfig& kv, const std::string& cfg_path,
                                     const vision::DatasetStore& base, const classifier::TrainOptions& opt) {
    const auto path = kv.has("model.path") ? resolve(cfg_path, kv.get("model.path")) : fs::path{};
    if (!path.empty() && fs::exists(path)) {
        std::cerr << "loading model " << path.string() << '\n';
        return classifier::load_model(path);
    }
    std::cerr << "training start-up model on " << base.size() << " examples\n";
    auto [model, rep] = classifier::train_scg(base, opt);
    std::cerr << "  val accuracy " << fixed(rep.best().val_accuracy, 3) << ", " << fixed(rep.wall_seconds, 1) << " s\n";
    if (!path.empty()) classifier::save_model(path, model);
    return model;
}

int run(const RunArgs& a) {
    const auto kv = KeyValueConfig::load(a.config);
    auto sc = orchestrator::SystemConfig::from_config(kv);
    auto opt = classifier::TrainOptions::from_config(kv);
    const auto per_class = static_cast<std::size_t>(kv.get_int_or("model.per_class", 60));
    const auto base = orchestrator::initial_corpus(per_class, derive_seed(sc.seed, 0xB0), sc.jitter);
    auto model = startup_model(kv, a.config, base, opt);
    auto grounder = orchestrator::make_grounder(resolve(a.config, kv.get_or("nlu.grammar", "grammar_extended.cfg")),
                                                resolve(a.config, kv.get_or("nlu.corpus", "corpus.tsv")));
    orchestrator::System sys(sc, std::move(model), grounder);
    const auto model_path = kv.has("model.path") ? resolve(a.config, kv.get("model.path")) : fs::path{};
    sys.controller().enable_retraining({base, opt, model_path});

    if (a.headless) {
        if (a.script.empty()) throw ConfigError("--headless needs --script");
        const auto r = orchestrator::run_scenario(sys, orchestrator::load_scenario(a.script), derive_seed(sc.seed, 0x5C));
        std::cout << r.log;
        for (const auto& f : r.feedback) std::cerr << to_string(f.level) << '\t' << f.source << '\t' << f.text << '\n';
        return 0;
    }
    if (a.port < 0) throw ConfigError("run needs --headless --script <file> or --serve <port>");

    // Signals are taken by a dedicated thread so stopping is an ordinary
    // request_stop rather than work inside a handler.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::stop_source stop;
    std::jthread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        stop.request_stop();
    });

    orchestrator::ServiceHub hub(sys.bus());
    orchestrator::WebSocketServer server(hub, kv.get_or("service.address", "127.0.0.1"), static_cast<unsigned short>(a.port));
    std::cout << "serving ws://" << kv.get_or("service.address", "127.0.0.1") << ':' << server.port() << "/" << std::endl;
    orchestrator::serve(sys, hub, server, stop.get_token(), a.speed,
                        a.duration_s < 0 ? -1 : static_cast<Tick>(std::lround(a.duration_s * 1000)));
    server.stop();
    if (!stop.stop_requested()) pthread_kill(waiter.native_handle(), SIGTERM);
    std::cout << "stopped at t=" << sys.now() << " ms\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"handadapt: adaptive grasping pipeline, experiments and tools"};
    app.require_subcommand(1);

    ExpArgs ea;
    auto* exp = app.add_subcommand("exp", "run an experiment; tables go to <out>/<timestamp>/");
    exp->require_subcommand(1);
    auto common = [&](CLI::App* c) {
        c->add_option("--config", ea.config, "key = value config file");
        c->add_option("--data", ea.data, "data directory (grammars, corpus)");
        c->add_option("--out", ea.out, "output base directory");
    };
    auto* e_nlu = exp->add_subcommand("nlu", "instruction-grounding suite over both grammars");
    common(e_nlu);
    std::uint64_t seed = 1;
    std::size_t seeds = 1;
    std::optional<std::size_t> increments;
    auto* e_adapt = exp->add_subcommand("adapt", "banana adaptation study");
    common(e_adapt);
    e_adapt->add_option("--seed", seed, "first seed");
    e_adapt->add_option("--seeds", seeds, "number of consecutive seeds; verdicts use their average")->check(CLI::PositiveNumber);
    e_adapt->add_option("--increments", increments, "banana increments (overrides adapt.increments)");
    auto* e_control = exp->add_subcommand("control", "step responses, open return, windup and encoder report");
    common(e_control);

    std::string grammar, corpus, model, output;
    std::vector<std::string> sentences;
    auto* nlu = app.add_subcommand("nlu", "grammar and grounding tools");
    nlu->require_subcommand(1);
    auto* n_parse = nlu->add_subcommand("parse", "print parse trees (sentences from args or stdin)");
    n_parse->add_option("--grammar", grammar)->required()->check(CLI::ExistingFile);
    n_parse->add_option("sentences", sentences);
    auto* n_ground = nlu->add_subcommand("ground", "ground sentences to hand actions");
    n_ground->add_option("--grammar", grammar)->required()->check(CLI::ExistingFile);
    n_ground->add_option("--corpus", corpus, "train on this corpus")->check(CLI::ExistingFile);
    n_ground->add_option("--model", model, "or load a trained factor model")->check(CLI::ExistingFile);
    n_ground->add_option("sentences", sentences);
    auto* n_train = nlu->add_subcommand("train", "train the factor model and write it");
    n_train->add_option("--grammar", grammar)->required()->check(CLI::ExistingFile);
    n_train->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
    n_train->add_option("-o,--output", output, "model file")->required();

    RunArgs ra;
    auto* r = app.add_subcommand("run", "run the whole system");
    r->add_option("--config", ra.config)->required()->check(CLI::ExistingFile);
    auto* serve = r->add_option("--serve", ra.port, "WebSocket port (0 picks a free one)")->check(CLI::Range(0, 65535));
    auto* headless = r->add_flag("--headless", ra.headless, "play a scenario script in simulated time");
    r->add_option("--script", ra.script, "scenario file")->check(CLI::ExistingFile)->needs(headless);
    r->add_option("--speed", ra.speed, "simulated-time multiplier when serving")->check(CLI::PositiveNumber)->needs(serve);
    r->add_option("--duration", ra.duration_s, "stop serving after this many simulated seconds")->needs(serve);
    headless->excludes(serve);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*e_nlu) return exp_nlu(ea);
        if (*e_adapt) return exp_adapt(ea, seed, seeds, increments);
        if (*e_control) return exp_control(ea);
        if (*n_parse) return nlu_parse(grammar, sentences);
        if (*n_ground) return nlu_ground(grammar, corpus, model, sentences);
        if (*n_train) return nlu_train(grammar, corpus, output);
        if (*r) return run(ra);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
