#pragma once

// Labeled image store.
//
// On disk: `<root>/<label>/<id>.rgb` holds the raw 80x60x3 bytes and
// `<root>/manifest.tsv` has one line per example
// (id, label, source, timestamp, seed, split).

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "handadapt/core/config.hpp"
#include "handadapt/core/random.hpp"
#include "handadapt/core/types.hpp"
#include "handadapt/vision/image.hpp"
#include "handadapt/vision/render.hpp"

namespace handadapt::vision {

enum class Source : std::uint8_t { Gui, Nlu, Scripted };
enum class Split : std::uint8_t { Train, Val, Test };

inline constexpr std::array<std::string_view, 3> kSourceNames = {"gui", "nlu", "scripted"};
inline constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

constexpr std::string_view to_string(Source s) { return kSourceNames[static_cast<std::size_t>(s)]; }
constexpr std::string_view to_string(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }

class InvalidLabel : public Error {
public:
    explicit InvalidLabel(std::string_view label) : Error("invalid grasp label '" + std::string(label) + "'") {}
};

class StorageError : public Error {
public:
    using Error::Error;
};

struct LabeledExample {
    std::uint64_t id = 0;
    Image image;
    GraspType label = GraspType::Cylindrical;
    Source source = Source::Scripted;
    Tick timestamp = 0;
    std::uint64_t seed = 0; ///< render seed, 0 for captured frames
    Split split = Split::Train;

    friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct SplitCounts {
    std::size_t train = 0, val = 0, test = 0;
    std::size_t total() const { return train + val + test; }
};

class DatasetStore {
public:
    explicit DatasetStore(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t add_example(const Image& image, GraspType label, Source source, Tick timestamp = 0,
                              std::uint64_t render_seed = 0) {
        if (static_cast<std::size_t>(label) >= kGraspCount) throw InvalidLabel(std::to_string(static_cast<int>(label)));
        LabeledExample ex;
        ex.id = next_id_++;
        ex.image = image;
        ex.label = label;
        ex.source = source;
        ex.timestamp = timestamp;
        ex.seed = render_seed;
        ex.split = assign_split(examples_.size());
        examples_.push_back(std::move(ex));
        return examples_.back().id;
    }

    std::uint64_t add_example(const Image& image, std::string_view label, Source source, Tick timestamp = 0,
                              std::uint64_t render_seed = 0) {
        auto g = grasp_from_string(label);
        if (!g) throw InvalidLabel(label);
        return add_example(image, *g, source, timestamp, render_seed);
    }

    const std::vector<LabeledExample>& examples() const { return examples_; }
    std::size_t size() const { return examples_.size(); }

    SplitCounts split_counts() const {
        SplitCounts c;
        for (const auto& e : examples_) {
            if (e.split == Split::Train) ++c.train;
            else if (e.split == Split::Val) ++c.val;
            else ++c.test;
        }
        return c;
    }

    std::array<std::size_t, kGraspCount> label_counts() const {
        std::array<std::size_t, kGraspCount> c{};
        for (const auto& e : examples_) ++c[index_of(e.label)];
        return c;
    }

    void append(const DatasetStore& other) {
        for (const auto& e : other.examples_) add_example(e.image, e.label, e.source, e.timestamp, e.seed);
    }

    void save(const std::filesystem::path& root) const {
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(root, ec);
        if (ec) throw StorageError("cannot create dataset directory '" + root.string() + "': " + ec.message());
        std::ostringstream manifest;
        manifest << "# store_seed=" << seed_ << " next_id=" << next_id_ << "\n";
        manifest << "# id\tlabel\tsource\ttimestamp\tseed\tsplit\n";
        for (const auto& e : examples_) {
            const auto dir = root / std::string(to_string(e.label));
            fs::create_directories(dir, ec);
            if (ec) throw StorageError("cannot create '" + dir.string() + "'");
            std::ofstream out(dir / (std::to_string(e.id) + ".rgb"), std::ios::binary);
            const auto bytes = e.image.bytes();
            out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            if (!out) throw StorageError("failed writing image " + std::to_string(e.id));
            manifest << e.id << '\t' << to_string(e.label) << '\t' << to_string(e.source) << '\t' << e.timestamp
                     << '\t' << e.seed << '\t' << to_string(e.split) << '\n';
        }
        // manifest last and via rename, so a crash never leaves a manifest that
        // points at missing frames
        const auto tmp = root / "manifest.tsv.tmp";
        {
            std::ofstream out(tmp);
            out << manifest.str();
            if (!out) throw StorageError("failed writing manifest");
        }
        fs::rename(tmp, root / "manifest.tsv", ec);
        if (ec) throw StorageError("failed committing manifest: " + ec.message());
    }

    static DatasetStore load(const std::filesystem::path& root) {
        std::ifstream in(root / "manifest.tsv");
        if (!in) throw StorageError("no manifest.tsv under '" + root.string() + "'");
        DatasetStore store;
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("# store_seed=", 0) == 0) {
                std::istringstream hs(line.substr(2));
                std::string kv;
                while (hs >> kv) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos) continue;
                    const auto value = std::stoull(kv.substr(eq + 1));
                    if (kv.compare(0, eq, "store_seed") == 0) store.seed_ = value;
                    if (kv.compare(0, eq, "next_id") == 0) store.next_id_ = value;
                }
                continue;
            }
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            LabeledExample e;
            std::string label, source, split;
            if (!(ls >> e.id >> label >> source >> e.timestamp >> e.seed >> split))
                throw StorageError("malformed manifest line: " + line);
            auto g = grasp_from_string(label);
            if (!g) throw InvalidLabel(label);
            e.label = *g;
            e.source = parse_name<Source>(kSourceNames, source);
            e.split = parse_name<Split>(kSplitNames, split);
            std::ifstream img(root / label / (std::to_string(e.id) + ".rgb"), std::ios::binary);
            std::vector<std::uint8_t> bytes(Image::kSize);
            img.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            if (img.gcount() != static_cast<std::streamsize>(Image::kSize))
                throw StorageError("truncated frame for example " + std::to_string(e.id));
            e.image = Image::from_bytes(bytes);
            store.examples_.push_back(std::move(e));
        }
        return store;
    }

    friend bool operator==(const DatasetStore& a, const DatasetStore& b) {
        return a.seed_ == b.seed_ && a.examples_ == b.examples_;
    }

private:
    template <class E, std::size_t N>
    static E parse_name(const std::array<std::string_view, N>& names, const std::string& s) {
        for (std::size_t i = 0; i < N; ++i)
            if (names[i] == s) return static_cast<E>(i);
        throw StorageError("unknown manifest value '" + s + "'");
    }

    /// Examples are dealt in blocks of four; each block is a seeded permutation
    /// of {train, train, val, test}, which keeps 50/25/25 within one example.
    Split assign_split(std::size_t index) const {
        std::array<Split, 4> block = {Split::Train, Split::Train, Split::Val, Split::Test};
        auto rng = make_rng(derive_seed(seed_, index / 4));
        shuffle(std::span<Split>(block), rng);
        return block[index % 4];
    }

    std::uint64_t seed_ = 0;
    std::uint64_t next_id_ = 1;
    std::vector<LabeledExample> examples_;
};

/// `n_per_class` jittered renders of each class, labelled with its canonical grasp.
inline DatasetStore generate_corpus(std::span<const ObjectClass> classes, std::size_t n_per_class,
                                    std::uint64_t seed, const JitterConfig& jitter = {}) {
    if (n_per_class < 4) throw Error("generate_corpus needs at least 4 examples per class");
    DatasetStore store(seed);
    for (auto cls : classes) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const auto render_seed = derive_seed(seed, static_cast<std::uint64_t>(cls) + 1, i);
            store.add_example(render(draw_spec(cls, jitter, render_seed)), canonical_grasp(cls), Source::Scripted, 0,
                              render_seed);
        }
    }
    return store;
}

} // namespace handadapt::vision
