#pragma once

// Experiment output: a '#' line naming the experiment, seed and config hash,
// then a TSV column header and rows. Numbers are printed with a fixed format
// so a seeded rerun reproduces every file byte for byte.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "handadapt/core/config.hpp"

namespace handadapt::experiments {

struct RunHeader {
    std::string experiment;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;

    std::string text() const {
        return "# handadapt " + experiment + " seed=" + std::to_string(seed) + " config=" + hex64(config_hash);
    }
};

/// One pass/fail check of an experiment's contract.
struct Verdict {
    std::string what;
    bool pass = false;
    std::string detail;
};

inline bool all_pass(const std::vector<Verdict>& v) {
    return std::all_of(v.begin(), v.end(), [](const Verdict& x) { return x.pass; });
}

inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    // "-0.000000" and "0.000000" must not depend on rounding direction.
    std::string s(buf);
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
    return s;
}

class Table {
public:
    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(std::vector<std::string> row) {
        if (row.size() != columns_.size())
            throw Error("table row has " + std::to_string(row.size()) + " cells, expected " +
                        std::to_string(columns_.size()));
        for (const auto& c : row)
            if (c.find_first_of("\t\n") != std::string::npos) throw Error("table cell contains a tab or newline");
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < columns_.size(); ++i)
            if (columns_[i] == name) return i;
        throw Error("no column '" + std::string(name) + "'");
    }

    std::string text(const RunHeader& h) const {
        std::string out = h.text() + "\n";
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "\t" : "") + cells[i];
            out += "\n";
        };
        line(columns_);
        for (const auto& r : rows_) line(r);
        return out;
    }

    void write(const std::filesystem::path& path, const RunHeader& h) const {
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write " + path.string());
        out << text(h);
        if (!out) throw Error("write failed for " + path.string());
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

/// out/<YYYYmmdd-HHMMSS>, with a numeric suffix if that already exists.
inline std::filesystem::path timestamped_dir(const std::filesystem::path& base) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    auto dir = base / buf;
    for (int k = 2; std::filesystem::exists(dir); ++k) dir = base / (std::string(buf) + "-" + std::to_string(k));
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace handadapt::experiments
