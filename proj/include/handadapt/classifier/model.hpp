#pragma once

// Grasp classifier model: network plus input preprocessing, and its file format.
//
// File layout, all integers and floats little-endian:
//   "HNDMLP\0\0"            magic
//   u32 version             (1)
//   u32 activation id       (1 sigmoid, 2 tanh)
//   u32 flags               (bit 0: per-image mean centering)
//   u32 layer count L+1, then u32 size per layer
//   f64 per parameter: for each layer, weights row-major (out x in), then biases

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "handadapt/classifier/mlp.hpp"
#include "handadapt/core/types.hpp"
#include "handadapt/vision/image.hpp"

namespace handadapt::classifier {

class ModelFormatError : public Error {
public:
    using Error::Error;
};

inline constexpr std::array<std::size_t, 4> kGraspNetSizes = {vision::Image::kSize, 300, 50, kGraspCount};

struct GraspModel {
    Mlp<double> net;
    bool center_inputs = false;

    /// Feature vector for one image, as fed to the network.
    template <class Scalar>
    void features(const vision::Image& img, std::span<Scalar> out) const {
        img.write_features(out);
        if (!center_inputs) return;
        double mean = 0.0;
        for (auto v : out) mean += static_cast<double>(v);
        mean /= static_cast<double>(out.size());
        for (auto& v : out) v = static_cast<Scalar>(static_cast<double>(v) - mean);
    }

    std::array<double, kGraspCount> posterior(const vision::Image& img) const {
        if (net.input_size() != vision::Image::kSize || net.output_size() != kGraspCount)
            throw ShapeMismatch("model is not an 80x60 RGB six-grasp classifier");
        std::vector<double> x(vision::Image::kSize);
        features<double>(img, x);
        const auto p = net.posterior(x);
        std::array<double, kGraspCount> out{};
        std::copy(p.begin(), p.end(), out.begin());
        return out;
    }

    GraspType predict(const vision::Image& img) const {
        const auto p = posterior(img);
        return kAllGrasps[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
    }

    friend bool operator==(const GraspModel&, const GraspModel&) = default;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& out, double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_le(std::istream& in, int bytes) {
    unsigned char b[8] = {};
    in.read(reinterpret_cast<char*>(b), bytes);
    if (in.gcount() != bytes) throw ModelFormatError("model file truncated");
    std::uint64_t v = 0;
    for (int i = bytes; i-- > 0;) v = (v << 8) | b[i];
    return v;
}

inline constexpr char kMagic[8] = {'H', 'N', 'D', 'M', 'L', 'P', '\0', '\0'};
inline constexpr std::uint32_t kVersion = 1;

} // namespace detail

inline void write_model(std::ostream& out, const GraspModel& m) {
    out.write(detail::kMagic, 8);
    detail::put_u32(out, detail::kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(m.net.activation()));
    detail::put_u32(out, m.center_inputs ? 1u : 0u);
    detail::put_u32(out, static_cast<std::uint32_t>(m.net.sizes().size()));
    for (auto s : m.net.sizes()) detail::put_u32(out, static_cast<std::uint32_t>(s));
    for (std::size_t l = 0; l < m.net.layers(); ++l) {
        const auto w = m.net.weights(l);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) detail::put_f64(out, w(i, j));
        const auto b = m.net.bias(l);
        for (Eigen::Index i = 0; i < b.size(); ++i) detail::put_f64(out, b(i));
    }
}

inline GraspModel read_model(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, detail::kMagic, 8) != 0) throw ModelFormatError("not a model file");
    const auto version = static_cast<std::uint32_t>(detail::get_le(in, 4));
    if (version != detail::kVersion) throw ModelFormatError("unsupported model version " + std::to_string(version));
    const auto act = static_cast<std::uint32_t>(detail::get_le(in, 4));
    if (act != 1 && act != 2) throw ModelFormatError("unknown activation id " + std::to_string(act));
    const auto flags = static_cast<std::uint32_t>(detail::get_le(in, 4));
    const auto count = static_cast<std::uint32_t>(detail::get_le(in, 4));
    if (count < 2 || count > 64) throw ModelFormatError("implausible layer count");
    std::vector<std::size_t> sizes(count);
    for (auto& s : sizes) s = static_cast<std::size_t>(detail::get_le(in, 4));
    GraspModel m{Mlp<double>(sizes, static_cast<Activation>(act)), (flags & 1u) != 0};
    for (std::size_t l = 0; l < m.net.layers(); ++l) {
        auto w = m.net.weights(l);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = std::bit_cast<double>(detail::get_le(in, 8));
        auto b = m.net.bias(l);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = std::bit_cast<double>(detail::get_le(in, 8));
    }
    return m;
}

/// Writes next to `path` and renames over it, so readers see either the old
/// or the new model, never a partial file.
inline void save_model(const std::filesystem::path& path, const GraspModel& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ModelFormatError("cannot write '" + tmp.string() + "'");
        write_model(out, m);
        if (!out) throw ModelFormatError("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline GraspModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelFormatError("cannot open model '" + path.string() + "'");
    return read_model(in);
}

} // namespace handadapt::classifier
