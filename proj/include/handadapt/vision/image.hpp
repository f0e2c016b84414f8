#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "handadapt/core/types.hpp"

namespace handadapt::vision {

/// Fixed 80x60 RGB frame, row-major, 8 bits per channel.
///
/// Channels read back as values in [0,1]; storage is quantized so frames are
/// bit-exact on disk and across platforms.
class Image {
public:
    static constexpr int kWidth = 80;
    static constexpr int kHeight = 60;
    static constexpr int kChannels = 3;
    static constexpr std::size_t kSize = std::size_t{kWidth} * kHeight * kChannels;

    Image() : bytes_(kSize, 0) {}

    static Image from_bytes(std::span<const std::uint8_t> bytes) {
        if (bytes.size() != kSize) throw Error("image buffer must hold exactly 80x60x3 bytes");
        Image img;
        std::copy(bytes.begin(), bytes.end(), img.bytes_.begin());
        return img;
    }

    static constexpr std::size_t offset(int x, int y, int c) {
        return (static_cast<std::size_t>(y) * kWidth + static_cast<std::size_t>(x)) * kChannels +
               static_cast<std::size_t>(c);
    }

    double at(int x, int y, int c) const { return bytes_[offset(x, y, c)] / 255.0; }

    void set(int x, int y, int c, double v) {
        bytes_[offset(x, y, c)] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }

    void set_rgb(int x, int y, const std::array<double, 3>& rgb) {
        for (int c = 0; c < kChannels; ++c) set(x, y, c, rgb[static_cast<std::size_t>(c)]);
    }

    std::span<const std::uint8_t> bytes() const { return bytes_; }

    /// Channel values in [0,1] in storage order (the classifier's input vector).
    template <class Scalar>
    void write_features(std::span<Scalar> out) const {
        if (out.size() != kSize) throw Error("feature buffer must hold 14400 values");
        for (std::size_t i = 0; i < kSize; ++i) out[i] = static_cast<Scalar>(bytes_[i]) / Scalar(255);
    }

    /// Root-mean-square per-channel difference, in [0,1].
    double distance(const Image& o) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < kSize; ++i) {
            const double d = (static_cast<double>(bytes_[i]) - o.bytes_[i]) / 255.0;
            acc += d * d;
        }
        return std::sqrt(acc / kSize);
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::vector<std::uint8_t> bytes_;
};

struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; ///< inclusive-exclusive
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    int area() const { return width() * height(); }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
};

} // namespace handadapt::vision
