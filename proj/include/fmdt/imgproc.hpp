#pragma once

#include <cstdint>
#include <vector>

namespace fmdt {

/// One 8-bit grayscale image of the stream, row-major.
struct GrayFrame {
    int width = 0;
    int height = 0;
    std::uint64_t t = 0;
    std::vector<std::uint8_t> data;

    GrayFrame() = default;
    GrayFrame(int w, int h, std::uint64_t index = 0, std::uint8_t fill = 0);

    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

    /// Throws InvalidArgument unless width, height >= 2 and data matches.
    void validate() const;

    friend bool operator==(const GrayFrame&, const GrayFrame&) = default;
};

/// Foreground occupancy with the geometry of its source frame. One byte per pixel (0 or 1).
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct ThresholdParams {
    int lambda_low = 55;
    int lambda_high = 80;

    void validate() const;
};

/// mask[p] = frame[p] >= lambda_low.
BinaryMask binarize(const GrayFrame& frame, int lambda_low);

} // namespace fmdt
