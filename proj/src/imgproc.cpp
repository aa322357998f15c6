#include "fmdt/imgproc.hpp"

#include <algorithm>
#include <string>

#include "fmdt/error.hpp"

namespace fmdt {

GrayFrame::GrayFrame(int w, int h, std::uint64_t index, std::uint8_t fill)
    : width(w), height(h), t(index), data(static_cast<std::size_t>(w < 0 ? 0 : w) * (h < 0 ? 0 : h), fill) {}

void GrayFrame::validate() const
{
    if (width < 2 || height < 2)
        throw InvalidArgument("frame must be at least 2x2, got " + std::to_string(width) + "x" +
                              std::to_string(height));
    if (data.size() != static_cast<std::size_t>(width) * height)
        throw InvalidArgument("frame data length " + std::to_string(data.size()) +
                              " does not match geometry");
}

std::size_t BinaryMask::count() const
{
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void ThresholdParams::validate() const
{
    if (lambda_low < 0 || lambda_high > 255 || lambda_low > lambda_high)
        throw InvalidArgument("thresholds must satisfy 0 <= low <= high <= 255");
}

BinaryMask binarize(const GrayFrame& frame, int lambda_low)
{
    frame.validate();
    BinaryMask mask(frame.width, frame.height);
    const auto n = frame.data.size();
    const std::uint8_t* src = frame.data.data();
    std::uint8_t* dst = mask.bits.data();
    for (std::size_t i = 0; i < n; ++i)
        dst[i] = static_cast<int>(src[i]) >= lambda_low ? 1 : 0;
    return mask;
}

} // namespace fmdt
