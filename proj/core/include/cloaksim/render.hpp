// Confirmation image: a deterministic, injective RGB24 encoding of the cloak
// bitvector. One banner row of per-bit cells for the group/mode/reserved
// half, then one solid row per class bit (green = enabled, red = disabled).
#pragma once

#include <cstdint>
#include <vector>

namespace cloaksim::render {

struct Image {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> rgb;  // width * height * 3 bytes, row major

    bool operator==(const Image&) const = default;
};

inline constexpr std::uint32_t kWidth = 32;
inline constexpr std::uint32_t kRowHeight = 2;

Image render_settings(std::uint32_t bv);

/// Inverse of render_settings; decode(render(bv)) == bv for every bv.
std::uint32_t decode_settings_image(const Image& image);

}  // namespace cloaksim::render
