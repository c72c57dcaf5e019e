#include "cloaksim/render.hpp"

namespace cloaksim::render {

namespace {

constexpr std::uint32_t kUpperBits = 16;  // group + mode + reserved half
constexpr std::uint32_t kClassRows = 16;
constexpr std::uint32_t kCellWidth = kWidth / kUpperBits;

struct Rgb {
    std::uint8_t r, g, b;
};
constexpr Rgb kEnabled{0, 255, 0};
constexpr Rgb kDisabled{255, 0, 0};
constexpr Rgb kBannerSet{0, 0, 255};
constexpr Rgb kBannerClear{0, 0, 0};

void fill(Image& img, std::uint32_t x0, std::uint32_t y0, std::uint32_t w, std::uint32_t h,
          Rgb color) {
    for (std::uint32_t y = y0; y < y0 + h; ++y) {
        for (std::uint32_t x = x0; x < x0 + w; ++x) {
            std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * 3;
            img.rgb[i] = color.r;
            img.rgb[i + 1] = color.g;
            img.rgb[i + 2] = color.b;
        }
    }
}

Rgb pixel(const Image& img, std::uint32_t x, std::uint32_t y) {
    std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * 3;
    return Rgb{img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]};
}

}  // namespace

Image render_settings(std::uint32_t bv) {
    Image img;
    img.width = kWidth;
    img.height = (1 + kClassRows) * kRowHeight;
    img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);

    for (std::uint32_t bit = 0; bit < kUpperBits; ++bit) {
        bool set = (bv >> (16 + bit)) & 1;
        fill(img, bit * kCellWidth, 0, kCellWidth, kRowHeight, set ? kBannerSet : kBannerClear);
    }
    for (std::uint32_t bit = 0; bit < kClassRows; ++bit) {
        bool disabled = (bv >> bit) & 1;
        fill(img, 0, (1 + bit) * kRowHeight, kWidth, kRowHeight,
             disabled ? kDisabled : kEnabled);
    }
    return img;
}

std::uint32_t decode_settings_image(const Image& image) {
    std::uint32_t bv = 0;
    for (std::uint32_t bit = 0; bit < kUpperBits; ++bit) {
        Rgb c = pixel(image, bit * kCellWidth, 0);
        if (c.b == 255) bv |= 1u << (16 + bit);
    }
    for (std::uint32_t bit = 0; bit < kClassRows; ++bit) {
        Rgb c = pixel(image, 0, (1 + bit) * kRowHeight);
        if (c.r == 255) bv |= 1u << bit;
    }
    return bv;
}

}  // namespace cloaksim::render
