#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ihcscore/errors.hpp"

namespace ihc {

/// 8-bit RGB raster, row-major, interleaved channels.
struct RgbImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> pixels;  // width * height * 3

    RgbImage() = default;
    RgbImage(std::uint32_t w, std::uint32_t h, std::uint8_t r = 0, std::uint8_t g = 0,
             std::uint8_t b = 0);

    std::uint8_t* at(std::uint32_t x, std::uint32_t y) {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* at(std::uint32_t x, std::uint32_t y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }

    bool valid() const {
        return width > 0 && height > 0 &&
               pixels.size() == static_cast<std::size_t>(width) * height * 3;
    }
};

/// Micron-calibrated patch cut from a source raster.
struct Tile {
    RgbImage image;
    double microns_per_pixel = 0.0;  // of the source raster
    std::string slide_id;
    std::int64_t origin_x = 0;  // source-raster pixels
    std::int64_t origin_y = 0;
};

/// HSV triple. Hue in degrees [0, 360); saturation and value on [0, 255].
/// Value is the brightness channel the staining-intensity thresholds act on.
struct Hsv {
    double h = 0.0;
    double s = 0.0;
    double v = 0.0;
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

/// Per-channel real-valued mean of an image patch.
struct RgbMean {
    double r = 0.0, g = 0.0, b = 0.0;
};

/// Standard hexcone RGB -> HSV. Accepts real-valued channels in [0, 255]
/// (patch means). Achromatic inputs map to hue 0.
Hsv rgb_to_hsv(double r, double g, double b);
inline Hsv rgb_to_hsv(const Rgb& c) { return rgb_to_hsv(c.r, c.g, c.b); }
inline Hsv rgb_to_hsv(const RgbMean& c) { return rgb_to_hsv(c.r, c.g, c.b); }

/// Inverse hexcone conversion, quantized to 8-bit channels.
Rgb hsv_to_rgb(const Hsv& hsv);

/// Cuts a micron-calibrated raster into a non-overlapping grid of tiles, each
/// covering tile_fov x tile_fov microns in the source and resized (bilinear)
/// to output_size x output_size pixels. Partial edge tiles are discarded.
/// Output is row-major by tile origin. A raster smaller than one tile yields
/// an empty sequence.
std::vector<Tile> cut_tiles(const RgbImage& raster, double microns_per_pixel, double tile_fov_um,
                            std::uint32_t output_size, const std::string& slide_id = "slide");

/// Mean/std emptiness filter: true iff any channel mean falls outside
/// [mean_low, mean_high] or the grayscale ((R+G+B)/3) standard deviation is
/// below std_min.
bool is_empty_tile(const RgbImage& image, double mean_low, double mean_high, double std_min);

/// Per-channel mean over the square [cx-half_side, cx+half_side] x
/// [cy-half_side, cy+half_side], clipped to image bounds. The center is
/// rounded to the nearest pixel and must lie inside the image.
RgbMean patch_mean(const RgbImage& image, double center_x, double center_y, int half_side);

}  // namespace ihc
