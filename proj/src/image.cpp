#include "ihcscore/image.hpp"

#include <algorithm>
#include <cmath>

namespace ihc {

RgbImage::RgbImage(std::uint32_t w, std::uint32_t h, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
    if (w == 0 || h == 0) throw DomainError("RgbImage: dimensions must be positive");
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = r;
        pixels[i + 1] = g;
        pixels[i + 2] = b;
    }
}

Hsv rgb_to_hsv(double r, double g, double b) {
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    const double delta = maxc - minc;

    Hsv out;
    out.v = maxc;
    out.s = maxc <= 0.0 ? 0.0 : delta / maxc * 255.0;
    if (delta <= 0.0) {
        out.h = 0.0;
        return out;
    }
    double h;
    if (maxc == r) {
        h = 60.0 * ((g - b) / delta);
    } else if (maxc == g) {
        h = 60.0 * ((b - r) / delta + 2.0);
    } else {
        h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    out.h = h;
    return out;
}

Rgb hsv_to_rgb(const Hsv& hsv) {
    const double v = hsv.v / 255.0;
    const double s = hsv.s / 255.0;
    const double c = v * s;
    const double hp = hsv.h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1.0) {
        r1 = c; g1 = x;
    } else if (hp < 2.0) {
        r1 = x; g1 = c;
    } else if (hp < 3.0) {
        g1 = c; b1 = x;
    } else if (hp < 4.0) {
        g1 = x; b1 = c;
    } else if (hp < 5.0) {
        r1 = x; b1 = c;
    } else {
        r1 = c; b1 = x;
    }
    const double m = v - c;
    auto q = [](double u) {
        return static_cast<std::uint8_t>(std::clamp(std::lround(u * 255.0), 0L, 255L));
    };
    return Rgb{q(r1 + m), q(g1 + m), q(b1 + m)};
}

namespace {

// Bilinear sample with edge clamping; coordinates in source pixel centers.
void sample_bilinear(const RgbImage& src, double sx, double sy, std::uint8_t* out) {
    const double fx = std::clamp(sx, 0.0, static_cast<double>(src.width - 1));
    const double fy = std::clamp(sy, 0.0, static_cast<double>(src.height - 1));
    const std::uint32_t x0 = static_cast<std::uint32_t>(fx);
    const std::uint32_t y0 = static_cast<std::uint32_t>(fy);
    const std::uint32_t x1 = std::min(x0 + 1, src.width - 1);
    const std::uint32_t y1 = std::min(y0 + 1, src.height - 1);
    const double tx = fx - x0;
    const double ty = fy - y0;
    const std::uint8_t* p00 = src.at(x0, y0);
    const std::uint8_t* p10 = src.at(x1, y0);
    const std::uint8_t* p01 = src.at(x0, y1);
    const std::uint8_t* p11 = src.at(x1, y1);
    for (int ch = 0; ch < 3; ++ch) {
        const double top = p00[ch] + (p10[ch] - p00[ch]) * tx;
        const double bot = p01[ch] + (p11[ch] - p01[ch]) * tx;
        const double val = top + (bot - top) * ty;
        out[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
    }
}

}  // namespace

std::vector<Tile> cut_tiles(const RgbImage& raster, double microns_per_pixel, double tile_fov_um,
                            std::uint32_t output_size, const std::string& slide_id) {
    if (!raster.valid()) throw DomainError("cut_tiles: invalid raster");
    if (microns_per_pixel <= 0.0) throw DomainError("cut_tiles: microns_per_pixel must be > 0");
    if (output_size == 0) throw DomainError("cut_tiles: output_size must be > 0");
    const double src_px = tile_fov_um / microns_per_pixel;
    if (src_px < 1.0) throw DomainError("cut_tiles: tile field of view below one source pixel");

    // Relative epsilon absorbs rounding in um/px values derived from pixel
    // counts (e.g. 395 px covering exactly 100 um).
    const auto grid_count = [&](std::uint32_t extent) {
        return static_cast<std::int64_t>(
            std::floor(extent * microns_per_pixel / tile_fov_um + 1e-9));
    };
    const std::int64_t nx = grid_count(raster.width);
    const std::int64_t ny = grid_count(raster.height);

    std::vector<Tile> tiles;
    if (nx <= 0 || ny <= 0) return tiles;
    tiles.reserve(static_cast<std::size_t>(nx * ny));

    const double scale = src_px / output_size;
    for (std::int64_t j = 0; j < ny; ++j) {
        for (std::int64_t i = 0; i < nx; ++i) {
            const double x0 = i * src_px;
            const double y0 = j * src_px;
            Tile tile;
            tile.image.width = output_size;
            tile.image.height = output_size;
            tile.image.pixels.resize(static_cast<std::size_t>(output_size) * output_size * 3);
            for (std::uint32_t oy = 0; oy < output_size; ++oy) {
                const double sy = y0 + (oy + 0.5) * scale - 0.5;
                for (std::uint32_t ox = 0; ox < output_size; ++ox) {
                    const double sx = x0 + (ox + 0.5) * scale - 0.5;
                    sample_bilinear(raster, sx, sy, tile.image.at(ox, oy));
                }
            }
            tile.microns_per_pixel = microns_per_pixel;
            tile.slide_id = slide_id;
            tile.origin_x = std::llround(x0);
            tile.origin_y = std::llround(y0);
            tiles.push_back(std::move(tile));
        }
    }
    return tiles;
}

bool is_empty_tile(const RgbImage& image, double mean_low, double mean_high, double std_min) {
    if (!image.valid()) throw DomainError("is_empty_tile: invalid image");
    if (mean_low > mean_high) throw DomainError("is_empty_tile: mean bounds not ordered");
    if (std_min < 0.0) throw DomainError("is_empty_tile: std_min must be >= 0");

    const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
    double sum[3] = {0, 0, 0};
    double gray_sum = 0.0, gray_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = image.pixels.data() + i * 3;
        sum[0] += p[0];
        sum[1] += p[1];
        sum[2] += p[2];
        const double gray = (p[0] + p[1] + p[2]) / 3.0;
        gray_sum += gray;
        gray_sq += gray * gray;
    }
    for (double s : sum) {
        const double mean = s / n;
        if (mean < mean_low || mean > mean_high) return true;
    }
    const double gmean = gray_sum / n;
    const double var = std::max(0.0, gray_sq / n - gmean * gmean);
    return std::sqrt(var) < std_min;
}

RgbMean patch_mean(const RgbImage& image, double center_x, double center_y, int half_side) {
    if (!image.valid()) throw DomainError("patch_mean: invalid image");
    if (half_side < 0) throw DomainError("patch_mean: half_side must be >= 0");
    const std::int64_t cx = std::llround(center_x);
    const std::int64_t cy = std::llround(center_y);
    if (center_x < 0 || center_y < 0 || cx >= image.width || cy >= image.height)
        throw DomainError("patch_mean: center outside image");

    const std::int64_t x_lo = std::max<std::int64_t>(0, cx - half_side);
    const std::int64_t x_hi = std::min<std::int64_t>(image.width - 1, cx + half_side);
    const std::int64_t y_lo = std::max<std::int64_t>(0, cy - half_side);
    const std::int64_t y_hi = std::min<std::int64_t>(image.height - 1, cy + half_side);

    double sum[3] = {0, 0, 0};
    std::int64_t count = 0;
    for (std::int64_t y = y_lo; y <= y_hi; ++y) {
        for (std::int64_t x = x_lo; x <= x_hi; ++x) {
            const std::uint8_t* p = image.at(static_cast<std::uint32_t>(x),
                                             static_cast<std::uint32_t>(y));
            sum[0] += p[0];
            sum[1] += p[1];
            sum[2] += p[2];
            ++count;
        }
    }
    return RgbMean{sum[0] / count, sum[1] / count, sum[2] / count};
}

}  // namespace ihc
