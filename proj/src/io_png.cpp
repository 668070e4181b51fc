#include <png.h>

#include <cstdio>
#include <memory>

#include "ihcscore/io.hpp"

namespace ihc {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    throw ParseError(std::string("png: ") + msg);
    (void)png;
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

RgbImage load_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open image: " + path);

    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: allocation failure");
    }

    RgbImage image;
    try {
        png_init_io(png, file.get());
        png_read_info(png, info);

        png_set_palette_to_rgb(png);
        png_set_expand_gray_1_2_4_to_8(png);
        png_set_strip_16(png);
        png_set_strip_alpha(png);
        png_set_gray_to_rgb(png);
        png_read_update_info(png, info);

        image.width = png_get_image_width(png, info);
        image.height = png_get_image_height(png, info);
        if (png_get_channels(png, info) != 3 || png_get_bit_depth(png, info) != 8)
            throw ParseError(path + ": unsupported PNG layout");
        image.pixels.resize(static_cast<std::size_t>(image.width) * image.height * 3);

        std::vector<png_bytep> rows(image.height);
        for (std::uint32_t y = 0; y < image.height; ++y)
            rows[y] = image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void save_png(const RgbImage& image, const std::string& path) {
    if (!image.valid()) throw DomainError("save_png: invalid image");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write image: " + path);

    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png) throw IoError("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: allocation failure");
    }

    try {
        png_init_io(png, file.get());
        png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (std::uint32_t y = 0; y < image.height; ++y) {
            png_write_row(png, const_cast<png_bytep>(
                                   image.pixels.data() +
                                   static_cast<std::size_t>(y) * image.width * 3));
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

RgbImage load_image(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open image: " + path);
    unsigned char magic[4] = {0, 0, 0, 0};
    const std::size_t got = std::fread(magic, 1, 4, file.get());
    file.reset();
    if (got >= 4 && magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G')
        return load_png(path);
    if (got >= 4 && ((magic[0] == 'I' && magic[1] == 'I' && magic[2] == 42 && magic[3] == 0) ||
                     (magic[0] == 'M' && magic[1] == 'M' && magic[2] == 0 && magic[3] == 42)))
        return load_tiff(path);
    throw ParseError(path + ": not a PNG or TIFF file");
}

}  // namespace ihc
