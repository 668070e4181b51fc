#include <zlib.h>

#include <cstring>
#include <map>

#include "ihcscore/io.hpp"

namespace ihc {

namespace {

enum Tag : std::uint16_t {
    kImageWidth = 256,
    kImageLength = 257,
    kBitsPerSample = 258,
    kCompression = 259,
    kPhotometric = 262,
    kStripOffsets = 273,
    kSamplesPerPixel = 277,
    kRowsPerStrip = 278,
    kStripByteCounts = 279,
    kPlanarConfig = 284,
    kPredictor = 317,
};

struct Reader {
    const unsigned char* data;
    std::size_t size;
    bool big_endian;
    std::string path;

    std::uint16_t u16(std::size_t off) const {
        if (off + 2 > size) throw ParseError(path + ": truncated TIFF");
        return big_endian ? static_cast<std::uint16_t>((data[off] << 8) | data[off + 1])
                          : static_cast<std::uint16_t>(data[off] | (data[off + 1] << 8));
    }
    std::uint32_t u32(std::size_t off) const {
        if (off + 4 > size) throw ParseError(path + ": truncated TIFF");
        if (big_endian)
            return (static_cast<std::uint32_t>(data[off]) << 24) |
                   (static_cast<std::uint32_t>(data[off + 1]) << 16) |
                   (static_cast<std::uint32_t>(data[off + 2]) << 8) | data[off + 3];
        return static_cast<std::uint32_t>(data[off]) |
               (static_cast<std::uint32_t>(data[off + 1]) << 8) |
               (static_cast<std::uint32_t>(data[off + 2]) << 16) |
               (static_cast<std::uint32_t>(data[off + 3]) << 24);
    }
};

struct Entry {
    std::uint16_t type;
    std::uint32_t count;
    std::size_t value_off;  // offset of the inline value field
};

std::size_t type_size(std::uint16_t type) {
    switch (type) {
        case 1: return 1;   // BYTE
        case 3: return 2;   // SHORT
        case 4: return 4;   // LONG
        default: return 0;
    }
}

std::vector<std::uint32_t> entry_values(const Reader& r, const Entry& e) {
    const std::size_t elem = type_size(e.type);
    if (elem == 0) throw ParseError(r.path + ": unsupported TIFF field type");
    const std::size_t total = elem * e.count;
    const std::size_t base = total <= 4 ? e.value_off : r.u32(e.value_off);
    std::vector<std::uint32_t> values(e.count);
    for (std::uint32_t i = 0; i < e.count; ++i) {
        const std::size_t off = base + i * elem;
        if (elem == 1) {
            if (off >= r.size) throw ParseError(r.path + ": truncated TIFF");
            values[i] = r.data[off];
        } else if (elem == 2) {
            values[i] = r.u16(off);
        } else {
            values[i] = r.u32(off);
        }
    }
    return values;
}

std::vector<unsigned char> inflate_bytes(const unsigned char* src, std::size_t n,
                                         std::size_t expected, const std::string& path) {
    std::vector<unsigned char> out(expected);
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw ParseError(path + ": zlib init failure");
    zs.next_in = const_cast<Bytef*>(src);
    zs.avail_in = static_cast<uInt>(n);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.avail_out != 0)
        throw ParseError(path + ": corrupt deflate strip");
    return out;
}

}  // namespace

RgbImage load_tiff(const std::string& path) {
    const std::string bytes = read_text_file(path);
    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), false, path};
    if (r.size < 8) throw ParseError(path + ": truncated TIFF");
    if (r.data[0] == 'M' && r.data[1] == 'M')
        r.big_endian = true;
    else if (!(r.data[0] == 'I' && r.data[1] == 'I'))
        throw ParseError(path + ": not a TIFF file");
    if (r.u16(2) != 42) throw ParseError(path + ": bad TIFF version");

    const std::uint32_t ifd = r.u32(4);
    const std::uint16_t n_entries = r.u16(ifd);
    std::map<std::uint16_t, Entry> entries;
    for (std::uint16_t i = 0; i < n_entries; ++i) {
        const std::size_t off = ifd + 2 + static_cast<std::size_t>(i) * 12;
        const std::uint16_t tag = r.u16(off);
        entries[tag] = Entry{r.u16(off + 2), r.u32(off + 4), off + 8};
    }

    auto scalar = [&](std::uint16_t tag, std::uint32_t fallback,
                      bool required = false) -> std::uint32_t {
        auto it = entries.find(tag);
        if (it == entries.end()) {
            if (required) throw ParseError(path + ": missing TIFF tag " + std::to_string(tag));
            return fallback;
        }
        return entry_values(r, it->second).at(0);
    };

    const std::uint32_t width = scalar(kImageWidth, 0, true);
    const std::uint32_t height = scalar(kImageLength, 0, true);
    const std::uint32_t compression = scalar(kCompression, 1);
    const std::uint32_t photometric = scalar(kPhotometric, 1);
    const std::uint32_t samples = scalar(kSamplesPerPixel, 1);
    const std::uint32_t rows_per_strip = scalar(kRowsPerStrip, height);
    const std::uint32_t planar = scalar(kPlanarConfig, 1);
    const std::uint32_t predictor = scalar(kPredictor, 1);

    if (width == 0 || height == 0) throw ParseError(path + ": zero TIFF dimension");
    if (static_cast<std::uint64_t>(width) * height > (1ULL << 30))
        throw ParseError(path + ": implausible TIFF dimensions");
    if (compression != 1 && compression != 8 && compression != 32946)
        throw ParseError(path + ": unsupported TIFF compression " + std::to_string(compression));
    if (photometric != 1 && photometric != 2)
        throw ParseError(path + ": unsupported TIFF photometric " + std::to_string(photometric));
    if (planar != 1) throw ParseError(path + ": planar TIFF not supported");
    if (predictor != 1 && predictor != 2)
        throw ParseError(path + ": unsupported TIFF predictor");
    if (samples != 1 && samples != 3 && samples != 4)
        throw ParseError(path + ": unsupported TIFF samples per pixel");
    if (entries.count(kBitsPerSample)) {
        for (std::uint32_t bits : entry_values(r, entries[kBitsPerSample]))
            if (bits != 8) throw ParseError(path + ": only 8-bit TIFF supported");
    }

    if (!entries.count(kStripOffsets) || !entries.count(kStripByteCounts))
        throw ParseError(path + ": missing strip tables");
    const auto offsets = entry_values(r, entries.at(kStripOffsets));
    const auto counts = entry_values(r, entries.at(kStripByteCounts));
    if (offsets.size() != counts.size()) throw ParseError(path + ": strip table mismatch");

    RgbImage image;
    image.width = width;
    image.height = height;
    image.pixels.resize(static_cast<std::size_t>(width) * height * 3);

    const std::size_t row_bytes = static_cast<std::size_t>(width) * samples;
    std::uint32_t row = 0;
    for (std::size_t s = 0; s < offsets.size(); ++s) {
        if (offsets[s] + counts[s] > r.size) throw ParseError(path + ": strip out of bounds");
        const std::uint32_t strip_rows = std::min(rows_per_strip, height - row);
        const std::size_t expect = row_bytes * strip_rows;
        std::vector<unsigned char> strip;
        if (compression == 1) {
            if (counts[s] < expect) throw ParseError(path + ": strip too short");
            strip.assign(r.data + offsets[s], r.data + offsets[s] + expect);
        } else {
            strip = inflate_bytes(r.data + offsets[s], counts[s], expect, path);
        }
        if (predictor == 2) {
            for (std::uint32_t y = 0; y < strip_rows; ++y) {
                unsigned char* p = strip.data() + y * row_bytes;
                for (std::size_t i = samples; i < row_bytes; ++i)
                    p[i] = static_cast<unsigned char>(p[i] + p[i - samples]);
            }
        }
        for (std::uint32_t y = 0; y < strip_rows && row + y < height; ++y) {
            const unsigned char* src = strip.data() + y * row_bytes;
            std::uint8_t* dst = image.at(0, row + y);
            for (std::uint32_t x = 0; x < width; ++x) {
                if (samples == 1) {
                    dst[0] = dst[1] = dst[2] = src[x];
                } else {
                    dst[0] = src[x * samples];
                    dst[1] = src[x * samples + 1];
                    dst[2] = src[x * samples + 2];
                }
                dst += 3;
            }
        }
        row += strip_rows;
    }
    if (row < height) throw ParseError(path + ": missing strips");
    return image;
}

}  // namespace ihc
