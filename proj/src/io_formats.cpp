#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ihcscore/io.hpp"

namespace ihc {

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& context) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError(context + ": invalid number '" + text + "'");
    return value;
}

std::int64_t parse_int(const std::string& text, const std::string& context) {
    std::int64_t value = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError(context + ": invalid integer '" + text + "'");
    return value;
}

namespace {

void write_u32le(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                           static_cast<char>((v >> 16) & 0xFF),
                           static_cast<char>((v >> 24) & 0xFF)};
    out.write(bytes, 4);
}

std::uint32_t read_u32le(std::istream& in, const std::string& context) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw ParseError(context + ": truncated header");
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) |
           (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

Heatmap read_heatmap(std::istream& in, const std::string& context) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HMF1", 4) != 0)
        throw ParseError(context + ": missing HMF1 magic");
    const std::uint32_t height = read_u32le(in, context);
    const std::uint32_t width = read_u32le(in, context);
    const std::uint32_t classes = read_u32le(in, context);
    if (height == 0 || width == 0 || classes == 0)
        throw ParseError(context + ": zero dimension in header");
    if (static_cast<std::uint64_t>(height) * width * classes > (1ULL << 30))
        throw ParseError(context + ": implausible dimensions in header");

    Heatmap hm(width, height, classes);
    const std::size_t count = static_cast<std::size_t>(width) * height * classes;
    std::vector<unsigned char> raw(count * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw ParseError(context + ": truncated payload");

    std::size_t offset = 0;
    for (std::uint32_t y = 0; y < height; ++y) {
        for (std::uint32_t x = 0; x < width; ++x) {
            for (std::uint32_t c = 0; c < classes; ++c) {
                const std::uint32_t bits = static_cast<std::uint32_t>(raw[offset]) |
                                           (static_cast<std::uint32_t>(raw[offset + 1]) << 8) |
                                           (static_cast<std::uint32_t>(raw[offset + 2]) << 16) |
                                           (static_cast<std::uint32_t>(raw[offset + 3]) << 24);
                offset += 4;
                float v;
                std::memcpy(&v, &bits, 4);
                if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
                    throw ParseError(context + ": heatmap value outside [0, 1]");
                hm.at(x, y, c) = v;
            }
        }
    }
    return hm;
}

void write_heatmap(const Heatmap& heatmap, std::ostream& out) {
    if (!heatmap.valid()) throw DomainError("write_heatmap: invalid heatmap");
    out.write("HMF1", 4);
    write_u32le(out, heatmap.height);
    write_u32le(out, heatmap.width);
    write_u32le(out, heatmap.num_classes);
    std::vector<unsigned char> raw;
    raw.reserve(heatmap.values.size() * 4);
    for (std::uint32_t y = 0; y < heatmap.height; ++y) {
        for (std::uint32_t x = 0; x < heatmap.width; ++x) {
            for (std::uint32_t c = 0; c < heatmap.num_classes; ++c) {
                const float v = heatmap.at(x, y, c);
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                raw.push_back(static_cast<unsigned char>(bits & 0xFF));
                raw.push_back(static_cast<unsigned char>((bits >> 8) & 0xFF));
                raw.push_back(static_cast<unsigned char>((bits >> 16) & 0xFF));
                raw.push_back(static_cast<unsigned char>((bits >> 24) & 0xFF));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

Heatmap load_heatmap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open heatmap file: " + path);
    return read_heatmap(in, path);
}

void save_heatmap(const Heatmap& heatmap, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write heatmap file: " + path);
    write_heatmap(heatmap, out);
    if (!out) throw IoError("short write: " + path);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

}  // namespace

KeypointTable read_keypoint_tsv(std::istream& in, const std::string& context) {
    KeypointTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::string where = context + ":" + std::to_string(lineno);
        const auto fields = split_tabs(line);
        if (fields.size() != 6 && fields.size() != 7)
            throw ParseError(where + ": expected 6 or 7 fields, got " +
                             std::to_string(fields.size()));
        KeypointRecord rec;
        rec.slide_id = fields[0];
        rec.tile_id = fields[1];
        rec.keypoint.x = parse_double(fields[2], where + " x");
        rec.keypoint.y = parse_double(fields[3], where + " y");
        try {
            rec.keypoint.compartment = compartment_from_name(fields[4]);
            if (fields.size() == 7 && !fields[6].empty())
                rec.stain = stain_class_from_name(fields[6]);
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        rec.keypoint.confidence = parse_double(fields[5], where + " confidence");
        if (!std::isfinite(rec.keypoint.x) || !std::isfinite(rec.keypoint.y) ||
            rec.keypoint.x < 0.0 || rec.keypoint.y < 0.0)
            throw ParseError(where + ": coordinates must be finite and >= 0");
        if (rec.keypoint.confidence < 0.0 || rec.keypoint.confidence > 1.0)
            throw ParseError(where + ": confidence outside [0, 1]");
        table.push_back(std::move(rec));
    }
    return table;
}

void write_keypoint_tsv(const KeypointTable& table, std::ostream& out) {
    bool any_stain = false;
    for (const KeypointRecord& rec : table) {
        if (rec.stain) {
            any_stain = true;
            break;
        }
    }
    for (const KeypointRecord& rec : table) {
        out << rec.slide_id << '\t' << rec.tile_id << '\t' << format_double(rec.keypoint.x)
            << '\t' << format_double(rec.keypoint.y) << '\t'
            << compartment_name(rec.keypoint.compartment) << '\t'
            << format_double(rec.keypoint.confidence);
        if (any_stain) out << '\t' << (rec.stain ? stain_class_name(*rec.stain) : "");
        out << '\n';
    }
}

KeypointTable load_keypoint_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open keypoint file: " + path);
    return read_keypoint_tsv(in, path);
}

void save_keypoint_tsv(const KeypointTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write keypoint file: " + path);
    write_keypoint_tsv(table, out);
    if (!out) throw IoError("short write: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out << content;
    if (!out) throw IoError("short write: " + path);
}

}  // namespace ihc
