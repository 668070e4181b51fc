#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ihcscore/heatmap.hpp"
#include "ihcscore/image.hpp"
#include "ihcscore/staining.hpp"

namespace ihc {

/// Shortest decimal representation that round-trips the value.
std::string format_double(double value);
double parse_double(const std::string& text, const std::string& context);
std::int64_t parse_int(const std::string& text, const std::string& context);

RgbImage load_png(const std::string& path);
void save_png(const RgbImage& image, const std::string& path);

/// Minimal baseline TIFF reader: 8-bit gray/RGB/RGBA, strip-organized,
/// uncompressed or deflate (with optional horizontal predictor), both byte
/// orders. Anything else is rejected with a ParseError naming the feature.
RgbImage load_tiff(const std::string& path);

/// Dispatches on the file's magic bytes (PNG or TIFF).
RgbImage load_image(const std::string& path);

// Heatmap container: magic "HMF1"; three little-endian uint32 fields
// height, width, classes; then height*width*classes little-endian float32
// in row-major, class-minor order. Class 0 = stroma, 1 = epithelium.
Heatmap read_heatmap(std::istream& in, const std::string& context);
void write_heatmap(const Heatmap& heatmap, std::ostream& out);
Heatmap load_heatmap(const std::string& path);
void save_heatmap(const Heatmap& heatmap, const std::string& path);

/// One row of the keypoint TSV exchange format.
struct KeypointRecord {
    std::string slide_id;
    std::string tile_id;
    Keypoint keypoint;
    std::optional<StainClass> stain;

    bool operator==(const KeypointRecord&) const = default;
};

using KeypointTable = std::vector<KeypointRecord>;

// Tab-separated, one row per nucleus:
//   slide_id  tile_id  x  y  class  confidence  [stain_label]
// class in {stroma, epithelium}; the stain label column is present for
// pathologist annotations. Lines starting with '#' are skipped on read.
KeypointTable read_keypoint_tsv(std::istream& in, const std::string& context);
void write_keypoint_tsv(const KeypointTable& table, std::ostream& out);
KeypointTable load_keypoint_tsv(const std::string& path);
void save_keypoint_tsv(const KeypointTable& table, const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ihc
