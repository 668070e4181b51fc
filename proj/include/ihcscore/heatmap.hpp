#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ihcscore/errors.hpp"

namespace ihc {

/// Tissue compartment a nucleus belongs to. Values match heatmap channel
/// indices and the on-disk class encoding.
enum class Compartment : int { stroma = 0, epithelium = 1 };

const char* compartment_name(Compartment c);
Compartment compartment_from_name(const std::string& name);

/// Per-class probability raster. Channels stored planar, row-major.
struct Heatmap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t num_classes = 0;
    std::vector<float> values;  // num_classes * height * width

    Heatmap() = default;
    Heatmap(std::uint32_t w, std::uint32_t h, std::uint32_t classes);

    float& at(std::uint32_t x, std::uint32_t y, std::uint32_t cls) {
        return values[(static_cast<std::size_t>(cls) * height + y) * width + x];
    }
    float at(std::uint32_t x, std::uint32_t y, std::uint32_t cls) const {
        return values[(static_cast<std::size_t>(cls) * height + y) * width + x];
    }

    bool valid() const;
};

/// Nucleus-center prediction.
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    Compartment compartment = Compartment::stroma;
    double confidence = 1.0;

    bool operator==(const Keypoint&) const = default;
};

struct ExtractorParams {
    double confidence_threshold = 0.5;
    double min_distance = 13.0;  // px, Euclidean
    int pool_size = 3;           // odd window side
};

/// Local-maximum keypoint extraction. A pixel is a candidate iff it attains
/// the maximum of its pool_size x pool_size neighborhood (plateaus yield only
/// the lexicographically first pixel in (y, x) order) and its value reaches
/// confidence_threshold. Candidates are accepted greedily in descending value
/// order; a candidate within min_distance of an accepted keypoint of the same
/// class is dropped. Ties in value break by (y, x).
std::vector<Keypoint> extract_keypoints(const Heatmap& heatmap, const ExtractorParams& params);

/// Renders per-class Gaussian peaks: each channel is the pixel-wise maximum
/// over its keypoints of confidence * exp(-(dx^2+dy^2) / (2 sigma^2)).
/// Keypoints must lie inside the raster and reference valid channels.
Heatmap render_heatmap(std::span<const Keypoint> keypoints, std::uint32_t width,
                       std::uint32_t height, std::uint32_t num_classes, double sigma);

/// Confidence-weighted fusion of keypoint sets from several models, the
/// point analogue of weighted boxes fusion. Keypoints are processed in
/// descending confidence; each joins the first cluster of its class whose
/// running fused center lies within fuse_radius, else opens a new cluster.
/// Fused position is the confidence*weight mean of members; fused confidence
/// averages per-model max confidences weighted by model weight over the
/// models present in the cluster. Output is ordered by (class, confidence
/// desc, y, x).
std::vector<Keypoint> fuse_keypoints(std::span<const std::vector<Keypoint>> sets,
                                     std::span<const double> model_weights, double fuse_radius);

/// Mean Huber loss over all pixels and channels: 0.5 r^2 when |r| < delta,
/// else delta (|r| - delta / 2).
double huber_loss(const Heatmap& predicted, const Heatmap& target, double delta);

}  // namespace ihc
