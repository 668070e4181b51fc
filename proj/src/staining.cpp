#include "ihcscore/staining.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ihc {

const char* stain_class_name(StainClass c) {
    switch (c) {
        case StainClass::none: return "none";
        case StainClass::weak: return "weak";
        case StainClass::moderate: return "moderate";
        case StainClass::strong: return "strong";
    }
    return "?";
}

StainClass stain_class_from_name(const std::string& name) {
    if (name == "none") return StainClass::none;
    if (name == "weak") return StainClass::weak;
    if (name == "moderate") return StainClass::moderate;
    if (name == "strong") return StainClass::strong;
    throw ParseError("unknown stain label '" + name + "'");
}

void validate_profile(const StainProfile& profile) {
    if (!(profile.value_left < profile.value_right))
        throw DomainError("stain profile: value_left must be < value_right");
    if (profile.hue_split_deg < 0.0 || profile.hue_split_deg >= 360.0)
        throw DomainError("stain profile: hue_split_deg must be in [0, 360)");
    if (profile.value_left < 0.0 || profile.value_right > 255.0)
        throw DomainError("stain profile: value thresholds must be within [0, 255]");
    if (profile.nucleus_half_side_px < 0)
        throw DomainError("stain profile: nucleus_half_side_px must be >= 0");
}

namespace {

double wrap360(double deg) {
    double v = std::fmod(deg, 360.0);
    if (v < 0.0) v += 360.0;
    return v;
}

}  // namespace

double estimate_hue_split(std::span<const double> blue_hues, std::span<const double> brown_hues) {
    if (blue_hues.empty() || brown_hues.empty())
        throw DomainError("estimate_hue_split: both hue samples must be nonempty");

    // 1-degree bins centered on integer degrees: bin k covers [k-0.5, k+0.5).
    auto peak_center = [](std::span<const double> hues) {
        std::array<std::int64_t, 360> histogram{};
        for (double h : hues) {
            const int bin = static_cast<int>(wrap360(h) + 0.5) % 360;
            ++histogram[bin];
        }
        int best = 0;
        for (int k = 1; k < 360; ++k) {
            if (histogram[k] > histogram[best]) best = k;
        }
        return static_cast<double>(best);
    };

    const double blue_peak = peak_center(blue_hues);
    const double brown_peak = peak_center(brown_hues);
    return (blue_peak + brown_peak) / 2.0;
}

bool hue_on_brown_side(double hue_deg, double hue_split_deg, double brown_hue_ref_deg) {
    const bool hue_side = wrap360(hue_deg - hue_split_deg) < 180.0;
    const bool brown_side = wrap360(brown_hue_ref_deg - hue_split_deg) < 180.0;
    return hue_side == brown_side;
}

StainClass classify_nucleus(const RgbImage& image, const Keypoint& keypoint,
                            const StainProfile& profile) {
    validate_profile(profile);
    const RgbMean mean = patch_mean(image, keypoint.x, keypoint.y, profile.nucleus_half_side_px);
    const Hsv hsv = rgb_to_hsv(mean);
    if (!hue_on_brown_side(hsv.h, profile.hue_split_deg, profile.brown_hue_ref_deg))
        return StainClass::none;
    if (hsv.v < profile.value_left) return StainClass::strong;
    if (hsv.v < profile.value_right) return StainClass::moderate;
    return StainClass::weak;
}

std::optional<double> compute_hscore(const CompartmentCounts& counts) {
    const std::int64_t total = counts.total();
    if (total == 0) return std::nullopt;
    const double f_weak = static_cast<double>(counts[StainClass::weak]) / total;
    const double f_moderate = static_cast<double>(counts[StainClass::moderate]) / total;
    const double f_strong = static_cast<double>(counts[StainClass::strong]) / total;
    return 100.0 * (f_weak + 2.0 * f_moderate + 3.0 * f_strong);
}

ClassCounts classify_counts(const RgbImage& image, std::span<const Keypoint> keypoints,
                            const StainProfile& profile) {
    ClassCounts counts;
    for (const Keypoint& kp : keypoints) {
        const StainClass cls = classify_nucleus(image, kp, profile);
        ++counts[kp.compartment][cls];
    }
    return counts;
}

HScoreReport report_from_counts(const ClassCounts& counts, const StainProfile& profile) {
    HScoreReport report;
    report.profile_id = profile.annotator_id;
    for (int c = 0; c < 2; ++c) {
        CompartmentScore& score = report.compartments[c];
        score.counts = counts.per_compartment[c];
        const std::int64_t total = score.counts.total();
        if (total > 0) {
            for (int k = 0; k < 4; ++k)
                score.fractions[k] = static_cast<double>(score.counts.counts[k]) / total;
        }
        score.hscore = compute_hscore(score.counts);
    }
    return report;
}

HScoreReport score_tiles(std::span<const TileKeypoints> items, const StainProfile& profile) {
    validate_profile(profile);
    ClassCounts pooled;
    std::set<std::string> slides;
    for (const TileKeypoints& item : items) {
        if (item.tile == nullptr) throw DomainError("score_tiles: null tile");
        try {
            pooled += classify_counts(item.tile->image, item.keypoints, profile);
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " [tile " + item.tile->slide_id + "@(" +
                              std::to_string(item.tile->origin_x) + "," +
                              std::to_string(item.tile->origin_y) + ")]");
        }
        slides.insert(item.tile->slide_id);
    }
    HScoreReport report = report_from_counts(pooled, profile);
    report.slide_ids.assign(slides.begin(), slides.end());
    report.tile_count = items.size();
    return report;
}

}  // namespace ihc
