#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ihcscore/heatmap.hpp"
#include "ihcscore/image.hpp"

namespace ihc {

/// Staining intensity class. The numeric value is the H-score weight.
enum class StainClass : int { none = 0, weak = 1, moderate = 2, strong = 3 };

const char* stain_class_name(StainClass c);
StainClass stain_class_from_name(const std::string& name);

/// Per-annotator staining thresholds. value_left divides strong from
/// moderate, value_right divides moderate from weak (darker = stronger).
/// brown_hue_ref_deg orients the blue/brown side test around hue_split_deg;
/// it is a runtime parameter, not part of the persisted profile format.
struct StainProfile {
    std::string annotator_id;
    double hue_split_deg = 125.0;
    double value_left = 80.0;
    double value_right = 120.0;
    int nucleus_half_side_px = 10;
    std::string created_utc;
    double objective = 0.0;
    double brown_hue_ref_deg = 30.0;

    bool operator==(const StainProfile&) const = default;
};

void validate_profile(const StainProfile& profile);

/// Nucleus counts for one compartment, one slot per StainClass.
struct CompartmentCounts {
    std::array<std::int64_t, 4> counts{0, 0, 0, 0};

    std::int64_t& operator[](StainClass c) { return counts[static_cast<int>(c)]; }
    std::int64_t operator[](StainClass c) const { return counts[static_cast<int>(c)]; }
    std::int64_t total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }

    CompartmentCounts& operator+=(const CompartmentCounts& other) {
        for (int i = 0; i < 4; ++i) counts[i] += other.counts[i];
        return *this;
    }
    bool operator==(const CompartmentCounts&) const = default;
};

/// Counts per compartment (index by Compartment).
struct ClassCounts {
    std::array<CompartmentCounts, 2> per_compartment;

    CompartmentCounts& operator[](Compartment c) {
        return per_compartment[static_cast<int>(c)];
    }
    const CompartmentCounts& operator[](Compartment c) const {
        return per_compartment[static_cast<int>(c)];
    }
    ClassCounts& operator+=(const ClassCounts& other) {
        per_compartment[0] += other.per_compartment[0];
        per_compartment[1] += other.per_compartment[1];
        return *this;
    }
    bool operator==(const ClassCounts&) const = default;
};

struct CompartmentScore {
    CompartmentCounts counts;
    std::array<double, 4> fractions{0, 0, 0, 0};
    std::optional<double> hscore;  // empty when the compartment has no nuclei
};

struct HScoreReport {
    std::array<CompartmentScore, 2> compartments;  // index by Compartment
    std::vector<std::string> slide_ids;
    std::size_t tile_count = 0;
    std::string profile_id;

    CompartmentScore& operator[](Compartment c) {
        return compartments[static_cast<int>(c)];
    }
    const CompartmentScore& operator[](Compartment c) const {
        return compartments[static_cast<int>(c)];
    }
};

/// Threshold between hematoxylin-blue and DAB-brown hue populations: the
/// arithmetic mean of the two 1-degree histogram peak centers (ties take the
/// lowest bin).
double estimate_hue_split(std::span<const double> blue_hues, std::span<const double> brown_hues);

/// True iff hue lies in the semicircle around brown_hue_ref_deg delimited by
/// the split, i.e. on the stained (DAB) side.
bool hue_on_brown_side(double hue_deg, double hue_split_deg, double brown_hue_ref_deg);

/// Classifies one nucleus from the mean color of the square patch around its
/// keypoint: blue side of the hue split -> none; otherwise Value below
/// value_left -> strong, below value_right -> moderate, else weak.
StainClass classify_nucleus(const RgbImage& image, const Keypoint& keypoint,
                            const StainProfile& profile);

/// H-score of one compartment: 100 * (1 f_weak + 2 f_moderate + 3 f_strong)
/// over fractions of the compartment total. Empty compartment -> nullopt.
std::optional<double> compute_hscore(const CompartmentCounts& counts);

/// One tile with the keypoints detected on it.
struct TileKeypoints {
    const Tile* tile = nullptr;
    std::span<const Keypoint> keypoints;
};

/// Classifies every keypoint, pools counts per compartment across all tiles,
/// and computes one H-score per compartment from the pooled counts.
HScoreReport score_tiles(std::span<const TileKeypoints> items, const StainProfile& profile);

/// Pooled classification counts for one tile (the parallelizable unit of
/// score_tiles; merge with += in a fixed order).
ClassCounts classify_counts(const RgbImage& image, std::span<const Keypoint> keypoints,
                            const StainProfile& profile);

/// Builds a report from already-pooled counts.
HScoreReport report_from_counts(const ClassCounts& counts, const StainProfile& profile);

}  // namespace ihc
