#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ihcscore/io.hpp"
#include "ihcscore/staining.hpp"

namespace ihc {

/// One calibration tile: pathologist keypoints carry stain labels; model
/// keypoints are classified under candidate thresholds.
struct CalibrationItem {
    const Tile* tile = nullptr;
    std::vector<KeypointRecord> annotated;  // stain labels required
    std::vector<Keypoint> predicted;
};

struct CalibrationSet {
    std::vector<CalibrationItem> items;
    std::string annotator_id;
};

/// Candidate Value thresholds: left, right in {lo, lo+step, ..., hi} with
/// left < right.
struct GridSpec {
    int lo = 40;
    int hi = 160;
    int step = 5;
};

void validate_grid(const GridSpec& grid);

/// Exhaustive grid search for the (value_left, value_right) pair minimizing
/// the mean absolute deviation, over slides and compartments, between the
/// model H-score under the candidate thresholds and the reference H-score
/// taken from the pathologist stain labels. Ties break toward the smallest
/// left, then the smallest right. Slide-compartment pairs where either side
/// has no nuclei are skipped.
StainProfile calibrate(const CalibrationSet& set, const GridSpec& grid, double hue_split_deg,
                       int nucleus_half_side_px, double brown_hue_ref_deg = 30.0);

/// Leave-one-slide-out protocol: for every slide in the set, calibrates on
/// the remaining slides. Returns (held-out slide id, profile) pairs in slide
/// id order.
std::vector<std::pair<std::string, StainProfile>> calibrate_loso(
    const CalibrationSet& set, const GridSpec& grid, double hue_split_deg,
    int nucleus_half_side_px, double brown_hue_ref_deg = 30.0);

// Profile persistence: UTF-8 key=value lines, exactly these keys in this
// order: annotator_id, hue_split_deg, value_left, value_right,
// nucleus_half_side_px, created_utc, objective.
std::string profile_to_string(const StainProfile& profile);
StainProfile profile_from_string(const std::string& text, const std::string& context);
void save_profile(const StainProfile& profile, const std::string& path);
StainProfile load_profile(const std::string& path);

/// Current time as an ISO-8601 UTC string (profile metadata).
std::string utc_timestamp();

}  // namespace ihc
