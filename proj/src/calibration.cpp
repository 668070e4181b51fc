#include "ihcscore/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

namespace ihc {

void validate_grid(const GridSpec& grid) {
    if (grid.lo >= grid.hi) throw DomainError("grid: lo must be < hi");
    if (grid.step <= 0) throw DomainError("grid: step must be positive");
    if ((grid.hi - grid.lo) % grid.step != 0)
        throw DomainError("grid: step must divide the range walk");
    if (grid.lo < 0 || grid.hi > 255) throw DomainError("grid: range must lie within [0, 255]");
}

namespace {

// Reference H-scores come straight from the pathologist labels; model
// keypoints reduce to (brown?, Value) pairs that candidate thresholds bin.
struct SlideData {
    std::array<CompartmentCounts, 2> reference;
    std::array<std::vector<double>, 2> brown_values;  // sorted Value per compartment
    std::array<std::int64_t, 2> blue_count{0, 0};
};

double objective_for(const std::map<std::string, SlideData>& slides, double left, double right) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (const auto& [slide_id, data] : slides) {
        for (int c = 0; c < 2; ++c) {
            const auto ref = compute_hscore(data.reference[c]);
            const std::vector<double>& values = data.brown_values[c];
            CompartmentCounts model;
            model[StainClass::none] = data.blue_count[c];
            const auto lower =
                std::lower_bound(values.begin(), values.end(), left) - values.begin();
            const auto upper =
                std::lower_bound(values.begin(), values.end(), right) - values.begin();
            model[StainClass::strong] = lower;
            model[StainClass::moderate] = upper - lower;
            model[StainClass::weak] = static_cast<std::int64_t>(values.size()) - upper;
            const auto model_h = compute_hscore(model);
            if (!ref || !model_h) continue;
            total += std::fabs(*model_h - *ref);
            ++pairs;
        }
    }
    if (pairs == 0)
        throw DomainError("calibrate: no slide-compartment pair with nuclei on both sides");
    return total / static_cast<double>(pairs);
}

std::map<std::string, SlideData> prepare_slides(const CalibrationSet& set, double hue_split_deg,
                                                int nucleus_half_side_px,
                                                double brown_hue_ref_deg) {
    if (set.items.empty()) throw DomainError("calibrate: empty calibration set");
    std::map<std::string, SlideData> slides;
    bool any_stained = false;
    for (const CalibrationItem& item : set.items) {
        if (item.tile == nullptr) throw DomainError("calibrate: null tile");
        SlideData& data = slides[item.tile->slide_id];
        for (const KeypointRecord& rec : item.annotated) {
            if (!rec.stain)
                throw DomainError("calibrate: pathologist keypoint without stain label (tile " +
                                  rec.tile_id + ")");
            ++data.reference[static_cast<int>(rec.keypoint.compartment)][*rec.stain];
            if (*rec.stain != StainClass::none) any_stained = true;
        }
        for (const Keypoint& kp : item.predicted) {
            const RgbMean mean =
                patch_mean(item.tile->image, kp.x, kp.y, nucleus_half_side_px);
            const Hsv hsv = rgb_to_hsv(mean);
            const int c = static_cast<int>(kp.compartment);
            if (hue_on_brown_side(hsv.h, hue_split_deg, brown_hue_ref_deg))
                data.brown_values[c].push_back(hsv.v);
            else
                ++data.blue_count[c];
        }
    }
    if (!any_stained) throw DomainError("calibrate: no stained nucleus in the annotation");
    for (auto& [slide_id, data] : slides) {
        std::sort(data.brown_values[0].begin(), data.brown_values[0].end());
        std::sort(data.brown_values[1].begin(), data.brown_values[1].end());
    }
    return slides;
}

}  // namespace

StainProfile calibrate(const CalibrationSet& set, const GridSpec& grid, double hue_split_deg,
                       int nucleus_half_side_px, double brown_hue_ref_deg) {
    validate_grid(grid);
    const auto slides =
        prepare_slides(set, hue_split_deg, nucleus_half_side_px, brown_hue_ref_deg);

    bool found = false;
    int best_left = 0, best_right = 0;
    double best_objective = 0.0;
    for (int left = grid.lo; left <= grid.hi; left += grid.step) {
        for (int right = left + grid.step; right <= grid.hi; right += grid.step) {
            const double obj = objective_for(slides, left, right);
            if (!found || obj < best_objective) {
                found = true;
                best_objective = obj;
                best_left = left;
                best_right = right;
            }
        }
    }
    if (!found) throw DomainError("calibrate: no admissible (left, right) pair on the grid");

    StainProfile profile;
    profile.annotator_id = set.annotator_id;
    profile.hue_split_deg = hue_split_deg;
    profile.value_left = best_left;
    profile.value_right = best_right;
    profile.nucleus_half_side_px = nucleus_half_side_px;
    profile.created_utc = utc_timestamp();
    profile.objective = best_objective;
    profile.brown_hue_ref_deg = brown_hue_ref_deg;
    return profile;
}

std::vector<std::pair<std::string, StainProfile>> calibrate_loso(
    const CalibrationSet& set, const GridSpec& grid, double hue_split_deg,
    int nucleus_half_side_px, double brown_hue_ref_deg) {
    std::map<std::string, bool> slide_ids;
    for (const CalibrationItem& item : set.items) {
        if (item.tile == nullptr) throw DomainError("calibrate: null tile");
        slide_ids[item.tile->slide_id] = true;
    }
    if (slide_ids.size() < 2)
        throw DomainError("leave-one-slide-out requires at least two slides");

    std::vector<std::pair<std::string, StainProfile>> result;
    for (const auto& [held_out, unused] : slide_ids) {
        CalibrationSet train;
        train.annotator_id = set.annotator_id;
        for (const CalibrationItem& item : set.items) {
            if (item.tile->slide_id != held_out) train.items.push_back(item);
        }
        result.emplace_back(held_out, calibrate(train, grid, hue_split_deg,
                                                nucleus_half_side_px, brown_hue_ref_deg));
    }
    return result;
}

namespace {

constexpr const char* kProfileKeys[] = {
    "annotator_id", "hue_split_deg",        "value_left", "value_right",
    "nucleus_half_side_px", "created_utc", "objective",
};

}  // namespace

std::string profile_to_string(const StainProfile& profile) {
    validate_profile(profile);
    std::ostringstream out;
    out << "annotator_id=" << profile.annotator_id << '\n';
    out << "hue_split_deg=" << format_double(profile.hue_split_deg) << '\n';
    out << "value_left=" << format_double(profile.value_left) << '\n';
    out << "value_right=" << format_double(profile.value_right) << '\n';
    out << "nucleus_half_side_px=" << profile.nucleus_half_side_px << '\n';
    out << "created_utc=" << profile.created_utc << '\n';
    out << "objective=" << format_double(profile.objective) << '\n';
    return out.str();
}

StainProfile profile_from_string(const std::string& text, const std::string& context) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::size_t key_index = 0;
    StainProfile profile;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::string where = context + ":" + std::to_string(lineno);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key_index >= std::size(kProfileKeys))
            throw ParseError(where + ": unexpected extra field '" + key + "'");
        if (key != kProfileKeys[key_index])
            throw ParseError(where + ": expected field '" + kProfileKeys[key_index] +
                             "', found '" + key + "'");
        switch (key_index) {
            case 0: profile.annotator_id = value; break;
            case 1: profile.hue_split_deg = parse_double(value, where); break;
            case 2: profile.value_left = parse_double(value, where); break;
            case 3: profile.value_right = parse_double(value, where); break;
            case 4:
                profile.nucleus_half_side_px =
                    static_cast<int>(parse_int(value, where));
                break;
            case 5: profile.created_utc = value; break;
            case 6: profile.objective = parse_double(value, where); break;
        }
        ++key_index;
    }
    if (key_index < std::size(kProfileKeys))
        throw ParseError(context + ": missing field '" + kProfileKeys[key_index] + "'");
    validate_profile(profile);
    return profile;
}

void save_profile(const StainProfile& profile, const std::string& path) {
    write_text_file(path, profile_to_string(profile));
}

StainProfile load_profile(const std::string& path) {
    return profile_from_string(read_text_file(path), path);
}

std::string utc_timestamp() {
    // SOURCE_DATE_EPOCH makes profile creation reproducible bit for bit.
    std::time_t now = std::time(nullptr);
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
        char* end = nullptr;
        const long long v = std::strtoll(epoch, &end, 10);
        if (end != epoch && *end == '\0') now = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace ihc
