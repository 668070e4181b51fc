#include "ihcscore.h"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <string>

#include "ihcscore/calibration.hpp"
#include "ihcscore/evaluation.hpp"
#include "ihcscore/heatmap.hpp"
#include "ihcscore/image.hpp"
#include "ihcscore/io.hpp"
#include "ihcscore/split.hpp"
#include "ihcscore/staining.hpp"
#include "ihcscore/synthgen.hpp"

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "ihcscore 0.1.0";

thread_local std::string g_last_error;

template <typename Fn>
ihc_status wrap(Fn&& fn) {
    try {
        fn();
        return IHC_OK;
    } catch (const ihc::IoError& e) {
        g_last_error = e.what();
        return IHC_ERROR_IO;
    } catch (const ihc::ParseError& e) {
        g_last_error = e.what();
        return IHC_ERROR_PARSE;
    } catch (const ihc::CapacityError& e) {
        g_last_error = e.what();
        return IHC_ERROR_CAPACITY;
    } catch (const ihc::DomainError& e) {
        g_last_error = e.what();
        return IHC_ERROR_INVALID_ARGUMENT;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return IHC_ERROR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return IHC_ERROR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

ihc::Keypoint to_core(const ihc_keypoint& kp) {
    if (kp.compartment != IHC_CLASS_STROMA && kp.compartment != IHC_CLASS_EPITHELIUM)
        throw ihc::DomainError("keypoint: invalid compartment class");
    return ihc::Keypoint{kp.x, kp.y, static_cast<ihc::Compartment>(kp.compartment),
                         kp.confidence};
}

json counts_json(const ihc::CompartmentCounts& counts) {
    json obj;
    obj["none"] = counts[ihc::StainClass::none];
    obj["weak"] = counts[ihc::StainClass::weak];
    obj["moderate"] = counts[ihc::StainClass::moderate];
    obj["strong"] = counts[ihc::StainClass::strong];
    return obj;
}

json profile_json(const ihc::StainProfile& profile) {
    json obj;
    obj["annotator_id"] = profile.annotator_id;
    obj["hue_split_deg"] = profile.hue_split_deg;
    obj["value_left"] = profile.value_left;
    obj["value_right"] = profile.value_right;
    obj["nucleus_half_side_px"] = profile.nucleus_half_side_px;
    obj["created_utc"] = profile.created_utc;
    obj["objective"] = profile.objective;
    return obj;
}

json config_json(const char* config_echo_json) {
    if (config_echo_json == nullptr) return json::object();
    const json parsed = json::parse(config_echo_json, nullptr, false);
    if (parsed.is_discarded())
        throw ihc::DomainError("config echo is not valid JSON");
    return parsed;
}

}  // namespace

struct ihc_image {
    ihc::RgbImage v;
};
struct ihc_heatmap {
    ihc::Heatmap v;
};
struct ihc_keypoints {
    ihc::KeypointTable v;
};
struct ihc_profile {
    ihc::StainProfile v;
};
struct ihc_tileset {
    std::vector<ihc_image> images;
    std::vector<std::pair<std::int64_t, std::int64_t>> origins;
};
struct ihc_synth {
    ihc_image image;
    ihc_keypoints keypoints;
    ihc::ClassCounts counts;
    std::array<std::optional<double>, 2> hscore;
};
struct ihc_loso_result {
    std::vector<std::string> slide_ids;
    std::vector<ihc_profile> profiles;
};

extern "C" {

const char* ihc_version(void) { return kVersion; }

const char* ihc_last_error(void) { return g_last_error.c_str(); }

void ihc_string_free(char* s) { delete[] s; }

/* ---- images ---- */

ihc_status ihc_image_load(const char* path, ihc_image** out) {
    return wrap([&] {
        if (!path || !out) throw ihc::DomainError("ihc_image_load: null argument");
        *out = new ihc_image{ihc::load_image(path)};
    });
}

ihc_status ihc_image_save_png(const ihc_image* image, const char* path) {
    return wrap([&] {
        if (!image || !path) throw ihc::DomainError("ihc_image_save_png: null argument");
        ihc::save_png(image->v, path);
    });
}

ihc_status ihc_image_create(uint32_t width, uint32_t height, const uint8_t* rgb,
                            ihc_image** out) {
    return wrap([&] {
        if (!rgb || !out) throw ihc::DomainError("ihc_image_create: null argument");
        ihc::RgbImage img;
        img.width = width;
        img.height = height;
        img.pixels.assign(rgb, rgb + static_cast<std::size_t>(width) * height * 3);
        if (!img.valid()) throw ihc::DomainError("ihc_image_create: invalid dimensions");
        *out = new ihc_image{std::move(img)};
    });
}

void ihc_image_free(ihc_image* image) { delete image; }

uint32_t ihc_image_width(const ihc_image* image) { return image ? image->v.width : 0; }
uint32_t ihc_image_height(const ihc_image* image) { return image ? image->v.height : 0; }
const uint8_t* ihc_image_pixels(const ihc_image* image) {
    return image ? image->v.pixels.data() : nullptr;
}

void ihc_rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v) {
    const ihc::Hsv hsv = ihc::rgb_to_hsv(r, g, b);
    if (h) *h = hsv.h;
    if (s) *s = hsv.s;
    if (v) *v = hsv.v;
}

int ihc_image_is_empty_tile(const ihc_image* image, double mean_low, double mean_high,
                            double std_min) {
    bool empty = false;
    const ihc_status st = wrap([&] {
        if (!image) throw ihc::DomainError("ihc_image_is_empty_tile: null image");
        empty = ihc::is_empty_tile(image->v, mean_low, mean_high, std_min);
    });
    if (st != IHC_OK) return -1;
    return empty ? 1 : 0;
}

ihc_status ihc_patch_mean(const ihc_image* image, double cx, double cy, int half_side,
                          double rgb_out[3]) {
    return wrap([&] {
        if (!image || !rgb_out) throw ihc::DomainError("ihc_patch_mean: null argument");
        const ihc::RgbMean mean = ihc::patch_mean(image->v, cx, cy, half_side);
        rgb_out[0] = mean.r;
        rgb_out[1] = mean.g;
        rgb_out[2] = mean.b;
    });
}

ihc_status ihc_cut_tiles(const ihc_image* raster, double microns_per_pixel, double tile_fov_um,
                         uint32_t output_size, ihc_tileset** out) {
    return wrap([&] {
        if (!raster || !out) throw ihc::DomainError("ihc_cut_tiles: null argument");
        auto tiles = ihc::cut_tiles(raster->v, microns_per_pixel, tile_fov_um, output_size);
        auto set = std::make_unique<ihc_tileset>();
        set->images.reserve(tiles.size());
        for (ihc::Tile& tile : tiles) {
            set->origins.emplace_back(tile.origin_x, tile.origin_y);
            set->images.push_back(ihc_image{std::move(tile.image)});
        }
        *out = set.release();
    });
}

size_t ihc_tileset_count(const ihc_tileset* tiles) { return tiles ? tiles->images.size() : 0; }

const ihc_image* ihc_tileset_image(const ihc_tileset* tiles, size_t index) {
    if (!tiles || index >= tiles->images.size()) return nullptr;
    return &tiles->images[index];
}

void ihc_tileset_origin(const ihc_tileset* tiles, size_t index, int64_t* x, int64_t* y) {
    if (!tiles || index >= tiles->origins.size()) return;
    if (x) *x = tiles->origins[index].first;
    if (y) *y = tiles->origins[index].second;
}

void ihc_tileset_free(ihc_tileset* tiles) { delete tiles; }

/* ---- heatmaps ---- */

ihc_status ihc_heatmap_load(const char* path, ihc_heatmap** out) {
    return wrap([&] {
        if (!path || !out) throw ihc::DomainError("ihc_heatmap_load: null argument");
        *out = new ihc_heatmap{ihc::load_heatmap(path)};
    });
}

ihc_status ihc_heatmap_save(const ihc_heatmap* heatmap, const char* path) {
    return wrap([&] {
        if (!heatmap || !path) throw ihc::DomainError("ihc_heatmap_save: null argument");
        ihc::save_heatmap(heatmap->v, path);
    });
}

ihc_status ihc_heatmap_create(uint32_t width, uint32_t height, uint32_t classes,
                              const float* values_class_minor, ihc_heatmap** out) {
    return wrap([&] {
        if (!values_class_minor || !out)
            throw ihc::DomainError("ihc_heatmap_create: null argument");
        ihc::Heatmap hm(width, height, classes);
        std::size_t offset = 0;
        for (uint32_t y = 0; y < height; ++y)
            for (uint32_t x = 0; x < width; ++x)
                for (uint32_t c = 0; c < classes; ++c) hm.at(x, y, c) = values_class_minor[offset++];
        if (!hm.valid()) throw ihc::DomainError("ihc_heatmap_create: values outside [0, 1]");
        *out = new ihc_heatmap{std::move(hm)};
    });
}

void ihc_heatmap_free(ihc_heatmap* heatmap) { delete heatmap; }

uint32_t ihc_heatmap_width(const ihc_heatmap* heatmap) { return heatmap ? heatmap->v.width : 0; }
uint32_t ihc_heatmap_height(const ihc_heatmap* heatmap) {
    return heatmap ? heatmap->v.height : 0;
}
uint32_t ihc_heatmap_classes(const ihc_heatmap* heatmap) {
    return heatmap ? heatmap->v.num_classes : 0;
}

float ihc_heatmap_at(const ihc_heatmap* heatmap, uint32_t x, uint32_t y, uint32_t cls) {
    if (!heatmap || x >= heatmap->v.width || y >= heatmap->v.height ||
        cls >= heatmap->v.num_classes)
        return -1.0f;
    return heatmap->v.at(x, y, cls);
}

ihc_status ihc_huber_loss(const ihc_heatmap* predicted, const ihc_heatmap* target, double delta,
                          double* out) {
    return wrap([&] {
        if (!predicted || !target || !out) throw ihc::DomainError("ihc_huber_loss: null argument");
        *out = ihc::huber_loss(predicted->v, target->v, delta);
    });
}

/* ---- keypoint tables ---- */

ihc_status ihc_keypoints_create(ihc_keypoints** out) {
    return wrap([&] {
        if (!out) throw ihc::DomainError("ihc_keypoints_create: null argument");
        *out = new ihc_keypoints;
    });
}

ihc_status ihc_keypoints_load(const char* path, ihc_keypoints** out) {
    return wrap([&] {
        if (!path || !out) throw ihc::DomainError("ihc_keypoints_load: null argument");
        *out = new ihc_keypoints{ihc::load_keypoint_tsv(path)};
    });
}

ihc_status ihc_keypoints_save(const ihc_keypoints* table, const char* path) {
    return wrap([&] {
        if (!table || !path) throw ihc::DomainError("ihc_keypoints_save: null argument");
        ihc::save_keypoint_tsv(table->v, path);
    });
}

void ihc_keypoints_free(ihc_keypoints* table) { delete table; }

size_t ihc_keypoints_count(const ihc_keypoints* table) { return table ? table->v.size() : 0; }

ihc_status ihc_keypoints_get(const ihc_keypoints* table, size_t index, ihc_keypoint* out,
                             const char** slide_id, const char** tile_id) {
    return wrap([&] {
        if (!table || !out) throw ihc::DomainError("ihc_keypoints_get: null argument");
        if (index >= table->v.size())
            throw ihc::DomainError("ihc_keypoints_get: index out of range");
        const ihc::KeypointRecord& rec = table->v[index];
        out->x = rec.keypoint.x;
        out->y = rec.keypoint.y;
        out->compartment = static_cast<int>(rec.keypoint.compartment);
        out->confidence = rec.keypoint.confidence;
        out->stain = rec.stain ? static_cast<int>(*rec.stain) : -1;
        if (slide_id) *slide_id = rec.slide_id.c_str();
        if (tile_id) *tile_id = rec.tile_id.c_str();
    });
}

ihc_status ihc_keypoints_append(ihc_keypoints* table, const char* slide_id, const char* tile_id,
                                const ihc_keypoint* kp) {
    return wrap([&] {
        if (!table || !slide_id || !tile_id || !kp)
            throw ihc::DomainError("ihc_keypoints_append: null argument");
        ihc::KeypointRecord rec;
        rec.slide_id = slide_id;
        rec.tile_id = tile_id;
        rec.keypoint = to_core(*kp);
        if (kp->stain >= 0) {
            if (kp->stain > 3) throw ihc::DomainError("keypoint: invalid stain class");
            rec.stain = static_cast<ihc::StainClass>(kp->stain);
        }
        table->v.push_back(std::move(rec));
    });
}

ihc_status ihc_extract_keypoints(const ihc_heatmap* heatmap, double confidence_threshold,
                                 double min_distance, int pool_size, const char* slide_id,
                                 const char* tile_id, ihc_keypoints** out) {
    return wrap([&] {
        if (!heatmap || !slide_id || !tile_id || !out)
            throw ihc::DomainError("ihc_extract_keypoints: null argument");
        ihc::ExtractorParams params;
        params.confidence_threshold = confidence_threshold;
        params.min_distance = min_distance;
        params.pool_size = pool_size;
        const auto kps = ihc::extract_keypoints(heatmap->v, params);
        auto table = std::make_unique<ihc_keypoints>();
        table->v.reserve(kps.size());
        for (const ihc::Keypoint& kp : kps)
            table->v.push_back(ihc::KeypointRecord{slide_id, tile_id, kp, std::nullopt});
        *out = table.release();
    });
}

ihc_status ihc_render_heatmap(const ihc_keypoints* table, uint32_t width, uint32_t height,
                              uint32_t classes, double sigma, ihc_heatmap** out) {
    return wrap([&] {
        if (!table || !out) throw ihc::DomainError("ihc_render_heatmap: null argument");
        std::vector<ihc::Keypoint> kps;
        kps.reserve(table->v.size());
        for (const ihc::KeypointRecord& rec : table->v) kps.push_back(rec.keypoint);
        *out = new ihc_heatmap{ihc::render_heatmap(kps, width, height, classes, sigma)};
    });
}

ihc_status ihc_fuse_keypoints(const ihc_keypoints* const* tables, const double* weights,
                              size_t num_tables, double fuse_radius, ihc_keypoints** out) {
    return wrap([&] {
        if (!tables || !weights || !out)
            throw ihc::DomainError("ihc_fuse_keypoints: null argument");
        using Key = std::pair<std::string, std::string>;
        std::map<Key, std::vector<std::vector<ihc::Keypoint>>> groups;
        for (size_t m = 0; m < num_tables; ++m) {
            if (!tables[m]) throw ihc::DomainError("ihc_fuse_keypoints: null table");
            for (const ihc::KeypointRecord& rec : tables[m]->v) {
                auto& sets = groups[{rec.slide_id, rec.tile_id}];
                sets.resize(num_tables);
                sets[m].push_back(rec.keypoint);
            }
        }
        const std::vector<double> w(weights, weights + num_tables);
        auto fused_table = std::make_unique<ihc_keypoints>();
        for (auto& [key, sets] : groups) {
            sets.resize(num_tables);
            const auto fused = ihc::fuse_keypoints(sets, w, fuse_radius);
            for (const ihc::Keypoint& kp : fused)
                fused_table->v.push_back(
                    ihc::KeypointRecord{key.first, key.second, kp, std::nullopt});
        }
        *out = fused_table.release();
    });
}

/* ---- staining / H-score ---- */

ihc_status ihc_profile_load(const char* path, ihc_profile** out) {
    return wrap([&] {
        if (!path || !out) throw ihc::DomainError("ihc_profile_load: null argument");
        *out = new ihc_profile{ihc::load_profile(path)};
    });
}

ihc_status ihc_profile_save(const ihc_profile* profile, const char* path) {
    return wrap([&] {
        if (!profile || !path) throw ihc::DomainError("ihc_profile_save: null argument");
        ihc::save_profile(profile->v, path);
    });
}

ihc_status ihc_profile_create(const char* annotator_id, double hue_split_deg, double value_left,
                              double value_right, int nucleus_half_side_px, ihc_profile** out) {
    return wrap([&] {
        if (!annotator_id || !out) throw ihc::DomainError("ihc_profile_create: null argument");
        ihc::StainProfile profile;
        profile.annotator_id = annotator_id;
        profile.hue_split_deg = hue_split_deg;
        profile.value_left = value_left;
        profile.value_right = value_right;
        profile.nucleus_half_side_px = nucleus_half_side_px;
        profile.created_utc = ihc::utc_timestamp();
        ihc::validate_profile(profile);
        *out = new ihc_profile{std::move(profile)};
    });
}

void ihc_profile_free(ihc_profile* profile) { delete profile; }

ihc_status ihc_profile_to_string(const ihc_profile* profile, char** out) {
    return wrap([&] {
        if (!profile || !out) throw ihc::DomainError("ihc_profile_to_string: null argument");
        *out = dup_string(ihc::profile_to_string(profile->v));
    });
}

double ihc_profile_value_left(const ihc_profile* profile) {
    return profile ? profile->v.value_left : -1.0;
}
double ihc_profile_value_right(const ihc_profile* profile) {
    return profile ? profile->v.value_right : -1.0;
}
double ihc_profile_hue_split(const ihc_profile* profile) {
    return profile ? profile->v.hue_split_deg : -1.0;
}
double ihc_profile_objective(const ihc_profile* profile) {
    return profile ? profile->v.objective : -1.0;
}

void ihc_profile_set_brown_hue_ref(ihc_profile* profile, double degrees) {
    if (profile) profile->v.brown_hue_ref_deg = degrees;
}

ihc_status ihc_classify_nucleus(const ihc_image* image, const ihc_keypoint* kp,
                                const ihc_profile* profile, int* stain_out) {
    return wrap([&] {
        if (!image || !kp || !profile || !stain_out)
            throw ihc::DomainError("ihc_classify_nucleus: null argument");
        *stain_out =
            static_cast<int>(ihc::classify_nucleus(image->v, to_core(*kp), profile->v));
    });
}

ihc_status ihc_classify_counts(const ihc_image* image, const ihc_keypoints* table,
                               const ihc_profile* profile, int64_t counts[8]) {
    return wrap([&] {
        if (!image || !table || !profile || !counts)
            throw ihc::DomainError("ihc_classify_counts: null argument");
        std::vector<ihc::Keypoint> kps;
        kps.reserve(table->v.size());
        for (const ihc::KeypointRecord& rec : table->v) kps.push_back(rec.keypoint);
        const ihc::ClassCounts cc = ihc::classify_counts(image->v, kps, profile->v);
        for (int c = 0; c < 2; ++c)
            for (int k = 0; k < 4; ++k) counts[c * 4 + k] = cc.per_compartment[c].counts[k];
    });
}

ihc_status ihc_hscore(const int64_t counts[4], double* out) {
    return wrap([&] {
        if (!counts || !out) throw ihc::DomainError("ihc_hscore: null argument");
        ihc::CompartmentCounts cc;
        for (int k = 0; k < 4; ++k) {
            if (counts[k] < 0) throw ihc::DomainError("ihc_hscore: negative count");
            cc.counts[k] = counts[k];
        }
        const auto h = ihc::compute_hscore(cc);
        if (!h) throw ihc::DomainError("ihc_hscore: empty compartment");
        *out = *h;
    });
}

ihc_status ihc_report_from_counts(const int64_t counts[8], const ihc_profile* profile,
                                  const char* const* slide_ids, size_t num_slides,
                                  size_t tile_count, const char* config_echo_json,
                                  char** json_out) {
    return wrap([&] {
        if (!counts || !profile || !json_out)
            throw ihc::DomainError("ihc_report_from_counts: null argument");
        ihc::ClassCounts cc;
        for (int c = 0; c < 2; ++c)
            for (int k = 0; k < 4; ++k) {
                if (counts[c * 4 + k] < 0)
                    throw ihc::DomainError("ihc_report_from_counts: negative count");
                cc.per_compartment[c].counts[k] = counts[c * 4 + k];
            }
        const ihc::HScoreReport report = ihc::report_from_counts(cc, profile->v);

        json doc;
        doc["tool"] = kVersion;
        doc["config"] = config_json(config_echo_json);
        doc["profile"] = profile_json(profile->v);
        json prov;
        json slides = json::array();
        for (size_t i = 0; i < num_slides; ++i) slides.push_back(slide_ids[i]);
        prov["slides"] = slides;
        prov["tile_count"] = tile_count;
        doc["provenance"] = prov;
        json compartments;
        for (int c = 0; c < 2; ++c) {
            const ihc::CompartmentScore& score = report.compartments[c];
            json obj;
            obj["counts"] = counts_json(score.counts);
            json fractions;
            fractions["none"] = score.fractions[0];
            fractions["weak"] = score.fractions[1];
            fractions["moderate"] = score.fractions[2];
            fractions["strong"] = score.fractions[3];
            obj["fractions"] = fractions;
            obj["empty"] = !score.hscore.has_value();
            if (score.hscore)
                obj["hscore"] = *score.hscore;
            else
                obj["hscore"] = nullptr;
            compartments[ihc::compartment_name(static_cast<ihc::Compartment>(c))] = obj;
        }
        doc["compartments"] = compartments;
        *json_out = dup_string(doc.dump(2));
    });
}

ihc_status ihc_estimate_hue_split(const double* blue_hues, size_t num_blue,
                                  const double* brown_hues, size_t num_brown, double* out) {
    return wrap([&] {
        if (!blue_hues || !brown_hues || !out)
            throw ihc::DomainError("ihc_estimate_hue_split: null argument");
        *out = ihc::estimate_hue_split(std::span(blue_hues, num_blue),
                                       std::span(brown_hues, num_brown));
    });
}

/* ---- calibration ---- */

namespace {

ihc::CalibrationSet build_calibration_set(const ihc_calib_item* items, size_t num_items,
                                          const char* annotator_id,
                                          std::vector<ihc::Tile>& tile_storage) {
    if (!items || !annotator_id) throw ihc::DomainError("calibrate: null argument");
    ihc::CalibrationSet set;
    set.annotator_id = annotator_id;
    tile_storage.clear();
    tile_storage.reserve(num_items);
    for (size_t i = 0; i < num_items; ++i) {
        const ihc_calib_item& item = items[i];
        if (!item.image || !item.slide_id || !item.annotated || !item.predicted)
            throw ihc::DomainError("calibrate: null field in item " + std::to_string(i));
        ihc::Tile tile;
        tile.image = item.image->v;  // copy; items stay caller-owned
        tile.slide_id = item.slide_id;
        tile.microns_per_pixel = 1.0;
        tile_storage.push_back(std::move(tile));
    }
    for (size_t i = 0; i < num_items; ++i) {
        ihc::CalibrationItem ci;
        ci.tile = &tile_storage[i];
        ci.annotated = items[i].annotated->v;
        for (const ihc::KeypointRecord& rec : items[i].predicted->v)
            ci.predicted.push_back(rec.keypoint);
        set.items.push_back(std::move(ci));
    }
    return set;
}

}  // namespace

ihc_status ihc_calibrate(const ihc_calib_item* items, size_t num_items, const char* annotator_id,
                         int grid_lo, int grid_hi, int grid_step, double hue_split_deg,
                         int nucleus_half_side_px, double brown_hue_ref_deg, ihc_profile** out) {
    return wrap([&] {
        if (!out) throw ihc::DomainError("ihc_calibrate: null output");
        std::vector<ihc::Tile> tiles;
        const ihc::CalibrationSet set =
            build_calibration_set(items, num_items, annotator_id, tiles);
        const ihc::GridSpec grid{grid_lo, grid_hi, grid_step};
        *out = new ihc_profile{ihc::calibrate(set, grid, hue_split_deg, nucleus_half_side_px,
                                              brown_hue_ref_deg)};
    });
}

ihc_status ihc_calibrate_loso(const ihc_calib_item* items, size_t num_items,
                              const char* annotator_id, int grid_lo, int grid_hi, int grid_step,
                              double hue_split_deg, int nucleus_half_side_px,
                              double brown_hue_ref_deg, ihc_loso_result** out) {
    return wrap([&] {
        if (!out) throw ihc::DomainError("ihc_calibrate_loso: null output");
        std::vector<ihc::Tile> tiles;
        const ihc::CalibrationSet set =
            build_calibration_set(items, num_items, annotator_id, tiles);
        const ihc::GridSpec grid{grid_lo, grid_hi, grid_step};
        const auto profiles = ihc::calibrate_loso(set, grid, hue_split_deg, nucleus_half_side_px,
                                                  brown_hue_ref_deg);
        auto result = std::make_unique<ihc_loso_result>();
        for (const auto& [slide_id, profile] : profiles) {
            result->slide_ids.push_back(slide_id);
            result->profiles.push_back(ihc_profile{profile});
        }
        *out = result.release();
    });
}

size_t ihc_loso_count(const ihc_loso_result* result) {
    return result ? result->slide_ids.size() : 0;
}

const char* ihc_loso_slide_id(const ihc_loso_result* result, size_t index) {
    if (!result || index >= result->slide_ids.size()) return nullptr;
    return result->slide_ids[index].c_str();
}

const ihc_profile* ihc_loso_profile(const ihc_loso_result* result, size_t index) {
    if (!result || index >= result->profiles.size()) return nullptr;
    return &result->profiles[index];
}

void ihc_loso_free(ihc_loso_result* result) { delete result; }

/* ---- evaluation ---- */

ihc_status ihc_evaluate(const ihc_keypoints* pred, const ihc_keypoints* pred2,
                        const ihc_keypoints* ground_truth, const ihc_eval_config* cfg,
                        const char* config_echo_json, char** json_out) {
    return wrap([&] {
        if (!pred || !ground_truth || !cfg || !json_out)
            throw ihc::DomainError("ihc_evaluate: null argument");
        ihc::EvalConfig eval_cfg;
        eval_cfg.match_radius = cfg->match_radius;
        ihc::BootstrapConfig boot_cfg;
        boot_cfg.resamples = cfg->bootstrap_resamples;
        boot_cfg.outer_repeats = cfg->bootstrap_outer_repeats;
        boot_cfg.confidence = cfg->bootstrap_confidence;
        boot_cfg.seed = cfg->seed;
        const ihc::EvalReport report =
            ihc::evaluate(pred->v, pred2 ? &pred2->v : nullptr, ground_truth->v, eval_cfg,
                          boot_cfg, cfg->batch_size);

        json doc;
        doc["tool"] = kVersion;
        doc["config"] = config_json(config_echo_json);
        json metrics;
        metrics["stroma_ap"] = report.stroma_ap ? json(*report.stroma_ap) : json(nullptr);
        metrics["epithelium_ap"] =
            report.epithelium_ap ? json(*report.epithelium_ap) : json(nullptr);
        metrics["map"] = report.map;
        doc["metrics"] = metrics;
        json excluded = json::array();
        for (ihc::Compartment c : report.excluded_classes)
            excluded.push_back(ihc::compartment_name(c));
        doc["excluded_classes"] = excluded;
        doc["tile_count"] = report.tile_count;
        doc["batch_size"] = report.batch_size;

        auto batch_array = [](const std::vector<ihc::BatchMetrics>& batches) {
            json arr = json::array();
            for (const ihc::BatchMetrics& bm : batches) {
                json obj;
                obj["tiles"] = bm.tile_keys;
                obj["stroma_ap"] = bm.stroma_ap ? json(*bm.stroma_ap) : json(nullptr);
                obj["epithelium_ap"] =
                    bm.epithelium_ap ? json(*bm.epithelium_ap) : json(nullptr);
                obj["map"] = bm.map ? json(*bm.map) : json(nullptr);
                arr.push_back(obj);
            }
            return arr;
        };
        doc["batches"] = batch_array(report.batches);
        if (pred2) doc["batches_second"] = batch_array(report.batches_second);
        if (report.ci) {
            auto ci_obj = [](const ihc::BootstrapResult& r) {
                json obj;
                obj["lower"] = r.lower;
                obj["upper"] = r.upper;
                obj["mean"] = r.mean;
                return obj;
            };
            json ci;
            ci["stroma_ap"] = ci_obj(report.ci->stroma_ap);
            ci["epithelium_ap"] = ci_obj(report.ci->epithelium_ap);
            ci["map"] = ci_obj(report.ci->map);
            doc["ci"] = ci;
            doc["ci_table"] = ihc::format_ci_table(*report.ci);
        }
        *json_out = dup_string(doc.dump(2));
    });
}

ihc_status ihc_bootstrap_ci(const double* diffs, size_t n, size_t resamples, double confidence,
                            size_t outer_repeats, uint64_t seed, double* lower, double* upper,
                            double* mean) {
    return wrap([&] {
        if (!diffs) throw ihc::DomainError("ihc_bootstrap_ci: null input");
        ihc::BootstrapConfig cfg;
        cfg.resamples = resamples;
        cfg.confidence = confidence;
        cfg.outer_repeats = outer_repeats;
        cfg.seed = seed;
        const ihc::BootstrapResult r = ihc::bootstrap_ci(std::span(diffs, n), cfg);
        if (lower) *lower = r.lower;
        if (upper) *upper = r.upper;
        if (mean) *mean = r.mean;
    });
}

/* ---- synthetic oracle ---- */

void ihc_synth_spec_init(ihc_synth_spec* spec) {
    if (!spec) return;
    const ihc::SynthSpec defaults;
    spec->tile_size = defaults.tile_size;
    spec->nuclei = defaults.nuclei;
    spec->stroma_fraction = defaults.stroma_fraction;
    for (int k = 0; k < 4; ++k) spec->class_mix[k] = defaults.class_mix[k];
    spec->nucleus_radius_px = defaults.nucleus_radius_px;
    spec->min_separation = defaults.min_separation;
    spec->seed = defaults.seed;
}

ihc_status ihc_synth_generate(const ihc_synth_spec* spec, const char* slide_id,
                              const char* tile_id, ihc_synth** out) {
    return wrap([&] {
        if (!spec || !slide_id || !tile_id || !out)
            throw ihc::DomainError("ihc_synth_generate: null argument");
        ihc::SynthSpec core;
        core.tile_size = spec->tile_size;
        core.nuclei = spec->nuclei;
        core.stroma_fraction = spec->stroma_fraction;
        for (int k = 0; k < 4; ++k) core.class_mix[k] = spec->class_mix[k];
        core.nucleus_radius_px = spec->nucleus_radius_px;
        core.min_separation = spec->min_separation;
        core.seed = spec->seed;
        ihc::SynthTile tile = ihc::generate_tile(core, slide_id, tile_id);
        auto synth = std::make_unique<ihc_synth>();
        synth->image.v = std::move(tile.tile.image);
        synth->keypoints.v = std::move(tile.keypoints);
        synth->counts = tile.expected_counts;
        synth->hscore = tile.expected_hscore;
        *out = synth.release();
    });
}

const ihc_image* ihc_synth_image(const ihc_synth* synth) { return synth ? &synth->image : nullptr; }

const ihc_keypoints* ihc_synth_keypoints(const ihc_synth* synth) {
    return synth ? &synth->keypoints : nullptr;
}

void ihc_synth_expected(const ihc_synth* synth, int64_t counts[8], double hscore[2]) {
    if (!synth) return;
    if (counts) {
        for (int c = 0; c < 2; ++c)
            for (int k = 0; k < 4; ++k)
                counts[c * 4 + k] = synth->counts.per_compartment[c].counts[k];
    }
    if (hscore) {
        for (int c = 0; c < 2; ++c)
            hscore[c] = synth->hscore[c] ? *synth->hscore[c]
                                         : std::numeric_limits<double>::quiet_NaN();
    }
}

void ihc_synth_free(ihc_synth* synth) { delete synth; }

ihc_status ihc_reference_profile(ihc_profile** out) {
    return wrap([&] {
        if (!out) throw ihc::DomainError("ihc_reference_profile: null output");
        *out = new ihc_profile{ihc::reference_profile()};
    });
}

/* ---- dataset split ---- */

ihc_status ihc_split_assign(size_t n, unsigned ratio_train, unsigned ratio_val,
                            unsigned ratio_test, uint64_t seed, uint8_t* labels) {
    return wrap([&] {
        if (!labels) throw ihc::DomainError("ihc_split_assign: null labels");
        const auto parts = ihc::split_assign(n, ratio_train, ratio_val, ratio_test, seed);
        for (size_t i = 0; i < n; ++i) labels[i] = static_cast<uint8_t>(parts[i]);
    });
}

}  // extern "C"
