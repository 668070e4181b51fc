#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>

#include "ihcscore.h"
#include "helpers.hpp"

namespace {

struct Synth {
    ihc_synth* handle = nullptr;
    explicit Synth(std::uint64_t seed, std::size_t nuclei = 24, std::uint32_t size = 256) {
        ihc_synth_spec spec;
        ihc_synth_spec_init(&spec);
        spec.seed = seed;
        spec.nuclei = nuclei;
        spec.tile_size = size;
        REQUIRE(ihc_synth_generate(&spec, "slideA", "tile0", &handle) == IHC_OK);
    }
    ~Synth() { ihc_synth_free(handle); }
};

}  // namespace

TEST_CASE("version and error strings") {
    CHECK(std::string(ihc_version()).find("ihcscore") != std::string::npos);
    ihc_image* img = nullptr;
    CHECK(ihc_image_load("/no/such/file.png", &img) == IHC_ERROR_IO);
    CHECK(std::string(ihc_last_error()).find("/no/such/file.png") != std::string::npos);
}

TEST_CASE("image round trip and pixel access") {
    TempDir dir;
    Synth synth(5);
    const ihc_image* img = ihc_synth_image(synth.handle);
    REQUIRE(img != nullptr);
    CHECK(ihc_image_width(img) == 256);
    CHECK(ihc_image_height(img) == 256);

    const std::string path = dir.file("tile.png");
    REQUIRE(ihc_image_save_png(img, path.c_str()) == IHC_OK);
    ihc_image* back = nullptr;
    REQUIRE(ihc_image_load(path.c_str(), &back) == IHC_OK);
    CHECK(ihc_image_width(back) == 256);
    CHECK(std::memcmp(ihc_image_pixels(back), ihc_image_pixels(img), 256 * 256 * 3) == 0);
    ihc_image_free(back);
}

TEST_CASE("hsv conversion and patch mean") {
    double h = -1, s = -1, v = -1;
    ihc_rgb_to_hsv(0, 0, 255, &h, &s, &v);
    CHECK(h == doctest::Approx(240.0));
    CHECK(s == doctest::Approx(255.0));
    CHECK(v == doctest::Approx(255.0));

    const std::vector<uint8_t> buf(16 * 16 * 3, 90);
    ihc_image* img = nullptr;
    REQUIRE(ihc_image_create(16, 16, buf.data(), &img) == IHC_OK);
    double rgb[3] = {0, 0, 0};
    REQUIRE(ihc_patch_mean(img, 8, 8, 3, rgb) == IHC_OK);
    CHECK(rgb[0] == doctest::Approx(90.0));
    CHECK(ihc_patch_mean(img, 99, 8, 3, rgb) == IHC_ERROR_INVALID_ARGUMENT);
    CHECK(ihc_image_is_empty_tile(img, 0, 255, 1.0) == 1);
    CHECK(ihc_image_is_empty_tile(img, 0, 255, 0.0) == 0);
    CHECK(ihc_image_is_empty_tile(img, 255, 0, 1.0) == -1);
    ihc_image_free(img);
}

TEST_CASE("tile cutting through the C API") {
    std::vector<uint8_t> buf(1000 * 1000 * 3, 120);
    ihc_image* raster = nullptr;
    REQUIRE(ihc_image_create(1000, 1000, buf.data(), &raster) == IHC_OK);
    ihc_tileset* tiles = nullptr;
    REQUIRE(ihc_cut_tiles(raster, 0.25, 100.0, 128, &tiles) == IHC_OK);
    CHECK(ihc_tileset_count(tiles) == 4);
    int64_t ox = -1, oy = -1;
    ihc_tileset_origin(tiles, 3, &ox, &oy);
    CHECK(ox == 400);
    CHECK(oy == 400);
    const ihc_image* t0 = ihc_tileset_image(tiles, 0);
    CHECK(ihc_image_width(t0) == 128);
    ihc_tileset_free(tiles);
    ihc_image_free(raster);
}

TEST_CASE("heatmap round trip, extraction and huber loss") {
    TempDir dir;
    Synth synth(9);
    const ihc_keypoints* gt = ihc_synth_keypoints(synth.handle);
    const size_t n = ihc_keypoints_count(gt);
    REQUIRE(n == 24);

    ihc_heatmap* hm = nullptr;
    REQUIRE(ihc_render_heatmap(gt, 256, 256, 2, 4.0, &hm) == IHC_OK);
    CHECK(ihc_heatmap_width(hm) == 256);
    CHECK(ihc_heatmap_classes(hm) == 2);

    const std::string path = dir.file("hm.hmf1");
    REQUIRE(ihc_heatmap_save(hm, path.c_str()) == IHC_OK);
    ihc_heatmap* back = nullptr;
    REQUIRE(ihc_heatmap_load(path.c_str(), &back) == IHC_OK);

    double loss = -1.0;
    REQUIRE(ihc_huber_loss(hm, back, 1.0, &loss) == IHC_OK);
    CHECK(loss == 0.0);

    ihc_keypoints* extracted = nullptr;
    REQUIRE(ihc_extract_keypoints(back, 0.5, 13.0, 3, "slideA", "tile0", &extracted) == IHC_OK);
    CHECK(ihc_keypoints_count(extracted) == n);

    // Every planted keypoint is recovered at its integer position.
    for (size_t i = 0; i < n; ++i) {
        ihc_keypoint want;
        REQUIRE(ihc_keypoints_get(gt, i, &want, nullptr, nullptr) == IHC_OK);
        bool found = false;
        for (size_t j = 0; j < n && !found; ++j) {
            ihc_keypoint got;
            REQUIRE(ihc_keypoints_get(extracted, j, &got, nullptr, nullptr) == IHC_OK);
            found = got.compartment == want.compartment && got.x == want.x && got.y == want.y;
        }
        CHECK(found);
    }

    ihc_keypoints_free(extracted);
    ihc_heatmap_free(back);
    ihc_heatmap_free(hm);
}

TEST_CASE("keypoint table io and fusion") {
    TempDir dir;
    ihc_keypoints* a = nullptr;
    REQUIRE(ihc_keypoints_create(&a) == IHC_OK);
    const ihc_keypoint k1{10.0, 10.0, IHC_CLASS_STROMA, 0.6, -1};
    const ihc_keypoint k2{10.0, 10.0, IHC_CLASS_STROMA, 0.8, -1};
    REQUIRE(ihc_keypoints_append(a, "s", "t", &k1) == IHC_OK);
    ihc_keypoints* b = nullptr;
    REQUIRE(ihc_keypoints_create(&b) == IHC_OK);
    REQUIRE(ihc_keypoints_append(b, "s", "t", &k2) == IHC_OK);

    const ihc_keypoints* tables[2] = {a, b};
    const double weights[2] = {1.0, 1.0};
    ihc_keypoints* fused = nullptr;
    REQUIRE(ihc_fuse_keypoints(tables, weights, 2, 5.0, &fused) == IHC_OK);
    REQUIRE(ihc_keypoints_count(fused) == 1);
    ihc_keypoint f;
    const char* slide = nullptr;
    const char* tile = nullptr;
    REQUIRE(ihc_keypoints_get(fused, 0, &f, &slide, &tile) == IHC_OK);
    CHECK(f.confidence == doctest::Approx(0.7));
    CHECK(std::string(slide) == "s");
    CHECK(std::string(tile) == "t");

    const std::string path = dir.file("kps.tsv");
    REQUIRE(ihc_keypoints_save(fused, path.c_str()) == IHC_OK);
    ihc_keypoints* loaded = nullptr;
    REQUIRE(ihc_keypoints_load(path.c_str(), &loaded) == IHC_OK);
    CHECK(ihc_keypoints_count(loaded) == 1);

    ihc_keypoints_free(loaded);
    ihc_keypoints_free(fused);
    ihc_keypoints_free(b);
    ihc_keypoints_free(a);
}

TEST_CASE("profiles, classification and the score report") {
    TempDir dir;
    Synth synth(21, 40, 512);
    ihc_profile* profile = nullptr;
    REQUIRE(ihc_reference_profile(&profile) == IHC_OK);

    int64_t counts[8] = {0};
    REQUIRE(ihc_classify_counts(ihc_synth_image(synth.handle),
                                ihc_synth_keypoints(synth.handle), profile, counts) == IHC_OK);
    int64_t expected[8];
    double expected_h[2];
    ihc_synth_expected(synth.handle, expected, expected_h);
    for (int i = 0; i < 8; ++i) CHECK(counts[i] == expected[i]);

    double h = -1.0;
    REQUIRE(ihc_hscore(counts, &h) == IHC_OK);
    CHECK(h == expected_h[0]);
    const int64_t empty[4] = {0, 0, 0, 0};
    CHECK(ihc_hscore(empty, &h) == IHC_ERROR_INVALID_ARGUMENT);

    const char* slides[1] = {"slideA"};
    char* json = nullptr;
    REQUIRE(ihc_report_from_counts(counts, profile, slides, 1, 1, "{\"seed\":21}", &json) ==
            IHC_OK);
    const std::string doc(json);
    CHECK(doc.find("\"compartments\"") != std::string::npos);
    CHECK(doc.find("\"stroma\"") != std::string::npos);
    CHECK(doc.find("\"epithelium\"") != std::string::npos);
    CHECK(doc.find("\"seed\": 21") != std::string::npos);
    ihc_string_free(json);

    // Persistence through the C surface.
    const std::string path = dir.file("ref.profile");
    REQUIRE(ihc_profile_save(profile, path.c_str()) == IHC_OK);
    ihc_profile* back = nullptr;
    REQUIRE(ihc_profile_load(path.c_str(), &back) == IHC_OK);
    CHECK(ihc_profile_value_left(back) == 80.0);
    CHECK(ihc_profile_value_right(back) == 120.0);
    ihc_profile_free(back);
    ihc_profile_free(profile);
}

TEST_CASE("profile parse failures map to parse errors") {
    TempDir dir;
    const std::string path = dir.file("bad.profile");
    {
        FILE* f = fopen(path.c_str(), "w");
        fputs("annotator_id=x\nhue_split_deg=125\n", f);
        fclose(f);
    }
    ihc_profile* profile = nullptr;
    CHECK(ihc_profile_load(path.c_str(), &profile) == IHC_ERROR_PARSE);
    CHECK(std::string(ihc_last_error()).find("value_left") != std::string::npos);
}

TEST_CASE("calibration through the C API") {
    // Two slides, each one synthetic tile; model equals annotation, so the
    // planted palette thresholds are recoverable with objective zero.
    ihc_synth_spec spec;
    ihc_synth_spec_init(&spec);
    spec.nuclei = 32;
    spec.tile_size = 384;

    spec.seed = 100;
    ihc_synth* s0 = nullptr;
    REQUIRE(ihc_synth_generate(&spec, "sl0", "t0", &s0) == IHC_OK);
    spec.seed = 101;
    ihc_synth* s1 = nullptr;
    REQUIRE(ihc_synth_generate(&spec, "sl1", "t0", &s1) == IHC_OK);

    ihc_calib_item items[2] = {
        {ihc_synth_image(s0), "sl0", ihc_synth_keypoints(s0), ihc_synth_keypoints(s0)},
        {ihc_synth_image(s1), "sl1", ihc_synth_keypoints(s1), ihc_synth_keypoints(s1)},
    };
    ihc_profile* profile = nullptr;
    REQUIRE(ihc_calibrate(items, 2, "doc-1", 40, 160, 5, 125.0, 10, 30.0, &profile) == IHC_OK);
    CHECK(ihc_profile_objective(profile) == 0.0);
    ihc_profile_free(profile);

    ihc_loso_result* loso = nullptr;
    REQUIRE(ihc_calibrate_loso(items, 2, "doc-1", 40, 160, 5, 125.0, 10, 30.0, &loso) == IHC_OK);
    REQUIRE(ihc_loso_count(loso) == 2);
    CHECK(std::string(ihc_loso_slide_id(loso, 0)) == "sl0");
    CHECK(ihc_loso_profile(loso, 1) != nullptr);
    ihc_loso_free(loso);

    ihc_synth_free(s1);
    ihc_synth_free(s0);
}

TEST_CASE("evaluation and bootstrap through the C API") {
    Synth synth(55, 30, 512);
    const ihc_keypoints* gt = ihc_synth_keypoints(synth.handle);

    ihc_eval_config cfg;
    cfg.match_radius = 13.0;
    cfg.batch_size = 8;
    cfg.bootstrap_resamples = 200;
    cfg.bootstrap_outer_repeats = 5;
    cfg.bootstrap_confidence = 0.95;
    cfg.seed = 3;

    char* json = nullptr;
    REQUIRE(ihc_evaluate(gt, gt, gt, &cfg, nullptr, &json) == IHC_OK);
    const std::string doc(json);
    CHECK(doc.find("\"map\": 1.0") != std::string::npos);
    CHECK(doc.find("ci_table") != std::string::npos);
    CHECK(doc.find("Lower bound") != std::string::npos);
    ihc_string_free(json);

    const double diffs[4] = {2.0, 2.0, 2.0, 2.0};
    double lo = -1, hi = -1, mean = -1;
    REQUIRE(ihc_bootstrap_ci(diffs, 4, 100, 0.95, 3, 7, &lo, &hi, &mean) == IHC_OK);
    CHECK(lo == 2.0);
    CHECK(hi == 2.0);
    CHECK(mean == 2.0);
}

TEST_CASE("synthetic generation failure surfaces as capacity error") {
    ihc_synth_spec spec;
    ihc_synth_spec_init(&spec);
    spec.tile_size = 96;
    spec.nuclei = 80;
    ihc_synth* out = nullptr;
    CHECK(ihc_synth_generate(&spec, "s", "t", &out) == IHC_ERROR_CAPACITY);
}

TEST_CASE("dataset split through the C API") {
    std::vector<uint8_t> labels(5, 9);
    REQUIRE(ihc_split_assign(5, 3, 1, 1, 7, labels.data()) == IHC_OK);
    int counts[3] = {0, 0, 0};
    for (uint8_t l : labels) {
        REQUIRE(l <= 2);
        ++counts[l];
    }
    CHECK(counts[0] == 3);
    CHECK(counts[1] == 1);
    CHECK(counts[2] == 1);

    std::vector<uint8_t> seven(7, 9);
    REQUIRE(ihc_split_assign(7, 3, 1, 1, 7, seven.data()) == IHC_OK);
    int seven_counts[3] = {0, 0, 0};
    for (uint8_t l : seven) ++seven_counts[l];
    CHECK(seven_counts[0] == 5);
    CHECK(seven_counts[1] == 1);
    CHECK(seven_counts[2] == 1);

    // Determinism.
    std::vector<uint8_t> again(5, 9);
    REQUIRE(ihc_split_assign(5, 3, 1, 1, 7, again.data()) == IHC_OK);
    CHECK(again == labels);

    CHECK(ihc_split_assign(0, 3, 1, 1, 7, labels.data()) == IHC_ERROR_INVALID_ARGUMENT);
}
