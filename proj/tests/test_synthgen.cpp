#include <doctest.h>

#include <cmath>

#include "ihcscore/synthgen.hpp"

using namespace ihc;

TEST_CASE("apportion is exact for integral shares") {
    const std::array<double, 4> mix{0.1, 0.2, 0.3, 0.4};
    const auto counts = apportion(100, mix);
    CHECK(counts == std::vector<std::int64_t>{10, 20, 30, 40});

    const std::array<double, 2> halves{0.5, 0.5};
    CHECK(apportion(7, halves) == std::vector<std::int64_t>{4, 3});
    CHECK(apportion(0, halves) == std::vector<std::int64_t>{0, 0});
}

TEST_CASE("generate_tile is deterministic per seed") {
    SynthSpec spec;
    spec.seed = 31337;
    const SynthTile a = generate_tile(spec);
    const SynthTile b = generate_tile(spec);
    CHECK(a.tile.image.pixels == b.tile.image.pixels);
    REQUIRE(a.keypoints.size() == b.keypoints.size());
    for (std::size_t i = 0; i < a.keypoints.size(); ++i) {
        CHECK(a.keypoints[i].keypoint.x == b.keypoints[i].keypoint.x);
        CHECK(a.keypoints[i].keypoint.y == b.keypoints[i].keypoint.y);
    }
    spec.seed = 31338;
    const SynthTile c = generate_tile(spec);
    CHECK(a.tile.image.pixels != c.tile.image.pixels);
}

TEST_CASE("planted nuclei respect separation and bounds") {
    SynthSpec spec;
    spec.nuclei = 25;
    spec.seed = 7;
    const SynthTile synth = generate_tile(spec);
    REQUIRE(synth.keypoints.size() == 25);
    for (std::size_t i = 0; i < synth.keypoints.size(); ++i) {
        const Keypoint& a = synth.keypoints[i].keypoint;
        CHECK(a.x >= spec.nucleus_radius_px);
        CHECK(a.y >= spec.nucleus_radius_px);
        CHECK(a.x < spec.tile_size - spec.nucleus_radius_px);
        CHECK(a.y < spec.tile_size - spec.nucleus_radius_px);
        for (std::size_t j = i + 1; j < synth.keypoints.size(); ++j) {
            const Keypoint& b = synth.keypoints[j].keypoint;
            CHECK(std::hypot(a.x - b.x, a.y - b.y) >= spec.min_separation);
        }
    }
}

TEST_CASE("classification reproduces every planted label") {
    SynthSpec spec;
    spec.nuclei = 40;
    spec.tile_size = 512;
    spec.class_mix = {0.3, 0.2, 0.2, 0.3};
    spec.seed = 99;
    const SynthTile synth = generate_tile(spec);
    const StainProfile profile = reference_profile();
    for (const KeypointRecord& rec : synth.keypoints) {
        REQUIRE(rec.stain.has_value());
        CHECK(classify_nucleus(synth.tile.image, rec.keypoint, profile) == *rec.stain);
    }
}

TEST_CASE("expected H-score is consistent with the planted counts") {
    SynthSpec spec;
    spec.nuclei = 60;
    spec.tile_size = 512;
    spec.class_mix = {0.25, 0.25, 0.25, 0.25};
    spec.seed = 12;
    const SynthTile synth = generate_tile(spec);
    for (int c = 0; c < 2; ++c) {
        const auto direct = compute_hscore(synth.expected_counts.per_compartment[c]);
        CHECK(synth.expected_hscore[c] == direct);
    }

    // Counts must agree with the planted keypoint labels.
    ClassCounts recount;
    for (const KeypointRecord& rec : synth.keypoints)
        ++recount[rec.keypoint.compartment][*rec.stain];
    CHECK(recount == synth.expected_counts);
}

TEST_CASE("degenerate specs") {
    SUBCASE("zero nuclei yields an empty oracle tile") {
        SynthSpec spec;
        spec.nuclei = 0;
        const SynthTile synth = generate_tile(spec);
        CHECK(synth.keypoints.empty());
        CHECK_FALSE(synth.expected_hscore[0].has_value());
        CHECK_FALSE(synth.expected_hscore[1].has_value());
    }
    SUBCASE("all-strong mix scores 300") {
        SynthSpec spec;
        spec.nuclei = 9;
        spec.stroma_fraction = 1.0;
        spec.class_mix = {0, 0, 0, 1.0};
        const SynthTile synth = generate_tile(spec);
        CHECK(*synth.expected_hscore[0] == 300.0);
    }
    SUBCASE("infeasible placement raises a capacity error naming the constraint") {
        SynthSpec spec;
        spec.tile_size = 96;
        spec.nuclei = 60;
        spec.max_attempts = 200;
        try {
            generate_tile(spec);
            FAIL("expected CapacityError");
        } catch (const CapacityError& e) {
            CHECK(std::string(e.what()).find("min_separation") != std::string::npos);
        }
    }
    SUBCASE("spec validation") {
        SynthSpec spec;
        spec.class_mix = {0.5, 0.5, 0.5, 0.5};
        CHECK_THROWS_AS(generate_tile(spec), DomainError);
        spec = SynthSpec{};
        spec.min_separation = 10.0;  // below twice the radius
        CHECK_THROWS_AS(generate_tile(spec), DomainError);
    }
}

TEST_CASE("synthetic tissue tile passes the emptiness filter") {
    SynthSpec spec;
    spec.nuclei = 20;
    spec.seed = 3;
    const SynthTile synth = generate_tile(spec);
    const RgbImage& img = synth.tile.image;

    // Direct mean/std computation as the oracle for the filter decision.
    double sum = 0.0, sq = 0.0;
    double channel_sum[3] = {0, 0, 0};
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = img.pixels.data() + i * 3;
        for (int c = 0; c < 3; ++c) channel_sum[c] += p[c];
        const double gray = (p[0] + p[1] + p[2]) / 3.0;
        sum += gray;
        sq += gray * gray;
    }
    const double stddev = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(stddev >= 4.0);
    for (int c = 0; c < 3; ++c) {
        CHECK(channel_sum[c] / n > 5.0);
        CHECK(channel_sum[c] / n < 250.0);
    }
    CHECK_FALSE(is_empty_tile(img, 5.0, 250.0, 4.0));

    // A background-only tile trips the filter.
    SynthSpec empty_spec;
    empty_spec.nuclei = 0;
    const SynthTile blank = generate_tile(empty_spec);
    CHECK(is_empty_tile(blank.tile.image, 5.0, 250.0, 4.0));
}
