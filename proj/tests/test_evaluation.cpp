#include <doctest.h>

#include <cmath>
#include <random>

#include "ihcscore/evaluation.hpp"
#include "ihcscore/rng.hpp"
#include "oracles.hpp"

using namespace ihc;

namespace {

KeypointTable to_table(const std::vector<Keypoint>& kps, const std::string& slide = "s",
                       const std::string& tile = "t") {
    KeypointTable table;
    for (const Keypoint& kp : kps) table.push_back({slide, tile, kp, std::nullopt});
    return table;
}

}  // namespace

TEST_CASE("match_keypoints") {
    const EvalConfig cfg{5.0};
    SUBCASE("identical sets are all true positives") {
        const std::vector<Keypoint> pts{{10, 10, Compartment::stroma, 0.9},
                                        {20, 20, Compartment::epithelium, 0.8}};
        const MatchResult m = match_keypoints(pts, pts, cfg);
        for (int cls = 0; cls < 2; ++cls) {
            REQUIRE(m.per_class[cls].outcomes.size() == 1);
            CHECK(m.per_class[cls].outcomes[0].is_tp);
            CHECK(m.per_class[cls].false_negatives == 0);
        }
    }
    SUBCASE("a prediction just outside the radius is FP plus FN") {
        const std::vector<Keypoint> pred{{10 + 5.001, 10, Compartment::stroma, 0.9}};
        const std::vector<Keypoint> gt{{10, 10, Compartment::stroma, 1.0}};
        const MatchResult m = match_keypoints(pred, gt, cfg);
        CHECK_FALSE(m.per_class[0].outcomes[0].is_tp);
        CHECK(m.per_class[0].false_negatives == 1);
    }
    SUBCASE("matching never crosses classes") {
        const std::vector<Keypoint> pred{{10, 10, Compartment::epithelium, 0.9}};
        const std::vector<Keypoint> gt{{10, 10, Compartment::stroma, 1.0}};
        const MatchResult m = match_keypoints(pred, gt, cfg);
        CHECK(m.per_class[0].false_negatives == 1);
        CHECK_FALSE(m.per_class[1].outcomes[0].is_tp);
    }
    SUBCASE("greedy assignment matches a literal replay on random cases") {
        std::mt19937_64 rng(40);
        std::uniform_real_distribution<double> coord(0.0, 30.0);
        std::uniform_real_distribution<double> conf(0.0, 1.0);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<Keypoint> pred, gt;
            const std::size_t np = rng() % 6, ng = rng() % 5;
            for (std::size_t i = 0; i < np; ++i)
                pred.push_back({coord(rng), coord(rng), Compartment::stroma, conf(rng)});
            for (std::size_t i = 0; i < ng; ++i)
                gt.push_back({coord(rng), coord(rng), Compartment::stroma, 1.0});
            const MatchResult m = match_keypoints(pred, gt, cfg);

            // Literal replay: sort a copy, walk it, pick nearest free gt.
            auto order = pred;
            std::sort(order.begin(), order.end(), [](const Keypoint& a, const Keypoint& b) {
                if (a.confidence != b.confidence) return a.confidence > b.confidence;
                if (a.y != b.y) return a.y < b.y;
                return a.x < b.x;
            });
            std::vector<bool> used(gt.size(), false);
            std::vector<bool> expected_tp;
            for (const Keypoint& p : order) {
                int best = -1;
                double best_d = cfg.match_radius;
                for (std::size_t g = 0; g < gt.size(); ++g) {
                    if (used[g]) continue;
                    const double d = std::hypot(p.x - gt[g].x, p.y - gt[g].y);
                    if (d <= best_d && (best < 0 || d < best_d)) {
                        best = static_cast<int>(g);
                        best_d = d;
                    }
                }
                if (best >= 0) used[best] = true;
                expected_tp.push_back(best >= 0);
            }
            REQUIRE(m.per_class[0].outcomes.size() == expected_tp.size());
            for (std::size_t i = 0; i < expected_tp.size(); ++i)
                CHECK(m.per_class[0].outcomes[i].is_tp == expected_tp[i]);
        }
    }
}

TEST_CASE("average_precision") {
    SUBCASE("perfect detector scores 1") {
        ClassMatch m;
        m.num_gt = 3;
        for (int i = 0; i < 3; ++i) m.outcomes.push_back({1.0 - 0.1 * i, true, i});
        CHECK(*average_precision(m) == 1.0);
    }
    SUBCASE("no predictions scores 0") {
        ClassMatch m;
        m.num_gt = 4;
        CHECK(*average_precision(m) == 0.0);
    }
    SUBCASE("TP,FP,TP,FP over two ground truths scores 5/6") {
        ClassMatch m;
        m.num_gt = 2;
        m.outcomes = {{0.9, true, 0}, {0.8, false, -1}, {0.7, true, 1}, {0.6, false, -1}};
        CHECK(*average_precision(m) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
        CHECK(*average_precision(m) ==
              doctest::Approx(oracle::average_precision({true, false, true, false}, 2)));
    }
    SUBCASE("no ground truth is undefined") {
        ClassMatch m;
        m.num_gt = 0;
        m.outcomes = {{0.9, false, -1}};
        CHECK_FALSE(average_precision(m).has_value());
    }
    SUBCASE("equals the rectangle oracle on random outcome sequences") {
        std::mt19937_64 rng(41);
        for (int trial = 0; trial < 500; ++trial) {
            ClassMatch m;
            m.num_gt = 1 + rng() % 4;
            const std::size_t n = rng() % 7;
            std::vector<bool> seq;
            std::size_t tps = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const bool tp = tps < m.num_gt && rng() % 2 == 0;
                if (tp) ++tps;
                seq.push_back(tp);
                m.outcomes.push_back({1.0 - 0.05 * static_cast<double>(i), tp,
                                      tp ? static_cast<std::int64_t>(tps - 1) : -1});
            }
            const double expected = oracle::average_precision(seq, m.num_gt);
            CHECK(std::fabs(*average_precision(m) - expected) < 1e-12);
        }
    }
    SUBCASE("invariant under monotone confidence rescaling") {
        ClassMatch a, b;
        a.num_gt = b.num_gt = 3;
        std::mt19937_64 rng(42);
        double conf = 1.0;
        for (int i = 0; i < 8; ++i) {
            conf -= 0.05;
            const bool tp = rng() % 2 == 0;
            a.outcomes.push_back({conf, tp, -1});
            b.outcomes.push_back({conf * 0.5 + 0.2, tp, -1});  // order-preserving
        }
        CHECK(*average_precision(a) == *average_precision(b));
    }
    SUBCASE("appending a lowest-confidence FP never raises AP") {
        std::mt19937_64 rng(43);
        for (int trial = 0; trial < 100; ++trial) {
            ClassMatch m;
            m.num_gt = 1 + rng() % 3;
            double conf = 1.0;
            std::size_t tps = 0;
            for (std::size_t i = 0; i < rng() % 6; ++i) {
                conf -= 0.08;
                const bool tp = tps < m.num_gt && rng() % 2 == 0;
                if (tp) ++tps;
                m.outcomes.push_back({conf, tp, -1});
            }
            const double before = *average_precision(m);
            m.outcomes.push_back({conf - 0.1, false, -1});
            CHECK(*average_precision(m) <= before);
        }
    }
}

TEST_CASE("mean_ap excludes classes without ground truth") {
    MatchResult m;
    m.per_class[0].num_gt = 2;
    m.per_class[0].outcomes = {{0.9, true, 0}, {0.8, true, 1}};
    m.per_class[1].num_gt = 0;
    std::vector<Compartment> excluded;
    CHECK(mean_ap(m, &excluded) == 1.0);
    REQUIRE(excluded.size() == 1);
    CHECK(excluded[0] == Compartment::epithelium);

    MatchResult empty;
    CHECK_THROWS_AS(mean_ap(empty), DomainError);
}

TEST_CASE("bootstrap_ci") {
    SUBCASE("constant input is a degenerate interval") {
        const std::vector<double> constant(17, 3.5);
        const BootstrapResult r = bootstrap_ci(constant, BootstrapConfig{200, 0.95, 5, 1});
        CHECK(r.lower == 3.5);
        CHECK(r.upper == 3.5);
        CHECK(r.mean == 3.5);
    }
    SUBCASE("shift invariance under a fixed seed") {
        // Integer data, eight entries: all sums and the /8 are exact in
        // binary floating point. Confidence 0.5 with 1001 resamples lands
        // both percentile ranks on whole order statistics, so no
        // interpolation rounding enters and the shift is exact.
        const std::vector<double> base{1, 5, 2, 8, 3, 7, 4, 6};
        std::vector<double> shifted;
        for (double v : base) shifted.push_back(v + 32.0);
        const BootstrapConfig cfg{1001, 0.5, 8, 99};
        const BootstrapResult a = bootstrap_ci(base, cfg);
        const BootstrapResult b = bootstrap_ci(shifted, cfg);
        CHECK(b.lower == a.lower + 32.0);
        CHECK(b.upper == a.upper + 32.0);
        CHECK(b.mean == a.mean + 32.0);
    }
    SUBCASE("agrees with the independent oracle implementation") {
        std::mt19937_64 rng(123);
        std::normal_distribution<double> noise(0.01, 0.05);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> diffs(50);
            for (double& d : diffs) d = noise(rng);
            const BootstrapConfig cfg{1000, 0.95, 20, 1000 + static_cast<std::uint64_t>(trial)};
            const BootstrapResult r = bootstrap_ci(diffs, cfg);
            const auto expected =
                oracle::bootstrap(diffs, cfg.resamples, cfg.confidence, cfg.outer_repeats,
                                  cfg.seed);
            CHECK(std::fabs(r.lower - expected.lower) < 1e-12);
            CHECK(std::fabs(r.upper - expected.upper) < 1e-12);
        }
    }
    SUBCASE("percentile ordering brackets the inner resample-mean average") {
        std::mt19937_64 rng(7);
        std::vector<double> diffs(30);
        for (double& d : diffs) d = static_cast<double>(rng() % 100) / 10.0 - 5.0;
        const BootstrapConfig cfg{500, 0.8, 1, 5};  // one repeat: pure inner loop
        const BootstrapResult r = bootstrap_ci(diffs, cfg);
        CHECK(r.lower <= r.upper);

        // Replay the documented protocol to get the inner means' average.
        Rng inner(derive_seed(cfg.seed, 0));
        double total = 0.0;
        for (std::size_t k = 0; k < cfg.resamples; ++k) {
            double sum = 0.0;
            for (std::size_t i = 0; i < diffs.size(); ++i)
                sum += diffs[draw_index(inner, diffs.size())];
            total += sum / static_cast<double>(diffs.size());
        }
        const double mean_of_means = total / static_cast<double>(cfg.resamples);
        CHECK(r.lower <= mean_of_means);
        CHECK(mean_of_means <= r.upper);
    }
    SUBCASE("empty input is a domain error") {
        CHECK_THROWS_AS(bootstrap_ci({}, BootstrapConfig{}), DomainError);
    }
}

TEST_CASE("evaluate") {
    const EvalConfig eval_cfg{5.0};
    const BootstrapConfig boot_cfg{200, 0.95, 4, 11};

    KeypointTable gt;
    std::mt19937_64 rng(50);
    for (int tile = 0; tile < 24; ++tile) {
        for (int i = 0; i < 6; ++i) {
            Keypoint kp{static_cast<double>(10 + 37 * i % 90),
                        static_cast<double>(10 + (17 * i + 13 * tile) % 90),
                        static_cast<Compartment>(i % 2), 1.0};
            gt.push_back({"s", "tile_" + std::to_string(tile), kp, std::nullopt});
        }
    }

    SUBCASE("ground truth against itself is perfect and degenerate") {
        const EvalReport report = evaluate(gt, &gt, gt, eval_cfg, boot_cfg, 4);
        CHECK(report.map == 1.0);
        CHECK(*report.stroma_ap == 1.0);
        CHECK(*report.epithelium_ap == 1.0);
        REQUIRE(report.ci.has_value());
        CHECK(report.ci->map.lower == 0.0);
        CHECK(report.ci->map.upper == 0.0);
        CHECK(report.ci->map.mean == 0.0);
        CHECK(report.batches.size() == 6);
    }
    SUBCASE("sub-radius jitter keeps mAP at 1") {
        KeypointTable pred = gt;
        for (auto& rec : pred) {
            rec.keypoint.x += 2.0;
            rec.keypoint.y -= 1.5;
            rec.keypoint.confidence = 0.8;
        }
        const EvalReport report = evaluate(pred, nullptr, gt, eval_cfg, boot_cfg, 4);
        CHECK(report.map == 1.0);
    }
    SUBCASE("dropping half of each class leaves AP at the retained recall") {
        KeypointTable pred;
        std::size_t seen[2] = {0, 0};
        for (const auto& rec : gt) {
            const int cls = static_cast<int>(rec.keypoint.compartment);
            if (seen[cls]++ % 2 == 0) pred.push_back(rec);
        }
        const EvalReport report = evaluate(pred, nullptr, gt, eval_cfg, boot_cfg, 4);
        // Every kept prediction is a TP, so AP equals the retained recall.
        CHECK(*report.stroma_ap == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(*report.epithelium_ap == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("predictions for unknown tiles are an alignment error") {
        KeypointTable pred = gt;
        pred.push_back({"s", "mystery_tile", Keypoint{5, 5, Compartment::stroma, 0.5},
                        std::nullopt});
        try {
            evaluate(pred, nullptr, gt, eval_cfg, boot_cfg, 4);
            FAIL("expected DomainError");
        } catch (const DomainError& e) {
            CHECK(std::string(e.what()).find("mystery_tile") != std::string::npos);
        }
    }
    SUBCASE("evaluation is bit-deterministic across runs") {
        KeypointTable pred = gt;
        for (auto& rec : pred) rec.keypoint.confidence = 0.9;
        const EvalReport a = evaluate(pred, &gt, gt, eval_cfg, boot_cfg, 4);
        const EvalReport b = evaluate(pred, &gt, gt, eval_cfg, boot_cfg, 4);
        CHECK(a.map == b.map);
        REQUIRE(a.ci.has_value());
        CHECK(a.ci->map.lower == b.ci->map.lower);
        CHECK(a.ci->map.upper == b.ci->map.upper);
        CHECK(a.ci->stroma_ap.lower == b.ci->stroma_ap.lower);
        CHECK(a.ci->epithelium_ap.upper == b.ci->epithelium_ap.upper);
    }
    SUBCASE("ground-truth tiles with no predictions count as misses") {
        KeypointTable pred;
        for (const auto& rec : gt)
            if (rec.tile_id != "tile_0") pred.push_back(rec);
        const EvalReport report = evaluate(pred, nullptr, gt, eval_cfg, boot_cfg, 4);
        CHECK(report.map < 1.0);
        CHECK(report.tile_count == 24);
    }
}

TEST_CASE("ci table layout mirrors a lower/upper bound table") {
    CiRow ci;
    ci.stroma_ap = {-0.00666, 0.01840, 0.005};
    ci.epithelium_ap = {0.00461, 0.07010, 0.03};
    ci.map = {-0.00024, 0.04115, 0.02};
    const std::string table = format_ci_table(ci);
    CHECK(table.find("Lower bound") != std::string::npos);
    CHECK(table.find("Upper bound") != std::string::npos);
    CHECK(table.find("Stroma AP") != std::string::npos);
    CHECK(table.find("Epithelium AP") != std::string::npos);
    CHECK(table.find("mAP") != std::string::npos);
    CHECK(table.find("-0.00666") != std::string::npos);
    CHECK(table.find("0.07010") != std::string::npos);
}
