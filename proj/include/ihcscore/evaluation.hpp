#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ihcscore/io.hpp"

namespace ihc {

struct EvalConfig {
    double match_radius = 13.0;  // px, Euclidean
};

struct BootstrapConfig {
    std::size_t resamples = 10000;
    double confidence = 0.95;
    std::size_t outer_repeats = 10000;
    std::uint64_t seed = 0;
};

/// One prediction outcome, in descending-confidence order.
struct PredOutcome {
    double confidence = 0.0;
    bool is_tp = false;
    std::int64_t matched_gt = -1;  // index into the class's ground-truth list
};

/// Greedy matching result for one class.
struct ClassMatch {
    std::vector<PredOutcome> outcomes;
    std::size_t num_gt = 0;
    std::size_t false_negatives = 0;
};

struct MatchResult {
    std::array<ClassMatch, 2> per_class;  // index by Compartment
};

/// Greedy nearest-neighbor matching within match_radius, per class, in
/// descending prediction confidence (ties by (y, x)). Each ground truth
/// matches at most once; unmatched predictions are FP, leftover ground
/// truths FN.
MatchResult match_keypoints(std::span<const Keypoint> predictions,
                            std::span<const Keypoint> ground_truth, const EvalConfig& cfg);

/// Area under the precision envelope (all-point interpolation) of the
/// confidence-ranked TP/FP list; recall denominator is num_gt. Undefined
/// (nullopt) when the class has no ground truth.
std::optional<double> average_precision(const ClassMatch& match);

/// Unweighted mean of the defined per-class APs. Classes without ground
/// truth are excluded (reported via `excluded`); no ground truth anywhere is
/// an error.
double mean_ap(const MatchResult& match, std::vector<Compartment>* excluded = nullptr);

struct BootstrapResult {
    double lower = 0.0;
    double upper = 0.0;
    double mean = 0.0;  // observed mean of the input
};

/// Percentile bootstrap of the mean: `resamples` resamples with replacement
/// per repeat, percentile interval at (1-confidence)/2 on each side,
/// averaged over `outer_repeats` independent repeats seeded from cfg.seed
/// via derive_seed. Resample indices are mt19937_64 draws reduced modulo n;
/// quantiles are linearly interpolated order statistics.
BootstrapResult bootstrap_ci(std::span<const double> per_batch_diffs, const BootstrapConfig& cfg);

struct BatchMetrics {
    std::vector<std::string> tile_keys;
    std::optional<double> stroma_ap;
    std::optional<double> epithelium_ap;
    std::optional<double> map;
};

struct CiRow {
    BootstrapResult stroma_ap;
    BootstrapResult epithelium_ap;
    BootstrapResult map;
};

struct EvalReport {
    std::optional<double> stroma_ap;
    std::optional<double> epithelium_ap;
    double map = 0.0;
    std::vector<Compartment> excluded_classes;
    std::vector<BatchMetrics> batches;          // primary predictions
    std::vector<BatchMetrics> batches_second;   // second predictions, if given
    std::optional<CiRow> ci;                    // paired first-minus-second CI
    std::size_t tile_count = 0;
    std::size_t batch_size = 0;
};

/// Evaluates predictions against ground truth: pooled per-class AP and mAP,
/// per-batch metric series (tiles sorted by (slide_id, tile_id), chunked by
/// batch_size), and, when a second prediction table is given, paired
/// per-batch differences (first minus second) with bootstrap CIs per metric.
/// Prediction rows for tiles absent from the ground truth are an alignment
/// error listing the offending tile keys.
EvalReport evaluate(const KeypointTable& predictions, const KeypointTable* second_predictions,
                    const KeypointTable& ground_truth, const EvalConfig& eval_cfg,
                    const BootstrapConfig& bootstrap_cfg, std::size_t batch_size);

/// Renders the lower/upper-bound CI table (rows: Stroma AP, Epithelium AP,
/// mAP; columns: lower bound, upper bound).
std::string format_ci_table(const CiRow& ci);

}  // namespace ihc
