#include "ihcscore/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ihcscore/rng.hpp"

namespace ihc {

MatchResult match_keypoints(std::span<const Keypoint> predictions,
                            std::span<const Keypoint> ground_truth, const EvalConfig& cfg) {
    if (cfg.match_radius <= 0.0) throw DomainError("match_keypoints: match_radius must be > 0");

    MatchResult result;
    const double r2 = cfg.match_radius * cfg.match_radius;
    for (int cls = 0; cls < 2; ++cls) {
        ClassMatch& cm = result.per_class[cls];

        std::vector<const Keypoint*> gts;
        for (const Keypoint& gt : ground_truth) {
            if (static_cast<int>(gt.compartment) == cls) gts.push_back(&gt);
        }
        cm.num_gt = gts.size();

        std::vector<const Keypoint*> preds;
        for (const Keypoint& p : predictions) {
            if (static_cast<int>(p.compartment) == cls) preds.push_back(&p);
        }
        std::sort(preds.begin(), preds.end(), [](const Keypoint* a, const Keypoint* b) {
            if (a->confidence != b->confidence) return a->confidence > b->confidence;
            if (a->y != b->y) return a->y < b->y;
            return a->x < b->x;
        });

        std::vector<bool> taken(gts.size(), false);
        for (const Keypoint* p : preds) {
            std::int64_t best = -1;
            double best_d2 = 0.0;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (taken[g]) continue;
                const double dx = p->x - gts[g]->x;
                const double dy = p->y - gts[g]->y;
                const double d2 = dx * dx + dy * dy;
                if (d2 > r2) continue;
                if (best < 0 || d2 < best_d2) {
                    best = static_cast<std::int64_t>(g);
                    best_d2 = d2;
                }
            }
            PredOutcome outcome;
            outcome.confidence = p->confidence;
            if (best >= 0) {
                taken[static_cast<std::size_t>(best)] = true;
                outcome.is_tp = true;
                outcome.matched_gt = best;
            }
            cm.outcomes.push_back(outcome);
        }
        cm.false_negatives = static_cast<std::size_t>(
            std::count(taken.begin(), taken.end(), false));
    }
    return result;
}

std::optional<double> average_precision(const ClassMatch& match) {
    if (match.num_gt == 0) return std::nullopt;

    // Precision envelope over the confidence-ranked outcomes: walk the list
    // backwards keeping the running max precision, add a rectangle at every
    // recall increment. Recall steps are accumulated as integer TP counts
    // and divided by num_gt once, so an all-TP list scores exactly 1.
    const std::size_t n = match.outcomes.size();
    std::vector<double> precision(n);
    std::vector<std::size_t> tp_count(n);
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (match.outcomes[i].is_tp)
            ++tp;
        else
            ++fp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
        tp_count[i] = tp;
    }
    double weighted_tp = 0.0;
    double max_precision = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        max_precision = std::max(max_precision, precision[i]);
        const std::size_t step = tp_count[i] - (i == 0 ? 0 : tp_count[i - 1]);
        if (step > 0) weighted_tp += static_cast<double>(step) * max_precision;
    }
    return weighted_tp / static_cast<double>(match.num_gt);
}

double mean_ap(const MatchResult& match, std::vector<Compartment>* excluded) {
    double sum = 0.0;
    int defined = 0;
    for (int cls = 0; cls < 2; ++cls) {
        const auto ap = average_precision(match.per_class[cls]);
        if (ap) {
            sum += *ap;
            ++defined;
        } else if (excluded) {
            excluded->push_back(static_cast<Compartment>(cls));
        }
    }
    if (defined == 0) throw DomainError("mean_ap: no class has ground truth");
    return sum / defined;
}

namespace {

double interpolated_quantile(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = (static_cast<double>(n) - 1.0) * q;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

BootstrapResult bootstrap_ci(std::span<const double> per_batch_diffs,
                             const BootstrapConfig& cfg) {
    if (per_batch_diffs.empty()) throw DomainError("bootstrap_ci: empty input");
    if (cfg.resamples < 1 || cfg.outer_repeats < 1)
        throw DomainError("bootstrap_ci: resamples and outer_repeats must be >= 1");
    if (cfg.confidence <= 0.0 || cfg.confidence >= 1.0)
        throw DomainError("bootstrap_ci: confidence must be in (0, 1)");

    const std::size_t n = per_batch_diffs.size();
    const double alpha = (1.0 - cfg.confidence) / 2.0;

    double lower_sum = 0.0, upper_sum = 0.0;
    std::vector<double> means(cfg.resamples);
    for (std::size_t rep = 0; rep < cfg.outer_repeats; ++rep) {
        Rng rng(derive_seed(cfg.seed, rep));
        for (std::size_t r = 0; r < cfg.resamples; ++r) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += per_batch_diffs[draw_index(rng, n)];
            means[r] = sum / static_cast<double>(n);
        }
        std::sort(means.begin(), means.end());
        lower_sum += interpolated_quantile(means, alpha);
        upper_sum += interpolated_quantile(means, 1.0 - alpha);
    }

    BootstrapResult result;
    result.lower = lower_sum / static_cast<double>(cfg.outer_repeats);
    result.upper = upper_sum / static_cast<double>(cfg.outer_repeats);
    double observed = 0.0;
    for (double v : per_batch_diffs) observed += v;
    result.mean = observed / static_cast<double>(n);
    return result;
}

namespace {

using TileKey = std::pair<std::string, std::string>;  // (slide_id, tile_id)

std::map<TileKey, std::vector<Keypoint>> group_by_tile(const KeypointTable& table) {
    std::map<TileKey, std::vector<Keypoint>> groups;
    for (const KeypointRecord& rec : table)
        groups[{rec.slide_id, rec.tile_id}].push_back(rec.keypoint);
    return groups;
}

struct PooledMatch {
    std::array<std::vector<PredOutcome>, 2> outcomes;
    std::array<std::size_t, 2> num_gt{0, 0};
};

// Matches tile by tile, pools outcomes, and re-ranks by confidence across
// tiles (ties by tile key for determinism).
PooledMatch pool_matches(std::span<const TileKey> keys,
                         const std::map<TileKey, std::vector<Keypoint>>& pred,
                         const std::map<TileKey, std::vector<Keypoint>>& gt,
                         const EvalConfig& cfg) {
    struct Ranked {
        PredOutcome outcome;
        std::size_t tile_rank;
        std::size_t order;
    };
    std::array<std::vector<Ranked>, 2> ranked;
    PooledMatch pooled;
    static const std::vector<Keypoint> kEmpty;

    for (std::size_t t = 0; t < keys.size(); ++t) {
        const auto pit = pred.find(keys[t]);
        const auto git = gt.find(keys[t]);
        const std::vector<Keypoint>& pv = pit == pred.end() ? kEmpty : pit->second;
        const std::vector<Keypoint>& gv = git == gt.end() ? kEmpty : git->second;
        const MatchResult match = match_keypoints(pv, gv, cfg);
        for (int cls = 0; cls < 2; ++cls) {
            pooled.num_gt[cls] += match.per_class[cls].num_gt;
            for (std::size_t i = 0; i < match.per_class[cls].outcomes.size(); ++i)
                ranked[cls].push_back({match.per_class[cls].outcomes[i], t, i});
        }
    }
    for (int cls = 0; cls < 2; ++cls) {
        std::stable_sort(ranked[cls].begin(), ranked[cls].end(),
                         [](const Ranked& a, const Ranked& b) {
                             if (a.outcome.confidence != b.outcome.confidence)
                                 return a.outcome.confidence > b.outcome.confidence;
                             if (a.tile_rank != b.tile_rank) return a.tile_rank < b.tile_rank;
                             return a.order < b.order;
                         });
        pooled.outcomes[cls].reserve(ranked[cls].size());
        for (const Ranked& r : ranked[cls]) pooled.outcomes[cls].push_back(r.outcome);
    }
    return pooled;
}

std::array<std::optional<double>, 3> pooled_metrics(const PooledMatch& pooled) {
    std::array<std::optional<double>, 3> out;  // stroma, epithelium, map
    double sum = 0.0;
    int defined = 0;
    for (int cls = 0; cls < 2; ++cls) {
        ClassMatch cm;
        cm.outcomes = pooled.outcomes[cls];
        cm.num_gt = pooled.num_gt[cls];
        out[cls] = average_precision(cm);
        if (out[cls]) {
            sum += *out[cls];
            ++defined;
        }
    }
    if (defined > 0) out[2] = sum / defined;
    return out;
}

std::vector<BatchMetrics> batch_series(std::span<const TileKey> keys,
                                       const std::map<TileKey, std::vector<Keypoint>>& pred,
                                       const std::map<TileKey, std::vector<Keypoint>>& gt,
                                       const EvalConfig& cfg, std::size_t batch_size) {
    std::vector<BatchMetrics> series;
    for (std::size_t start = 0; start < keys.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, keys.size() - start);
        const auto batch_keys = keys.subspan(start, len);
        const PooledMatch pooled = pool_matches(batch_keys, pred, gt, cfg);
        const auto metrics = pooled_metrics(pooled);
        BatchMetrics bm;
        for (const TileKey& k : batch_keys) bm.tile_keys.push_back(k.first + "/" + k.second);
        bm.stroma_ap = metrics[0];
        bm.epithelium_ap = metrics[1];
        bm.map = metrics[2];
        series.push_back(std::move(bm));
    }
    return series;
}

std::vector<double> paired_diffs(const std::vector<BatchMetrics>& a,
                                 const std::vector<BatchMetrics>& b,
                                 std::optional<double> BatchMetrics::*field) {
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& va = a[i].*field;
        const auto& vb = b[i].*field;
        if (va && vb) diffs.push_back(*va - *vb);
    }
    return diffs;
}

}  // namespace

EvalReport evaluate(const KeypointTable& predictions, const KeypointTable* second_predictions,
                    const KeypointTable& ground_truth, const EvalConfig& eval_cfg,
                    const BootstrapConfig& bootstrap_cfg, std::size_t batch_size) {
    if (batch_size == 0) throw DomainError("evaluate: batch_size must be >= 1");
    const auto gt = group_by_tile(ground_truth);
    const auto pred = group_by_tile(predictions);

    auto check_alignment = [&](const std::map<TileKey, std::vector<Keypoint>>& p,
                               const char* label) {
        std::vector<std::string> offenders;
        for (const auto& [key, kps] : p) {
            if (!gt.count(key)) offenders.push_back(key.first + "/" + key.second);
        }
        if (!offenders.empty()) {
            std::string msg = std::string("evaluate: ") + label +
                              " contains tiles absent from the ground truth:";
            for (const std::string& o : offenders) msg += " " + o;
            throw DomainError(msg);
        }
    };
    check_alignment(pred, "predictions");

    std::vector<TileKey> keys;
    keys.reserve(gt.size());
    for (const auto& [key, kps] : gt) keys.push_back(key);  // std::map: already sorted

    EvalReport report;
    report.tile_count = keys.size();
    report.batch_size = batch_size;

    const PooledMatch pooled = pool_matches(keys, pred, gt, eval_cfg);
    const auto metrics = pooled_metrics(pooled);
    report.stroma_ap = metrics[0];
    report.epithelium_ap = metrics[1];
    if (!metrics[2]) throw DomainError("evaluate: no class has ground truth");
    report.map = *metrics[2];
    for (int cls = 0; cls < 2; ++cls) {
        if (!metrics[cls]) report.excluded_classes.push_back(static_cast<Compartment>(cls));
    }

    report.batches = batch_series(keys, pred, gt, eval_cfg, batch_size);

    if (second_predictions != nullptr) {
        const auto pred2 = group_by_tile(*second_predictions);
        check_alignment(pred2, "second predictions");
        report.batches_second = batch_series(keys, pred2, gt, eval_cfg, batch_size);

        CiRow ci;
        const auto run = [&](std::optional<double> BatchMetrics::*field) {
            const auto diffs = paired_diffs(report.batches, report.batches_second, field);
            if (diffs.empty())
                throw DomainError("evaluate: no batch has the metric defined for both models");
            return bootstrap_ci(diffs, bootstrap_cfg);
        };
        ci.stroma_ap = run(&BatchMetrics::stroma_ap);
        ci.epithelium_ap = run(&BatchMetrics::epithelium_ap);
        ci.map = run(&BatchMetrics::map);
        report.ci = ci;
    }
    return report;
}

std::string format_ci_table(const CiRow& ci) {
    std::ostringstream out;
    auto row = [&](const char* name, const BootstrapResult& r) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-14s %13.5f %13.5f\n", name, r.lower, r.upper);
        out << buf;
    };
    char header[96];
    std::snprintf(header, sizeof(header), "%-14s %13s %13s\n", "", "Lower bound", "Upper bound");
    out << header;
    row("Stroma AP", ci.stroma_ap);
    row("Epithelium AP", ci.epithelium_ap);
    row("mAP", ci.map);
    return out.str();
}

}  // namespace ihc
