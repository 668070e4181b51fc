#include "ihcscore/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace ihc {

const char* compartment_name(Compartment c) {
    return c == Compartment::stroma ? "stroma" : "epithelium";
}

Compartment compartment_from_name(const std::string& name) {
    if (name == "stroma") return Compartment::stroma;
    if (name == "epithelium") return Compartment::epithelium;
    throw ParseError("unknown compartment class '" + name + "'");
}

Heatmap::Heatmap(std::uint32_t w, std::uint32_t h, std::uint32_t classes)
    : width(w), height(h), num_classes(classes),
      values(static_cast<std::size_t>(w) * h * classes, 0.0f) {
    if (w == 0 || h == 0 || classes == 0)
        throw DomainError("Heatmap: dimensions and class count must be positive");
}

bool Heatmap::valid() const {
    if (width == 0 || height == 0 || num_classes == 0) return false;
    if (values.size() != static_cast<std::size_t>(width) * height * num_classes) return false;
    for (float v : values) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) return false;
    }
    return true;
}

std::vector<Keypoint> extract_keypoints(const Heatmap& heatmap, const ExtractorParams& params) {
    if (!heatmap.valid()) throw DomainError("extract_keypoints: invalid heatmap");
    if (params.pool_size < 1 || params.pool_size % 2 == 0)
        throw DomainError("extract_keypoints: pool_size must be odd and >= 1");
    if (params.min_distance < 0.0)
        throw DomainError("extract_keypoints: min_distance must be >= 0");
    if (params.confidence_threshold < 0.0 || params.confidence_threshold > 1.0)
        throw DomainError("extract_keypoints: confidence_threshold must be in [0, 1]");

    const int radius = params.pool_size / 2;
    const std::int64_t w = heatmap.width;
    const std::int64_t h = heatmap.height;

    struct Candidate {
        float value;
        std::int64_t x, y;
    };

    std::vector<Keypoint> result;
    for (std::uint32_t cls = 0; cls < heatmap.num_classes; ++cls) {
        std::vector<Candidate> candidates;
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const float v = heatmap.at(static_cast<std::uint32_t>(x),
                                           static_cast<std::uint32_t>(y), cls);
                if (v < params.confidence_threshold) continue;
                bool is_peak = true;
                for (std::int64_t ny = std::max<std::int64_t>(0, y - radius);
                     is_peak && ny <= std::min(h - 1, y + radius); ++ny) {
                    for (std::int64_t nx = std::max<std::int64_t>(0, x - radius);
                         nx <= std::min(w - 1, x + radius); ++nx) {
                        if (nx == x && ny == y) continue;
                        const float nv = heatmap.at(static_cast<std::uint32_t>(nx),
                                                    static_cast<std::uint32_t>(ny), cls);
                        // Equal neighbors earlier in (y, x) order own the plateau.
                        if (nv > v || (nv == v && (ny < y || (ny == y && nx < x)))) {
                            is_peak = false;
                            break;
                        }
                    }
                }
                if (is_peak) candidates.push_back({v, x, y});
            }
        }
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.value != b.value) return a.value > b.value;
            if (a.y != b.y) return a.y < b.y;
            return a.x < b.x;
        });

        const double min_d2 = params.min_distance * params.min_distance;
        std::vector<Candidate> accepted;
        for (const Candidate& c : candidates) {
            bool keep = true;
            for (const Candidate& a : accepted) {
                const double dx = static_cast<double>(c.x - a.x);
                const double dy = static_cast<double>(c.y - a.y);
                if (dx * dx + dy * dy <= min_d2) {
                    keep = false;
                    break;
                }
            }
            if (keep) {
                accepted.push_back(c);
                result.push_back(Keypoint{static_cast<double>(c.x), static_cast<double>(c.y),
                                          static_cast<Compartment>(cls),
                                          static_cast<double>(c.value)});
            }
        }
    }
    return result;
}

Heatmap render_heatmap(std::span<const Keypoint> keypoints, std::uint32_t width,
                       std::uint32_t height, std::uint32_t num_classes, double sigma) {
    if (sigma <= 0.0) throw DomainError("render_heatmap: sigma must be > 0");
    Heatmap out(width, height, num_classes);
    for (const Keypoint& kp : keypoints) {
        if (kp.x < 0 || kp.y < 0 || kp.x >= width || kp.y >= height)
            throw DomainError("render_heatmap: keypoint outside raster");
        const auto cls = static_cast<std::uint32_t>(kp.compartment);
        if (cls >= num_classes) throw DomainError("render_heatmap: keypoint class out of range");
        if (kp.confidence < 0.0 || kp.confidence > 1.0)
            throw DomainError("render_heatmap: confidence outside [0, 1]");
    }

    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    for (std::uint32_t cls = 0; cls < num_classes; ++cls) {
        for (const Keypoint& kp : keypoints) {
            if (static_cast<std::uint32_t>(kp.compartment) != cls) continue;
            for (std::uint32_t y = 0; y < height; ++y) {
                const double dy = y - kp.y;
                for (std::uint32_t x = 0; x < width; ++x) {
                    const double dx = x - kp.x;
                    const float v = static_cast<float>(
                        kp.confidence * std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq));
                    float& cell = out.at(x, y, cls);
                    if (v > cell) cell = v;
                }
            }
        }
    }
    return out;
}

std::vector<Keypoint> fuse_keypoints(std::span<const std::vector<Keypoint>> sets,
                                     std::span<const double> model_weights, double fuse_radius) {
    if (sets.size() != model_weights.size())
        throw DomainError("fuse_keypoints: one weight per keypoint set required");
    if (fuse_radius < 0.0) throw DomainError("fuse_keypoints: fuse_radius must be >= 0");
    for (double w : model_weights) {
        if (!(w > 0.0)) throw DomainError("fuse_keypoints: model weights must be positive");
    }

    struct Tagged {
        Keypoint kp;
        std::size_t model;
    };
    std::vector<Tagged> all;
    for (std::size_t m = 0; m < sets.size(); ++m) {
        for (const Keypoint& kp : sets[m]) all.push_back({kp, m});
    }
    std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) {
        if (a.kp.confidence != b.kp.confidence) return a.kp.confidence > b.kp.confidence;
        if (a.kp.y != b.kp.y) return a.kp.y < b.kp.y;
        if (a.kp.x != b.kp.x) return a.kp.x < b.kp.x;
        return a.model < b.model;
    });

    struct Cluster {
        Compartment compartment;
        double sum_wx = 0.0, sum_wy = 0.0, sum_w = 0.0;  // w = confidence * model weight
        std::map<std::size_t, double> model_max_conf;
        double cx() const { return sum_wx / sum_w; }
        double cy() const { return sum_wy / sum_w; }
    };
    std::vector<Cluster> clusters;
    const double r2 = fuse_radius * fuse_radius;

    for (const Tagged& t : all) {
        Cluster* target = nullptr;
        for (Cluster& c : clusters) {
            if (c.compartment != t.kp.compartment) continue;
            const double dx = t.kp.x - c.cx();
            const double dy = t.kp.y - c.cy();
            if (dx * dx + dy * dy <= r2) {
                target = &c;
                break;
            }
        }
        if (target == nullptr) {
            clusters.emplace_back();
            target = &clusters.back();
            target->compartment = t.kp.compartment;
        }
        const double w = t.kp.confidence * model_weights[t.model];
        target->sum_wx += w * t.kp.x;
        target->sum_wy += w * t.kp.y;
        target->sum_w += w;
        auto [it, inserted] = target->model_max_conf.try_emplace(t.model, t.kp.confidence);
        if (!inserted) it->second = std::max(it->second, t.kp.confidence);
    }

    std::vector<Keypoint> fused;
    fused.reserve(clusters.size());
    for (const Cluster& c : clusters) {
        double conf_num = 0.0, weight_sum = 0.0;
        for (const auto& [model, conf] : c.model_max_conf) {
            conf_num += conf * model_weights[model];
            weight_sum += model_weights[model];
        }
        fused.push_back(Keypoint{c.cx(), c.cy(), c.compartment, conf_num / weight_sum});
    }
    std::sort(fused.begin(), fused.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.compartment != b.compartment) return a.compartment < b.compartment;
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    return fused;
}

double huber_loss(const Heatmap& predicted, const Heatmap& target, double delta) {
    if (delta <= 0.0) throw DomainError("huber_loss: delta must be > 0");
    if (predicted.width != target.width || predicted.height != target.height ||
        predicted.num_classes != target.num_classes)
        throw DomainError("huber_loss: heatmap shapes do not match");

    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.values.size(); ++i) {
        const double r = static_cast<double>(target.values[i]) - predicted.values[i];
        const double a = std::fabs(r);
        sum += a < delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
    }
    return sum / static_cast<double>(predicted.values.size());
}

}  // namespace ihc
