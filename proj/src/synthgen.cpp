#include "ihcscore/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ihcscore/io.hpp"
#include "ihcscore/rng.hpp"

namespace ihc {

StainProfile reference_profile() {
    StainProfile profile;
    profile.annotator_id = "reference";
    profile.hue_split_deg = 125.0;
    profile.value_left = 80.0;
    profile.value_right = 120.0;
    profile.nucleus_half_side_px = 10;
    profile.created_utc = "1970-01-01T00:00:00Z";
    profile.objective = 0.0;
    return profile;
}

void validate_spec(const SynthSpec& spec) {
    if (spec.tile_size == 0) throw DomainError("synth: tile_size must be positive");
    if (spec.stroma_fraction < 0.0 || spec.stroma_fraction > 1.0)
        throw DomainError("synth: stroma_fraction must be in [0, 1]");
    double mix_sum = 0.0;
    for (double f : spec.class_mix) {
        if (f < 0.0) throw DomainError("synth: class mix fractions must be >= 0");
        mix_sum += f;
    }
    if (std::fabs(mix_sum - 1.0) > 1e-9) throw DomainError("synth: class mix must sum to 1");
    if (spec.nucleus_radius_px <= 0) throw DomainError("synth: nucleus radius must be positive");
    if (!(spec.min_separation > 2.0 * spec.nucleus_radius_px))
        throw DomainError("synth: min_separation must exceed twice the nucleus radius");
    if (spec.max_attempts <= 0) throw DomainError("synth: max_attempts must be positive");
    if (spec.nuclei > 0) {
        const std::int64_t margin = spec.nucleus_radius_px + 1;
        if (2 * margin >= static_cast<std::int64_t>(spec.tile_size))
            throw DomainError("synth: tile too small for the nucleus radius");
    }
}

std::vector<std::int64_t> apportion(std::int64_t total, std::span<const double> fractions) {
    std::vector<std::int64_t> counts(fractions.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double exact = total * fractions[i];
        counts[i] = static_cast<std::int64_t>(std::floor(exact + 1e-9));
        assigned += counts[i];
        remainders.emplace_back(exact - counts[i], i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::int64_t k = 0; k < total - assigned; ++k)
        ++counts[remainders[static_cast<std::size_t>(k) % remainders.size()].second];
    return counts;
}

namespace {

void draw_disk(RgbImage& image, std::int64_t cx, std::int64_t cy, int radius, const Rgb& color) {
    const std::int64_t r2 = static_cast<std::int64_t>(radius) * radius;
    for (std::int64_t y = cy - radius; y <= cy + radius; ++y) {
        for (std::int64_t x = cx - radius; x <= cx + radius; ++x) {
            const std::int64_t dx = x - cx;
            const std::int64_t dy = y - cy;
            if (dx * dx + dy * dy > r2) continue;
            if (x < 0 || y < 0 || x >= static_cast<std::int64_t>(image.width) ||
                y >= static_cast<std::int64_t>(image.height))
                continue;
            std::uint8_t* p = image.at(static_cast<std::uint32_t>(x),
                                       static_cast<std::uint32_t>(y));
            p[0] = color.r;
            p[1] = color.g;
            p[2] = color.b;
        }
    }
}

}  // namespace

SynthTile generate_tile(const SynthSpec& spec, const std::string& slide_id,
                        const std::string& tile_id) {
    validate_spec(spec);

    SynthTile out;
    out.tile.image = RgbImage(spec.tile_size, spec.tile_size, spec.background.r,
                              spec.background.g, spec.background.b);
    out.tile.microns_per_pixel = 100.0 / spec.tile_size;  // 100 um field of view
    out.tile.slide_id = slide_id;

    const std::int64_t n = static_cast<std::int64_t>(spec.nuclei);
    const std::array<double, 2> comp_mix{spec.stroma_fraction, 1.0 - spec.stroma_fraction};
    const auto comp_counts = apportion(n, comp_mix);

    // Label roster: per compartment, classes apportioned by the mix.
    std::vector<std::pair<Compartment, StainClass>> roster;
    roster.reserve(spec.nuclei);
    for (int c = 0; c < 2; ++c) {
        const auto class_counts = apportion(comp_counts[c], spec.class_mix);
        for (int k = 0; k < 4; ++k) {
            for (std::int64_t i = 0; i < class_counts[k]; ++i)
                roster.emplace_back(static_cast<Compartment>(c), static_cast<StainClass>(k));
            out.expected_counts[static_cast<Compartment>(c)]
                               [static_cast<StainClass>(k)] += class_counts[k];
        }
    }

    Rng rng(spec.seed);
    std::shuffle(roster.begin(), roster.end(), rng);

    const std::int64_t margin = spec.nucleus_radius_px + 1;
    const std::int64_t span = static_cast<std::int64_t>(spec.tile_size) - 2 * margin;
    const double sep2 = spec.min_separation * spec.min_separation;
    std::vector<std::pair<std::int64_t, std::int64_t>> centers;
    for (const auto& [compartment, stain] : roster) {
        bool placed = false;
        for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
            const std::int64_t x = margin + static_cast<std::int64_t>(
                                                draw_index(rng, static_cast<std::size_t>(span + 1)));
            const std::int64_t y = margin + static_cast<std::int64_t>(
                                                draw_index(rng, static_cast<std::size_t>(span + 1)));
            bool ok = true;
            for (const auto& [px, py] : centers) {
                const double dx = static_cast<double>(x - px);
                const double dy = static_cast<double>(y - py);
                if (dx * dx + dy * dy < sep2) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            centers.emplace_back(x, y);
            draw_disk(out.tile.image, x, y, spec.nucleus_radius_px,
                      hsv_to_rgb(spec.palette[stain]));
            KeypointRecord rec;
            rec.slide_id = slide_id;
            rec.tile_id = tile_id;
            rec.keypoint = Keypoint{static_cast<double>(x), static_cast<double>(y), compartment,
                                    1.0};
            rec.stain = stain;
            out.keypoints.push_back(std::move(rec));
            placed = true;
        }
        if (!placed)
            throw CapacityError("synth: placement infeasible for min_separation=" +
                                format_double(spec.min_separation) + " with " +
                                std::to_string(spec.nuclei) + " nuclei on a " +
                                std::to_string(spec.tile_size) + " px tile (attempt budget " +
                                std::to_string(spec.max_attempts) + ")");
    }

    for (int c = 0; c < 2; ++c)
        out.expected_hscore[c] = compute_hscore(out.expected_counts.per_compartment[c]);
    return out;
}

}  // namespace ihc
