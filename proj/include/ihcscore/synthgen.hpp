#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ihcscore/io.hpp"
#include "ihcscore/staining.hpp"

namespace ihc {

/// Planted nucleus colors, one HSV target per stain class. Defaults are
/// consistent with the reference profile (split 125, left 80, right 120):
/// every Value sits at least 5 away from its band boundaries.
struct SynthPalette {
    Hsv none{220.0, 160.0, 150.0};
    Hsv weak{30.0, 170.0, 160.0};
    Hsv moderate{30.0, 170.0, 100.0};
    Hsv strong{30.0, 170.0, 50.0};

    const Hsv& operator[](StainClass c) const {
        switch (c) {
            case StainClass::none: return none;
            case StainClass::weak: return weak;
            case StainClass::moderate: return moderate;
            default: return strong;
        }
    }
};

/// The profile the default palette is exact under.
StainProfile reference_profile();

struct SynthSpec {
    std::uint32_t tile_size = 256;
    std::size_t nuclei = 30;
    double stroma_fraction = 0.5;                       // rest is epithelium
    std::array<double, 4> class_mix{0.25, 0.25, 0.25, 0.25};  // none..strong
    SynthPalette palette;
    int nucleus_radius_px = 15;   // drawn disk radius
    double min_separation = 34.0; // center-to-center, must exceed 2 * radius
    Rgb background{234, 226, 230};
    std::uint64_t seed = 0;
    int max_attempts = 10000;     // rejection-sampling budget per nucleus
};

void validate_spec(const SynthSpec& spec);

/// A generated tile with its ground truth and analytic expectations.
struct SynthTile {
    Tile tile;
    std::vector<KeypointRecord> keypoints;  // planted centers with stain labels
    ClassCounts expected_counts;
    std::array<std::optional<double>, 2> expected_hscore;  // index by Compartment
};

/// Plants `spec.nuclei` uniform-color disks at integer centers separated by
/// at least min_separation and fully inside the tile. Class and compartment
/// counts follow the mixes exactly (largest-remainder rounding); the
/// expected H-score is computed from the planted counts. Deterministic per
/// seed. Throws CapacityError when placement exceeds the attempt budget.
SynthTile generate_tile(const SynthSpec& spec, const std::string& slide_id = "synth",
                        const std::string& tile_id = "tile_0");

/// Largest-remainder apportionment of `total` into integer counts, exact
/// whenever total * fraction is integral. Fractions must sum to 1.
std::vector<std::int64_t> apportion(std::int64_t total, std::span<const double> fractions);

}  // namespace ihc
