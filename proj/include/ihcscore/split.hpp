#pragma once

#include <cstdint>
#include <vector>

namespace ihc {

enum class SplitPart : std::uint8_t { train = 0, val = 1, test = 2 };

/// Deterministic shuffled partition of n items by the given ratios.
/// Part sizes are floor(n * ratio / total) for val and test; the remainder
/// goes to train. Identical seeds yield identical partitions.
std::vector<SplitPart> split_assign(std::size_t n, unsigned ratio_train, unsigned ratio_val,
                                    unsigned ratio_test, std::uint64_t seed);

}  // namespace ihc
