#include "ihcscore/split.hpp"

#include <algorithm>
#include <numeric>

#include "ihcscore/errors.hpp"
#include "ihcscore/rng.hpp"

namespace ihc {

std::vector<SplitPart> split_assign(std::size_t n, unsigned ratio_train, unsigned ratio_val,
                                    unsigned ratio_test, std::uint64_t seed) {
    if (n == 0) throw DomainError("split: empty manifest");
    const unsigned total = ratio_train + ratio_val + ratio_test;
    if (ratio_train == 0 || total == 0) throw DomainError("split: ratios must be positive");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t n_val = n * ratio_val / total;
    const std::size_t n_test = n * ratio_test / total;
    const std::size_t n_train = n - n_val - n_test;

    std::vector<SplitPart> labels(n, SplitPart::train);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
            labels[order[i]] = SplitPart::train;
        else if (i < n_train + n_val)
            labels[order[i]] = SplitPart::val;
        else
            labels[order[i]] = SplitPart::test;
    }
    return labels;
}

}  // namespace ihc
