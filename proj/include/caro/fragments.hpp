#pragma once

#include <cstdint>
#include <vector>

#include "caro/gradcheck.hpp"

namespace caro {

// Desk-scale model fragments covering every composite the training loss is
// built from: mean pooling, the adaptive reception field, the aggregation
// gate, the full multi-view bottleneck loss (both KL terms plus the
// mutual-information estimator path) and the classifier cross entropy.
std::vector<GradCheckFragment> standard_fragments(std::uint64_t seed);

}  // namespace caro
