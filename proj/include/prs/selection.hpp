#pragma once

#include <vector>

#include "prs/types.hpp"

namespace prs {

// Deterministic argmax over scored candidates. Highest reward wins; ties go
// to the lower layer, then the lower within-layer index, then the
// lexicographically smaller id. Reward comparisons are exact 64-bit, no
// epsilon, so the result does not depend on input order.
const Candidate& select_best(const std::vector<const Candidate*>& candidates);
const Candidate& select_best(const std::vector<Candidate>& candidates);

// Mean of the k largest rewards. Requires at least k scored candidates.
double top_k_mean(const std::vector<const Candidate*>& candidates, int k);
double top_k_mean(const std::vector<Candidate>& candidates, int k);

}  // namespace prs
