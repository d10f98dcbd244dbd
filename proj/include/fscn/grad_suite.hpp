#pragma once

#include <cstdint>
#include <vector>

#include "fscn/gradcheck.hpp"

namespace fscn {

/// Finite-difference checks of every differentiable op, the model blocks and
/// the end-to-end training loss, each on three random shapes. Runs in double
/// precision with eps 1e-5 and tolerance 1e-3.
std::vector<GradCheckReport> run_grad_suite(std::uint64_t seed = 0);

}  // namespace fscn
