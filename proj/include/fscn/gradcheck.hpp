#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fscn/tensor.hpp"

namespace fscn {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-3;
  /// Entries probed per parameter; 0 probes every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::string op_name;
  double max_rel_error = 0.0;
  std::vector<std::pair<std::string, double>> per_parameter_errors;
  /// Probed entries whose +-eps stencil flips the sign of some relu input.
  /// The objective is not differentiable across the stencil there, so the
  /// central difference is no oracle for those entries.
  std::size_t kink_crossings = 0;
  bool passed = false;
};

struct NamedTensor {
  std::string name;
  Tensor<double> tensor;
};

/// Builds the scalar objective on the given graph. Must be deterministic.
using Objective = std::function<Tensor<double>(Graph<double>&)>;

/// Compares reverse-mode gradients against central differences.
///
/// Relative error per entry is |a - n| / max(1e-8, |a| + |n|); any NaN on
/// either side fails the report.
GradCheckReport grad_check(std::string op_name, const Objective& f,
                           std::vector<NamedTensor> params, const GradCheckOptions& options = {});

}  // namespace fscn
