#include "fscn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace fscn {

GradCheckReport grad_check(std::string op_name, const Objective& f,
                           std::vector<NamedTensor> params, const GradCheckOptions& options) {
  GradCheckReport report;
  report.op_name = std::move(op_name);

  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.drop_grad();
  }
  Graph<double> graph;
  Tensor<double> loss = f(graph);
  // An objective that ignores every parameter has an all-zero gradient.
  if (loss.requires_grad()) graph.backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    auto grad = p.tensor.has_grad() ? p.tensor.grad() : std::span<double>{};
    std::vector<double> copy(p.tensor.numel(), 0.0);
    std::copy(grad.begin(), grad.end(), copy.begin());
    analytic.push_back(std::move(copy));
  }

  std::vector<std::uint8_t> signs_plus, signs_minus;
  auto evaluate = [&f](std::vector<std::uint8_t>& signs) {
    signs.clear();
    Graph<double> probe(GradMode::kDisabled);
    probe.trace_relu(&signs);
    return f(probe).item();
  };

  std::mt19937_64 rng(options.seed);
  bool saw_nan = false;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].tensor.data();
    std::vector<std::size_t> entries(values.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries > 0 && entries.size() > options.max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries);
      std::sort(entries.begin(), entries.end());
    }
    double worst = 0.0;
    for (std::size_t idx : entries) {
      const double original = values[idx];
      values[idx] = original + options.eps;
      const double plus = evaluate(signs_plus);
      values[idx] = original - options.eps;
      const double minus = evaluate(signs_minus);
      values[idx] = original;
      if (signs_plus != signs_minus) ++report.kink_crossings;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic[pi][idx];
      if (std::isnan(numeric) || std::isnan(a)) {
        saw_nan = true;
        worst = std::numeric_limits<double>::infinity();
        continue;
      }
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
    report.per_parameter_errors.emplace_back(params[pi].name, worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  report.passed = !saw_nan && report.max_rel_error <= options.tol;
  return report;
}

}  // namespace fscn
