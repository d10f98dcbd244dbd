#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fscn/tensor.hpp"
#include "json.hpp"

namespace fscn {

class EmptyMaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pixels whose ground truth lies in (0, cap_m].
struct ValidMask {
  Shape shape;
  std::vector<std::uint8_t> valid;
  std::size_t count = 0;
  double cap_m = 0.0;
};

/// Throws EmptyMaskError when no pixel qualifies.
template <typename T>
ValidMask valid_mask(const Tensor<T>& gt, double cap_m);

struct LossParams {
  double lambda = 0.85;
  double alpha = 10.0;
  void validate() const;
  bool operator==(const LossParams&) const = default;
};

/// (1/N) sum d^2 - (lambda/N^2) (sum d)^2 with d = log gt - log pred over
/// masked pixels. Not clamped.
template <typename T>
double silog_inner(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask,
                   double lambda);

/// alpha * sqrt(max(inner, 0)), differentiable w.r.t. pred. A batch is one
/// pool of pixels with a single N.
template <typename T>
Tensor<T> silog_loss(Graph<T>& g, const Tensor<T>& pred, const Tensor<T>& gt,
                     const ValidMask& mask, const LossParams& params);

struct MetricsReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rms = 0.0;
  double log10 = 0.0;
  double log_rms = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t n_pixels = 0;
};

inline constexpr double kPredictionFloorM = 1e-3;

/// Standard depth metrics over masked pixels. Predictions are clamped to
/// [1e-3, mask.cap_m] first; log_rms uses natural logs.
template <typename T>
MetricsReport eval_metrics(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask);

/// Pixel-weighted mean of each metric.
MetricsReport aggregate(std::span<const MetricsReport> reports);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

struct TableRow {
  std::string label;
  std::optional<std::size_t> params;
  MetricsReport metrics;
};

/// Aligned plain-text table: label, optional #params, then
/// abs rel, sq rel, rms, log rms, log10 and the three delta accuracies.
std::string format_table(std::span<const TableRow> rows);

}  // namespace fscn
