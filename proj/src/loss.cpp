#include "fscn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fscn {

template <typename T>
ValidMask valid_mask(const Tensor<T>& gt, double cap_m) {
  if (!(cap_m > 0.0)) throw std::invalid_argument("valid_mask: cap must be positive");
  ValidMask mask;
  mask.shape = gt.shape();
  mask.cap_m = cap_m;
  mask.valid.resize(gt.numel());
  auto values = gt.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    const bool ok = v > 0.0 && v <= cap_m;
    mask.valid[i] = ok ? 1 : 0;
    mask.count += ok ? 1 : 0;
  }
  if (mask.count == 0) {
    throw EmptyMaskError("valid_mask: no ground-truth pixel in (0, " + std::to_string(cap_m) + "]");
  }
  return mask;
}

void LossParams::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
}

namespace {

template <typename T>
void check_operands(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask,
                    const char* op) {
  if (pred.shape() != gt.shape() || mask.shape != gt.shape()) {
    throw ShapeError(std::string(op) + ": pred " + pred.shape().str() + ", gt " +
                     gt.shape().str() + " and mask " + mask.shape.str() + " must agree");
  }
  if (mask.count == 0) throw EmptyMaskError(std::string(op) + ": empty mask");
}

// Neumaier-compensated running sum; keeps the loss smooth enough for
// finite-difference checks over thousands of pixels.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct LogDiffSums {
  double sum = 0.0;
  double sum_sq = 0.0;
};

template <typename T>
LogDiffSums log_diff_sums(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask) {
  CompensatedSum sum, sum_sq;
  auto p = pred.data();
  auto y = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask.valid[i]) continue;
    if (!(p[i] > T(0))) {
      throw std::domain_error("silog: non-positive prediction " + std::to_string(p[i]) +
                              " at masked pixel " + std::to_string(i));
    }
    const double d = std::log(static_cast<double>(y[i])) - std::log(static_cast<double>(p[i]));
    sum.add(d);
    sum_sq.add(d * d);
  }
  return {sum.value(), sum_sq.value()};
}

}  // namespace

template <typename T>
double silog_inner(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask,
                   double lambda) {
  check_operands(pred, gt, mask, "silog_inner");
  const LogDiffSums s = log_diff_sums(pred, gt, mask);
  const double n = static_cast<double>(mask.count);
  return s.sum_sq / n - lambda * s.sum * s.sum / (n * n);
}

template <typename T>
Tensor<T> silog_loss(Graph<T>& g, const Tensor<T>& pred, const Tensor<T>& gt,
                     const ValidMask& mask, const LossParams& params) {
  check_operands(pred, gt, mask, "silog_loss");
  const LogDiffSums s = log_diff_sums(pred, gt, mask);
  const double n = static_cast<double>(mask.count);
  const double inner = s.sum_sq / n - params.lambda * s.sum * s.sum / (n * n);
  const double root = std::sqrt(std::max(inner, 0.0));
  const bool taped = g.wants({&pred});
  Tensor<T> out(Shape{1, 1, 1, 1}, std::vector<T>{static_cast<T>(params.alpha * root)}, taped);
  if (taped) {
    g.record("silog_loss", [pred = pred, gt, mask, params, s, n, root, out]() mutable {
      if (!out.has_grad() || !(root > 0.0)) return;
      const double upstream = static_cast<double>(out.grad()[0]);
      const double outer = upstream * params.alpha / (2.0 * root);
      const double mean_term = params.lambda * s.sum / (n * n);
      auto dp = pred.grad();
      auto p = pred.data();
      auto y = gt.data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!mask.valid[i]) continue;
        const double d = std::log(static_cast<double>(y[i])) - std::log(static_cast<double>(p[i]));
        const double d_inner = 2.0 * d / n - 2.0 * mean_term;
        dp[i] += static_cast<T>(outer * d_inner * (-1.0 / static_cast<double>(p[i])));
      }
    });
  }
  return out;
}

template <typename T>
MetricsReport eval_metrics(const Tensor<T>& pred, const Tensor<T>& gt, const ValidMask& mask) {
  check_operands(pred, gt, mask, "eval_metrics");
  auto p = pred.data();
  auto y = gt.data();
  double abs_rel = 0, sq_rel = 0, sq = 0, log10_err = 0, log_sq = 0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask.valid[i]) continue;
    const double est = std::clamp(static_cast<double>(p[i]), kPredictionFloorM, mask.cap_m);
    const double ref = static_cast<double>(y[i]);
    const double diff = est - ref;
    abs_rel += std::abs(diff) / ref;
    sq_rel += diff * diff / ref;
    sq += diff * diff;
    log10_err += std::abs(std::log10(est) - std::log10(ref));
    const double log_diff = std::log(est) - std::log(ref);
    log_sq += log_diff * log_diff;
    const double ratio = std::max(ref / est, est / ref);
    d1 += ratio < 1.25 ? 1 : 0;
    d2 += ratio < 1.25 * 1.25 ? 1 : 0;
    d3 += ratio < 1.25 * 1.25 * 1.25 ? 1 : 0;
  }
  const double n = static_cast<double>(mask.count);
  MetricsReport r;
  r.abs_rel = abs_rel / n;
  r.sq_rel = sq_rel / n;
  r.rms = std::sqrt(sq / n);
  r.log10 = log10_err / n;
  r.log_rms = std::sqrt(log_sq / n);
  r.delta1 = static_cast<double>(d1) / n;
  r.delta2 = static_cast<double>(d2) / n;
  r.delta3 = static_cast<double>(d3) / n;
  r.n_pixels = mask.count;
  return r;
}

MetricsReport aggregate(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  MetricsReport out;
  for (const auto& r : reports) out.n_pixels += r.n_pixels;
  if (out.n_pixels == 0) throw EmptyMaskError("aggregate: reports cover no pixels");
  const double total = static_cast<double>(out.n_pixels);
  for (const auto& r : reports) {
    const double w = static_cast<double>(r.n_pixels) / total;
    out.abs_rel += w * r.abs_rel;
    out.sq_rel += w * r.sq_rel;
    out.rms += w * r.rms;
    out.log10 += w * r.log10;
    out.log_rms += w * r.log_rms;
    out.delta1 += w * r.delta1;
    out.delta2 += w * r.delta2;
    out.delta3 += w * r.delta3;
  }
  return out;
}

nlohmann::json to_json(const MetricsReport& r) {
  return nlohmann::json{{"abs_rel", r.abs_rel},   {"sq_rel", r.sq_rel}, {"rms", r.rms},
                        {"log10", r.log10},       {"log_rms", r.log_rms},
                        {"delta1", r.delta1},     {"delta2", r.delta2}, {"delta3", r.delta3},
                        {"n_pixels", r.n_pixels}, {"evaluation", "valid-mask only, no crop"}};
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.abs_rel = j.at("abs_rel").get<double>();
  r.sq_rel = j.at("sq_rel").get<double>();
  r.rms = j.at("rms").get<double>();
  r.log10 = j.at("log10").get<double>();
  r.log_rms = j.at("log_rms").get<double>();
  r.delta1 = j.at("delta1").get<double>();
  r.delta2 = j.at("delta2").get<double>();
  r.delta3 = j.at("delta3").get<double>();
  r.n_pixels = j.at("n_pixels").get<std::size_t>();
  return r;
}

std::string format_table(std::span<const TableRow> rows) {
  const bool with_params =
      std::any_of(rows.begin(), rows.end(), [](const TableRow& r) { return r.params.has_value(); });
  std::size_t label_width = 6;
  for (const auto& r : rows) label_width = std::max(label_width, r.label.size());

  std::ostringstream os;
  char buf[64];
  auto cell = [&](const char* fmt, auto value) {
    std::snprintf(buf, sizeof(buf), fmt, value);
    os << buf;
  };
  std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(label_width), "Method");
  os << buf;
  if (with_params) cell("%10s", "#params");
  for (const char* h : {"abs rel", "sq rel", "rms", "log rms", "log10", "d<1.25", "d<1.25^2",
                        "d<1.25^3"}) {
    cell("%10s", h);
  }
  os << '\n';
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(label_width), r.label.c_str());
    os << buf;
    if (with_params) {
      if (r.params) {
        cell("%10zu", *r.params);
      } else {
        cell("%10s", "-");
      }
    }
    const auto& m = r.metrics;
    for (double v : {m.abs_rel, m.sq_rel, m.rms, m.log_rms, m.log10, m.delta1, m.delta2, m.delta3}) {
      cell("%10.4f", v);
    }
    os << '\n';
  }
  os << "(valid-mask evaluation, no crop)\n";
  return os.str();
}

#define FSCN_INSTANTIATE_LOSS(T)                                                                  \
  template ValidMask valid_mask(const Tensor<T>&, double);                                        \
  template double silog_inner(const Tensor<T>&, const Tensor<T>&, const ValidMask&, double);      \
  template Tensor<T> silog_loss(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const ValidMask&,  \
                                const LossParams&);                                               \
  template MetricsReport eval_metrics(const Tensor<T>&, const Tensor<T>&, const ValidMask&);

FSCN_INSTANTIATE_LOSS(float)
FSCN_INSTANTIATE_LOSS(double)

}  // namespace fscn
