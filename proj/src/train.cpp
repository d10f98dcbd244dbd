#include "fscn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fscn/ops.hpp"

namespace fscn {

void AdamWParams::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in (0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  loss.validate();
  optimizer.validate();
}

template <typename T>
OptimState<T> make_optim_state(std::span<const ParamRef<T>> params, const AdamWParams& hyper) {
  hyper.validate();
  OptimState<T> state;
  state.hyper = hyper;
  for (const auto& p : params) {
    state.m.emplace_back(p.tensor.numel(), T(0));
    state.v.emplace_back(p.tensor.numel(), T(0));
  }
  return state;
}

template <typename T>
void adamw_step(std::span<const ParamRef<T>> params, OptimState<T>& state, double lr) {
  if (params.size() != state.m.size()) {
    throw std::invalid_argument("adamw_step: optimizer state does not match parameter list");
  }
  for (const auto& p : params) {
    if (p.tensor.has_grad() && !all_finite<T>(p.tensor.grad())) {
      throw NonFiniteError("adamw_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const AdamWParams& hp = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(hp.beta1, t);
  const double bias2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T> tensor = params[k].tensor;
    const double decay = params[k].kind == ParamKind::kWeight ? hp.weight_decay : 0.0;
    auto theta = tensor.data();
    auto m = std::span<T>(state.m[k]);
    auto v = std::span<T>(state.v[k]);
    const bool has_grad = tensor.has_grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = has_grad ? static_cast<double>(tensor.grad()[i]) : 0.0;
      const double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
      const double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / bias1;
      const double v_hat = vi / bias2;
      const double th = theta[i];
      theta[i] = static_cast<T>(th - lr * (m_hat / (std::sqrt(v_hat) + hp.eps) + decay * th));
    }
  }
}

double lr_at(std::int64_t step, double lr0, std::int64_t total_steps) {
  if (total_steps <= 0) return lr0;
  const double lr_end = lr0 / 10.0;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return (lr0 - lr_end) * std::pow(1.0 - frac, 0.9) + lr_end;
}

Trainer::Trainer(FscnModel<float> model, std::vector<DepthSample> dataset, TrainConfig config,
                 AugmentConfig augment, double depth_cap_m, std::string config_json)
    : model_(std::move(model)),
      dataset_(std::move(dataset)),
      config_(config),
      augment_(augment),
      depth_cap_m_(depth_cap_m),
      config_json_(std::move(config_json)),
      rng_(mix_seed(config.seed, 0x7452)) {
  config_.validate();
  augment_.validate();
  if (dataset_.empty()) throw DataError("training dataset is empty");
  params_ = model_.parameters();
  optim_ = make_optim_state<float>(params_, config_.optimizer);
  total_steps_ = config_.total_steps > 0 ? config_.total_steps : config_.epochs * steps_per_epoch();
  cursor_ = dataset_.size();  // forces a shuffle before the first batch
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<std::int64_t>(dataset_.size());
  return (n + config_.batch_size - 1) / config_.batch_size;
}

std::vector<std::size_t> Trainer::next_batch_indices() {
  if (cursor_ >= order_.size()) {
    order_.resize(dataset_.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  const std::size_t end = std::min<std::size_t>(order_.size(), cursor_ + config_.batch_size);
  std::vector<std::size_t> indices(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  return indices;
}

LossRecord Trainer::train_step() {
  const auto indices = next_batch_indices();
  std::vector<DepthSample> samples;
  samples.reserve(indices.size());
  for (std::size_t idx : indices) {
    std::mt19937_64 sample_rng(rng_());
    samples.push_back(augment(dataset_[idx], augment_, sample_rng));
  }
  Batch batch = make_batch(samples, depth_cap_m_);

  for (auto& p : params_) p.tensor.zero_grad();
  Graph<float> graph;
  Tensor<float> pred = fscn_forward(graph, model_, batch.rgb);
  Tensor<float> loss = silog_loss(graph, pred, batch.depth, batch.mask, config_.loss);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NonFiniteError("non-finite loss at step " + std::to_string(step_));
  }
  graph.backward(loss);

  const double lr = lr_at(step_, config_.lr0, total_steps_);
  adamw_step<float>(params_, optim_, lr);
  LossRecord record{step_, lr, value};
  ++step_;
  log_.push_back(record);
  return record;
}

const std::vector<LossRecord>& Trainer::run(std::int64_t until, const CheckpointSink& sink) {
  const std::int64_t stop = until < 0 ? total_steps_ : std::min(until, total_steps_);
  while (step_ < stop) {
    train_step();
    if (sink && config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0 && step_ < stop) {
      sink(checkpoint());
    }
  }
  if (sink) sink(checkpoint());
  return log_;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config_json = config_json_;
  ckpt.step = step_;
  for (const auto& p : params_) {
    ckpt.params.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  }
  ckpt.optim = optim_;
  std::ostringstream rng_text;
  rng_text << rng_;
  ckpt.rng_state = rng_text.str();
  ckpt.order = order_;
  ckpt.cursor = cursor_;
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.params.size() != params_.size() || ckpt.optim.m.size() != params_.size() ||
      ckpt.optim.v.size() != params_.size()) {
    throw std::invalid_argument("checkpoint does not match the model architecture");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (ckpt.params[k].size() != params_[k].tensor.numel() ||
        ckpt.optim.m[k].size() != params_[k].tensor.numel() ||
        ckpt.optim.v[k].size() != params_[k].tensor.numel()) {
      throw std::invalid_argument("checkpoint tensor size mismatch at '" + params_[k].name + "'");
    }
  }
  if (ckpt.order.size() != 0 && ckpt.order.size() != dataset_.size()) {
    throw std::invalid_argument("checkpoint data order does not match the dataset size");
  }
  std::mt19937_64 rng;
  std::istringstream rng_text(ckpt.rng_state);
  rng_text >> rng;
  if (!rng_text) throw std::invalid_argument("checkpoint rng state is malformed");

  for (std::size_t k = 0; k < params_.size(); ++k) {
    std::copy(ckpt.params[k].begin(), ckpt.params[k].end(), params_[k].tensor.data().begin());
  }
  optim_ = ckpt.optim;
  rng_ = rng;
  order_ = ckpt.order;
  cursor_ = ckpt.order.empty() ? dataset_.size() : ckpt.cursor;
  step_ = ckpt.step;
}

Tensor<float> predict(const FscnModel<float>& model, const Tensor<float>& rgb) {
  Graph<float> graph(GradMode::kDisabled);
  return fscn_forward(graph, model, rgb);
}

std::vector<MetricsReport> evaluate(const FscnModel<float>& model,
                                    std::span<const DepthSample> samples, double depth_cap_m,
                                    int batch_size) {
  if (batch_size <= 0) throw std::invalid_argument("evaluate: batch_size must be positive");
  std::vector<DepthSample> cropped;
  cropped.reserve(samples.size());
  for (const auto& s : samples) {
    cropped.push_back(center_crop(s, model.config.input_h, model.config.input_w));
  }
  std::vector<MetricsReport> reports;
  for (std::size_t begin = 0; begin < cropped.size(); begin += batch_size) {
    const std::size_t end = std::min(cropped.size(), begin + batch_size);
    Batch batch = make_batch(std::span<const DepthSample>(cropped).subspan(begin, end - begin),
                             depth_cap_m);
    Tensor<float> pred = predict(model, batch.rgb);
    const Shape s = pred.shape();
    for (int i = 0; i < s.n; ++i) {
      const auto offset = static_cast<std::ptrdiff_t>(i * s.plane());
      Tensor<float> p(Shape{1, 1, s.h, s.w},
                      std::vector<float>(pred.data().begin() + offset,
                                         pred.data().begin() + offset + s.plane()));
      const Tensor<float>& gt = cropped[begin + i].depth;
      reports.push_back(eval_metrics(p, gt, valid_mask(gt, depth_cap_m)));
    }
  }
  return reports;
}

template OptimState<float> make_optim_state(std::span<const ParamRef<float>>, const AdamWParams&);
template OptimState<double> make_optim_state(std::span<const ParamRef<double>>, const AdamWParams&);
template void adamw_step(std::span<const ParamRef<float>>, OptimState<float>&, double);
template void adamw_step(std::span<const ParamRef<double>>, OptimState<double>&, double);

}  // namespace fscn
