#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fscn/gradcheck.hpp"
#include "fscn/loss.hpp"
#include "metrics_oracle.hpp"

using namespace fscn;

namespace {

Tensor<double> row(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor<double>(Shape{1, 1, 1, n}, std::move(v));
}

double loss_value(const Tensor<double>& pred, const Tensor<double>& gt, double cap, LossParams p = {}) {
  Graph<double> g(GradMode::kDisabled);
  return silog_loss(g, pred, gt, valid_mask(gt, cap), p).item();
}

std::vector<double> random_depths(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("valid_mask") {
  ValidMask m = valid_mask(row({0, 5, 90}), 80.0);
  CHECK(m.count == 1);
  CHECK(m.valid == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(valid_mask(row({1, 80, 3}), 80.0).count == 3);
  CHECK(valid_mask(row({-1, 2}), 80.0).count == 1);
  CHECK_THROWS_AS(valid_mask(row({0, 0, 0}), 80.0), EmptyMaskError);
  CHECK_THROWS_AS(valid_mask(row({1}), 0.0), std::invalid_argument);
}

TEST_CASE("loss params validation") {
  CHECK_NOTHROW(LossParams{}.validate());
  CHECK_THROWS(LossParams{1.5, 10}.validate());
  CHECK_THROWS(LossParams{-0.1, 10}.validate());
  CHECK_THROWS(LossParams{0.5, 0}.validate());
}

TEST_CASE("loss identities") {
  Tensor<double> gt = row({1.5, 3, 7, 20, 55});
  CHECK(loss_value(gt, gt, 80) == 0.0);
  for (double s : {0.5, 2.0, 10.0}) {
    std::vector<double> p;
    for (double v : gt.data()) p.push_back(s * v);
    CHECK(std::abs(silog_inner(row(p), gt, valid_mask(gt, 80.0), 1.0)) <= 1e-9);
  }
  const double e = std::exp(1.0);
  CHECK(silog_inner(row({1, 1}), row({e, e}), valid_mask(row({e, e}), 80.0), 0.85) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(std::abs(loss_value(row({1, 1}), row({e, e}), 80) - 10 * std::sqrt(0.15)) <= 1e-6);
}

TEST_CASE("masked pixels do not contribute") {
  Tensor<double> gt = row({2, 0, 4, 100});
  Tensor<double> pred_a = row({1, 5, 3, 7});
  Tensor<double> pred_b = row({1, 60, 3, 0.5});
  CHECK(loss_value(pred_a, gt, 80) == loss_value(pred_b, gt, 80));
}

TEST_CASE("loss is non-negative and permutation invariant") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    auto gt = random_depths(rng, 64, 0.5, 80);
    auto pred = random_depths(rng, 64, 0.5, 80);
    std::uniform_real_distribution<double> lam(0, 1);
    const LossParams p{lam(rng), 10};
    const double base = loss_value(row(pred), row(gt), 80, p);
    CHECK(base >= 0.0);
    std::vector<std::size_t> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> gp(64), pp(64);
    for (std::size_t i = 0; i < 64; ++i) {
      gp[i] = gt[perm[i]];
      pp[i] = pred[perm[i]];
    }
    CHECK(loss_value(row(pp), row(gp), 80, p) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("non-positive prediction on a valid pixel is rejected") {
  Tensor<double> gt = row({1, 2});
  Graph<double> g;
  CHECK_THROWS_AS(silog_loss(g, row({1, 0}), gt, valid_mask(gt, 80.0), LossParams{}), std::domain_error);
  CHECK_THROWS_AS(silog_loss(g, row({1, 2, 3}), gt, valid_mask(gt, 80.0), LossParams{}), ShapeError);
}

TEST_CASE("zero loss has zero gradient") {
  Tensor<double> gt = row({1, 2, 3});
  Tensor<double> pred(Shape{1, 1, 1, 3}, {1, 2, 3}, true);
  Graph<double> g;
  Tensor<double> l = silog_loss(g, pred, gt, valid_mask(gt, 80.0), LossParams{});
  g.backward(l);
  for (double v : pred.grad()) CHECK(v == 0.0);
}

TEST_CASE("silog gradient matches central differences at 1e-4") {
  std::mt19937_64 rng(2);
  for (Shape s : {Shape{1, 1, 4, 4}, Shape{2, 1, 3, 5}, Shape{3, 1, 8, 2}}) {
    for (double lambda : {0.85, 0.0, 0.5}) {
      auto gt = random_depths(rng, s.numel(), 0.5, 70);
      gt[0] = 0.0;  // one masked pixel
      auto pv = random_depths(rng, s.numel(), 0.5, 70);
      const Tensor<double> gtt(s, gt);
      const ValidMask mask = valid_mask(gtt, 80.0);
      Tensor<double> pred(s, pv);
      GradCheckOptions opt;
      opt.tol = 1e-4;
      auto r = grad_check(
          "silog",
          [&](Graph<double>& g) { return silog_loss(g, pred, gtt, mask, LossParams{lambda, 10}); },
          {{"pred", pred}}, opt);
      INFO(s.str() << " lambda " << lambda << " err " << r.max_rel_error);
      CHECK(r.passed);
    }
  }
}

TEST_CASE("metrics worked example") {
  Tensor<double> gt = row({1, 2, 4});
  MetricsReport m = eval_metrics(row({1, 2, 8}), gt, valid_mask(gt, 80.0));
  CHECK(m.abs_rel == doctest::Approx(1.0 / 3));
  CHECK(m.sq_rel == doctest::Approx(4.0 / 3));
  CHECK(m.rms == doctest::Approx(std::sqrt(16.0 / 3)));
  CHECK(m.log10 == doctest::Approx(std::log10(2.0) / 3));
  CHECK(m.log_rms == doctest::Approx(std::sqrt(std::log(2.0) * std::log(2.0) / 3)));
  CHECK(m.log10 == doctest::Approx(0.10034).epsilon(1e-4));
  CHECK(m.log_rms == doctest::Approx(0.40020).epsilon(1e-4));
  CHECK(m.delta1 == doctest::Approx(2.0 / 3));
  CHECK(m.delta2 == doctest::Approx(2.0 / 3));
  CHECK(m.delta3 == doctest::Approx(2.0 / 3));
  CHECK(m.n_pixels == 3);

  MetricsReport same = eval_metrics(gt, gt, valid_mask(gt, 80.0));
  CHECK(same.abs_rel == 0);
  CHECK(same.rms == 0);
  CHECK(same.delta1 == 1);
  CHECK(same.delta3 == 1);
}

TEST_CASE("metrics clamp predictions into [1e-3, cap]") {
  Tensor<double> gt = row({10, 5});
  MetricsReport m = eval_metrics(row({200, 0}), gt, valid_mask(gt, 20.0));
  oracle::Metrics o = oracle::depth_metrics({200, 0}, {10, 5}, 20.0);
  CHECK(m.rms == doctest::Approx(o.rms));
  CHECK(m.rms == doctest::Approx(std::sqrt((100.0 + (5 - 1e-3) * (5 - 1e-3)) / 2)));
}

TEST_CASE("metrics homogeneity") {
  std::mt19937_64 rng(3);
  auto gt = random_depths(rng, 50, 0.5, 5);
  auto pred = random_depths(rng, 50, 0.5, 5);
  std::vector<double> gt10, pred10;
  for (double v : gt) gt10.push_back(10 * v);
  for (double v : pred) pred10.push_back(10 * v);
  MetricsReport a = eval_metrics(row(pred), row(gt), valid_mask(row(gt), 80.0));
  MetricsReport b = eval_metrics(row(pred10), row(gt10), valid_mask(row(gt10), 80.0));
  CHECK(b.abs_rel == doctest::Approx(a.abs_rel));
  CHECK(b.log10 == doctest::Approx(a.log10));
  CHECK(b.log_rms == doctest::Approx(a.log_rms));
  CHECK(b.delta1 == a.delta1);
  CHECK(b.delta2 == a.delta2);
  CHECK(b.delta3 == a.delta3);
  CHECK(b.rms == doctest::Approx(10 * a.rms));
  CHECK(b.sq_rel == doctest::Approx(10 * a.sq_rel));
}

TEST_CASE("metrics match the scalar oracle on 100 random maps") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(1, 32);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = dim(rng), w = dim(rng);
    const double cap = trial % 2 ? 80.0 : 10.0;
    std::vector<double> gt(h * w), pred(h * w);
    for (int i = 0; i < h * w; ++i) {
      gt[i] = u(rng) < 0.1 ? 0.0 : u(rng) * cap * 1.1;
      pred[i] = gt[i] * std::exp(u(rng) - 0.5) + (u(rng) < 0.05 ? 100 : 0);
    }
    gt[0] = cap * 0.5;
    Tensor<double> gtt(Shape{1, 1, h, w}, gt);
    MetricsReport m = eval_metrics(Tensor<double>(Shape{1, 1, h, w}, pred), gtt, valid_mask(gtt, cap));
    oracle::Metrics o = oracle::depth_metrics(pred, gt, cap);
    CHECK(static_cast<long>(m.n_pixels) == o.n);
    CHECK(std::abs(m.abs_rel - o.abs_rel) <= 1e-6);
    CHECK(std::abs(m.sq_rel - o.sq_rel) <= 1e-6);
    CHECK(std::abs(m.rms - o.rms) <= 1e-6);
    CHECK(std::abs(m.log10 - o.log10) <= 1e-6);
    CHECK(std::abs(m.log_rms - o.log_rms) <= 1e-6);
    CHECK(std::abs(m.delta1 - o.delta1) <= 1e-6);
    CHECK(std::abs(m.delta2 - o.delta2) <= 1e-6);
    CHECK(std::abs(m.delta3 - o.delta3) <= 1e-6);
    CHECK(m.delta1 <= m.delta2);
    CHECK(m.delta2 <= m.delta3);
  }
}

TEST_CASE("float metrics agree with double") {
  Tensor<float> gt(Shape{1, 1, 1, 3}, {1.f, 2.f, 4.f});
  MetricsReport m = eval_metrics(Tensor<float>(Shape{1, 1, 1, 3}, {1.f, 2.f, 8.f}), gt, valid_mask(gt, 80.0));
  CHECK(m.abs_rel == doctest::Approx(1.0 / 3));
}

TEST_CASE("aggregate weights by pixel count") {
  MetricsReport a;
  a.n_pixels = 1;
  MetricsReport b;
  b.abs_rel = 1.0 / 3;
  b.n_pixels = 3;
  std::vector<MetricsReport> rs{a, b};
  CHECK(aggregate(rs).abs_rel == doctest::Approx(0.25));
  CHECK(aggregate(rs).n_pixels == 4);
  std::vector<MetricsReport> one{b};
  CHECK(aggregate(one).abs_rel == b.abs_rel);
  std::vector<MetricsReport> twice{b, b};
  CHECK(aggregate(twice).abs_rel == doctest::Approx(b.abs_rel));
  CHECK_THROWS(aggregate(std::vector<MetricsReport>{}));
}

TEST_CASE("json round trip and table") {
  Tensor<double> gt = row({1, 2, 4});
  MetricsReport m = eval_metrics(row({1, 2, 8}), gt, valid_mask(gt, 80.0));
  MetricsReport back = metrics_from_json(to_json(m));
  CHECK(back.rms == m.rms);
  CHECK(back.delta2 == m.delta2);
  CHECK(back.n_pixels == m.n_pixels);
  std::vector<TableRow> rows{{"full-skip", 1234, m}, {"no-skip", std::nullopt, m}};
  const std::string table = format_table(rows);
  CHECK(table.find("#params") != std::string::npos);
  CHECK(table.find("full-skip") != std::string::npos);
  CHECK(table.find("1234") != std::string::npos);
  CHECK(table.find("0.3333") != std::string::npos);
}
