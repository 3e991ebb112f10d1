#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dwiratio/error.hpp"
#include "dwiratio/run_config.hpp"
#include "dwiratio/trainer.hpp"
#include "support.hpp"

using namespace dwiratio;

namespace {

const Dataset& tiny_dataset() {
  static const Dataset d = [] {
    PhantomSpec spec;
    spec.dims = {16, 16, 4};
    spec.ring_width_voxels = 2.0;
    spec.bundle_width_voxels = 2.0;
    return make_dataset(2, spec, AcquisitionSpec(make_even_scheme(6, 1000.0, 1)), {0.5, 0.5}, 4);
  }();
  return d;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 3;
  c.validation_interval = 2;
  c.lr0 = 1e-3;
  c.lr_halving_period_epochs = 1;
  return c;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoFailure;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning rate schedule") {
  const TrainConfig c;
  CHECK(lr_at(0, c) == 1e-4);
  CHECK(lr_at(9, c) == 1e-4);
  CHECK(lr_at(10, c) == 5e-5);
  CHECK(lr_at(25, c) == 2.5e-5);
  for (std::size_t e = 0; e < 100; ++e) {
    CHECK(lr_at(e, c) == 1e-4 * std::pow(0.5, std::floor(static_cast<double>(e) / 10.0)));
  }
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidSpec);
  c = TrainConfig{};
  c.weights.mse = -1.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidSpec);
  c = TrainConfig{};
  c.lr0 = 0.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidSpec);
}

TEST_CASE("summary statistics") {
  CHECK(summarize({}) == TrainingSummary{});
  std::vector<TrainingRecord> r;
  for (std::size_t i = 0; i < 8; ++i) {
    TrainingRecord rec;
    rec.step = (i + 1) * 10;
    rec.val_psnr = static_cast<double>(i == 3 ? 50 : 20 + i);
    rec.val_d_ratio = 1.0 / static_cast<double>(i + 1);
    r.push_back(rec);
  }
  const auto s = summarize(r);
  CHECK(s.best_psnr == 50.0);
  CHECK(s.best_d_ratio == 0.125);
  CHECK(s.final_psnr == 27.0);
  CHECK(s.final_d_ratio == 0.125);
  CHECK(s.converged_psnr == doctest::Approx((50.0 + 24 + 25 + 26 + 27) / 5.0).epsilon(1e-15));
  CHECK(s.converged_d_ratio == doctest::Approx((1.0 / 4 + 1.0 / 5 + 1.0 / 6 + 1.0 / 7 + 1.0 / 8) / 5.0).epsilon(1e-15));
  const auto short_run = summarize(std::span(r).first(2));
  CHECK(short_run.converged_psnr == doctest::Approx(20.5).epsilon(1e-15));
}

TEST_CASE("evaluation of the identity network and order independence") {
  Dataset d = tiny_dataset();
  std::vector<TrainingSample> perfect;
  for (const auto& s : d.validation) perfect.push_back({s.gt, s.gt, s.b0});
  const auto ideal = evaluate(ConvNetParams{}, perfect);
  CHECK(ideal.psnr_mean == std::numeric_limits<double>::infinity());
  CHECK(ideal.d_ratio_mean == 0.0);

  const auto p = init_network(3);
  const auto a = evaluate(p, d.validation);
  std::reverse(d.validation.begin(), d.validation.end());
  const auto b = evaluate(p, d.validation);
  CHECK(a.psnr_mean == b.psnr_mean);
  CHECK(a.d_ratio_mean == b.d_ratio_mean);
  CHECK(std::isfinite(a.psnr_mean));
}

TEST_CASE("training log structure and schedule") {
  const auto cfg = tiny_config();
  const auto& d = tiny_dataset();
  std::vector<TrainingRecord> seen;
  const auto r = train(d, cfg, [&](const TrainingRecord& rec) { seen.push_back(rec); });
  const std::size_t steps_per_epoch = (d.train.size() + 3) / 4;
  CHECK(r.log.step_losses.size() == steps_per_epoch * 3);
  CHECK(seen == r.log.records);
  REQUIRE_FALSE(r.log.records.empty());
  CHECK(r.log.records.back().step == steps_per_epoch * 3);
  for (std::size_t i = 0; i < r.log.records.size(); ++i) {
    const auto& rec = r.log.records[i];
    if (i > 0) CHECK(rec.step > r.log.records[i - 1].step);
    CHECK(rec.epoch == (rec.step - 1) / steps_per_epoch);
    CHECK(rec.lr == 1e-3 * std::pow(0.5, static_cast<double>(rec.epoch)));
    CHECK(std::isfinite(rec.loss_total));
    CHECK(std::isfinite(rec.val_psnr));
    CHECK(rec.loss_total == doctest::Approx(15.0 * rec.loss_mse + 0.0025 * rec.loss_fft + 0.01 * rec.loss_ratio_log)
                                .epsilon(1e-10));
  }
  CHECK(r.log.summary == summarize(r.log.records));
  CHECK(r.params.all_finite());
}

TEST_CASE("deterministic training is bit-reproducible") {
  auto cfg = tiny_config();
  const auto a = train(tiny_dataset(), cfg);
  const auto b = train(tiny_dataset(), cfg);
  CHECK(a.log == b.log);
  CHECK(a.params == b.params);
  cfg.threads = 2;
  const auto c = train(tiny_dataset(), cfg);
  const auto e = train(tiny_dataset(), cfg);
  CHECK(c.log == e.log);
  CHECK(c.params == e.params);
  cfg.seed = 2;
  CHECK_FALSE(train(tiny_dataset(), cfg).params == c.params);
}

TEST_CASE("empty datasets are rejected") {
  Dataset d = tiny_dataset();
  d.validation.clear();
  CHECK(code_of([&] { train(d, tiny_config()); }) == ErrorCode::EmptyDataset);
  d = tiny_dataset();
  d.train.clear();
  CHECK(code_of([&] { train(d, tiny_config()); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("arms share data order and initialization") {
  auto cfg = tiny_config();
  cfg.epochs = 2;
  cfg.weights = LossWeights::baseline();
  const std::vector<std::uint64_t> seeds{3, 4};
  // With the ratio weight already zero both arms must train identically.
  const auto same = compare_arms(tiny_dataset(), cfg, seeds);
  REQUIRE(same.seeds.size() == 2);
  for (const auto& s : same.seeds) {
    CHECK(s.baseline.log == s.ratio.log);
    CHECK(s.d_ratio_difference_sign == 0);
  }
  CHECK(same.psnr_within_tolerance_count == 2);

  cfg.weights = LossWeights{};
  const auto report = compare_arms(tiny_dataset(), cfg, seeds);
  for (const auto& s : report.seeds) {
    CHECK(s.baseline.weights == LossWeights::baseline());
    CHECK(s.ratio.weights == LossWeights{});
    CHECK(s.baseline.log == train(tiny_dataset(), [&] {
      auto b = cfg;
      b.seed = s.seed;
      b.weights = LossWeights::baseline();
      return b;
    }()).log);
  }
}

TEST_CASE("two hundred steps on the desk dataset reduce the training loss") {
  const RunConfig rc;
  const auto d = make_dataset(rc.dataset.fields, rc.phantom, rc.acquisition.build(), rc.dataset.split, rc.seed);
  std::vector<double> first, last;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto cfg = rc.train_config();
    cfg.seed = seed;
    cfg.epochs = 2;
    Dataset cut = d;
    cut.train.resize(std::min<std::size_t>(cut.train.size(), 200 * cfg.batch_size / 2));
    cut.validation.resize(16);
    const auto r = train(cut, cfg);
    REQUIRE(r.log.step_losses.size() >= 200);
    first.push_back(r.log.step_losses[0]);
    last.push_back(r.log.step_losses[199]);
  }
  std::sort(first.begin(), first.end());
  std::sort(last.begin(), last.end());
  CHECK(last[1] < first[1]);
}

}  // TEST_SUITE
