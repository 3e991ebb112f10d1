#include "dwiratio/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <mutex>
#include <numeric>
#include <string>

#include "dwiratio/error.hpp"
#include "dwiratio/optim.hpp"
#include "dwiratio/random.hpp"

namespace dwiratio {

namespace {

/// Sum in ascending order so the result does not depend on input order.
double order_independent_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

void add_into(ParamGradients& dst, const ParamGradients& src) {
  auto d = dst.tensors();
  const auto s = src.tensors();
  for (std::size_t t = 0; t < d.size(); ++t) {
    for (std::size_t i = 0; i < d[t].size(); ++i) d[t][i] += s[t][i];
  }
}

struct ShardOutcome {
  ParamGradients grads;
  double total = 0.0;
  double mse = 0.0;
  double fft = 0.0;
  double ratio_log = 0.0;
};

ShardOutcome shard_gradient(const ConvNetParams& params, std::span<const TrainingSample* const> shard,
                            const LossWeights& weights, double batch_scale) {
  std::vector<const Image2D*> inputs;
  inputs.reserve(shard.size());
  for (const auto* s : shard) inputs.push_back(&s->input);
  auto fwd = forward_batch(params, inputs);

  ShardOutcome out;
  std::vector<Image2D> loss_grads;
  loss_grads.reserve(shard.size());
  for (std::size_t i = 0; i < shard.size(); ++i) {
    auto terms = total_loss_terms(fwd.predictions[i], shard[i]->gt, *shard[i]->b0, weights);
    out.total += terms.total.value;
    out.mse += terms.mse;
    out.fft += terms.fft;
    out.ratio_log += terms.ratio_log;
    for (double& g : terms.total.gradient.values()) g *= batch_scale;
    loss_grads.push_back(std::move(terms.total.gradient));
  }
  out.grads = backward(params, fwd.cache, loss_grads).params;
  return out;
}

ShardOutcome batch_gradient(const ConvNetParams& params, std::span<const TrainingSample* const> batch,
                            const TrainConfig& cfg) {
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t shards = std::clamp<std::size_t>(cfg.threads, 1, batch.size());
  if (shards == 1) return shard_gradient(params, batch, cfg.weights, scale);

  const std::size_t per = (batch.size() + shards - 1) / shards;
  std::vector<std::span<const TrainingSample* const>> pieces;
  for (std::size_t begin = 0; begin < batch.size(); begin += per) {
    pieces.push_back(batch.subspan(begin, std::min(per, batch.size() - begin)));
  }

  ShardOutcome total;
  auto merge = [&total](const ShardOutcome& o) {
    add_into(total.grads, o.grads);
    total.total += o.total;
    total.mse += o.mse;
    total.fft += o.fft;
    total.ratio_log += o.ratio_log;
  };

  if (cfg.deterministic) {
    std::vector<std::future<ShardOutcome>> futures;
    for (auto piece : pieces) {
      futures.push_back(std::async(std::launch::async, shard_gradient, std::cref(params), piece,
                                   std::cref(cfg.weights), scale));
    }
    for (auto& f : futures) merge(f.get());
  } else {
    std::mutex mu;
    std::vector<std::future<void>> futures;
    for (auto piece : pieces) {
      futures.push_back(std::async(std::launch::async, [&, piece] {
        auto o = shard_gradient(params, piece, cfg.weights, scale);
        const std::lock_guard lock(mu);
        merge(o);
      }));
    }
    for (auto& f : futures) f.get();
  }
  return total;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::InvalidSpec, "batch_size must be >= 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw Error(ErrorCode::InvalidSpec, "lr0 must be > 0");
  if (lr_halving_period_epochs < 1) throw Error(ErrorCode::InvalidSpec, "lr halving period must be >= 1");
  if (validation_interval < 1) throw Error(ErrorCode::InvalidSpec, "validation_interval must be >= 1");
  if (threads < 1) throw Error(ErrorCode::InvalidSpec, "threads must be >= 1");
  if (!(weights.mse >= 0.0 && weights.fft >= 0.0 && weights.ratio_log >= 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "loss weights must be >= 0");
  }
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  const auto halvings = static_cast<int>(epoch / cfg.lr_halving_period_epochs);
  return std::ldexp(cfg.lr0, -halvings);
}

TrainingSummary summarize(std::span<const TrainingRecord> records) {
  TrainingSummary s;
  if (records.empty()) return s;
  s.best_psnr = records[0].val_psnr;
  s.best_d_ratio = records[0].val_d_ratio;
  for (const auto& r : records) {
    s.best_psnr = std::max(s.best_psnr, r.val_psnr);
    s.best_d_ratio = std::min(s.best_d_ratio, r.val_d_ratio);
  }
  s.final_psnr = records.back().val_psnr;
  s.final_d_ratio = records.back().val_d_ratio;
  const std::size_t window = std::min(kConvergenceWindow, records.size());
  for (std::size_t i = records.size() - window; i < records.size(); ++i) {
    s.converged_psnr += records[i].val_psnr;
    s.converged_d_ratio += records[i].val_d_ratio;
  }
  s.converged_psnr /= static_cast<double>(window);
  s.converged_d_ratio /= static_cast<double>(window);
  return s;
}

EvaluationResult evaluate(const ConvNetParams& params, std::span<const TrainingSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");
  std::vector<double> psnrs, ratios;
  psnrs.reserve(samples.size());
  ratios.reserve(samples.size());
  for (const auto& s : samples) {
    // One sample per pass so each prediction is independent of its neighbours.
    const auto pred = forward(params, s.input).prediction;
    psnrs.push_back(psnr(pred, s.gt));
    ratios.push_back(ratio_distance(pred, s.gt, *s.b0));
  }
  return {order_independent_mean(std::move(psnrs)), order_independent_mean(std::move(ratios))};
}

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const RecordCallback& on_record) {
  cfg.validate();
  if (dataset.train.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (dataset.validation.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");

  TrainResult result;
  result.params = init_network(derive_seed(cfg.seed, 1));
  AdamState adam = AdamState::for_params(result.params);
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, 2);

  const std::size_t n = dataset.train.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;

  std::vector<std::size_t> order(n);
  std::vector<const TrainingSample*> batch;
  std::size_t step = 0;
  double run_total = 0.0, run_mse = 0.0, run_fft = 0.0, run_ratio = 0.0;
  std::size_t run_count = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    PhiloxStream rng(shuffle_seed, epoch);
    deterministic_shuffle(std::span<std::size_t>(order), rng);
    const double lr = lr_at(epoch, cfg);

    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&dataset.train[order[i]]);

      const auto outcome = batch_gradient(result.params, batch, cfg);
      adam_step(result.params, outcome.grads, adam, lr);
      ++step;

      const auto count = static_cast<double>(batch.size());
      result.log.step_losses.push_back(outcome.total / count);
      run_total += outcome.total / count;
      run_mse += outcome.mse / count;
      run_fft += outcome.fft / count;
      run_ratio += outcome.ratio_log / count;
      ++run_count;

      if (step % cfg.validation_interval == 0 || step == total_steps) {
        const auto eval = evaluate(result.params, dataset.validation);
        const auto k = static_cast<double>(run_count);
        TrainingRecord rec{step, epoch, lr, run_total / k, run_mse / k, run_fft / k, run_ratio / k,
                           eval.psnr_mean, eval.d_ratio_mean};
        result.log.records.push_back(rec);
        if (on_record) on_record(rec);
        run_total = run_mse = run_fft = run_ratio = 0.0;
        run_count = 0;
      }
    }
  }
  result.log.summary = summarize(result.log.records);
  return result;
}

ComparisonReport compare_arms(const Dataset& dataset, const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                              const std::function<void(std::uint64_t, bool, const TrainingRecord&)>& on_record) {
  if (seeds.empty()) throw Error(ErrorCode::InvalidSpec, "compare_arms needs at least one seed");
  ComparisonReport report;
  for (const auto seed : seeds) {
    SeedComparison cmp;
    cmp.seed = seed;
    for (const bool ratio_arm : {false, true}) {
      TrainConfig arm_cfg = cfg;
      arm_cfg.seed = seed;
      if (!ratio_arm) arm_cfg.weights.ratio_log = 0.0;
      RecordCallback cb;
      if (on_record) cb = [&](const TrainingRecord& r) { on_record(seed, ratio_arm, r); };
      auto trained = train(dataset, arm_cfg, cb);
      auto& arm = ratio_arm ? cmp.ratio : cmp.baseline;
      arm.weights = arm_cfg.weights;
      arm.log = std::move(trained.log);
    }
    const double diff = cmp.ratio.log.summary.converged_d_ratio - cmp.baseline.log.summary.converged_d_ratio;
    cmp.d_ratio_difference_sign = diff < 0.0 ? -1 : (diff > 0.0 ? 1 : 0);
    if (cmp.d_ratio_difference_sign < 0) ++report.ratio_lower_d_ratio_count;
    if (cmp.ratio.log.summary.final_psnr >= cmp.baseline.log.summary.final_psnr - kPsnrTolerance) {
      ++report.psnr_within_tolerance_count;
    }
    report.seeds.push_back(std::move(cmp));
  }
  return report;
}

}  // namespace dwiratio
