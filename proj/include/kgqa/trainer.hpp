#pragma once

// Joint training: gradient accumulation, adaptive-moment updates, early
// stopping on dev Hits@1, and a finite-difference gradient audit.

#include <chrono>
#include <iostream>

#include "kgqa/data.hpp"

namespace kgqa {

struct TrainConfig {
  uint32_t batch_size = 32;
  uint32_t grad_accumulation = 1;
  uint32_t max_steps = 20000;  // accumulated optimizer steps
  double learning_rate = 1e-4;
  uint32_t t_max = 1;
  uint32_t eval_every = 200;  // accumulated steps between dev evaluations
  uint32_t patience = 5;      // evaluations without improvement before stopping
  Variant variant = Variant::e2e;
  uint64_t seed = 1;

  void validate() const {
    if (batch_size == 0 || grad_accumulation == 0 || max_steps == 0 ||
        eval_every == 0 || patience == 0 || t_max == 0)
      throw input_error("train config: counts must be positive");
    if (learning_rate < 0) throw input_error("train config: learning_rate must be >= 0");
  }
};

class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ModelParams& params, const ModelParams& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(b1_, double(t_));
    double bc2 = 1.0 - std::pow(b2_, double(t_));
    size_t slot = 0;
    std::vector<const Vec*> gvecs;
    grads.visit([&](const std::string&, const Vec& g) { gvecs.push_back(&g); });
    params.visit([&](const std::string&, Vec& p) {
      const Vec& g = *gvecs[slot];
      if (slot >= m_.size()) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
      Vec& m = m_[slot];
      Vec& v = v_[slot];
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
        v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
        p[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      }
      ++slot;
    });
  }

 private:
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Vec> m_, v_;
};

struct StepMetrics {
  double loss = 0.0;    // mean over used examples in the cycle
  size_t used = 0;
  size_t skipped = 0;
  bool aborted = false;  // non-finite loss; no update applied
};

// One accumulated optimizer step: `grad_accumulation` micro-batches drawn
// from `batches`, per-micro-batch mean gradients averaged across the cycle.
class Trainer {
 public:
  Trainer(const PipelineContext& ctx, const TrainConfig& cfg)
      : ctx_(ctx), cfg_(cfg), opt_(cfg.learning_rate) {
    cfg_.validate();
  }

  StepMetrics train_step(const std::vector<const QAExample*>& batch,
                         ModelParams& params) {
    if (batch.empty()) throw input_error("train_step: empty batch");
    if (accum_.span_scorer.empty()) accum_ = params.zeros_like();
    ModelParams micro = params.zeros_like();
    StepMetrics m;
    double loss_sum = 0.0;
    for (const QAExample* ex : batch) {
      ForwardResult fr = forward_example(ctx_, params, *ex, cfg_.variant, false);
      if (fr.skipped) {
        ++m.skipped;
        continue;
      }
      double loss = backward_example(ctx_, params, *ex, cfg_.variant, fr, micro);
      if (!std::isfinite(loss)) {
        std::cerr << "train_step: non-finite loss on question: " << ex->question
                  << "\n  params finite: " << params.all_params_finite() << "\n";
        m.aborted = true;
        reset_cycle();
        return m;
      }
      loss_sum += loss;
      ++m.used;
    }
    if (m.used > 0) {
      double w = 1.0 / (double(m.used) * double(cfg_.grad_accumulation));
      size_t slot = 0;
      std::vector<Vec*> dsts;
      accum_.visit([&](const std::string&, Vec& v) { dsts.push_back(&v); });
      micro.visit([&](const std::string&, Vec& v) {
        axpy(w, v, *dsts[slot]);
        ++slot;
      });
      cycle_loss_ += loss_sum / double(m.used);
      m.loss = loss_sum / double(m.used);
    }
    if (++micro_count_ == cfg_.grad_accumulation) {
      opt_.step(params, accum_);
      reset_cycle();
    }
    return m;
  }

  bool cycle_open() const { return micro_count_ != 0; }

 private:
  void reset_cycle() {
    micro_count_ = 0;
    cycle_loss_ = 0.0;
    accum_.visit([](const std::string&, Vec& v) { std::fill(v.begin(), v.end(), 0.0); });
  }

  PipelineContext ctx_;
  TrainConfig cfg_;
  AdamOptimizer opt_;
  ModelParams accum_;
  uint32_t micro_count_ = 0;
  double cycle_loss_ = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  double best_dev_hits1 = -1.0;
  uint32_t steps = 0;
  std::string log;  // TSV: step, train_loss, dev_hits1, lr, wall_seconds
};

inline TrainResult train(const PipelineContext& ctx, ModelParams params,
                         const std::vector<QAExample>& train_split,
                         const std::vector<QAExample>& dev_split,
                         const TrainConfig& cfg, std::ostream* progress = nullptr) {
  cfg.validate();
  if (train_split.empty() || dev_split.empty())
    throw input_error("train: train and dev splits must be nonempty");
  Trainer trainer(ctx, cfg);
  Rng rng(cfg.seed);
  auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.log = "step\ttrain_loss\tdev_hits1\tlr\twall_seconds\n";
  result.best_params = params;

  std::vector<const QAExample*> order;
  for (const auto& ex : train_split) order.push_back(&ex);

  uint32_t step = 0;
  uint32_t evals_without_improvement = 0;
  size_t cursor = order.size();  // force initial shuffle
  double window_loss = 0.0;
  size_t window_cycles = 0;
  bool stop = false;
  while (!stop && step < cfg.max_steps) {
    // one accumulated step = grad_accumulation micro-batches
    double cycle_loss = 0.0;
    size_t cycle_used = 0;
    for (uint32_t micro = 0; micro < cfg.grad_accumulation; ++micro) {
      std::vector<const QAExample*> batch;
      for (uint32_t b = 0; b < cfg.batch_size; ++b) {
        if (cursor >= order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        batch.push_back(order[cursor++]);
      }
      StepMetrics m = trainer.train_step(batch, params);
      if (m.aborted) return result;  // diagnostic already emitted
      if (m.used) {
        cycle_loss += m.loss;
        ++cycle_used;
      }
    }
    ++step;
    if (cycle_used) {
      window_loss += cycle_loss / double(cycle_used);
      ++window_cycles;
    }
    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      EvalMetrics dev = evaluate(ctx, params, dev_split, cfg.variant);
      double mean_loss = window_cycles ? window_loss / double(window_cycles) : 0.0;
      double wall = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0).count();
      char line[160];
      std::snprintf(line, sizeof(line), "%u\t%.6f\t%.4f\t%g\t%.1f\n", step,
                    mean_loss, dev.hits_at_1, cfg.learning_rate, wall);
      result.log += line;
      if (progress) (*progress) << line << std::flush;
      window_loss = 0.0;
      window_cycles = 0;
      if (dev.hits_at_1 > result.best_dev_hits1) {
        result.best_dev_hits1 = dev.hits_at_1;
        result.best_params = params;
        evals_without_improvement = 0;
      } else if (++evals_without_improvement > cfg.patience) {
        stop = true;
      }
    }
  }
  result.steps = step;
  return result;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient audit

struct GradAuditReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  size_t checked = 0;
  bool pass(double tol) const { return max_rel_error < tol; }
};

// Compares every analytic parameter gradient against central finite
// differences (h = 1e-5) on <= max_coords sampled coordinates per tensor.
// Entries where both sides are below 1e-8 in magnitude are excluded.
inline GradAuditReport grad_audit(const PipelineContext& ctx, ModelParams params,
                                  const QAExample& ex, Variant variant,
                                  size_t max_coords = 500, uint64_t seed = 7) {
  ForwardResult fr = forward_example(ctx, params, ex, variant, false);
  if (fr.skipped)
    throw input_error("grad_audit: example skipped (" + fr.skip_reason + ")");
  ModelParams analytic = params.zeros_like();
  backward_example(ctx, params, ex, variant, fr, analytic);

  auto loss_at = [&](const ModelParams& p) {
    return forward_example(ctx, p, ex, variant, true).loss;
  };

  const double h = 1e-5;
  Rng rng(seed);
  GradAuditReport rep;
  std::vector<std::pair<std::string, Vec*>> grad_tensors;
  analytic.visit([&](const std::string& n, Vec& v) { grad_tensors.emplace_back(n, &v); });
  size_t slot = 0;
  params.visit([&](const std::string& name, Vec& pv) {
    const Vec& gv = *grad_tensors[slot++].second;
    std::vector<size_t> coords(pv.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > max_coords) {
      rng.shuffle(coords);
      coords.resize(max_coords);
    }
    for (size_t i : coords) {
      double orig = pv[i];
      pv[i] = orig + h;
      double lp = loss_at(params);
      pv[i] = orig - h;
      double lm = loss_at(params);
      pv[i] = orig;
      double numeric = (lp - lm) / (2.0 * h);
      double analytic_g = gv[i];
      if (std::abs(analytic_g) < 1e-8 && std::abs(numeric) < 1e-8) continue;
      double rel = std::abs(analytic_g - numeric) /
                   std::max(std::abs(analytic_g), std::abs(numeric));
      ++rep.checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_tensor = name;
      }
    }
  });
  return rep;
}

}  // namespace kgqa
