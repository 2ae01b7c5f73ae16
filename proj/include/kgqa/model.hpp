#pragma once

// Per-example pipeline: variant-specific seeding, multi-hop inference,
// multi-label BCE, and the full reverse pass into a shared gradient buffer.

#include "kgqa/params.hpp"

namespace kgqa {

enum class Variant { baseline, er, e2e };

inline Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "er") return Variant::er;
  if (s == "e2e") return Variant::e2e;
  throw input_error("unknown variant: " + s);
}

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::er: return "er";
    default: return "e2e";
  }
}

struct QAExample {
  std::string question;
  std::optional<std::pair<uint32_t, uint32_t>> gold_span;  // token span, inclusive
  std::vector<uint32_t> gold_entities;
  std::vector<uint32_t> answers;  // the k-hot y
};

// Immutable per-run context shared across examples.
struct PipelineContext {
  const ReifiedKG* kg = nullptr;
  const AliasTable* aliases = nullptr;
  const EntityFeatureIndex* features = nullptr;
  uint32_t max_span_len = 6;
};

constexpr double kProbClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  Vec grad_y_hat;  // dense over entities; zero where clamping is active
};

// L = -(1/N_E) sum_i [y_i log c(yh_i) + (1-y_i) log(1-c(yh_i))] with c
// clamping into [1e-7, 1-1e-7]. Entries outside y_hat's support contribute
// through the clamp floor.
inline BceResult bce_loss(const EntityVector& y_hat,
                          const std::vector<uint32_t>& answers, bool want_grad = true) {
  uint32_t n = y_hat.dim;
  std::vector<char> is_answer(n, 0);
  for (uint32_t a : answers) {
    if (a >= n) throw shape_error("bce_loss: answer id out of range");
    is_answer[a] = 1;
  }
  size_t n_pos = 0;
  for (uint32_t a = 0; a < n; ++a) n_pos += is_answer[a];

  const double log_floor = std::log(kProbClamp);
  const double log_ceil = std::log(1.0 - kProbClamp);
  BceResult out;
  if (want_grad) out.grad_y_hat.assign(n, 0.0);

  // start from the all-outside-support baseline, then correct the support
  size_t pos_in_supp = 0;
  double sum = 0.0;
  for (size_t k = 0; k < y_hat.idx.size(); ++k) {
    uint32_t i = y_hat.idx[k];
    double v = y_hat.val[k];
    if (!std::isfinite(v)) throw input_error("bce_loss: non-finite prediction");
    double c = std::min(std::max(v, kProbClamp), 1.0 - kProbClamp);
    bool clamped = (v < kProbClamp) || (v > 1.0 - kProbClamp);
    if (is_answer[i]) {
      ++pos_in_supp;
      sum += std::log(c);
      if (want_grad && !clamped) out.grad_y_hat[i] = -(1.0 / n) / c;
    } else {
      sum += std::log(1.0 - c);
      if (want_grad && !clamped) out.grad_y_hat[i] = (1.0 / n) / (1.0 - c);
    }
  }
  size_t pos_outside = n_pos - pos_in_supp;
  size_t neg_outside = n - y_hat.idx.size() - pos_outside;
  sum += double(pos_outside) * log_floor + double(neg_outside) * log_ceil;
  out.loss = -sum / n;
  return out;
}

struct ForwardResult {
  bool skipped = false;
  std::string skip_reason;
  TokenSeq toks;
  QuestionEncoding enc;
  std::optional<ResolutionState> res;  // er / e2e only
  InferenceTrace trace;
  double loss = 0.0;
};

inline ForwardResult forward_example(const PipelineContext& ctx,
                                     const ModelParams& params, const QAExample& ex,
                                     Variant variant, bool with_loss = true) {
  ForwardResult fr;
  fr.toks = tokenize(ex.question);
  fr.enc = params.table.encode(fr.toks);

  EntityVector x0;
  if (variant == Variant::baseline) {
    if (ex.gold_entities.empty()) {
      fr.skipped = true;
      fr.skip_reason = "no gold entities";
      return fr;
    }
    x0 = seed_from_gold(ex.gold_entities, ctx.kg->n_entities());
  } else {
    SpanCandidateSet spans = enumerate_spans(fr.toks, *ctx.aliases, ctx.max_span_len);
    if (spans.empty()) {
      fr.skipped = true;
      fr.skip_reason = "no candidates";
      return fr;
    }
    if (variant == Variant::er) {
      if (!ex.gold_span) {
        fr.skipped = true;
        fr.skip_reason = "missing gold span";
        return fr;
      }
      try {
        spans = restrict_to_gold_span(spans, ex.gold_span->first, ex.gold_span->second);
      } catch (const resolution_error&) {
        fr.skipped = true;
        fr.skip_reason = "gold span not enumerable";
        return fr;
      }
    }
    fr.res = resolve_forward(fr.enc, spans, params.span_scorer, *ctx.features,
                             params.feature_rows, ctx.kg->n_entities(),
                             /*fixed_span_scores=*/variant == Variant::er);
    x0 = fr.res->x0;
  }
  fr.trace = run_hops(*ctx.kg, params.decoder, x0, fr.enc.h_q);
  if (with_loss) fr.loss = bce_loss(fr.trace.y_hat, ex.answers, false).loss;
  return fr;
}

// Accumulates dL/dparams into `grads` (a zeros_like buffer shared across a
// batch). Returns the example loss.
inline double backward_example(const PipelineContext& ctx, const ModelParams& params,
                               const QAExample& ex, Variant variant,
                               const ForwardResult& fr, ModelParams& grads) {
  if (fr.skipped) throw input_error("backward_example: example was skipped");
  BceResult bce = bce_loss(fr.trace.y_hat, ex.answers, true);
  InferenceGrads ig = inference_backward(*ctx.kg, params.decoder, fr.trace,
                                         bce.grad_y_hat);
  for (uint32_t t = 0; t < params.decoder.t_max; ++t) {
    axpy(1.0, ig.w_inf[t], grads.decoder.w_inf[t]);
    axpy(1.0, ig.w_att[t], grads.decoder.w_att[t]);
  }
  std::vector<Vec> token_grads;
  if (fr.res) {
    const ResolutionState& st = *fr.res;
    Vec grad_x0_vals(st.x0.idx.size());
    for (size_t k = 0; k < st.x0.idx.size(); ++k)
      grad_x0_vals[k] = ig.x0_dense[st.x0.idx[k]];
    ResolverGrads rg = resolver_backward(st, fr.enc, params.span_scorer,
                                         *ctx.features, params.feature_rows,
                                         grad_x0_vals);
    axpy(1.0, rg.span_scorer, grads.span_scorer);
    axpy(1.0, rg.feature_rows, grads.feature_rows);
    token_grads = std::move(rg.token_embs);
  }
  params.table.encode_backward(fr.toks, ig.h_q, token_grads, grads.table.data());
  return bce.loss;
}

// Top-1 prediction with ties broken by lower entity id; UINT32_MAX when the
// answer vector is empty.
inline uint32_t top1_entity(const EntityVector& y_hat) {
  uint32_t best = UINT32_MAX;
  double best_val = -1.0;
  for (size_t k = 0; k < y_hat.idx.size(); ++k) {
    if (y_hat.val[k] > best_val) {
      best_val = y_hat.val[k];
      best = y_hat.idx[k];
    }
  }
  return best;
}

}  // namespace kgqa
