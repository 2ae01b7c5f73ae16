#pragma once

// Hierarchical multi-hop relation decoder over the reified KG, hop attention,
// and the answer distribution, with the matching reverse-mode pass.

#include "kgqa/kg.hpp"

namespace kgqa {

struct HopDecoderParams {
  uint32_t t_max = 1;
  uint32_t dim = 0;         // D
  uint32_t n_relations = 0; // N_R
  // W_inf[t] is N_R x (D + t*N_R) row-major (t = 0-based hop index),
  // W_att[t] a single row of the same width.
  std::vector<Vec> w_inf;
  std::vector<Vec> w_att;

  uint32_t input_width(uint32_t t /*0-based*/) const { return dim + t * n_relations; }

  static HopDecoderParams init(uint32_t t_max, uint32_t dim, uint32_t n_relations,
                               Rng& rng, double bound = 0.05) {
    HopDecoderParams p;
    p.t_max = t_max;
    p.dim = dim;
    p.n_relations = n_relations;
    for (uint32_t t = 0; t < t_max; ++t) {
      p.w_inf.emplace_back(size_t(n_relations) * p.input_width(t));
      p.w_att.emplace_back(p.input_width(t));
      for (double& v : p.w_inf.back()) v = rng.uniform(-bound, bound);
      for (double& v : p.w_att.back()) v = rng.uniform(-bound, bound);
    }
    return p;
  }
};

// Decoder input for hop t: [h_q | r_{t-1} | ... | r_1].
inline Vec decoder_input(const Vec& h_q, const std::vector<RelationVector>& priors) {
  Vec u = h_q;
  for (auto it = priors.rbegin(); it != priors.rend(); ++it)
    u.insert(u.end(), it->begin(), it->end());
  return u;
}

// r_t = softmax(W_inf[t] [h_q | r_{t-1} | ... | r_1]); t is 1-based.
inline RelationVector decode_relation(const HopDecoderParams& params, uint32_t t,
                                      const Vec& h_q,
                                      const std::vector<RelationVector>& priors) {
  if (t < 1 || t > params.t_max) throw shape_error("decode_relation: hop out of range");
  if (priors.size() != t - 1) throw shape_error("decode_relation: wrong prior count");
  Vec u = decoder_input(h_q, priors);
  if (u.size() != params.input_width(t - 1))
    throw shape_error("decode_relation: input width mismatch");
  const Vec& w = params.w_inf[t - 1];
  Vec logits(params.n_relations, 0.0);
  for (uint32_t r = 0; r < params.n_relations; ++r) {
    const double* row = w.data() + size_t(r) * u.size();
    double s = 0.0;
    for (size_t k = 0; k < u.size(); ++k) s += row[k] * u[k];
    logits[r] = s;
  }
  return softmax(logits);
}

struct InferenceTrace {
  std::vector<EntityVector> x;       // x[0] = seed, x[t] after hop t
  std::vector<RelationVector> r;     // r[t-1] = relation distribution of hop t
  std::vector<Vec> u;                // decoder inputs per hop
  Vec c;                             // attention logits
  Vec a;                             // attention weights
  EntityVector y_hat;                // sum_t a_t x_t
};

inline InferenceTrace run_hops(const ReifiedKG& kg, const HopDecoderParams& params,
                               const EntityVector& x0, const Vec& h_q) {
  if (h_q.size() != params.dim) throw shape_error("run_hops: h_q dimension mismatch");
  if (params.n_relations != kg.n_relations())
    throw shape_error("run_hops: decoder/KG relation count mismatch");
  InferenceTrace tr;
  tr.x.push_back(x0);
  std::vector<RelationVector> priors;
  for (uint32_t t = 1; t <= params.t_max; ++t) {
    Vec u = decoder_input(h_q, priors);
    tr.u.push_back(u);
    RelationVector rt = decode_relation(params, t, h_q, priors);
    tr.c.push_back(dot(params.w_att[t - 1], u));
    tr.x.push_back(kg.follow(tr.x.back(), rt));
    tr.r.push_back(rt);
    priors.push_back(tr.r.back());
  }
  tr.a = softmax(tr.c);
  Vec acc(kg.n_entities(), 0.0);
  for (uint32_t t = 1; t <= params.t_max; ++t) {
    for (size_t k = 0; k < tr.x[t].idx.size(); ++k)
      acc[tr.x[t].idx[k]] += tr.a[t - 1] * tr.x[t].val[k];
  }
  tr.y_hat = EntityVector::from_dense(acc);
  return tr;
}

struct InferenceGrads {
  std::vector<Vec> w_inf;
  std::vector<Vec> w_att;
  Vec h_q;
  Vec x0_dense;  // gradient on the seed vector, dense over entities
};

// grad_y_hat is dense over entities (sparse callers densify first).
inline InferenceGrads inference_backward(const ReifiedKG& kg,
                                         const HopDecoderParams& params,
                                         const InferenceTrace& tr,
                                         const Vec& grad_y_hat) {
  if (grad_y_hat.size() != kg.n_entities())
    throw shape_error("inference_backward: grad_y_hat dimension mismatch");
  uint32_t T = params.t_max;
  InferenceGrads g;
  for (uint32_t t = 0; t < T; ++t) {
    g.w_inf.emplace_back(params.w_inf[t].size(), 0.0);
    g.w_att.emplace_back(params.w_att[t].size(), 0.0);
  }
  g.h_q.assign(params.dim, 0.0);

  // attention combination: y_hat = sum a_t x_t. The a_t grad_y term is dense:
  // coordinates of x_t outside its forward support still carry gradient.
  Vec grad_a(T, 0.0);
  std::vector<Vec> grad_x(T + 1, Vec(kg.n_entities(), 0.0));
  for (uint32_t t = 1; t <= T; ++t) {
    for (size_t k = 0; k < tr.x[t].idx.size(); ++k)
      grad_a[t - 1] += grad_y_hat[tr.x[t].idx[k]] * tr.x[t].val[k];
    for (uint32_t i = 0; i < kg.n_entities(); ++i)
      grad_x[t][i] = tr.a[t - 1] * grad_y_hat[i];
  }
  Vec grad_c = softmax_backward(tr.a, grad_a);

  std::vector<Vec> grad_r(T, Vec(params.n_relations, 0.0));
  for (uint32_t t = T; t >= 1; --t) {
    // through follow at hop t
    kg.follow_backward(tr.x[t - 1], tr.r[t - 1],
                       EntityVector::from_dense(grad_x[t]), grad_x[t - 1],
                       grad_r[t - 1]);
    // r_t softmax -> W_inf[t] and decoder input
    Vec g_logits = softmax_backward(tr.r[t - 1], grad_r[t - 1]);
    const Vec& u = tr.u[t - 1];
    Vec g_u(u.size(), 0.0);
    for (uint32_t rr = 0; rr < params.n_relations; ++rr) {
      double gl = g_logits[rr];
      if (gl == 0.0) continue;
      double* wrow = g.w_inf[t - 1].data() + size_t(rr) * u.size();
      const double* prow = params.w_inf[t - 1].data() + size_t(rr) * u.size();
      for (size_t k = 0; k < u.size(); ++k) {
        wrow[k] += gl * u[k];
        g_u[k] += gl * prow[k];
      }
    }
    // attention logit c_t = w_att[t] . u
    axpy(grad_c[t - 1], u, g.w_att[t - 1]);
    axpy(grad_c[t - 1], params.w_att[t - 1], g_u);
    // split decoder input gradient: h_q first, then r_{t-1} .. r_1
    for (uint32_t d = 0; d < params.dim; ++d) g.h_q[d] += g_u[d];
    size_t off = params.dim;
    for (uint32_t prev = t - 1; prev >= 1; --prev) {
      for (uint32_t rr = 0; rr < params.n_relations; ++rr)
        grad_r[prev - 1][rr] += g_u[off + rr];
      off += params.n_relations;
    }
  }
  g.x0_dense = std::move(grad_x[0]);
  return g;
}

}  // namespace kgqa
