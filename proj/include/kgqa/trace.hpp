#pragma once

// Human-readable diagnostic traces: span likelihoods, candidate entity
// likelihoods, the top prediction chain, and per-hop decoder detail.

#include <iomanip>
#include <sstream>

#include "kgqa/model.hpp"

namespace kgqa {

namespace trace_detail {

inline std::string num(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// indices of v sorted by descending value, ties to lower index
inline std::vector<size_t> order_desc(const Vec& v) {
  std::vector<size_t> idx(v.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return v[a] > v[b]; });
  return idx;
}

}  // namespace trace_detail

// Three-section trace mirroring the answer command's output contract.
inline std::string format_trace(const ForwardResult& fr, const ReifiedKG& kg,
                                const std::string& question,
                                const std::string& answer_label = "") {
  using trace_detail::num;
  using trace_detail::order_desc;
  std::ostringstream os;
  os << "Question: " << question << "\n\n";
  if (fr.skipped) {
    os << "No candidates: " << fr.skip_reason << "\n";
    return os.str();
  }

  if (fr.res) {
    const ResolutionState& st = *fr.res;
    os << "Span Likelihoods:\n";
    auto span_order = order_desc(st.span_scores);
    for (size_t n = 0; n < span_order.size(); ++n) {
      size_t s = span_order[n];
      const auto& sp = st.spans.spans[s];
      os << (n ? ", " : "") << "('" << fr.toks.join(sp.i, sp.j) << "', "
         << num(st.span_scores[s]) << ")";
    }
    os << "\n\n";
    os << "Candidate Entity Likelihoods:\n";
    auto cand_order = order_desc(st.x_flat);
    for (size_t n = 0; n < cand_order.size(); ++n) {
      auto [s, k] = st.flat[cand_order[n]];
      os << (n ? ", " : "") << "('"
         << kg.entity_label(st.spans.spans[s].entities[k]) << "', "
         << num(st.x_flat[cand_order[n]]) << ")";
    }
    os << "\n\n";
  }

  // per-hop decoder detail: top-5 relations per hop plus attention weights
  os << "Hops:\n";
  for (size_t t = 0; t < fr.trace.r.size(); ++t) {
    os << "  hop " << (t + 1) << ":";
    auto rel_order = order_desc(fr.trace.r[t]);
    for (size_t n = 0; n < rel_order.size() && n < 5; ++n)
      os << (n ? ", " : " ") << "(" << kg.relation_label(uint32_t(rel_order[n]))
         << ", " << num(fr.trace.r[t][rel_order[n]]) << ")";
    os << "\n";
  }
  os << "  attention:";
  for (size_t t = 0; t < fr.trace.a.size(); ++t)
    os << (t ? ", " : " ") << num(fr.trace.a[t]);
  os << "\n\n";

  os << "Top Answers:\n";
  auto y_order = order_desc(fr.trace.y_hat.val);
  for (size_t n = 0; n < y_order.size() && n < 10; ++n)
    os << (n ? ", " : "") << "('" << kg.entity_label(fr.trace.y_hat.idx[y_order[n]])
       << "', " << num(fr.trace.y_hat.val[y_order[n]]) << ")";
  os << "\n\n";

  // chain: top span -> top relation of the most-attended hop -> top entity
  os << "Top Prediction:\n";
  if (fr.res) {
    const ResolutionState& st = *fr.res;
    size_t best_span = order_desc(st.span_scores)[0];
    const auto& sp = st.spans.spans[best_span];
    os << "('" << fr.toks.join(sp.i, sp.j) << "', " << num(st.span_scores[best_span])
       << ") -> ";
  }
  size_t best_hop = order_desc(fr.trace.a)[0];
  size_t best_rel = order_desc(fr.trace.r[best_hop])[0];
  os << "(" << kg.relation_label(uint32_t(best_rel)) << ", "
     << num(fr.trace.r[best_hop][best_rel]) << ") -> ";
  uint32_t top = top1_entity(fr.trace.y_hat);
  if (top == UINT32_MAX) {
    os << "(none, 0.000)";
  } else {
    double w = 0.0;
    for (size_t k = 0; k < fr.trace.y_hat.idx.size(); ++k)
      if (fr.trace.y_hat.idx[k] == top) w = fr.trace.y_hat.val[k];
    os << "('" << kg.entity_label(top) << "', " << num(w) << ")";
    if (!answer_label.empty())
      os << (kg.entity_label(top) == answer_label ? " [correct]" : " [wrong]");
  }
  os << "\n";
  return os.str();
}

}  // namespace kgqa
