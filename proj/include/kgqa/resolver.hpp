#pragma once

// Entity resolution: span enumeration against an alias table, longest-span
// dedup, neighborhood-feature candidate embeddings, and the differentiable
// seed-entity vector x0 with its reverse-mode pass.

#include <map>
#include <optional>

#include "kgqa/kg.hpp"
#include "kgqa/text.hpp"

namespace kgqa {

class AliasTable {
 public:
  // Entity titles are implicitly aliases of themselves; extra aliases come
  // in as (entity_label, alias_text) pairs.
  static AliasTable build(const ReifiedKG& kg,
                          const std::vector<std::pair<std::string, std::string>>& aliases = {}) {
    AliasTable t;
    for (uint32_t e = 0; e < kg.n_entities(); ++e)
      t.insert(kg.entity_label(e), e);
    for (const auto& [label, alias] : aliases) {
      if (alias.empty()) throw input_error("alias table: empty alias string");
      uint32_t e = kg.entity_id(label);
      if (e == UINT32_MAX)
        throw input_error("alias table: alias references unknown entity: " + label);
      t.insert(alias, e);
    }
    return t;
  }

  // Alias file: `entity_label<TAB>alias_text` per line, `#` comments ignored.
  static std::vector<std::pair<std::string, std::string>> read_alias_file(
      const std::string& path) {
    std::ifstream f(path);
    if (!f) throw input_error("cannot open alias file: " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      size_t tab = line.find('\t');
      if (tab == std::string::npos)
        throw parse_error("alias file line " + std::to_string(lineno) +
                          ": expected 2 tab-separated fields");
      out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
  }

  const std::vector<uint32_t>* lookup(const std::string& key) const {
    auto it = map_.find(key);
    return it == map_.end() ? nullptr : &it->second;
  }

  size_t size() const { return map_.size(); }

  void insert(const std::string& surface, uint32_t entity) {
    TokenSeq toks = tokenize(surface);
    std::string key = toks.join(0, toks.size() - 1);
    auto& ids = map_[key];
    if (std::find(ids.begin(), ids.end(), entity) == ids.end()) {
      ids.push_back(entity);
      std::sort(ids.begin(), ids.end());
    }
  }

 private:
  std::unordered_map<std::string, std::vector<uint32_t>> map_;
};

struct SpanCandidates {
  uint32_t i = 0, j = 0;                // inclusive token span
  std::vector<uint32_t> entities;       // candidate ids, sorted
};

struct SpanCandidateSet {
  std::vector<SpanCandidates> spans;    // ordered by (i, j)
  bool empty() const { return spans.empty(); }
};

// All alias-matching spans of length <= max_span_len; an entity appearing
// under several spans is kept only under the longest (ties: smaller i).
// Spans left without candidates are removed.
inline SpanCandidateSet enumerate_spans(const TokenSeq& toks, const AliasTable& table,
                                        uint32_t max_span_len) {
  if (max_span_len < 1) throw input_error("enumerate_spans: max_span_len must be >= 1");
  size_t n = toks.size();
  std::vector<SpanCandidates> matched;
  for (uint32_t i = 0; i < n; ++i) {
    for (uint32_t j = i; j < n && j - i < max_span_len; ++j) {
      if (const auto* ids = table.lookup(toks.join(i, j)))
        matched.push_back({i, j, *ids});
    }
  }
  // owner of each entity: longest span, then smallest i
  std::unordered_map<uint32_t, size_t> owner;
  for (size_t s = 0; s < matched.size(); ++s) {
    uint32_t len = matched[s].j - matched[s].i + 1;
    for (uint32_t e : matched[s].entities) {
      auto it = owner.find(e);
      if (it == owner.end()) {
        owner[e] = s;
        continue;
      }
      const auto& cur = matched[it->second];
      uint32_t cur_len = cur.j - cur.i + 1;
      if (len > cur_len || (len == cur_len && matched[s].i < cur.i)) it->second = s;
    }
  }
  SpanCandidateSet out;
  for (size_t s = 0; s < matched.size(); ++s) {
    SpanCandidates kept{matched[s].i, matched[s].j, {}};
    for (uint32_t e : matched[s].entities)
      if (owner[e] == s) kept.entities.push_back(e);
    if (!kept.entities.empty()) out.spans.push_back(std::move(kept));
  }
  return out;
}

// Per-entity KG-neighborhood features: one feature "p:o" per subject-position
// triple, shared across entities with the same (p, o) neighbor.
class EntityFeatureIndex {
 public:
  static EntityFeatureIndex build(const ReifiedKG& kg) {
    EntityFeatureIndex idx;
    idx.features_of_.resize(kg.n_entities());
    for (uint32_t e = 0; e < kg.n_entities(); ++e) {
      auto [b, en] = kg.triples_of_subject(e);
      for (const uint32_t* p = b; p != en; ++p) {
        std::string f = kg.relation_label(kg.predicate(*p)) + ":" +
                        kg.entity_label(kg.object(*p));
        auto it = idx.feature_ids_.find(f);
        uint32_t fid;
        if (it == idx.feature_ids_.end()) {
          fid = static_cast<uint32_t>(idx.feature_labels_.size());
          idx.feature_ids_.emplace(f, fid);
          idx.feature_labels_.push_back(f);
        } else {
          fid = it->second;
        }
        idx.features_of_[e].push_back(fid);
      }
    }
    return idx;
  }

  uint32_t n_features() const { return static_cast<uint32_t>(feature_labels_.size()); }
  const std::vector<uint32_t>& features_of(uint32_t entity) const {
    return features_of_.at(entity);
  }
  const std::string& feature_label(uint32_t f) const { return feature_labels_.at(f); }

  // Mean of the entity's feature embeddings; zero vector (flagged) when the
  // entity has no subject-position triples.
  Vec embed(uint32_t entity, const Vec& feature_rows, uint32_t dim,
            bool* zero_features = nullptr) const {
    const auto& fs = features_of_.at(entity);
    Vec z(dim, 0.0);
    if (zero_features) *zero_features = fs.empty();
    if (fs.empty()) return z;
    for (uint32_t f : fs)
      for (uint32_t d = 0; d < dim; ++d) z[d] += feature_rows[size_t(f) * dim + d];
    for (double& v : z) v /= static_cast<double>(fs.size());
    return z;
  }

 private:
  std::vector<std::vector<uint32_t>> features_of_;
  std::unordered_map<std::string, uint32_t> feature_ids_;
  std::vector<std::string> feature_labels_;
};

// Everything retained from the resolution forward pass; the backward pass
// and the diagnostics trace both read from here.
struct ResolutionState {
  SpanCandidateSet spans;
  std::vector<Vec> span_embs;            // q_ij
  Vec span_logits;                       // q_ij . w_s (empty in gold-span mode)
  Vec span_scores;                       // s_ij
  bool fixed_span_scores = false;        // gold-span mode: s == 1, no w_s grad
  std::vector<std::vector<Vec>> cand_embs;       // z per span/candidate
  std::vector<std::vector<char>> cand_zero_feat; // zero-feature flags
  std::vector<Vec> cand_logits;          // z . q_ij per span
  std::vector<Vec> cand_softmax;         // within-span softmax
  std::vector<Vec> e_scores;             // e_ij^k = s_ij * softmax
  Vec x_flat;                            // outer softmax over all candidates
  std::vector<std::pair<size_t, size_t>> flat;  // (span idx, cand idx)
  EntityVector x0;
};

inline ResolutionState resolve_forward(const QuestionEncoding& enc,
                                       const SpanCandidateSet& spans,
                                       const Vec& span_scorer,
                                       const EntityFeatureIndex& feat_index,
                                       const Vec& feature_rows, uint32_t n_entities,
                                       bool fixed_span_scores = false) {
  if (spans.empty()) throw resolution_error("resolve: no candidate spans");
  uint32_t dim = static_cast<uint32_t>(span_scorer.size());
  ResolutionState st;
  st.spans = spans;
  st.fixed_span_scores = fixed_span_scores;
  for (const auto& sp : spans.spans)
    st.span_embs.push_back(span_embed(enc, sp.i, sp.j));
  if (fixed_span_scores) {
    st.span_scores.assign(spans.spans.size(), 1.0);
  } else {
    for (const auto& q : st.span_embs) st.span_logits.push_back(dot(q, span_scorer));
    st.span_scores = softmax(st.span_logits);
  }
  Vec all_e;
  for (size_t s = 0; s < spans.spans.size(); ++s) {
    const auto& sp = spans.spans[s];
    std::vector<Vec> zs;
    std::vector<char> zf;
    Vec logits;
    for (uint32_t c : sp.entities) {
      bool zero = false;
      zs.push_back(feat_index.embed(c, feature_rows, dim, &zero));
      zf.push_back(zero ? 1 : 0);
      logits.push_back(dot(zs.back(), st.span_embs[s]));
    }
    Vec p = softmax(logits);
    Vec e(p.size());
    for (size_t k = 0; k < p.size(); ++k) {
      e[k] = st.span_scores[s] * p[k];
      all_e.push_back(e[k]);
      st.flat.emplace_back(s, k);
    }
    st.cand_embs.push_back(std::move(zs));
    st.cand_zero_feat.push_back(std::move(zf));
    st.cand_logits.push_back(std::move(logits));
    st.cand_softmax.push_back(std::move(p));
    st.e_scores.push_back(std::move(e));
  }
  st.x_flat = softmax(all_e);
  // scatter into x0; dedup guarantees each entity occurs once
  std::map<uint32_t, double> scattered;
  for (size_t f = 0; f < st.flat.size(); ++f) {
    auto [s, k] = st.flat[f];
    scattered[st.spans.spans[s].entities[k]] = st.x_flat[f];
  }
  st.x0.dim = n_entities;
  for (auto& [e, w] : scattered) {
    st.x0.idx.push_back(e);
    st.x0.val.push_back(w);
  }
  return st;
}

// Multi-hot 0/1 seed vector from gold entity ids; carries no gradients.
inline EntityVector seed_from_gold(const std::vector<uint32_t>& gold,
                                   uint32_t n_entities) {
  if (gold.empty()) throw input_error("seed_from_gold: empty gold set");
  std::vector<uint32_t> ids = gold;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  EntityVector x0;
  x0.dim = n_entities;
  for (uint32_t e : ids) {
    if (e >= n_entities) throw lookup_error("seed_from_gold: unknown entity id");
    x0.idx.push_back(e);
    x0.val.push_back(1.0);
  }
  return x0;
}

inline SpanCandidateSet restrict_to_gold_span(const SpanCandidateSet& spans,
                                              uint32_t gold_i, uint32_t gold_j) {
  for (const auto& sp : spans.spans) {
    if (sp.i == gold_i && sp.j == gold_j) {
      SpanCandidateSet out;
      out.spans.push_back(sp);
      return out;
    }
  }
  throw resolution_error("gold span not among enumerated spans");
}

struct ResolverGrads {
  Vec span_scorer;            // dL/dw_s
  Vec feature_rows;           // dL/d feature embeddings, full table shape
  std::vector<Vec> token_embs;  // dL/d token embeddings (via q_ij)
};

// Chain rule through the outer softmax, the per-span candidate softmax, the
// span softmax (unless fixed), and the span/feature means. grad_x0 must be
// aligned with st.x0's stored indices.
inline ResolverGrads resolver_backward(const ResolutionState& st,
                                       const QuestionEncoding& enc,
                                       const Vec& span_scorer,
                                       const EntityFeatureIndex& feat_index,
                                       const Vec& feature_rows,
                                       const Vec& grad_x0_vals) {
  uint32_t dim = static_cast<uint32_t>(span_scorer.size());
  if (grad_x0_vals.size() != st.x0.val.size())
    throw shape_error("resolver_backward: grad_x0 size mismatch");
  ResolverGrads g;
  g.span_scorer.assign(dim, 0.0);
  g.feature_rows.assign(feature_rows.size(), 0.0);
  g.token_embs.assign(enc.token_embs.size(), Vec(dim, 0.0));

  // x0 scatter was by ascending entity id; invert back to flat order
  std::unordered_map<uint32_t, size_t> x0_pos;
  for (size_t p = 0; p < st.x0.idx.size(); ++p) x0_pos[st.x0.idx[p]] = p;
  Vec g_flat(st.flat.size(), 0.0);
  for (size_t f = 0; f < st.flat.size(); ++f) {
    auto [s, k] = st.flat[f];
    g_flat[f] = grad_x0_vals[x0_pos.at(st.spans.spans[s].entities[k])];
  }
  Vec g_e_flat = softmax_backward(st.x_flat, g_flat);

  Vec g_span_scores(st.spans.spans.size(), 0.0);
  std::vector<Vec> g_span_embs(st.spans.spans.size(), Vec(dim, 0.0));
  size_t f = 0;
  for (size_t s = 0; s < st.spans.spans.size(); ++s) {
    const auto& p = st.cand_softmax[s];
    Vec g_p(p.size());
    for (size_t k = 0; k < p.size(); ++k) {
      double ge = g_e_flat[f++];
      g_p[k] = st.span_scores[s] * ge;
      g_span_scores[s] += p[k] * ge;
    }
    Vec g_logits = softmax_backward(p, g_p);
    for (size_t k = 0; k < p.size(); ++k) {
      // logit = z . q_ij
      axpy(g_logits[k], st.cand_embs[s][k], g_span_embs[s]);
      if (!st.cand_zero_feat[s][k]) {
        const auto& fs = feat_index.features_of(st.spans.spans[s].entities[k]);
        double scale = g_logits[k] / static_cast<double>(fs.size());
        for (uint32_t fid : fs)
          for (uint32_t d = 0; d < dim; ++d)
            g.feature_rows[size_t(fid) * dim + d] += scale * st.span_embs[s][d];
      }
    }
  }

  if (!st.fixed_span_scores) {
    Vec g_span_logits = softmax_backward(st.span_scores, g_span_scores);
    for (size_t s = 0; s < st.spans.spans.size(); ++s) {
      axpy(g_span_logits[s], st.span_embs[s], g.span_scorer);
      axpy(g_span_logits[s], span_scorer, g_span_embs[s]);
    }
  }

  // q_ij is the mean of token embeddings over [i, j]
  for (size_t s = 0; s < st.spans.spans.size(); ++s) {
    const auto& sp = st.spans.spans[s];
    double inv = 1.0 / static_cast<double>(sp.j - sp.i + 1);
    for (uint32_t k = sp.i; k <= sp.j; ++k)
      axpy(inv, g_span_embs[s], g.token_embs[k]);
  }
  return g;
}

}  // namespace kgqa
