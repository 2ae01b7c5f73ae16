#pragma once

// Reified knowledge graph: the triple set as three sparse index matrices
// (subject, predicate, object), plus the differentiable follow operation
// and its reverse-mode companion.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "kgqa/common.hpp"

namespace kgqa {

struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;
};

// Nonnegative weights over entities, stored sparse, indices strictly increasing.
struct EntityVector {
  uint32_t dim = 0;
  std::vector<uint32_t> idx;
  Vec val;

  size_t nnz() const { return idx.size(); }

  double sum() const {
    double s = 0.0;
    for (double v : val) s += v;
    return s;
  }

  Vec to_dense() const {
    Vec d(dim, 0.0);
    for (size_t k = 0; k < idx.size(); ++k) d[idx[k]] = val[k];
    return d;
  }

  static EntityVector from_dense(const Vec& d) {
    EntityVector ev;
    ev.dim = static_cast<uint32_t>(d.size());
    for (uint32_t i = 0; i < d.size(); ++i) {
      if (d[i] != 0.0) {
        ev.idx.push_back(i);
        ev.val.push_back(d[i]);
      }
    }
    return ev;
  }

  static EntityVector one_hot(uint32_t dim, uint32_t at) {
    if (at >= dim) throw shape_error("one_hot: index out of range");
    EntityVector ev;
    ev.dim = dim;
    ev.idx = {at};
    ev.val = {1.0};
    return ev;
  }
};

// Dense nonnegative weights over relations.
using RelationVector = Vec;

struct KgLimits {
  size_t max_triples = 1ull << 26;   // 67M
  size_t max_entities = 1ull << 24;  // 16.7M
  size_t max_relations = 1ull << 20;
};

class ReifiedKG {
 public:
  // Vocabularies are assigned by first appearance; exact duplicate triples
  // collapse to a single row.
  static ReifiedKG build(const std::vector<Triple>& triples,
                         const KgLimits& limits = {}) {
    if (triples.empty()) throw input_error("build_kg: empty triple list");
    ReifiedKG kg;
    std::unordered_set<uint64_t> seen;
    seen.reserve(triples.size() * 2);
    kg.subj_.reserve(triples.size());
    for (const auto& t : triples) {
      if (t.subject.empty() || t.predicate.empty() || t.object.empty())
        throw input_error("build_kg: empty label in triple");
      uint32_t s = kg.intern_entity(t.subject, limits);
      uint32_t p = kg.intern_relation(t.predicate, limits);
      uint32_t o = kg.intern_entity(t.object, limits);
      uint64_t key = (uint64_t(s) << 40) ^ (uint64_t(p) << 24) ^ o;
      // key collisions possible in principle; disambiguate with a full check
      if (seen.count(key)) {
        bool dup = false;
        for (size_t i = 0; i < kg.subj_.size(); ++i) {
          if (kg.subj_[i] == s && kg.pred_[i] == p && kg.obj_[i] == o) {
            dup = true;
            break;
          }
        }
        if (dup) continue;
      }
      seen.insert(key);
      if (kg.subj_.size() >= limits.max_triples)
        throw capacity_error("build_kg: triple limit exceeded");
      kg.subj_.push_back(s);
      kg.pred_.push_back(p);
      kg.obj_.push_back(o);
    }
    kg.build_subject_index();
    return kg;
  }

  uint32_t n_triples() const { return static_cast<uint32_t>(subj_.size()); }
  uint32_t n_entities() const { return static_cast<uint32_t>(entity_labels_.size()); }
  uint32_t n_relations() const { return static_cast<uint32_t>(relation_labels_.size()); }

  uint32_t subject(size_t i) const { return subj_[i]; }
  uint32_t predicate(size_t i) const { return pred_[i]; }
  uint32_t object(size_t i) const { return obj_[i]; }

  const std::string& entity_label(uint32_t id) const { return entity_labels_.at(id); }
  const std::string& relation_label(uint32_t id) const { return relation_labels_.at(id); }

  const std::vector<std::string>& entity_labels() const { return entity_labels_; }
  const std::vector<std::string>& relation_labels() const { return relation_labels_; }

  // returns UINT32_MAX when absent
  uint32_t entity_id(const std::string& label) const {
    auto it = entity_ids_.find(label);
    return it == entity_ids_.end() ? UINT32_MAX : it->second;
  }
  uint32_t relation_id(const std::string& label) const {
    auto it = relation_ids_.find(label);
    return it == relation_ids_.end() ? UINT32_MAX : it->second;
  }

  // Triple ids with a given subject, ascending.
  std::pair<const uint32_t*, const uint32_t*> triples_of_subject(uint32_t e) const {
    return {subj_csr_.data() + subj_off_[e], subj_csr_.data() + subj_off_[e + 1]};
  }

  // x_next = M_o^T (M_s x ⊙ M_p r). Accumulation per output index runs in
  // ascending triple id, so results are bit-reproducible for a fixed build.
  EntityVector follow(const EntityVector& x, const RelationVector& r) const {
    check_shapes(x, r);
    Vec acc(n_entities(), 0.0);
    std::vector<uint32_t> touched;
    // Walk the subject CSR lists of x's support, then sort triple ids so
    // accumulation order matches a full ascending-id pass (skipped triples
    // contribute exactly 0, so the result is bit-identical).
    std::vector<uint32_t> contrib;
    Vec xs;  // x value aligned with contrib
    for (size_t k = 0; k < x.idx.size(); ++k) {
      auto [b, e] = triples_of_subject(x.idx[k]);
      for (const uint32_t* p = b; p != e; ++p) {
        contrib.push_back(*p);
        xs.push_back(x.val[k]);
      }
    }
    // sort by triple id, carrying the x value along
    std::vector<uint32_t> order(contrib.size());
    for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](uint32_t a, uint32_t b) { return contrib[a] < contrib[b]; });
    touched.reserve(order.size());
    std::vector<char> is_touched(n_entities(), 0);
    for (uint32_t oi : order) {
      uint32_t t = contrib[oi];
      double term = xs[oi] * r[pred_[t]];
      uint32_t o = obj_[t];
      acc[o] += term;
      if (!is_touched[o]) {
        is_touched[o] = 1;
        touched.push_back(o);
      }
    }
    std::sort(touched.begin(), touched.end());
    EntityVector out;
    out.dim = n_entities();
    for (uint32_t o : touched) {
      if (acc[o] != 0.0) {
        out.idx.push_back(o);
        out.val.push_back(acc[o]);
      }
    }
    return out;
  }

  // grad_x = M_s^T (M_o g ⊙ M_p r); grad_r = M_p^T (M_o g ⊙ M_s x)
  void follow_backward(const EntityVector& x, const RelationVector& r,
                       const EntityVector& grad_out, Vec& grad_x_dense,
                       Vec& grad_r) const {
    check_shapes(x, r);
    if (grad_out.dim != n_entities())
      throw shape_error("follow_backward: grad_out dimension mismatch");
    if (grad_x_dense.size() != n_entities() || grad_r.size() != n_relations())
      throw shape_error("follow_backward: output buffer mismatch");
    Vec g = grad_out.to_dense();
    Vec xd = x.to_dense();
    for (size_t t = 0; t < subj_.size(); ++t) {
      double go = g[obj_[t]];
      if (go == 0.0) continue;
      grad_x_dense[subj_[t]] += go * r[pred_[t]];
      grad_r[pred_[t]] += go * xd[subj_[t]];
    }
  }

  // Keeps triples whose subject is reachable from a seed in < t_max forward
  // hops (seeds are hop 0). t_max = 0 keeps nothing. Defined after the
  // KgSubgraph struct below.
  struct KgSubgraph reachable_subgraph(const std::vector<uint32_t>& seeds,
                                       uint32_t t_max) const;

  // ---- snapshot format: entities.tsv, relations.tsv, triples.bin ----

  void save_snapshot(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_vocab(dir / "entities.tsv", entity_labels_);
    write_vocab(dir / "relations.tsv", relation_labels_);
    std::ofstream f(dir / "triples.bin", std::ios::binary);
    if (!f) throw input_error("cannot write triples.bin");
    write_u32s(f, subj_);
    write_u32s(f, pred_);
    write_u32s(f, obj_);
  }

  static ReifiedKG load_snapshot(const std::filesystem::path& dir) {
    ReifiedKG kg;
    kg.entity_labels_ = read_vocab(dir / "entities.tsv");
    kg.relation_labels_ = read_vocab(dir / "relations.tsv");
    for (uint32_t i = 0; i < kg.entity_labels_.size(); ++i)
      kg.entity_ids_[kg.entity_labels_[i]] = i;
    for (uint32_t i = 0; i < kg.relation_labels_.size(); ++i)
      kg.relation_ids_[kg.relation_labels_[i]] = i;
    std::ifstream f(dir / "triples.bin", std::ios::binary);
    if (!f) throw input_error("cannot read triples.bin");
    f.seekg(0, std::ios::end);
    size_t bytes = static_cast<size_t>(f.tellg());
    f.seekg(0);
    if (bytes % 12 != 0) throw parse_error("triples.bin: truncated");
    size_t n = bytes / 12;
    kg.subj_ = read_u32s(f, n);
    kg.pred_ = read_u32s(f, n);
    kg.obj_ = read_u32s(f, n);
    for (size_t i = 0; i < n; ++i) {
      if (kg.subj_[i] >= kg.entity_labels_.size() ||
          kg.obj_[i] >= kg.entity_labels_.size() ||
          kg.pred_[i] >= kg.relation_labels_.size())
        throw parse_error("triples.bin: id out of vocabulary range");
    }
    kg.build_subject_index();
    return kg;
  }

  // Triple file: `subject<TAB>predicate<TAB>object`, `#` comments ignored.
  static std::vector<Triple> read_triple_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw input_error("cannot open triple file: " + path.string());
    std::vector<Triple> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      size_t a = line.find('\t');
      size_t b = a == std::string::npos ? std::string::npos : line.find('\t', a + 1);
      if (b == std::string::npos)
        throw parse_error("triple file line " + std::to_string(lineno) +
                          ": expected 3 tab-separated fields");
      out.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1),
                     line.substr(b + 1)});
    }
    return out;
  }

 private:
  std::vector<uint32_t> subj_, pred_, obj_;
  std::vector<std::string> entity_labels_, relation_labels_;
  std::unordered_map<std::string, uint32_t> entity_ids_, relation_ids_;
  std::vector<uint64_t> subj_off_;
  std::vector<uint32_t> subj_csr_;

  uint32_t intern_entity(const std::string& label, const KgLimits& limits) {
    auto it = entity_ids_.find(label);
    if (it != entity_ids_.end()) return it->second;
    if (entity_labels_.size() >= limits.max_entities)
      throw capacity_error("build_kg: entity limit exceeded");
    uint32_t id = static_cast<uint32_t>(entity_labels_.size());
    entity_labels_.push_back(label);
    entity_ids_.emplace(label, id);
    return id;
  }

  uint32_t intern_relation(const std::string& label, const KgLimits& limits) {
    auto it = relation_ids_.find(label);
    if (it != relation_ids_.end()) return it->second;
    if (relation_labels_.size() >= limits.max_relations)
      throw capacity_error("build_kg: relation limit exceeded");
    uint32_t id = static_cast<uint32_t>(relation_labels_.size());
    relation_labels_.push_back(label);
    relation_ids_.emplace(label, id);
    return id;
  }

  void build_subject_index() {
    subj_off_.assign(n_entities() + 1, 0);
    for (uint32_t s : subj_) subj_off_[s + 1]++;
    for (size_t i = 1; i < subj_off_.size(); ++i) subj_off_[i] += subj_off_[i - 1];
    subj_csr_.resize(subj_.size());
    std::vector<uint64_t> cur(subj_off_.begin(), subj_off_.end() - 1);
    for (uint32_t t = 0; t < subj_.size(); ++t) subj_csr_[cur[subj_[t]]++] = t;
  }

  void check_shapes(const EntityVector& x, const RelationVector& r) const {
    if (x.dim != n_entities()) throw shape_error("follow: entity vector dimension mismatch");
    if (r.size() != n_relations()) throw shape_error("follow: relation vector dimension mismatch");
    for (uint32_t i : x.idx)
      if (i >= x.dim) throw shape_error("follow: entity index out of range");
  }

  static void write_vocab(const std::filesystem::path& p,
                          const std::vector<std::string>& labels) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw input_error("cannot write " + p.string());
    for (uint32_t i = 0; i < labels.size(); ++i)
      f << i << '\t' << labels[i] << '\n';
  }

  static std::vector<std::string> read_vocab(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw input_error("cannot read " + p.string());
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      size_t tab = line.find('\t');
      if (tab == std::string::npos) throw parse_error(p.string() + ": missing tab");
      if (std::stoul(line.substr(0, tab)) != labels.size())
        throw parse_error(p.string() + ": ids must be dense and ordered");
      labels.push_back(line.substr(tab + 1));
    }
    return labels;
  }

  static void write_u32s(std::ofstream& f, const std::vector<uint32_t>& v) {
    for (uint32_t x : v) {
      unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                            static_cast<unsigned char>((x >> 8) & 0xff),
                            static_cast<unsigned char>((x >> 16) & 0xff),
                            static_cast<unsigned char>((x >> 24) & 0xff)};
      f.write(reinterpret_cast<char*>(b), 4);
    }
  }

  static std::vector<uint32_t> read_u32s(std::ifstream& f, size_t n) {
    std::vector<uint32_t> v(n);
    std::vector<unsigned char> buf(n * 4);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(f.gcount()) != buf.size())
      throw parse_error("triples.bin: short read");
    for (size_t i = 0; i < n; ++i) {
      v[i] = uint32_t(buf[4 * i]) | (uint32_t(buf[4 * i + 1]) << 8) |
             (uint32_t(buf[4 * i + 2]) << 16) | (uint32_t(buf[4 * i + 3]) << 24);
    }
    return v;
  }
};

struct KgSubgraph {
  ReifiedKG kg;
  std::unordered_map<uint32_t, uint32_t> entity_remap;    // old -> new
  std::unordered_map<uint32_t, uint32_t> relation_remap;  // old -> new
};

inline KgSubgraph ReifiedKG::reachable_subgraph(const std::vector<uint32_t>& seeds,
                                                uint32_t t_max) const {
  if (seeds.empty()) throw input_error("reachable_subgraph: empty seed set");
  for (uint32_t s : seeds)
    if (s >= n_entities()) throw lookup_error("reachable_subgraph: invalid seed id");
  std::vector<uint32_t> hop(n_entities(), UINT32_MAX);
  std::queue<uint32_t> q;
  for (uint32_t s : seeds) {
    if (hop[s] == UINT32_MAX) {
      hop[s] = 0;
      q.push(s);
    }
  }
  while (!q.empty()) {
    uint32_t e = q.front();
    q.pop();
    if (hop[e] >= t_max) continue;  // children could only be subjects at hop >= t_max
    auto [b, en] = triples_of_subject(e);
    for (const uint32_t* p = b; p != en; ++p) {
      uint32_t o = obj_[*p];
      if (hop[o] == UINT32_MAX) {
        hop[o] = hop[e] + 1;
        q.push(o);
      }
    }
  }
  std::vector<Triple> kept;
  for (size_t t = 0; t < subj_.size(); ++t) {
    if (hop[subj_[t]] < t_max)
      kept.push_back({entity_labels_[subj_[t]], relation_labels_[pred_[t]],
                      entity_labels_[obj_[t]]});
  }
  KgSubgraph out;
  if (!kept.empty()) out.kg = build(kept);
  for (uint32_t e = 0; e < out.kg.n_entities(); ++e)
    out.entity_remap[entity_id(out.kg.entity_label(e))] = e;
  for (uint32_t r = 0; r < out.kg.n_relations(); ++r)
    out.relation_remap[relation_id(out.kg.relation_label(r))] = r;
  return out;
}

}  // namespace kgqa
