#pragma once

// Tokenizer and trainable pooling encoder. Produces a question embedding
// h_q plus per-token embeddings behind an interface that a contextual
// encoder could later satisfy unchanged.

#include <cctype>
#include <fstream>
#include <unordered_map>

#include "kgqa/common.hpp"

namespace kgqa {

struct TokenSeq {
  std::vector<std::string> tokens;                    // lowercased
  std::vector<std::pair<size_t, size_t>> offsets;     // [start, end) byte spans

  size_t size() const { return tokens.size(); }

  std::string join(size_t i, size_t j) const {  // inclusive span -> key
    std::string s;
    for (size_t k = i; k <= j; ++k) {
      if (k > i) s += ' ';
      s += tokens[k];
    }
    return s;
  }
};

// Lowercase, split on whitespace and punctuation boundaries, drop punctuation.
inline TokenSeq tokenize(const std::string& question) {
  TokenSeq out;
  std::string cur;
  size_t start = 0;
  auto flush = [&](size_t end) {
    if (!cur.empty()) {
      out.tokens.push_back(cur);
      out.offsets.emplace_back(start, end);
      cur.clear();
    }
  };
  for (size_t i = 0; i < question.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(question[i]);
    if (std::isspace(c) || std::ispunct(c)) {
      flush(i);
    } else {
      if (cur.empty()) start = i;
      cur += static_cast<char>(std::tolower(c));
    }
  }
  flush(question.size());
  if (out.tokens.empty()) throw input_error("tokenize: empty question");
  return out;
}

struct QuestionEncoding {
  Vec h_q;                     // question embedding, mean of token rows
  std::vector<Vec> token_embs; // one row per token
};

class EmbeddingTable {
 public:
  static constexpr uint32_t kUnknownRow = 0;

  EmbeddingTable() = default;

  EmbeddingTable(const std::vector<std::string>& tokens, uint32_t dim, Rng& rng)
      : dim_(dim) {
    vocab_.reserve(tokens.size() + 1);
    rows_.resize((tokens.size() + 1) * dim);
    for (uint32_t i = 0; i < tokens.size(); ++i) vocab_[tokens[i]] = i + 1;
    double b = 0.5 / dim;
    for (double& v : rows_) v = rng.uniform(-b, b);
  }

  // Vocabulary file: one token per line, row 0 reserved for unknown.
  static std::vector<std::string> read_vocab_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw input_error("cannot open vocab file: " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(f, line))
      if (!line.empty()) toks.push_back(line);
    return toks;
  }

  uint32_t dim() const { return dim_; }
  uint32_t n_rows() const { return static_cast<uint32_t>(rows_.size() / dim_); }

  uint32_t row_of(const std::string& tok) const {
    auto it = vocab_.find(tok);
    return it == vocab_.end() ? kUnknownRow : it->second;
  }

  Vec row(uint32_t r) const {
    return Vec(rows_.begin() + r * dim_, rows_.begin() + (r + 1) * dim_);
  }

  Vec& data() { return rows_; }
  const Vec& data() const { return rows_; }
  const std::unordered_map<std::string, uint32_t>& vocab() const { return vocab_; }

  void set_dim(uint32_t d) { dim_ = d; }
  void set_vocab(std::unordered_map<std::string, uint32_t> v) { vocab_ = std::move(v); }

  QuestionEncoding encode(const TokenSeq& toks) const {
    if (toks.tokens.empty()) throw input_error("encode: empty token sequence");
    QuestionEncoding enc;
    enc.token_embs.reserve(toks.size());
    enc.h_q.assign(dim_, 0.0);
    for (const auto& t : toks.tokens) {
      enc.token_embs.push_back(row(row_of(t)));
      axpy(1.0, enc.token_embs.back(), enc.h_q);
    }
    for (double& v : enc.h_q) v /= static_cast<double>(toks.size());
    return enc;
  }

  // Scatter-add upstream gradients into the touched table rows.
  // grad_h_q contributes 1/n to every token's row; grad_tokens[k] adds
  // directly to token k's row. Either input may be empty (skipped path).
  void encode_backward(const TokenSeq& toks, const Vec& grad_h_q,
                       const std::vector<Vec>& grad_tokens, Vec& grad_rows) const {
    if (grad_rows.size() != rows_.size())
      throw shape_error("encode_backward: grad buffer size mismatch");
    if (!grad_tokens.empty() && grad_tokens.size() != toks.size())
      throw shape_error("encode_backward: token gradient count mismatch");
    double inv_n = 1.0 / static_cast<double>(toks.size());
    for (size_t k = 0; k < toks.size(); ++k) {
      uint32_t r = row_of(toks.tokens[k]);
      double* dst = grad_rows.data() + size_t(r) * dim_;
      if (!grad_h_q.empty()) {
        if (grad_h_q.size() != dim_) throw shape_error("encode_backward: h_q grad dim");
        for (uint32_t d = 0; d < dim_; ++d) dst[d] += inv_n * grad_h_q[d];
      }
      if (!grad_tokens.empty()) {
        if (grad_tokens[k].size() != dim_)
          throw shape_error("encode_backward: token grad dim");
        for (uint32_t d = 0; d < dim_; ++d) dst[d] += grad_tokens[k][d];
      }
    }
  }

 private:
  uint32_t dim_ = 0;
  std::unordered_map<std::string, uint32_t> vocab_;
  Vec rows_;
};

// Mean of token embeddings over the inclusive span [i, j].
inline Vec span_embed(const QuestionEncoding& enc, size_t i, size_t j) {
  if (i > j || j >= enc.token_embs.size())
    throw input_error("span_embed: span indices out of range");
  Vec out(enc.token_embs[i].size(), 0.0);
  for (size_t k = i; k <= j; ++k) axpy(1.0, enc.token_embs[k], out);
  for (double& v : out) v /= static_cast<double>(j - i + 1);
  return out;
}

}  // namespace kgqa
