#pragma once

// All trainable tensors in one place, plus checkpoint serialization.

#include <functional>

#include "kgqa/inference.hpp"
#include "kgqa/resolver.hpp"
#include "kgqa/text.hpp"

#include "json.hpp"

namespace kgqa {

struct ModelParams {
  EmbeddingTable table;   // token embeddings, row 0 unknown
  Vec span_scorer;        // w_s, length D
  Vec feature_rows;       // n_features x D entity-feature embeddings
  HopDecoderParams decoder;

  uint32_t dim() const { return table.dim(); }

  static ModelParams init(const std::vector<std::string>& token_vocab,
                          uint32_t n_features, uint32_t dim, uint32_t n_relations,
                          uint32_t t_max, Rng& rng) {
    ModelParams p;
    p.table = EmbeddingTable(token_vocab, dim, rng);
    p.span_scorer.resize(dim);
    double b = 0.5 / dim;
    for (double& v : p.span_scorer) v = rng.uniform(-b, b);
    p.feature_rows.resize(size_t(n_features) * dim);
    for (double& v : p.feature_rows) v = rng.uniform(-b, b);
    p.decoder = HopDecoderParams::init(t_max, dim, n_relations, rng);
    return p;
  }

  // Same shapes, all zeros; used as a gradient buffer.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.visit([](const std::string&, Vec& v) { std::fill(v.begin(), v.end(), 0.0); });
    return z;
  }

  void visit(const std::function<void(const std::string&, Vec&)>& fn) {
    fn("token_embeddings", table.data());
    fn("span_scorer", span_scorer);
    fn("feature_embeddings", feature_rows);
    for (uint32_t t = 0; t < decoder.t_max; ++t)
      fn("w_inf_" + std::to_string(t + 1), decoder.w_inf[t]);
    for (uint32_t t = 0; t < decoder.t_max; ++t)
      fn("w_att_" + std::to_string(t + 1), decoder.w_att[t]);
  }

  void visit(const std::function<void(const std::string&, const Vec&)>& fn) const {
    const_cast<ModelParams*>(this)->visit(
        [&](const std::string& n, Vec& v) { fn(n, v); });
  }

  bool all_params_finite() const {
    bool ok = true;
    visit([&](const std::string&, const Vec& v) { ok = ok && all_finite(v); });
    return ok;
  }

  // ---- checkpoint: one little-endian f64 file per tensor + manifest ----

  void save_checkpoint(const std::filesystem::path& dir,
                       const nlohmann::json& config_echo = {}) const {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["dtype"] = "f64";
    manifest["dim"] = table.dim();
    manifest["n_relations"] = decoder.n_relations;
    manifest["t_max"] = decoder.t_max;
    manifest["config"] = config_echo;
    nlohmann::json tensors = nlohmann::json::array();
    visit([&](const std::string& name, const Vec& v) {
      write_f64(dir / (name + ".bin"), v);
      tensors.push_back({{"name", name}, {"file", name + ".bin"},
                         {"shape", nlohmann::json::array({v.size()})}});
    });
    tensors.front()["shape"] = {table.n_rows(), table.dim()};
    for (auto& t : tensors)
      if (t["name"] == "feature_embeddings")
        t["shape"] = {feature_rows.size() / table.dim(), table.dim()};
    manifest["tensors"] = tensors;
    std::ofstream mf(dir / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';
    // token vocabulary, row order (row 0 unknown, not listed)
    std::vector<std::string> toks(table.n_rows() - 1);
    for (const auto& [tok, row] : table.vocab()) toks[row - 1] = tok;
    std::ofstream vf(dir / "vocab.txt", std::ios::binary);
    for (const auto& t : toks) vf << t << '\n';
  }

  static ModelParams load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw input_error("cannot open checkpoint manifest: " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    ModelParams p;
    uint32_t dim = manifest.at("dim");
    std::vector<std::string> toks =
        EmbeddingTable::read_vocab_file((dir / "vocab.txt").string());
    Rng dummy(0);
    p.table = EmbeddingTable(toks, dim, dummy);
    p.decoder.t_max = manifest.at("t_max");
    p.decoder.dim = dim;
    p.decoder.n_relations = manifest.at("n_relations");
    p.decoder.w_inf.resize(p.decoder.t_max);
    p.decoder.w_att.resize(p.decoder.t_max);
    std::unordered_map<std::string, size_t> sizes;
    for (const auto& t : manifest.at("tensors")) {
      size_t n = 1;
      for (size_t s : t.at("shape").get<std::vector<size_t>>()) n *= s;
      sizes[t.at("name").get<std::string>()] = n;
    }
    p.span_scorer.resize(sizes.at("span_scorer"));
    p.feature_rows.resize(sizes.at("feature_embeddings"));
    for (uint32_t t = 0; t < p.decoder.t_max; ++t) {
      p.decoder.w_inf[t].resize(sizes.at("w_inf_" + std::to_string(t + 1)));
      p.decoder.w_att[t].resize(sizes.at("w_att_" + std::to_string(t + 1)));
    }
    p.visit([&](const std::string& name, Vec& v) {
      read_f64(dir / (name + ".bin"), v);
    });
    return p;
  }

 private:
  static void write_f64(const std::filesystem::path& p, const Vec& v) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw input_error("cannot write " + p.string());
    for (double x : v) {
      uint64_t bits;
      std::memcpy(&bits, &x, 8);
      unsigned char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
      f.write(reinterpret_cast<char*>(b), 8);
    }
  }

  static void read_f64(const std::filesystem::path& p, Vec& v) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw input_error("cannot read " + p.string());
    std::vector<unsigned char> buf(v.size() * 8);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(f.gcount()) != buf.size())
      throw parse_error(p.string() + ": short read");
    for (size_t i = 0; i < v.size(); ++i) {
      uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= uint64_t(buf[8 * i + k]) << (8 * k);
      std::memcpy(&v[i], &bits, 8);
    }
  }
};

}  // namespace kgqa
