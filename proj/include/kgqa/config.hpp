#pragma once

// File-backed run configuration. Unknown keys are rejected and all paths are
// validated before any long-running work starts.

#include "kgqa/trainer.hpp"

namespace kgqa {

struct RunConfig {
  std::string triples;
  std::string aliases;   // optional
  std::string train_qa, dev_qa, test_qa;
  std::string checkpoint_dir;
  TrainConfig train;
  uint32_t dim = 64;
  uint32_t max_span_len = 6;
  nlohmann::json raw;

  static RunConfig from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw input_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw parse_error("config parse error: " + std::string(e.what()));
    }
    return from_json(j);
  }

  static RunConfig from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "triples", "aliases", "train_qa", "dev_qa", "test_qa", "checkpoint_dir",
        "variant", "batch_size", "grad_accumulation", "max_steps",
        "learning_rate", "t_max", "eval_every", "patience", "dim",
        "max_span_len", "seed"};
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw input_error("config: unknown key: " + k);
    RunConfig c;
    c.raw = j;
    auto get_str = [&](const char* k, std::string& dst) {
      if (j.contains(k)) dst = j.at(k).get<std::string>();
    };
    get_str("triples", c.triples);
    get_str("aliases", c.aliases);
    get_str("train_qa", c.train_qa);
    get_str("dev_qa", c.dev_qa);
    get_str("test_qa", c.test_qa);
    get_str("checkpoint_dir", c.checkpoint_dir);
    if (j.contains("variant"))
      c.train.variant = variant_from_string(j.at("variant").get<std::string>());
    auto get_u32 = [&](const char* k, uint32_t& dst) {
      if (j.contains(k)) dst = j.at(k).get<uint32_t>();
    };
    get_u32("batch_size", c.train.batch_size);
    get_u32("grad_accumulation", c.train.grad_accumulation);
    get_u32("max_steps", c.train.max_steps);
    get_u32("t_max", c.train.t_max);
    get_u32("eval_every", c.train.eval_every);
    get_u32("patience", c.train.patience);
    get_u32("dim", c.dim);
    get_u32("max_span_len", c.max_span_len);
    if (j.contains("learning_rate")) c.train.learning_rate = j.at("learning_rate");
    if (j.contains("seed")) c.train.seed = j.at("seed").get<uint64_t>();
    c.train.validate();
    if (c.dim == 0 || c.max_span_len == 0)
      throw input_error("config: dim and max_span_len must be positive");
    return c;
  }

  void require_readable(std::initializer_list<const std::string*> paths) const {
    for (const std::string* p : paths) {
      if (p->empty()) throw input_error("config: missing required path");
      if (!std::filesystem::exists(*p))
        throw input_error("config: path does not exist: " + *p);
    }
  }
};

}  // namespace kgqa
