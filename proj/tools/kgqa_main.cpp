// Command-line entry point: build KG snapshots, generate synthetic tasks,
// train, evaluate, answer single questions with diagnostic traces, and run
// the gradient audit.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 audit failure.

#include <iostream>

#include "CLI11.hpp"

#include "kgqa/config.hpp"
#include "kgqa/trace.hpp"

namespace {

using namespace kgqa;

ReifiedKG load_kg(const std::string& path) {
  if (std::filesystem::is_directory(path)) return ReifiedKG::load_snapshot(path);
  return ReifiedKG::build(ReifiedKG::read_triple_file(path));
}

struct LoadedRun {
  ReifiedKG kg;
  AliasTable aliases;
  EntityFeatureIndex features;
  Dataset dataset;
  RunConfig config;

  PipelineContext ctx() const {
    return {&kg, &aliases, &features, config.max_span_len};
  }
};

LoadedRun load_run(const std::string& config_path, bool need_train_split) {
  LoadedRun run;
  run.config = RunConfig::from_file(config_path);
  run.config.require_readable({&run.config.triples});
  if (need_train_split)
    run.config.require_readable({&run.config.train_qa, &run.config.dev_qa});
  run.kg = load_kg(run.config.triples);
  std::vector<std::pair<std::string, std::string>> alias_pairs;
  if (!run.config.aliases.empty()) {
    run.config.require_readable({&run.config.aliases});
    alias_pairs = AliasTable::read_alias_file(run.config.aliases);
  }
  run.aliases = AliasTable::build(run.kg, alias_pairs);
  run.features = EntityFeatureIndex::build(run.kg);
  DatasetPaths paths{run.config.train_qa, run.config.dev_qa, run.config.test_qa};
  run.dataset = load_dataset(paths, run.kg);
  return run;
}

int cmd_build(const std::string& triples_path, const std::string& aliases_path,
              const std::string& out_dir, const std::vector<std::string>& seeds,
              int t_max) {
  auto triples = ReifiedKG::read_triple_file(triples_path);
  ReifiedKG kg = ReifiedKG::build(triples);
  if (!aliases_path.empty()) {
    // validate alias references up front
    AliasTable::build(kg, AliasTable::read_alias_file(aliases_path));
  }
  if (!seeds.empty()) {
    std::vector<uint32_t> ids;
    for (const auto& s : seeds) {
      uint32_t id = kg.entity_id(s);
      if (id == UINT32_MAX) throw lookup_error("unknown seed entity: " + s);
      ids.push_back(id);
    }
    auto sub = kg.reachable_subgraph(ids, t_max < 0 ? 0 : uint32_t(t_max));
    if (sub.kg.n_triples() == 0)
      std::cerr << "warning: restricted subgraph is empty\n";
    sub.kg.save_snapshot(out_dir);
    std::cout << "snapshot written: " << sub.kg.n_triples() << " triples, "
              << sub.kg.n_entities() << " entities, " << sub.kg.n_relations()
              << " relations\n";
    return 0;
  }
  kg.save_snapshot(out_dir);
  std::cout << "snapshot written: " << kg.n_triples() << " triples, "
            << kg.n_entities() << " entities, " << kg.n_relations()
            << " relations\n";
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  std::ifstream f(spec_path);
  if (!f) throw input_error("cannot open spec file: " + spec_path);
  SynthSpec spec = SynthSpec::from_json(nlohmann::json::parse(f));
  SynthTask task = generate_synth(spec);
  write_synth_files(task, out_dir);
  std::cout << "synthetic task written: " << task.triples.size() << " triples, "
            << task.train.size() << "/" << task.dev.size() << "/"
            << task.test.size() << " questions\n";
  return 0;
}

ModelParams init_params_for_run(const LoadedRun& run) {
  Rng rng(run.config.train.seed);
  auto vocab = build_token_vocab(run.dataset.train);
  return ModelParams::init(vocab, run.features.n_features(), run.config.dim,
                           run.kg.n_relations(), run.config.train.t_max, rng);
}

int cmd_train(const std::string& config_path) {
  LoadedRun run = load_run(config_path, true);
  if (run.config.checkpoint_dir.empty())
    throw input_error("config: checkpoint_dir required for train");
  ModelParams params = init_params_for_run(run);
  TrainResult result = train(run.ctx(), std::move(params), run.dataset.train,
                             run.dataset.dev, run.config.train, &std::cerr);
  result.best_params.save_checkpoint(run.config.checkpoint_dir, run.config.raw);
  std::ofstream log(std::filesystem::path(run.config.checkpoint_dir) /
                        "training_log.tsv",
                    std::ios::binary);
  log << result.log;
  std::cout << "best dev hits@1: " << result.best_dev_hits1 << " after "
            << result.steps << " steps\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& split) {
  LoadedRun run = load_run(config_path, false);
  ModelParams params = ModelParams::load_checkpoint(run.config.checkpoint_dir);
  const std::vector<QAExample>* examples;
  if (split == "train") examples = &run.dataset.train;
  else if (split == "dev") examples = &run.dataset.dev;
  else if (split == "test") examples = &run.dataset.test;
  else throw input_error("unknown split: " + split);
  EvalMetrics m = evaluate(run.ctx(), params, *examples, run.config.train.variant);
  nlohmann::json out = {{"hits_at_1", m.hits_at_1},
                        {"accuracy", m.accuracy},
                        {"coverage", m.coverage},
                        {"n", m.n},
                        {"skipped", m.skipped}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& config_path) {
  LoadedRun run = load_run(config_path, true);
  ModelParams params = init_params_for_run(run);
  PipelineContext ctx = run.ctx();
  const double tol = 1e-4;
  for (const auto& ex : run.dataset.train) {
    ForwardResult fr = forward_example(ctx, params, ex, run.config.train.variant, false);
    if (fr.skipped) continue;
    GradAuditReport rep = grad_audit(ctx, params, ex, run.config.train.variant);
    std::cout << "gradcheck: max relative error " << rep.max_rel_error << " over "
              << rep.checked << " coordinates (worst tensor: " << rep.worst_tensor
              << ")\n";
    return rep.pass(tol) ? 0 : 3;
  }
  throw input_error("gradcheck: no usable example in the train split");
}

int cmd_answer(const std::string& config_path, const std::string& question,
               const std::string& variant_opt, const std::string& gold_entity,
               const std::string& gold_span, const std::string& answer_label) {
  LoadedRun run = load_run(config_path, false);
  ModelParams params = ModelParams::load_checkpoint(run.config.checkpoint_dir);
  Variant variant = variant_opt.empty() ? run.config.train.variant
                                        : variant_from_string(variant_opt);
  QAExample ex;
  ex.question = question;
  if (!gold_entity.empty()) {
    uint32_t id = run.kg.entity_id(gold_entity);
    if (id == UINT32_MAX) throw lookup_error("unknown gold entity: " + gold_entity);
    ex.gold_entities.push_back(id);
  }
  if (!gold_span.empty()) {
    size_t colon = gold_span.find(':');
    if (colon == std::string::npos) throw input_error("gold span must be i:j");
    ex.gold_span = {uint32_t(std::stoul(gold_span.substr(0, colon))),
                    uint32_t(std::stoul(gold_span.substr(colon + 1)))};
  }
  ForwardResult fr = forward_example(run.ctx(), params, ex, variant, false);
  std::cout << format_trace(fr, run.kg, question, answer_label);
  return fr.skipped ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable KGQA engine"};
  app.require_subcommand(1);

  std::string triples_path, aliases_path, out_dir, spec_path, config_path;
  std::string split = "test", question, variant_opt, gold_entity, gold_span,
              answer_label;
  std::vector<std::string> seed_entities;
  int t_max = -1;

  auto* build = app.add_subcommand("build", "build a KG snapshot");
  build->add_option("--triples", triples_path)->required();
  build->add_option("--aliases", aliases_path);
  build->add_option("--out", out_dir)->required();
  build->add_option("--seed-entities", seed_entities)->delimiter(',');
  build->add_option("--t-max", t_max);

  auto* synth = app.add_subcommand("synth", "generate a synthetic KGQA task");
  synth->add_option("--spec", spec_path)->required();
  synth->add_option("--out", out_dir)->required();

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path)->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config_path)->required();
  eval->add_option("--split", split);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit");
  gradcheck->add_option("--config", config_path)->required();

  auto* answer = app.add_subcommand("answer", "answer one question with a trace");
  answer->add_option("--config", config_path)->required();
  answer->add_option("--question", question)->required();
  answer->add_option("--variant", variant_opt);
  answer->add_option("--gold-entity", gold_entity);
  answer->add_option("--gold-span", gold_span);
  answer->add_option("--answer", answer_label);

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed())
      return cmd_build(triples_path, aliases_path, out_dir, seed_entities, t_max);
    if (synth->parsed()) return cmd_synth(spec_path, out_dir);
    if (train->parsed()) return cmd_train(config_path);
    if (eval->parsed()) return cmd_eval(config_path, split);
    if (gradcheck->parsed()) return cmd_gradcheck(config_path);
    if (answer->parsed())
      return cmd_answer(config_path, question, variant_opt, gold_entity,
                        gold_span, answer_label);
  } catch (const kgqa::parse_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const kgqa::capacity_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const kgqa::lookup_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
