#include "doctest.h"

#include <sstream>

#include "kgqa/trainer.hpp"
#include "test_util.hpp"

using namespace kgqa;
using namespace kgqa_test;

namespace {

// Tiny two-relation QA world: people have jobs and home cities, questions
// ask for one or the other, aliases are just the entity titles.
struct TrainFixture {
  ReifiedKG kg;
  AliasTable aliases;
  EntityFeatureIndex features;
  PipelineContext ctx;
  std::vector<QAExample> examples;

  TrainFixture()
      : kg(ReifiedKG::build({
            {"alice", "has job", "farmer"},
            {"alice", "lives in", "oslo"},
            {"bob", "has job", "singer"},
            {"bob", "lives in", "lima"},
            {"carol", "has job", "farmer"},
            {"carol", "lives in", "lima"},
            {"dave", "has job", "singer"},
            {"dave", "lives in", "oslo"},
        })),
        aliases(AliasTable::build(kg)),
        features(EntityFeatureIndex::build(kg)) {
    ctx.kg = &kg;
    ctx.aliases = &aliases;
    ctx.features = &features;
    for (const std::string& who : {"alice", "bob", "carol", "dave"}) {
      uint32_t p = kg.entity_id(who);
      uint32_t job = answer_of(p, "has job");
      uint32_t city = answer_of(p, "lives in");
      // "what job does <who> have" / "where does <who> live"
      examples.push_back({"what job does " + who + " have",
                          std::pair<uint32_t, uint32_t>{3, 3}, {p}, {job}});
      examples.push_back({"where does " + who + " live",
                          std::pair<uint32_t, uint32_t>{2, 2}, {p}, {city}});
    }
  }

  uint32_t answer_of(uint32_t subj, const std::string& rel) const {
    uint32_t r = kg.relation_id(rel);
    for (size_t t = 0; t < kg.n_triples(); ++t)
      if (kg.subject(t) == subj && kg.predicate(t) == r) return kg.object(t);
    throw lookup_error("fixture: no answer");
  }

  std::vector<std::string> vocab() const {
    std::set<std::string> toks;
    for (const auto& ex : examples)
      for (const auto& t : tokenize(ex.question).tokens) toks.insert(t);
    return {toks.begin(), toks.end()};
  }

  ModelParams fresh_params(uint64_t seed, uint32_t dim = 8,
                           uint32_t t_max = 1) const {
    Rng rng(seed);
    return ModelParams::init(vocab(), features.n_features(), dim,
                             kg.n_relations(), t_max, rng);
  }
};

bool params_equal(const ModelParams& a, const ModelParams& b) {
  std::vector<const Vec*> av;
  a.visit([&](const std::string&, const Vec& v) { av.push_back(&v); });
  bool eq = true;
  size_t slot = 0;
  b.visit([&](const std::string&, const Vec& v) {
    if (*av[slot++] != v) eq = false;
  });
  return eq;
}

}  // namespace

TEST_CASE("bce_loss: near-perfect prediction has near-zero loss") {
  EntityVector y;
  y.dim = 4;
  y.idx = {2};
  y.val = {1.0};
  BceResult r = bce_loss(y, {2});
  CHECK(r.loss < 1e-5);
  CHECK(r.loss >= 0.0);
}

TEST_CASE("bce_loss: hand-computed two-entity case") {
  EntityVector y;
  y.dim = 2;
  y.idx = {0, 1};
  y.val = {0.5, 0.5};
  BceResult r = bce_loss(y, {0});
  // -(log 0.5 + log 0.5)/2 = log 2
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // analytic gradient: -(1/2)/0.5 on the answer, +(1/2)/0.5 off it
  CHECK(r.grad_y_hat[0] == doctest::Approx(-1.0));
  CHECK(r.grad_y_hat[1] == doctest::Approx(1.0));
}

TEST_CASE("bce_loss: sparse evaluation matches a dense reimplementation") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    uint32_t n = 3 + uint32_t(rng.next_below(20));
    EntityVector y = random_entity_vec(rng, n, 1 + uint32_t(rng.next_below(n - 1)));
    std::vector<uint32_t> answers;
    for (uint32_t i = 0; i < n; ++i)
      if (rng.next_double() < 0.3) answers.push_back(i);
    if (answers.empty()) answers.push_back(uint32_t(rng.next_below(n)));

    Vec dense = y.to_dense();
    double expect = 0.0;
    std::vector<char> pos(n, 0);
    for (uint32_t a : answers) pos[a] = 1;
    for (uint32_t i = 0; i < n; ++i) {
      double c = std::min(std::max(dense[i], kProbClamp), 1.0 - kProbClamp);
      expect += pos[i] ? std::log(c) : std::log(1.0 - c);
    }
    expect = -expect / n;
    BceResult r = bce_loss(y, answers, false);
    CHECK(r.loss == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("bce_loss: gradient matches finite differences; clamped entries zero") {
  EntityVector y;
  y.dim = 5;
  y.idx = {0, 1, 3, 4};
  y.val = {0.3, 0.6, 1e-9, 0.9999999999};  // last two clamp low/high
  BceResult r = bce_loss(y, {0, 3});
  const double h = 1e-7;
  for (size_t k = 0; k < 2; ++k) {  // unclamped entries only
    EntityVector yp = y, ym = y;
    yp.val[k] += h;
    ym.val[k] -= h;
    double fd = (bce_loss(yp, {0, 3}, false).loss -
                 bce_loss(ym, {0, 3}, false).loss) / (2 * h);
    CHECK(r.grad_y_hat[y.idx[k]] == doctest::Approx(fd).epsilon(1e-5));
  }
  CHECK(r.grad_y_hat[3] == 0.0);
  CHECK(r.grad_y_hat[4] == 0.0);
  CHECK(r.grad_y_hat[2] == 0.0);  // outside support
  CHECK_THROWS_AS(bce_loss(y, {9}), shape_error);
}

TEST_CASE("adam: lr=0 is a bitwise no-op") {
  TrainFixture fx;
  ModelParams p = fx.fresh_params(3);
  ModelParams before = p;
  ModelParams g = p.zeros_like();
  g.span_scorer[0] = 1.5;
  g.decoder.w_inf[0][2] = -0.3;
  AdamOptimizer opt(0.0);
  opt.step(p, g);
  CHECK(params_equal(p, before));
}

TEST_CASE("adam: first step matches the closed form") {
  TrainFixture fx;
  ModelParams p = fx.fresh_params(4);
  ModelParams before = p;
  ModelParams g = p.zeros_like();
  Rng rng(5);
  g.visit([&](const std::string&, Vec& v) {
    for (double& x : v) x = rng.uniform(-1, 1);
  });
  double lr = 0.01;
  AdamOptimizer opt(lr);
  opt.step(p, g);
  // with bias correction, step 1 reduces to lr * g / (|g| + eps)
  std::vector<const Vec*> gs, bs;
  g.visit([&](const std::string&, const Vec& v) { gs.push_back(&v); });
  before.visit([&](const std::string&, const Vec& v) { bs.push_back(&v); });
  size_t slot = 0;
  p.visit([&](const std::string&, Vec& v) {
    const Vec& grad = *gs[slot];
    const Vec& prev = *bs[slot];
    for (size_t i = 0; i < v.size(); ++i) {
      // m_hat = g and v_hat = g^2 after one step
      double expect = prev[i] - lr * grad[i] / (std::abs(grad[i]) + 1e-8);
      CHECK(v[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    ++slot;
  });
}

TEST_CASE("train_step is deterministic") {
  TrainFixture fx;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.01;
  std::vector<const QAExample*> batch;
  for (const auto& ex : fx.examples) batch.push_back(&ex);

  ModelParams p1 = fx.fresh_params(7);
  ModelParams p2 = fx.fresh_params(7);
  Trainer t1(fx.ctx, cfg), t2(fx.ctx, cfg);
  StepMetrics m1 = t1.train_step(batch, p1);
  StepMetrics m2 = t2.train_step(batch, p2);
  CHECK(m1.loss == m2.loss);
  CHECK(m1.used == fx.examples.size());
  CHECK(m1.skipped == 0);
  CHECK(params_equal(p1, p2));
}

TEST_CASE("gradient accumulation matches the equivalent single batch") {
  TrainFixture fx;
  std::vector<const QAExample*> all, first, second;
  for (const auto& ex : fx.examples) all.push_back(&ex);
  first.assign(all.begin(), all.begin() + 4);
  second.assign(all.begin() + 4, all.end());

  TrainConfig one;
  one.batch_size = 8;
  one.learning_rate = 0.01;
  TrainConfig acc = one;
  acc.batch_size = 4;
  acc.grad_accumulation = 2;

  ModelParams pa = fx.fresh_params(9);
  ModelParams pb = fx.fresh_params(9);
  Trainer ta(fx.ctx, one), tb(fx.ctx, acc);
  ta.train_step(all, pa);
  tb.train_step(first, pb);
  CHECK(tb.cycle_open());
  tb.train_step(second, pb);
  CHECK(!tb.cycle_open());

  // same mean gradient up to summation order
  std::vector<const Vec*> av;
  pa.visit([&](const std::string&, const Vec& v) { av.push_back(&v); });
  size_t slot = 0;
  pb.visit([&](const std::string&, const Vec& v) {
    const Vec& u = *av[slot++];
    for (size_t i = 0; i < v.size(); ++i)
      CHECK(v[i] == doctest::Approx(u[i]).epsilon(1e-9));
  });
}

TEST_CASE("grad_audit passes for every variant") {
  TrainFixture fx;
  for (Variant v : {Variant::baseline, Variant::er, Variant::e2e}) {
    ModelParams p = fx.fresh_params(11, 6, 2);
    GradAuditReport rep = grad_audit(fx.ctx, p, fx.examples[0], v, 200);
    INFO("variant ", to_string(v), " worst ", rep.worst_tensor, " err ",
         rep.max_rel_error);
    CHECK(rep.checked > 0);
    CHECK(rep.pass(1e-4));
  }
}

TEST_CASE("finite-difference oracle catches a corrupted gradient") {
  TrainFixture fx;
  ModelParams p = fx.fresh_params(13, 6, 1);
  const QAExample& ex = fx.examples[0];
  ForwardResult fr = forward_example(fx.ctx, p, ex, Variant::e2e, false);
  REQUIRE(!fr.skipped);
  ModelParams analytic = p.zeros_like();
  backward_example(fx.ctx, p, ex, Variant::e2e, fr, analytic);
  // sign-flip the decoder gradient and re-run the audit arithmetic by hand
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t i = 0; i < p.decoder.w_inf[0].size(); ++i) {
    double corrupted = -analytic.decoder.w_inf[0][i];
    ModelParams pp = p, pm = p;
    pp.decoder.w_inf[0][i] += h;
    pm.decoder.w_inf[0][i] -= h;
    double fd = (forward_example(fx.ctx, pp, ex, Variant::e2e, true).loss -
                 forward_example(fx.ctx, pm, ex, Variant::e2e, true).loss) / (2 * h);
    if (std::abs(corrupted) < 1e-8 && std::abs(fd) < 1e-8) continue;
    worst = std::max(worst, std::abs(corrupted - fd) /
                                std::max(std::abs(corrupted), std::abs(fd)));
  }
  CHECK(worst > 0.1);
}

TEST_CASE("training learns the two-relation task") {
  TrainFixture fx;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.02;
  cfg.max_steps = 400;
  cfg.eval_every = 20;
  cfg.patience = 5;
  cfg.variant = Variant::e2e;
  cfg.seed = 17;
  ModelParams p = fx.fresh_params(17);
  TrainResult res = train(fx.ctx, p, fx.examples, fx.examples, cfg);
  CHECK(res.best_dev_hits1 >= 0.9);
  CHECK(res.steps > 0);
  CHECK(res.log.rfind("step\ttrain_loss\tdev_hits1\tlr\twall_seconds\n", 0) == 0);
  // loss column is finite and eventually below the uniform-answer baseline
  std::istringstream log(res.log);
  std::string line;
  std::getline(log, line);  // header
  double first_loss = -1.0, last_loss = -1.0;
  while (std::getline(log, line)) {
    std::istringstream ls(line);
    double step, loss;
    ls >> step >> loss;
    if (first_loss < 0) first_loss = loss;
    last_loss = loss;
  }
  CHECK(last_loss < first_loss);
}

TEST_CASE("early stopping honours patience when nothing improves") {
  TrainFixture fx;
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0;  // frozen model: dev metric can never improve
  cfg.max_steps = 100;
  cfg.eval_every = 1;
  cfg.patience = 2;
  ModelParams p = fx.fresh_params(19);
  TrainResult res = train(fx.ctx, p, fx.examples, fx.examples, cfg);
  // eval 1 improves over the -1 sentinel; then patience+1 flat evals stop it
  CHECK(res.steps == 1 + cfg.patience + 1);
  CHECK(params_equal(res.best_params, p));
  CHECK(res.best_dev_hits1 >= 0.0);
}

TEST_CASE("train rejects empty splits and bad configs") {
  TrainFixture fx;
  TrainConfig cfg;
  ModelParams p = fx.fresh_params(23);
  CHECK_THROWS_AS(train(fx.ctx, p, {}, fx.examples, cfg), input_error);
  CHECK_THROWS_AS(train(fx.ctx, p, fx.examples, {}, cfg), input_error);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), input_error);
  bad = TrainConfig{};
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(bad.validate(), input_error);
}

TEST_CASE("checkpoint round-trip preserves every tensor bitwise") {
  TrainFixture fx;
  ModelParams p = fx.fresh_params(29, 6, 2);
  auto dir = std::filesystem::temp_directory_path() / "kgqa_ckpt_test";
  std::filesystem::remove_all(dir);
  p.save_checkpoint(dir, {{"note", "test"}});
  ModelParams q = ModelParams::load_checkpoint(dir);
  CHECK(params_equal(p, q));
  CHECK(q.table.row_of("alice") == p.table.row_of("alice"));
  CHECK(q.decoder.t_max == 2);
  std::filesystem::remove_all(dir);
}
