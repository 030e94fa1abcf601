#include <doctest.h>

#include "trailermatch/dataio.hpp"
#include "trailermatch/trainer.hpp"

#include <cmath>

using namespace trailermatch;

namespace {

TransportPlan make_plan(Mat values) {
  TransportPlan p;
  p.values = std::move(values);
  return p;
}

TrainPair tiny_pair(Index movie_shots, Index music_shots, int dim, std::uint64_t seed) {
  return synth_gen(movie_shots, music_shots, dim, 0.05, seed).pair;
}

}  // namespace

TEST_CASE("aligner loss closed forms") {
  Mat truth(2, 2);
  truth << 1.0, 0.0, 0.0, 0.0;
  const auto uniform = make_plan(Mat::Constant(2, 2, 0.25));

  const double kl = aligner_loss(uniform, make_plan(truth), 1e-12,
                                 KlDirection::TruthToPrediction);
  CHECK(kl == doctest::Approx(std::log(4.0)).epsilon(1e-9));

  // identical strictly positive plans: divergence vanishes as eps -> 0
  const double self_kl = aligner_loss(uniform, uniform, 1e-15,
                                      KlDirection::TruthToPrediction);
  CHECK(std::abs(self_kl) <= 1e-12);
  const double self_rev = aligner_loss(uniform, uniform, 1e-15,
                                       KlDirection::PredictionToSmoothedTruth);
  CHECK(std::abs(self_rev) <= 1e-12);
}

TEST_CASE("aligner loss matches a direct summation on random plans") {
  Rng rng(3);
  Mat p(3, 2), q(3, 2);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 2; ++j) {
      p(i, j) = 0.05 + rng.uniform();
      q(i, j) = 0.05 + rng.uniform();
    }
  p /= p.sum();
  q /= q.sum();
  const double eps = 1e-9;

  double expected = 0.0;
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 2; ++j)
      expected += q(i, j) * (std::log(q(i, j)) - std::log(p(i, j) + eps));
  CHECK(aligner_loss(make_plan(p), make_plan(q), eps, KlDirection::TruthToPrediction) ==
        doctest::Approx(expected).epsilon(1e-12));

  double expected_rev = 0.0;
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 2; ++j)
      expected_rev += p(i, j) * (std::log(p(i, j)) - std::log(q(i, j) + eps));
  CHECK(aligner_loss(make_plan(p), make_plan(q), eps,
                     KlDirection::PredictionToSmoothedTruth) ==
        doctest::Approx(expected_rev).epsilon(1e-12));

  CHECK_THROWS_AS(aligner_loss(make_plan(p), make_plan(Mat::Ones(2, 2)), eps,
                               KlDirection::TruthToPrediction),
                  std::invalid_argument);
}

TEST_CASE("selector loss closed forms and oracle") {
  Vec half = Vec::Constant(4, 0.5);
  Vec truth(4);
  truth << 1.0, 0.0, 2.0, 0.0;  // counts above 1 clamp to 1
  CHECK(selector_loss(half, truth) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Vec sharp(4);
  sharp << 1.0 - 1e-12, 1e-12, 1.0 - 1e-12, 1e-12;
  CHECK(selector_loss(sharp, truth) == doctest::Approx(0.0).epsilon(1e-9));

  Rng rng(4);
  Vec pred(5), counts(5);
  for (Index i = 0; i < 5; ++i) {
    pred(i) = 0.05 + 0.9 * rng.uniform();
    counts(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
  double expected = 0.0;
  for (Index i = 0; i < 5; ++i) {
    const double y = counts(i);
    expected -= y * std::log(pred(i)) + (1.0 - y) * std::log(1.0 - pred(i));
  }
  expected /= 5.0;
  CHECK(selector_loss(pred, counts) == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(selector_loss(Vec::Constant(3, 0.5), Vec::Zero(4)),
                  std::invalid_argument);
}

TEST_CASE("unrolled solve matches the reference solver") {
  Rng rng(6);
  Mat cost(5, 3);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 3; ++j) cost(i, j) = rng.uniform();

  const Vec mu = Vec::Constant(5, 0.2);
  const Vec gamma = Vec::Constant(3, 1.0 / 3.0);

  ad::Tape tape;
  ad::Var c = tape.constant(cost);
  int iters = 0;
  bool converged = false;
  ad::Var plan =
      differentiable_sinkhorn(tape, c, mu, gamma, 0.5, 1e-9, 5000, &iters, &converged);
  REQUIRE(converged);

  SinkhornConfig cfg;
  cfg.lambda = 0.5;
  cfg.max_iter = 5000;
  const auto reference =
      sinkhorn(CostMatrix(cost), Marginal::uniform(5), Marginal::uniform(3), cfg);
  // both backends stop within tol of the fixed point, so they agree to ~tol
  CHECK((plan.value() - reference.plan.values).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("tape losses equal the plain implementations") {
  const TrainPair pair = tiny_pair(8, 3, 8, 11);
  const ModelParams params = init_params(8, 2, 5);
  TrainConfig cfg;
  cfg.lambda = 1.0;

  LossParts parts;
  ad::Tape tape;
  ipot_pair_loss(tape, pair, params, cfg, &parts);

  // recompute through the public plain-value route
  ad::Tape t2;
  const ForwardTrace trace = encode(t2, pair.movie, pair.music, params, false);
  const Mat cost = cost_matrix(t2, trace).value();
  SinkhornConfig scfg;
  scfg.lambda = cfg.lambda;
  const auto solved = partial_sinkhorn(CostMatrix(cost), pair.selection_counts(),
                                       Marginal::uniform(pair.music_shots()), scfg);
  const double align = aligner_loss(solved.plan, pair.truth_plan(), cfg.kl_eps,
                                    cfg.kl_direction);
  const double sel = selector_loss(select_probs(trace), pair.selection_counts());

  // the two routes solve the lower level with different backends, so they
  // agree only to solver tolerance
  CHECK(parts.aligner == doctest::Approx(align).epsilon(1e-6));
  CHECK(parts.selector == doctest::Approx(sel).epsilon(1e-12));
  CHECK(parts.total == doctest::Approx(align + cfg.delta * sel).epsilon(1e-6));
}

TEST_CASE("delta = 0 leaves the selector head untouched") {
  const TrainPair pair = tiny_pair(6, 2, 4, 2);
  const ModelParams params = init_params(4, 2, 8);
  TrainConfig cfg;
  cfg.delta = 0.0;

  ad::Tape tape;
  ad::Var loss = ipot_pair_loss(tape, pair, params, cfg);
  const auto grads = tape.backward(loss);
  for (const char* name : {"selector.w1", "selector.b1", "selector.w2", "selector.b2"}) {
    CHECK((grads.at(name).array() == 0.0).all());
  }
  // the towers still receive gradients through the aligner
  CHECK(grads.at("movie.mlp.w1").cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("unselected cost rows receive exactly zero gradient") {
  Rng rng(15);
  Mat cost0(6, 3);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 3; ++j) cost0(i, j) = 0.5 + rng.uniform();

  // register the cost itself as the parameter; rows 1, 3, 5 unselected
  const std::vector<Index> selected = {0, 2, 4};
  Mat truth = Mat::Zero(3, 3);
  truth(0, 0) = truth(1, 1) = truth(2, 2) = 1.0 / 3.0;

  ad::Tape tape;
  ad::Var cost = tape.param("cost", cost0);
  ad::Var sub = tape.gather_rows(cost, selected);
  const Vec mu = Vec::Constant(3, 1.0 / 3.0);
  ad::Var plan = differentiable_sinkhorn(tape, sub, mu, mu, 1.0, 1e-9, 500);
  ad::Var cross = tape.sum(tape.mul(tape.constant(truth),
                                    tape.log(tape.add_scalar(plan, 1e-12))));
  const auto grads = tape.backward(tape.scale(cross, -1.0));
  const Mat& g = grads.at("cost");
  for (const Index dead : {1, 3, 5}) CHECK((g.row(dead).array() == 0.0).all());
  CHECK(g.row(0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("full objective passes a finite-difference check on a small pair") {
  const TrainPair pair = tiny_pair(6, 3, 4, 21);
  const ModelParams params = init_params(4, 2, 13);
  TrainConfig cfg;

  auto build = [&](ad::Tape& t, const std::vector<std::pair<std::string, Mat>>& p) {
    ModelParams probe;
    probe.dim = 4;
    probe.heads = 2;
    probe.tensors = p;
    return ipot_pair_loss(t, pair, probe, cfg);
  };
  CHECK(ad::grad_check(build, params.tensors, 1e-6) <= 1e-4);
}

TEST_CASE("finite-difference check also covers the literal KL direction") {
  const TrainPair pair = tiny_pair(6, 3, 4, 22);
  const ModelParams params = init_params(4, 2, 14);
  TrainConfig cfg;
  cfg.kl_direction = KlDirection::PredictionToSmoothedTruth;

  auto build = [&](ad::Tape& t, const std::vector<std::pair<std::string, Mat>>& p) {
    ModelParams probe;
    probe.dim = 4;
    probe.heads = 2;
    probe.tensors = p;
    return ipot_pair_loss(t, pair, probe, cfg);
  };
  CHECK(ad::grad_check(build, params.tensors, 1e-6) <= 1e-4);
}

TEST_CASE("batch gradient is invariant to pair order") {
  const TrainPair a = tiny_pair(8, 3, 8, 31);
  const TrainPair b = tiny_pair(8, 3, 8, 32);
  const TrainPair c = tiny_pair(8, 3, 8, 33);
  const ModelParams params = init_params(8, 2, 1);
  TrainConfig cfg;

  const auto g1 = batch_gradients({&a, &b, &c}, params, cfg);
  const auto g2 = batch_gradients({&c, &a, &b}, params, cfg);
  for (const auto& [name, grad] : g1)
    CHECK((grad - g2.at(name)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("200 steps overfit a single pair") {
  const TrainPair pair = tiny_pair(10, 3, 16, 40);
  ModelParams params = init_params(16, 2, 40);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.lambda = 0.1;
  AdamState adam = AdamState::init(params);

  const LossParts first = ipot_step({&pair}, params, cfg, adam);
  LossParts last;
  for (int step = 1; step < 200; ++step) last = ipot_step({&pair}, params, cfg, adam);
  CHECK(last.total <= 0.1 * first.total);
}

TEST_CASE("epochs = 0 returns the initial parameters") {
  const std::vector<TrainPair> dataset = {tiny_pair(8, 2, 4, 50)};
  TrainConfig cfg;
  cfg.epochs = 0;
  const ModelParams init = init_params(4, 2, 50);
  const TrainResult result = train(dataset, cfg, init);
  CHECK(result.history.empty());
  for (std::size_t i = 0; i < init.tensors.size(); ++i)
    CHECK((result.params.tensors[i].second.array() ==
           init.tensors[i].second.array()).all());
}

TEST_CASE("training is deterministic per seed") {
  std::vector<TrainPair> dataset;
  for (int k = 0; k < 3; ++k) dataset.push_back(tiny_pair(8, 2, 4, 60 + k));
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  cfg.seed = 9;

  const TrainResult a = train(dataset, cfg);
  const TrainResult b = train(dataset, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].mean_loss == b.history[e].mean_loss);
    CHECK(a.history[e].mean_aligner == b.history[e].mean_aligner);
  }
  for (std::size_t i = 0; i < a.params.tensors.size(); ++i)
    CHECK((a.params.tensors[i].second.array() == b.params.tensors[i].second.array()).all());
}

TEST_CASE("non-finite state aborts with diagnostics") {
  const TrainPair pair = tiny_pair(6, 2, 4, 70);
  TrainConfig cfg;

  // poisoned tower weight: caught at the encoder's activation check
  ModelParams bad_tower = init_params(4, 2, 3);
  bad_tower.at("movie.mlp.w1")(0, 0) = std::numeric_limits<double>::quiet_NaN();
  ad::Tape t1;
  CHECK_THROWS_AS(ipot_pair_loss(t1, pair, bad_tower, cfg), std::runtime_error);

  // poisoned selector weight: slips past the latent check, caught by the
  // non-finite loss guard
  ModelParams bad_head = init_params(4, 2, 3);
  bad_head.at("selector.w2")(0, 0) = std::numeric_limits<double>::quiet_NaN();
  ad::Tape t2;
  CHECK_THROWS_AS(ipot_pair_loss(t2, pair, bad_head, cfg), std::runtime_error);
}

TEST_CASE("empty dataset is rejected") {
  TrainConfig cfg;
  CHECK_THROWS_AS(train({}, cfg), std::invalid_argument);
}

TEST_CASE("loss history formats as a plain-text table") {
  std::vector<EpochStats> history = {{0, 1.5, 1.0, 0.5}, {1, 0.75, 0.5, 0.25}};
  const std::string table = format_loss_history(history);
  CHECK(table.find("# epoch") != std::string::npos);
  CHECK(table.find("0.75") != std::string::npos);
}
