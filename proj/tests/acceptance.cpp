// Acceptance suite: one numbered criterion per section, one [PASS]/[FAIL]
// line each, nonzero exit when anything failed.

#include "trailermatch/dataio.hpp"
#include "trailermatch/metrics.hpp"
#include "trailermatch/pipeline.hpp"
#include "trailermatch/sinkhorn.hpp"
#include "trailermatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <string>
#include <vector>

using namespace trailermatch;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] %d. %s: %s\n", ok ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Mat random_uniform(Index rows, Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform();
  return m;
}

char buf[512];

// 1. Feasibility on 100 random 50x20 instances, lambda = 0.1, within 1 s.
void criterion_1() {
  Rng rng(101);
  std::vector<CostMatrix> costs;
  for (int t = 0; t < 100; ++t) costs.emplace_back(random_uniform(50, 20, rng));
  const Marginal mu = Marginal::uniform(50);
  const Marginal gamma = Marginal::uniform(20);
  SinkhornConfig cfg;
  cfg.lambda = 0.1;
  cfg.tol = 1e-9;
  cfg.max_iter = 10000;

  double worst = 0.0;
  bool all_converged = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (const CostMatrix& cost : costs) {
    const SinkhornResult r = sinkhorn(cost, mu, gamma, cfg);
    all_converged = all_converged && r.converged;
    worst = std::max(worst, plan_marginal_violation(r.plan, mu, gamma));
  }
  const double elapsed = seconds_since(t0);
  std::snprintf(buf, sizeof(buf),
                "100 instances, worst violation %.2e (<= 1e-9), %.3f s (<= 1 s)", worst,
                elapsed);
  report(1, "Sinkhorn feasibility", all_converged && worst <= 1e-9 && elapsed <= 1.0, buf);
}

// Smallest gap between the best and any other permutation's total cost.
double assignment_gap(const Mat& cost) {
  const Index n = cost.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  double best = std::numeric_limits<double>::infinity();
  double second = best;
  do {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    if (total < best) {
      second = best;
      best = total;
    } else if (total < second) {
      second = total;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return second - best;
}

// 2. Agreement with the exhaustive oracle at lambda = 1e-3 on 50 square instances.
// "Distinct costs" is enforced by rejecting draws whose best assignment is
// nearly tied; at a tie the entropic plan is a genuine mixture and no solver
// could match the oracle's single permutation.
void criterion_2() {
  Rng rng(202);
  SinkhornConfig cfg;
  cfg.lambda = 1e-3;
  cfg.tol = 1e-9;
  cfg.max_iter = 50000;

  double worst = 0.0;
  int rejected = 0;
  for (int t = 0; t < 50; ++t) {
    const Index n = 2 + static_cast<Index>(t % 5);
    Mat draw = random_uniform(n, n, rng);
    while (assignment_gap(draw) < 0.05) {
      draw = random_uniform(n, n, rng);
      ++rejected;
    }
    const CostMatrix cost(std::move(draw));
    const Marginal uniform = Marginal::uniform(n);
    const SinkhornResult solved = sinkhorn(cost, uniform, uniform, cfg);
    const TransportPlan oracle = ot_oracle(cost, uniform, uniform);
    worst = std::max(worst,
                     (solved.plan.values - oracle.values).cwiseAbs().maxCoeff());
  }
  std::snprintf(buf, sizeof(buf),
                "50 instances n=2..6 (%d near-tied draws rejected), worst |plan - oracle| "
                "%.2e (<= 1e-3)",
                rejected, worst);
  report(2, "Oracle equivalence", worst <= 1e-3, buf);
}

// 3. Partial solves: masked rows exactly zero, selected block equals a direct solve.
void criterion_3() {
  Rng rng(303);
  bool zeros_exact = true;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Mat cost = random_uniform(6, 3, rng);
    std::vector<Index> rows = rng.sample_without_replacement(6, 3);
    std::sort(rows.begin(), rows.end());
    Vec selection = Vec::Zero(6);
    for (Index r : rows) selection(r) = 1.0;

    SinkhornConfig cfg;
    cfg.lambda = 0.5;
    cfg.max_iter = 5000;
    const SinkhornResult partial =
        partial_sinkhorn(CostMatrix(cost), selection, Marginal::uniform(3), cfg);

    Mat sub(3, 3);
    for (Index k = 0; k < 3; ++k) sub.row(k) = cost.row(rows[static_cast<std::size_t>(k)]);
    const SinkhornResult direct =
        sinkhorn(CostMatrix(sub), Marginal::uniform(3), Marginal::uniform(3), cfg);

    for (Index i = 0; i < 6; ++i) {
      if (selection(i) == 0.0 && partial.plan.values.row(i).cwiseAbs().maxCoeff() != 0.0)
        zeros_exact = false;
    }
    for (Index k = 0; k < 3; ++k)
      worst = std::max(worst, (partial.plan.values.row(rows[static_cast<std::size_t>(k)]) -
                               direct.plan.values.row(k))
                                  .cwiseAbs()
                                  .maxCoeff());
  }
  std::snprintf(buf, sizeof(buf),
                "20 instances, masked rows exactly zero: %s, block deviation %.2e (<= 1e-12)",
                zeros_exact ? "yes" : "NO", worst);
  report(3, "Partial OT masking", zeros_exact && worst <= 1e-12, buf);
}

// 4. Unrolled gradients vs central differences on a full 8x4 objective.
void criterion_4() {
  const TrainPair pair = synth_gen(8, 4, 8, 0.05, 404).pair;
  const ModelParams params = init_params(8, 2, 44);
  TrainConfig cfg;  // delta = 1, lambda = 1

  const auto t0 = std::chrono::steady_clock::now();
  auto build = [&](ad::Tape& t, const std::vector<std::pair<std::string, Mat>>& p) {
    ModelParams probe;
    probe.dim = 8;
    probe.heads = 2;
    probe.tensors = p;
    return ipot_pair_loss(t, pair, probe, cfg);
  };
  const double err = ad::grad_check(build, params.tensors, 1e-6);
  const double elapsed = seconds_since(t0);
  std::size_t entries = 0;
  for (const auto& [name, m] : params.tensors) entries += m.size();
  std::snprintf(buf, sizeof(buf),
                "%zu parameter entries, max rel. error %.2e (<= 1e-4), %.1f s (<= 60 s)",
                entries, err, elapsed);
  report(4, "Gradient fidelity", err <= 1e-4 && elapsed <= 60.0, buf);
}

std::vector<TrainPair> overfit_dataset(std::vector<std::vector<Index>>* planted) {
  std::vector<TrainPair> dataset;
  for (int k = 0; k < 8; ++k) {
    SynthResult r = synth_gen(40, 10, 16, 0.05, 1000 + k);
    r.pair.id = "pair" + std::to_string(k);
    dataset.push_back(std::move(r.pair));
    if (planted) planted->push_back(std::move(r.planted));
  }
  return dataset;
}

double trainset_f1_at_1(const std::vector<TrainPair>& dataset,
                        const std::vector<std::vector<Index>>& planted,
                        const ModelParams& params) {
  double f1 = 0.0;
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    ShotDurations d{dataset[k].movie_durations, dataset[k].music_durations};
    const EditDecisionList edl =
        generate(dataset[k].movie, dataset[k].music, d, params, {});
    IndexSequence pred, truth;
    for (const EdlEntry& e : edl.entries) pred.push_back(e.primary_movie_shot);
    for (Index j = 0; j < dataset[k].music_shots(); ++j)
      truth.push_back(planted[k][static_cast<std::size_t>(j)]);
    f1 += topk_prf(pred, truth, 1).f1;
  }
  return f1 / static_cast<double>(dataset.size());
}

// 5. The specified overfit run: 8 pairs, delta=1, lambda=1, lr=1e-3, 500 epochs.
void criterion_5() {
  std::vector<std::vector<Index>> planted;
  const std::vector<TrainPair> dataset = overfit_dataset(&planted);

  TrainConfig cfg;
  cfg.delta = 1.0;
  cfg.lambda = 1.0;
  cfg.lr = 1e-3;
  cfg.epochs = 500;
  cfg.batch_size = 4;
  cfg.seed = 7;

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train(dataset, cfg);
  const double elapsed = seconds_since(t0);

  const double initial = result.history.front().mean_loss;
  const double final_loss = result.history.back().mean_loss;
  const double ratio = final_loss / initial;
  const double f1 = trainset_f1_at_1(dataset, planted, result.params);

  std::snprintf(buf, sizeof(buf),
                "loss %.4f -> %.4f (ratio %.4f, need <= 0.1), train F1@1 %.3f (need >= 0.9), "
                "%.0f s (<= 600 s)",
                initial, final_loss, ratio, f1, elapsed);
  report(5, "Synthetic overfit", ratio <= 0.1 && f1 >= 0.9 && elapsed <= 600.0, buf);
}

// 6. End-to-end recovery on 20 seeded planted instances, plus EDL invariants.
void criterion_6() {
  int recovered = 0, total = 0;
  bool invariants_ok = true;
  std::string invariant_note = "all EDL invariants hold";

  for (int k = 0; k < 20; ++k) {
    SynthResult r = synth_gen(40, 10, 16, 0.05, 5000 + k);
    r.pair.id = "inst" + std::to_string(k);

    // fit the model to this instance, then run the pipeline on it
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.epochs = 500;
    cfg.batch_size = 4;
    cfg.seed = 11 + static_cast<std::uint64_t>(k);
    const TrainResult trained = train({r.pair}, cfg);

    ShotDurations d{r.pair.movie_durations, r.pair.music_durations};
    const EditDecisionList edl =
        generate(r.pair.movie, r.pair.music, d, trained.params, {});

    const Index cutoff = static_cast<Index>(std::floor(0.9 * 40.0));
    std::set<Index> primaries;
    double edl_total = 0.0;
    for (const EdlEntry& e : edl.entries) {
      if (e.primary_movie_shot >= cutoff) {
        invariants_ok = false;
        invariant_note = "spoiler cutoff violated";
      }
      primaries.insert(e.primary_movie_shot);
      edl_total += e.total_length();
    }
    if (primaries.size() != edl.entries.size() || edl.entries.size() != 10) {
      invariants_ok = false;
      invariant_note = "bijectivity violated";
    }
    if (std::abs(edl_total - d.music.sum()) > 10.0 / 30.0) {
      invariants_ok = false;
      invariant_note = "total duration violated";
    }

    for (Index j = 0; j < 10; ++j) {
      ++total;
      if (edl.entries[static_cast<std::size_t>(j)].primary_movie_shot ==
          r.planted[static_cast<std::size_t>(j)])
        ++recovered;
    }
  }
  const double rate = static_cast<double>(recovered) / static_cast<double>(total);
  std::snprintf(buf, sizeof(buf), "planted recovery %d/%d = %.3f (need >= 0.9), %s",
                recovered, total, rate, invariant_note.c_str());
  report(6, "Planted inference recovery", rate >= 0.9 && invariants_ok, buf);
}

// 7. Metric fixtures and K-monotonicity over 1000 random sequence pairs.
void criterion_7() {
  const IndexSequence a = {3, 7, 9};
  const IndexSequence b = {3, 8, 20};
  const PrfResult k1 = topk_prf(a, b, 1);
  const PrfResult k3 = topk_prf(a, b, 3);
  const bool fixture_ok = k1.precision == 1.0 / 3.0 && k1.recall == 1.0 / 3.0 &&
                          k3.precision == 2.0 / 3.0 && k3.recall == 2.0 / 3.0;

  const IndexSequence same = {5, 1, 8};
  const PrfResult self1 = topk_prf(same, same, 1);
  const PrfResult self5 = topk_prf(same, same, 5);
  const bool identity_ok = self1.f1 == 1.0 && self5.f1 == 1.0;

  Rng rng(707);
  bool monotone = true;
  for (int t = 0; t < 1000; ++t) {
    IndexSequence x(2 + rng.next_u64() % 8), y(2 + rng.next_u64() % 8);
    for (auto& v : x) v = static_cast<Index>(rng.next_u64() % 25);
    for (auto& v : y) v = static_cast<Index>(rng.next_u64() % 25);
    const PrfResult m1 = topk_prf(x, y, 1);
    const PrfResult m3 = topk_prf(x, y, 3);
    const PrfResult m5 = topk_prf(x, y, 5);
    monotone = monotone && m1.precision <= m3.precision && m3.precision <= m5.precision &&
               m1.recall <= m3.recall && m3.recall <= m5.recall &&
               m1.f1 <= m3.f1 + 1e-15 && m3.f1 <= m5.f1 + 1e-15;
  }
  std::snprintf(buf, sizeof(buf),
                "fixture exact: %s, identity exact: %s, monotone over 1000 pairs: %s",
                fixture_ok ? "yes" : "NO", identity_ok ? "yes" : "NO",
                monotone ? "yes" : "NO");
  report(7, "Metric oracle", fixture_ok && identity_ok && monotone, buf);
}

// 8. delta x lambda robustness sweep completes with finite losses.
void criterion_8() {
  std::vector<std::vector<Index>> planted;
  const std::vector<TrainPair> dataset = overfit_dataset(&planted);

  bool all_finite_losses = true;
  std::printf("    sweep (150 epochs per cell):\n");
  for (const double delta : {0.1, 1.0, 10.0}) {
    for (const double lambda : {0.1, 1.0, 10.0}) {
      TrainConfig cfg;
      cfg.delta = delta;
      cfg.lambda = lambda;
      cfg.lr = 1e-3;
      cfg.epochs = 150;
      cfg.batch_size = 4;
      cfg.seed = 7;
      const TrainResult result = train(dataset, cfg);
      for (const EpochStats& row : result.history)
        all_finite_losses = all_finite_losses && std::isfinite(row.mean_loss);

      double f1_1 = 0.0, f1_3 = 0.0, f1_5 = 0.0;
      for (std::size_t k = 0; k < dataset.size(); ++k) {
        ShotDurations d{dataset[k].movie_durations, dataset[k].music_durations};
        const EditDecisionList edl =
            generate(dataset[k].movie, dataset[k].music, d, result.params, {});
        IndexSequence pred, truth;
        for (const EdlEntry& e : edl.entries) pred.push_back(e.primary_movie_shot);
        for (Index j = 0; j < 10; ++j) truth.push_back(planted[k][static_cast<std::size_t>(j)]);
        f1_1 += topk_prf(pred, truth, 1).f1;
        f1_3 += topk_prf(pred, truth, 3).f1;
        f1_5 += topk_prf(pred, truth, 5).f1;
      }
      std::printf("      delta=%-4g lambda=%-4g  final loss %.4f  F1@1 %.3f  F1@3 %.3f  F1@5 %.3f\n",
                  delta, lambda, result.history.back().mean_loss, f1_1 / 8, f1_3 / 8,
                  f1_5 / 8);
      std::fflush(stdout);
    }
  }
  std::snprintf(buf, sizeof(buf), "9 cells completed, losses finite: %s",
                all_finite_losses ? "yes" : "NO");
  report(8, "Hyperparameter robustness harness", all_finite_losses, buf);
}

// 9. Annotator: exact on verbatim sub-clips, >= 95% under sigma = 0.01 noise.
void criterion_9() {
  int verbatim_hits = 0, verbatim_total = 0;
  int noisy_hits = 0, noisy_total = 0;

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(900 + seed);
    const Index movie_shots = 20, frames_per_shot = 10, dim = 16;
    FrameSet movie;
    movie.frames = Mat(movie_shots * frames_per_shot, dim);
    movie.shot_sizes.assign(static_cast<std::size_t>(movie_shots), frames_per_shot);
    for (Index s = 0; s < movie_shots; ++s) {
      Vec center(dim);
      for (Index d = 0; d < dim; ++d) center(d) = rng.normal();
      center.normalize();
      for (Index f = 0; f < frames_per_shot; ++f)
        for (Index d = 0; d < dim; ++d)
          movie.frames(s * frames_per_shot + f, d) = center(d) + 0.05 * rng.normal();
    }

    std::vector<Index> sources = rng.sample_without_replacement(movie_shots, 8);
    for (const double sigma : {0.0, 0.01}) {
      FrameSet trailer;
      trailer.frames = Mat(8 * frames_per_shot, dim);
      trailer.shot_sizes.assign(8, frames_per_shot);
      for (std::size_t t = 0; t < sources.size(); ++t) {
        for (Index f = 0; f < frames_per_shot; ++f) {
          const Index src_row = sources[t] * frames_per_shot + f;
          for (Index d = 0; d < dim; ++d)
            trailer.frames(static_cast<Index>(t) * frames_per_shot + f, d) =
                movie.frames(src_row, d) + sigma * rng.normal();
        }
      }
      const auto pairs = annotate_alignment(movie, trailer);
      for (std::size_t t = 0; t < sources.size(); ++t) {
        const bool hit = pairs[t].first == sources[t];
        if (sigma == 0.0) {
          ++verbatim_total;
          if (hit) ++verbatim_hits;
        } else {
          ++noisy_total;
          if (hit) ++noisy_hits;
        }
      }
    }
  }
  const double noisy_rate = static_cast<double>(noisy_hits) / noisy_total;
  std::snprintf(buf, sizeof(buf),
                "verbatim %d/%d (need all), noisy %d/%d = %.3f (need >= 0.95)",
                verbatim_hits, verbatim_total, noisy_hits, noisy_total, noisy_rate);
  report(9, "Annotator exactness", verbatim_hits == verbatim_total && noisy_rate >= 0.95,
         buf);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();

  if (failures == 0) {
    std::printf("acceptance: all criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) failed\n", failures);
  return 1;
}
