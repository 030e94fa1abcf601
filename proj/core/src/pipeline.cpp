#include "trailermatch/pipeline.hpp"

#include "trailermatch/autodiff.hpp"
#include "trailermatch/io_util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace trailermatch {

void ShotDurations::validate() const {
  if (movie.size() < 1 || music.size() < 1)
    throw std::invalid_argument("durations must be nonempty");
  if (!movie.allFinite() || !music.allFinite() || (movie.array() <= 0.0).any() ||
      (music.array() <= 0.0).any())
    throw std::invalid_argument("durations must be strictly positive and finite");
}

void InferConfig::validate() const {
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (!(spoiler_fraction > 0.0 && spoiler_fraction <= 1.0))
    throw std::invalid_argument("spoiler_fraction must be in (0, 1]");
}

double EdlEntry::total_length() const {
  double total = padding;
  for (const EdlSegment& s : segments) total += s.length;
  return total;
}

std::vector<Index> select_shots(const SelectionVector& mu_hat, Index music_count,
                                const InferConfig& cfg) {
  cfg.validate();
  const Index candidates = static_cast<Index>(
      std::floor(cfg.spoiler_fraction * static_cast<double>(mu_hat.size())));
  if (music_count < 1) throw std::invalid_argument("select_shots: need at least one slot");
  if (music_count > candidates)
    throw std::invalid_argument("select_shots: more music shots than spoiler-safe candidates");

  std::vector<Index> order(static_cast<std::size_t>(candidates));
  std::iota(order.begin(), order.end(), Index{0});
  // stable sort by descending probability keeps the lower index on ties
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return mu_hat(a) > mu_hat(b); });
  std::vector<Index> picked(order.begin(), order.begin() + music_count);
  std::sort(picked.begin(), picked.end());
  return picked;
}

CostMatrix infer_cost(const Mat& selected_latent, const Mat& music_latent,
                      const Vec& selected_durations, const Vec& music_durations,
                      double eta) {
  const Index n = music_latent.rows();
  if (selected_latent.rows() != n)
    throw std::invalid_argument("infer_cost: expected a square problem after selection");
  if (selected_durations.size() != n || music_durations.size() != n)
    throw std::invalid_argument("infer_cost: duration counts do not match");

  Mat cost(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double semantic = (selected_latent.row(i) - music_latent.row(j)).squaredNorm();
      const double temporal = std::abs(selected_durations(i) - music_durations(j));
      cost(i, j) = semantic + eta * temporal;
    }
  }
  return CostMatrix(std::move(cost));
}

AssignResult assign(const CostMatrix& cost, const InferConfig& cfg) {
  cfg.validate();
  const Index n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("assign: cost must be square");

  SinkhornConfig scfg;
  scfg.lambda = cfg.lambda;
  scfg.tol = cfg.sinkhorn_tol;
  scfg.max_iter = cfg.sinkhorn_max_iter;
  SinkhornResult solved = sinkhorn(cost, Marginal::uniform(n), Marginal::uniform(n), scfg);
  if (!solved.converged)
    log_warn("assign: Sinkhorn stopped at max_iter with violation " +
             std::to_string(solved.max_violation));

  AssignResult result;
  result.plan = solved.plan;
  const Mat& plan = result.plan.values;

  result.column_argmax.resize(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    Index best = 0;
    for (Index i = 1; i < n; ++i)
      if (plan(i, j) > plan(best, j)) best = i;
    result.column_argmax[static_cast<std::size_t>(j)] = best;
  }

  // greedy conflict-free decode
  result.music_to_row.assign(static_cast<std::size_t>(n), -1);
  std::vector<bool> row_used(static_cast<std::size_t>(n), false);
  std::vector<bool> col_used(static_cast<std::size_t>(n), false);
  for (Index step = 0; step < n; ++step) {
    Index best_i = -1, best_j = -1;
    double best_v = -1.0;
    for (Index i = 0; i < n; ++i) {
      if (row_used[static_cast<std::size_t>(i)]) continue;
      for (Index j = 0; j < n; ++j) {
        if (col_used[static_cast<std::size_t>(j)]) continue;
        if (plan(i, j) > best_v) {
          best_v = plan(i, j);
          best_i = i;
          best_j = j;
        }
      }
    }
    row_used[static_cast<std::size_t>(best_i)] = true;
    col_used[static_cast<std::size_t>(best_j)] = true;
    result.music_to_row[static_cast<std::size_t>(best_j)] = best_i;
  }
  return result;
}

EditDecisionList duration_fit(const std::vector<Index>& music_to_movie,
                              const ShotDurations& durations,
                              const SelectionVector& mu_hat) {
  durations.validate();
  const Index movie_count = durations.movie.size();
  if (mu_hat.size() != movie_count)
    throw std::invalid_argument("duration_fit: mu_hat length does not match movie shots");
  if (static_cast<Index>(music_to_movie.size()) != durations.music.size())
    throw std::invalid_argument("duration_fit: assignment does not cover the music shots");

  std::set<Index> primaries(music_to_movie.begin(), music_to_movie.end());
  if (primaries.size() != music_to_movie.size())
    throw std::invalid_argument("duration_fit: assignment must be one-to-one");

  EditDecisionList edl;
  for (std::size_t j = 0; j < music_to_movie.size(); ++j) {
    const Index primary = music_to_movie[j];
    if (primary < 0 || primary >= movie_count)
      throw std::invalid_argument("duration_fit: movie index out of range");

    EdlEntry entry;
    entry.music_shot = static_cast<Index>(j);
    entry.primary_movie_shot = primary;
    entry.argmax_movie_shot = primary;
    entry.music_duration = durations.music(static_cast<Index>(j));

    const double target = entry.music_duration;
    const double primary_len = durations.movie(primary);
    if (primary_len >= target) {
      entry.segments.push_back({primary, 0.0, target});  // trim from the end
    } else {
      entry.segments.push_back({primary, 0.0, primary_len});
      double cum = primary_len;
      Index lo = primary, hi = primary;
      while (cum < target) {
        const Index left = lo - 1;
        const Index right = hi + 1;
        const bool left_ok =
            left >= 0 && (left == primary || !primaries.count(left));
        const bool right_ok =
            right < movie_count && (right == primary || !primaries.count(right));
        if (!left_ok && !right_ok) {
          entry.padding = target - cum;
          entry.padded = true;
          break;
        }
        Index chosen;
        if (left_ok && right_ok)
          chosen = mu_hat(left) > mu_hat(right) ? left : right;  // ties go right
        else
          chosen = left_ok ? left : right;
        const double take = std::min(durations.movie(chosen), target - cum);
        entry.segments.push_back({chosen, 0.0, take});
        cum += take;
        if (chosen == left) lo = left; else hi = right;
      }
    }
    edl.entries.push_back(std::move(entry));
  }
  return edl;
}

EditDecisionList generate(const Mat& movie_emb, const Mat& music_emb,
                          const ShotDurations& durations, const ModelParams& params,
                          const InferConfig& cfg) {
  cfg.validate();
  durations.validate();
  if (durations.movie.size() != movie_emb.rows() ||
      durations.music.size() != music_emb.rows())
    throw std::invalid_argument("generate: durations do not match embeddings");

  // one full pass gives both the selection probabilities and the fused
  // latents; the assignment works on the selected rows of those latents
  Vec mu_hat;
  Mat movie_latent, music_latent;
  {
    ad::Tape tape;
    ForwardTrace trace = encode(tape, movie_emb, music_emb, params, false);
    mu_hat = select_probs(trace);
    movie_latent = trace.movie_latent.value();
    music_latent = trace.music_latent.value();
  }

  const Index music_count = music_emb.rows();
  const std::vector<Index> selection = select_shots(mu_hat, music_count, cfg);

  Mat selected_latent(music_count, movie_latent.cols());
  Vec selected_durations(music_count);
  for (Index k = 0; k < music_count; ++k) {
    selected_latent.row(k) = movie_latent.row(selection[static_cast<std::size_t>(k)]);
    selected_durations(k) = durations.movie(selection[static_cast<std::size_t>(k)]);
  }

  const CostMatrix cost =
      infer_cost(selected_latent, music_latent, selected_durations, durations.music, cfg.eta);
  const AssignResult assigned = assign(cost, cfg);

  std::vector<Index> music_to_movie(static_cast<std::size_t>(music_count));
  for (std::size_t j = 0; j < music_to_movie.size(); ++j)
    music_to_movie[j] = selection[static_cast<std::size_t>(assigned.music_to_row[j])];

  EditDecisionList edl = duration_fit(music_to_movie, durations, mu_hat);
  for (std::size_t j = 0; j < edl.entries.size(); ++j)
    edl.entries[j].argmax_movie_shot =
        selection[static_cast<std::size_t>(assigned.column_argmax[j])];
  return edl;
}

}  // namespace trailermatch
