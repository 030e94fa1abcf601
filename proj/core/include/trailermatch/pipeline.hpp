#pragma once

#include "trailermatch/common.hpp"
#include "trailermatch/encoder.hpp"
#include "trailermatch/sinkhorn.hpp"

#include <vector>

namespace trailermatch {

struct ShotDurations {
  Vec movie;  // seconds per movie shot, strictly positive
  Vec music;  // seconds per music shot, strictly positive

  void validate() const;
};

struct InferConfig {
  double eta = 1.0;               // temporal cost weight
  double lambda = 1.0;            // entropic weight of the assignment solve
  double spoiler_fraction = 0.9;  // candidates restricted to the movie's head
  std::uint64_t seed = 0;
  double sinkhorn_tol = 1e-9;
  int sinkhorn_max_iter = 500;

  void validate() const;
};

struct EdlSegment {
  Index movie_shot = 0;
  double start = 0.0;   // seconds into the movie shot
  double length = 0.0;  // seconds
};

/// One timeline slot: the music shot it covers, the movie shot assigned to
/// it, and the movie segments (primary plus any neighbor extensions) that
/// fill the slot. Segment lengths plus padding always equal the music shot
/// duration.
struct EdlEntry {
  Index music_shot = 0;
  Index primary_movie_shot = 0;
  Index argmax_movie_shot = 0;  // raw per-column argmax of the plan, diagnostic
  double music_duration = 0.0;
  std::vector<EdlSegment> segments;
  double padding = 0.0;  // freeze-frame seconds when the movie ran out
  bool padded = false;

  double total_length() const;
};

struct EditDecisionList {
  std::vector<EdlEntry> entries;  // ordered by music shot index
};

/// Indices of the J highest-probability shots among the first
/// floor(spoiler_fraction * I) movie shots; ties prefer the earlier shot.
/// Returned in original movie order.
std::vector<Index> select_shots(const SelectionVector& mu_hat, Index music_count,
                                const InferConfig& cfg);

/// Assignment cost: squared Euclidean distance between latents plus
/// eta * |duration difference|.
CostMatrix infer_cost(const Mat& selected_latent, const Mat& music_latent,
                      const Vec& selected_durations, const Vec& music_durations,
                      double eta);

struct AssignResult {
  std::vector<Index> music_to_row;   // bijection music shot -> cost row
  std::vector<Index> column_argmax;  // per-column argmax rows, may repeat
  TransportPlan plan;
};

/// Solves the square entropic OT problem with uniform marginals, then decodes
/// a permutation by greedy conflict-free extraction: repeatedly take the
/// largest remaining plan entry whose row and column are both unassigned
/// (ties by smaller row, then smaller column).
AssignResult assign(const CostMatrix& cost, const InferConfig& cfg);

/// Fits each assigned movie shot to its music slot: trim from the end when
/// too long, otherwise extend with adjacent shots, preferring the neighbor
/// with higher selection probability (ties to the right). Neighbors serving
/// as another entry's primary are skipped; if the movie runs out the entry
/// is padded and flagged.
EditDecisionList duration_fit(const std::vector<Index>& music_to_movie,
                              const ShotDurations& durations,
                              const SelectionVector& mu_hat);

/// Full pipeline: one encoder pass yields the selection probabilities and
/// the fused latents; the selected shots' latent rows are matched against
/// the music latents, and the assignment is duration-fitted into an EDL.
EditDecisionList generate(const Mat& movie_emb, const Mat& music_emb,
                          const ShotDurations& durations, const ModelParams& params,
                          const InferConfig& cfg);

}  // namespace trailermatch
