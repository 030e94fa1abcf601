#pragma once

#include "trailermatch/autodiff.hpp"
#include "trailermatch/common.hpp"
#include "trailermatch/encoder.hpp"
#include "trailermatch/sinkhorn.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace trailermatch {

/// One movie/trailer training instance. Each music shot j is matched to
/// exactly one movie shot; a movie shot may appear in several pairs.
struct TrainPair {
  std::string id;
  Mat movie;  // I x D
  Mat music;  // J x D
  std::vector<std::pair<Index, Index>> alignment;  // (movie shot, music shot)
  Vec movie_durations;  // seconds, length I
  Vec music_durations;  // seconds, length J

  Index movie_shots() const { return movie.rows(); }
  Index music_shots() const { return music.rows(); }

  /// Per-movie-shot match counts (row sums of the alignment matrix).
  Vec selection_counts() const;
  /// Alignment matrix normalized to total mass 1.
  TransportPlan truth_plan() const;

  void validate() const;
};

enum class KlDirection {
  TruthToPrediction,        // KL(truth || pred + eps), finite for sparse truth
  PredictionToSmoothedTruth // KL(pred || truth + eps)
};

struct TrainConfig {
  double delta = 1.0;   // selector loss weight
  double lambda = 1.0;  // entropic weight of the lower-level problem
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 500;
  int batch_size = 4;
  std::uint64_t seed = 0;
  double kl_eps = 1e-12;
  KlDirection kl_direction = KlDirection::TruthToPrediction;
  double sinkhorn_tol = 1e-9;
  int sinkhorn_max_iter = 500;
  std::filesystem::path checkpoint_path;  // empty disables periodic checkpoints
  int checkpoint_every = 0;               // epochs between checkpoints, 0 = off

  void validate() const;
};

struct AdamState {
  int step = 0;
  std::vector<std::pair<std::string, Mat>> m;
  std::vector<std::pair<std::string, Mat>> v;

  static AdamState init(const ModelParams& params);
  void update(ModelParams& params, const ad::GradientMap& grads, const TrainConfig& cfg);
};

/// KL divergence between transport plans with eps-smoothing of the
/// denominator side; 0 log 0 := 0.
double aligner_loss(const TransportPlan& pred, const TransportPlan& truth,
                    double eps, KlDirection direction);

/// Mean binary cross-entropy between predicted probabilities and the
/// selection counts clamped to {0, 1}. Probabilities are clamped to
/// [1e-12, 1 - 1e-12].
double selector_loss(const SelectionVector& pred, const SelectionMask& truth_counts);

/// Entropic OT unrolled on the tape through the executed iterations, so
/// gradients flow into the cost matrix. Follows the same update order and
/// convergence criterion as the plain solver. mu/gamma are fixed marginals.
ad::Var differentiable_sinkhorn(ad::Tape& tape, ad::Var cost, const Vec& mu,
                                const Vec& gamma, double lambda, double tol,
                                int max_iter, int* iterations = nullptr,
                                bool* converged = nullptr);

struct LossParts {
  double total = 0.0;
  double aligner = 0.0;
  double selector = 0.0;
};

/// Builds the full differentiable objective for one pair on the tape:
/// encode -> Euclidean cost -> partial OT against the ground-truth counts ->
/// KL + delta * BCE.
ad::Var ipot_pair_loss(ad::Tape& tape, const TrainPair& pair, const ModelParams& params,
                       const TrainConfig& cfg, LossParts* parts = nullptr);

/// Gradients of the mean loss over the batch, accumulated in batch order.
ad::GradientMap batch_gradients(const std::vector<const TrainPair*>& batch,
                                const ModelParams& params, const TrainConfig& cfg,
                                LossParts* parts = nullptr);

/// One optimizer step on a batch. Returns the mean loss decomposition.
LossParts ipot_step(const std::vector<const TrainPair*>& batch, ModelParams& params,
                    const TrainConfig& cfg, AdamState& adam);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_aligner = 0.0;
  double mean_selector = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
};

TrainResult train(const std::vector<TrainPair>& dataset, const TrainConfig& cfg);
TrainResult train(const std::vector<TrainPair>& dataset, const TrainConfig& cfg,
                  const ModelParams& warm_start);

/// Plain-text table: epoch, mean loss, aligner term, selector term.
std::string format_loss_history(const std::vector<EpochStats>& history);

}  // namespace trailermatch
