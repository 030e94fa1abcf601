#pragma once

#include "trailermatch/autodiff.hpp"
#include "trailermatch/common.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace trailermatch {

/// All learnable weights, stored in a fixed canonical order. Per tower
/// (movie, music): a two-layer MLP, then a self-attention block and a
/// cross-attention block, each wrapped in a linear layer before and after.
/// A shared selector head maps the fused movie representation to one logit
/// per shot. Attention projections are D x D with per-head column blocks of
/// width D / heads.
struct ModelParams {
  int dim = 0;
  int heads = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Mat>> tensors;

  const Mat& at(const std::string& name) const;
  Mat& at(const std::string& name);
  bool has(const std::string& name) const;
};

/// Canonical (name, rows, cols) list for a given embedding dim. Defines the
/// parameter order used by initialization, checkpoints and the optimizer.
std::vector<std::pair<std::string, std::pair<Index, Index>>> param_shapes(int dim);

/// Xavier-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
/// Deterministic per seed. dim must be divisible by heads.
ModelParams init_params(int dim, int heads, std::uint64_t seed);

/// Per-movie-shot selection probabilities, each strictly inside (0, 1).
using SelectionVector = Vec;

/// Handles into the tape for every named intermediate of one forward pass.
struct ForwardTrace {
  ad::Var movie_mlp;     // I x D, after the movie MLP
  ad::Var music_mlp;     // J x D
  ad::Var movie_self;    // I x D, self-attention output
  ad::Var music_self;    // J x D
  ad::Var movie_latent;  // I x D, fused representation (residual + cross-attention)
  ad::Var music_latent;  // J x D
  ad::Var select_probs;  // I x 1, sigmoid output
  // every row-softmax emitted by the attention blocks, for invariant checks
  std::vector<ad::Var> attention_weights;
};

/// Runs the two-tower forward pass on the tape. Parameters are registered on
/// the tape under their canonical names; with_grad controls whether they
/// participate in backward.
ForwardTrace encode(ad::Tape& tape, const Mat& movie, const Mat& music,
                    const ModelParams& params, bool with_grad);

/// Extracts the selection probabilities from a trace as a plain vector.
SelectionVector select_probs(const ForwardTrace& trace);

/// Pairwise Euclidean distances between fused movie and music rows,
/// differentiable through the trace. Used as the training-time grounding
/// cost (no temporal term).
ad::Var cost_matrix(ad::Tape& tape, const ForwardTrace& trace);

}  // namespace trailermatch
