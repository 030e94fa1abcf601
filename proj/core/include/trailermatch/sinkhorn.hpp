#pragma once

#include "trailermatch/common.hpp"

#include <vector>

namespace trailermatch {

/// Pairwise grounding costs between movie-side rows and music-side columns.
/// Entries may be negative but must be finite.
struct CostMatrix {
  Mat values;

  CostMatrix() = default;
  explicit CostMatrix(Mat v);

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

/// Probability weights over one side of a transport problem. Normalized to
/// sum exactly 1 at construction; entries must be nonnegative with at least
/// one strictly positive.
class Marginal {
 public:
  explicit Marginal(Vec weights);
  static Marginal uniform(Index n);

  const Vec& weights() const { return weights_; }
  Index size() const { return weights_.size(); }
  bool is_uniform(double tol = 1e-12) const;

 private:
  Vec weights_;
};

struct TransportPlan {
  Mat values;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

struct SinkhornConfig {
  double lambda = 1.0;   // entropic weight, > 0
  double tol = 1e-9;     // max elementwise marginal violation at convergence
  int max_iter = 500;
  bool log_domain = true;  // multiplicative kernel scaling when false

  void validate() const;
};

struct SinkhornResult {
  TransportPlan plan;
  int iterations = 0;
  double max_violation = 0.0;
  bool converged = false;
};

/// Entropic OT by alternating kernel scaling. Iterates until the largest
/// row/column marginal violation drops below cfg.tol or max_iter is hit;
/// a non-converged plan is still returned with converged=false.
SinkhornResult sinkhorn(const CostMatrix& cost, const Marginal& mu,
                        const Marginal& gamma, const SinkhornConfig& cfg);

/// Ground-truth selection counts per movie shot; entries >= 0, value k means
/// the shot is matched by k music shots.
using SelectionMask = Vec;

/// Partial variant: rows with zero selection count carry zero mass. Solves
/// the dense problem on the selected-row submatrix (row marginal =
/// normalized counts) and scatters the result back, leaving masked rows
/// exactly zero.
SinkhornResult partial_sinkhorn(const CostMatrix& cost, const SelectionMask& selection,
                                const Marginal& gamma, const SinkhornConfig& cfg);

/// Exhaustive-permutation solver for square uniform problems, n <= 8.
/// Returns (1/n) * P for the cost-minimizing permutation P; ties broken by
/// the lexicographically smallest permutation.
TransportPlan ot_oracle(const CostMatrix& cost, const Marginal& mu, const Marginal& gamma);

/// Shannon entropy -sum t_ij log t_ij with 0 log 0 := 0. In [0, log(I*J)]
/// for a mass-1 plan.
double plan_entropy(const TransportPlan& plan);

/// Max elementwise deviation of the plan's marginals from (mu, gamma).
double plan_marginal_violation(const TransportPlan& plan, const Marginal& mu,
                               const Marginal& gamma);

}  // namespace trailermatch
