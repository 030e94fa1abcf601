#include "trailermatch/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace trailermatch {

CostMatrix::CostMatrix(Mat v) : values(std::move(v)) {
  if (values.rows() < 1 || values.cols() < 1)
    throw std::invalid_argument("cost matrix must have at least one row and column");
  if (!values.allFinite())
    throw std::invalid_argument("cost matrix has non-finite entries");
}

Marginal::Marginal(Vec weights) : weights_(std::move(weights)) {
  if (weights_.size() < 1) throw std::invalid_argument("marginal must be nonempty");
  if (!weights_.allFinite()) throw std::invalid_argument("marginal has non-finite entries");
  if ((weights_.array() < 0.0).any())
    throw std::invalid_argument("marginal has negative entries");
  const double total = weights_.sum();
  if (!(total > 0.0))
    throw std::invalid_argument("marginal needs at least one positive entry");
  weights_ /= total;
}

Marginal Marginal::uniform(Index n) {
  return Marginal(Vec::Constant(n, 1.0));
}

bool Marginal::is_uniform(double tol) const {
  const double u = 1.0 / static_cast<double>(weights_.size());
  return ((weights_.array() - u).abs() <= tol).all();
}

void SinkhornConfig::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
}

double plan_marginal_violation(const TransportPlan& plan, const Marginal& mu,
                               const Marginal& gamma) {
  const Vec row_sums = plan.values.rowwise().sum();
  const Vec col_sums = plan.values.colwise().sum().transpose();
  const double r = (row_sums - mu.weights()).cwiseAbs().maxCoeff();
  const double c = (col_sums - gamma.weights()).cwiseAbs().maxCoeff();
  return std::max(r, c);
}

namespace {

// log(sum_i exp(x_i)), safe for -inf entries (empty mass gives -inf)
double lse(const Eigen::Ref<const Vec>& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

SinkhornResult sinkhorn_log_domain(const Mat& cost, const Vec& mu, const Vec& gamma,
                                   const SinkhornConfig& cfg) {
  const Index n_rows = cost.rows();
  const Index n_cols = cost.cols();
  const Mat log_kernel = -cost / cfg.lambda;
  const Vec log_mu = mu.array().log();        // -inf where mu_i == 0
  const Vec log_gamma = gamma.array().log();

  Vec f = Vec::Zero(n_rows);  // log row scaling
  Vec g = Vec::Zero(n_cols);  // log column scaling

  SinkhornResult result;
  Mat plan(n_rows, n_cols);
  Vec col_buf(n_rows), row_buf(n_cols);

  for (int it = 0; it < cfg.max_iter; ++it) {
    for (Index j = 0; j < n_cols; ++j) {
      col_buf = log_kernel.col(j) + f;
      g(j) = log_gamma(j) - lse(col_buf);
    }
    for (Index i = 0; i < n_rows; ++i) {
      row_buf = log_kernel.row(i).transpose() + g;
      f(i) = log_mu(i) - lse(row_buf);
    }

    for (Index i = 0; i < n_rows; ++i)
      for (Index j = 0; j < n_cols; ++j)
        plan(i, j) = std::exp(f(i) + log_kernel(i, j) + g(j));

    result.iterations = it + 1;
    const Vec row_sums = plan.rowwise().sum();
    const Vec col_sums = plan.colwise().sum().transpose();
    result.max_violation = std::max((row_sums - mu).cwiseAbs().maxCoeff(),
                                    (col_sums - gamma).cwiseAbs().maxCoeff());
    if (result.max_violation < cfg.tol) {
      result.converged = true;
      break;
    }
  }
  result.plan.values = std::move(plan);
  return result;
}

SinkhornResult sinkhorn_multiplicative(const Mat& cost, const Vec& mu, const Vec& gamma,
                                       const SinkhornConfig& cfg) {
  const Mat kernel = (-cost / cfg.lambda).array().exp();
  const Index n_rows = cost.rows();
  Vec a = Vec::Ones(n_rows);
  Vec b;

  SinkhornResult result;
  Mat plan;
  for (int it = 0; it < cfg.max_iter; ++it) {
    b = gamma.array() / (kernel.transpose() * a).array();
    a = mu.array() / (kernel * b).array();

    plan = a.asDiagonal() * kernel * b.asDiagonal();
    result.iterations = it + 1;
    const Vec row_sums = plan.rowwise().sum();
    const Vec col_sums = plan.colwise().sum().transpose();
    result.max_violation = std::max((row_sums - mu).cwiseAbs().maxCoeff(),
                                    (col_sums - gamma).cwiseAbs().maxCoeff());
    if (result.max_violation < cfg.tol) {
      result.converged = true;
      break;
    }
  }
  result.plan.values = std::move(plan);
  return result;
}

}  // namespace

SinkhornResult sinkhorn(const CostMatrix& cost, const Marginal& mu,
                        const Marginal& gamma, const SinkhornConfig& cfg) {
  cfg.validate();
  if (mu.size() != cost.rows())
    throw std::invalid_argument("row marginal length does not match cost rows");
  if (gamma.size() != cost.cols())
    throw std::invalid_argument("column marginal length does not match cost cols");
  if (!cost.values.allFinite())
    throw std::invalid_argument("cost matrix has non-finite entries");

  if (cfg.log_domain)
    return sinkhorn_log_domain(cost.values, mu.weights(), gamma.weights(), cfg);
  return sinkhorn_multiplicative(cost.values, mu.weights(), gamma.weights(), cfg);
}

SinkhornResult partial_sinkhorn(const CostMatrix& cost, const SelectionMask& selection,
                                const Marginal& gamma, const SinkhornConfig& cfg) {
  cfg.validate();
  if (selection.size() != cost.rows())
    throw std::invalid_argument("selection length does not match cost rows");
  if ((selection.array() < 0.0).any())
    throw std::invalid_argument("selection counts must be nonnegative");

  std::vector<Index> selected;
  for (Index i = 0; i < selection.size(); ++i)
    if (selection(i) > 0.0) selected.push_back(i);
  if (selected.empty())
    throw std::invalid_argument("selection must have at least one positive entry");

  const Index n_sel = static_cast<Index>(selected.size());
  Mat sub_cost(n_sel, cost.cols());
  Vec sub_weights(n_sel);
  for (Index k = 0; k < n_sel; ++k) {
    sub_cost.row(k) = cost.values.row(selected[static_cast<std::size_t>(k)]);
    sub_weights(k) = selection(selected[static_cast<std::size_t>(k)]);
  }

  SinkhornResult sub =
      sinkhorn(CostMatrix(std::move(sub_cost)), Marginal(std::move(sub_weights)), gamma, cfg);

  SinkhornResult result;
  result.iterations = sub.iterations;
  result.max_violation = sub.max_violation;
  result.converged = sub.converged;
  result.plan.values = Mat::Zero(cost.rows(), cost.cols());
  for (Index k = 0; k < n_sel; ++k)
    result.plan.values.row(selected[static_cast<std::size_t>(k)]) = sub.plan.values.row(k);
  return result;
}

TransportPlan ot_oracle(const CostMatrix& cost, const Marginal& mu, const Marginal& gamma) {
  const Index n = cost.rows();
  if (cost.cols() != n)
    throw std::domain_error("ot_oracle supports square instances only");
  if (n > 8)
    throw std::domain_error("ot_oracle supports n <= 8 only");
  if (mu.size() != n || gamma.size() != n)
    throw std::invalid_argument("marginal length does not match cost");
  if (!mu.is_uniform() || !gamma.is_uniform())
    throw std::domain_error("ot_oracle supports uniform marginals only");

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::vector<Index> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  // next_permutation enumerates in lexicographic order, so keeping the first
  // strict minimum implements the lexicographic tie-break.
  do {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += cost.values(i, perm[static_cast<std::size_t>(i)]);
    if (total < best_cost) {
      best_cost = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  TransportPlan plan;
  plan.values = Mat::Zero(n, n);
  const double mass = 1.0 / static_cast<double>(n);
  for (Index i = 0; i < n; ++i) plan.values(i, best[static_cast<std::size_t>(i)]) = mass;
  return plan;
}

double plan_entropy(const TransportPlan& plan) {
  double h = 0.0;
  for (Index i = 0; i < plan.rows(); ++i) {
    for (Index j = 0; j < plan.cols(); ++j) {
      const double t = plan.values(i, j);
      if (t > 0.0) h -= t * std::log(t);
    }
  }
  return h;
}

}  // namespace trailermatch
