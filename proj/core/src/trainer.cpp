#include "trailermatch/trainer.hpp"

#include "trailermatch/checkpoint.hpp"
#include "trailermatch/io_util.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace trailermatch {

Vec TrainPair::selection_counts() const {
  Vec counts = Vec::Zero(movie.rows());
  for (const auto& [i, j] : alignment) counts(i) += 1.0;
  return counts;
}

TransportPlan TrainPair::truth_plan() const {
  TransportPlan plan;
  plan.values = Mat::Zero(movie.rows(), music.rows());
  const double mass = 1.0 / static_cast<double>(music.rows());
  for (const auto& [i, j] : alignment) plan.values(i, j) = mass;
  return plan;
}

void TrainPair::validate() const {
  if (movie.rows() < 1 || music.rows() < 1)
    throw std::invalid_argument("pair " + id + ": empty embeddings");
  if (movie.cols() != music.cols())
    throw std::invalid_argument("pair " + id + ": embedding dims differ");
  if (!movie.allFinite() || !music.allFinite())
    throw std::invalid_argument("pair " + id + ": non-finite embedding values");
  if (static_cast<Index>(alignment.size()) != music.rows())
    throw std::invalid_argument("pair " + id + ": alignment must cover every music shot");
  std::set<Index> seen;
  for (const auto& [i, j] : alignment) {
    if (i < 0 || i >= movie.rows())
      throw std::invalid_argument("pair " + id + ": movie index out of range in alignment");
    if (j < 0 || j >= music.rows())
      throw std::invalid_argument("pair " + id + ": music index out of range in alignment");
    if (!seen.insert(j).second)
      throw std::invalid_argument("pair " + id + ": duplicate music index in alignment");
  }
  if (movie_durations.size() > 0 && movie_durations.size() != movie.rows())
    throw std::invalid_argument("pair " + id + ": movie duration count mismatch");
  if (music_durations.size() > 0 && music_durations.size() != music.rows())
    throw std::invalid_argument("pair " + id + ": music duration count mismatch");
}

void TrainConfig::validate() const {
  if (!(delta >= 0.0)) throw std::invalid_argument("delta must be >= 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw std::invalid_argument("beta1/beta2 must be in (0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(kl_eps > 0.0)) throw std::invalid_argument("kl_eps must be > 0");
  if (!(sinkhorn_tol > 0.0) || sinkhorn_max_iter < 1)
    throw std::invalid_argument("bad sinkhorn settings");
}

AdamState AdamState::init(const ModelParams& params) {
  AdamState state;
  for (const auto& [name, m] : params.tensors) {
    state.m.emplace_back(name, Mat::Zero(m.rows(), m.cols()));
    state.v.emplace_back(name, Mat::Zero(m.rows(), m.cols()));
  }
  return state;
}

void AdamState::update(ModelParams& params, const ad::GradientMap& grads,
                       const TrainConfig& cfg) {
  ++step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, step);
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& [name, theta] = params.tensors[t];
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Mat& g = it->second;
    Mat& m1 = m[t].second;
    Mat& m2 = v[t].second;
    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Mat m_hat = m1 / bc1;
    const Mat v_hat = m2 / bc2;
    theta -= cfg.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg.adam_eps)).matrix();
  }
}

double aligner_loss(const TransportPlan& pred, const TransportPlan& truth,
                    double eps, KlDirection direction) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw std::invalid_argument("aligner_loss: shape mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("aligner_loss: eps must be > 0");

  double loss = 0.0;
  for (Index i = 0; i < pred.rows(); ++i) {
    for (Index j = 0; j < pred.cols(); ++j) {
      const double p = pred.values(i, j);
      const double q = truth.values(i, j);
      if (direction == KlDirection::TruthToPrediction) {
        if (q > 0.0) loss += q * (std::log(q) - std::log(p + eps));
      } else {
        if (p > 0.0) loss += p * (std::log(p) - std::log(q + eps));
      }
    }
  }
  return loss;
}

double selector_loss(const SelectionVector& pred, const SelectionMask& truth_counts) {
  if (pred.size() != truth_counts.size())
    throw std::invalid_argument("selector_loss: length mismatch");
  const double lo = 1e-12, hi = 1.0 - 1e-12;
  double loss = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double p = std::min(std::max(pred(i), lo), hi);
    const double y = truth_counts(i) > 0.0 ? 1.0 : 0.0;
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return loss / static_cast<double>(pred.size());
}

ad::Var differentiable_sinkhorn(ad::Tape& tape, ad::Var cost, const Vec& mu,
                                const Vec& gamma, double lambda, double tol,
                                int max_iter, int* iterations, bool* converged) {
  if (cost.rows() != mu.size() || cost.cols() != gamma.size())
    throw std::invalid_argument("differentiable_sinkhorn: marginal size mismatch");

  // The plan is invariant to a constant shift of the cost, so shift by the
  // (detached) minimum to keep the multiplicative kernel well-scaled.
  const double shift = cost.value().minCoeff();
  ad::Var kernel = tape.exp(tape.scale(tape.add_scalar(cost, -shift), -1.0 / lambda));
  ad::Var kernel_t = tape.transpose(kernel);

  Mat mu_col(mu.size(), 1), gamma_col(gamma.size(), 1);
  mu_col.col(0) = mu;
  gamma_col.col(0) = gamma;
  ad::Var mu_c = tape.constant(mu_col);
  ad::Var gamma_c = tape.constant(gamma_col);

  ad::Var a = tape.constant(Mat::Ones(mu.size(), 1));
  ad::Var b;
  bool done = false;
  int it = 0;
  while (it < max_iter && !done) {
    b = tape.divide(gamma_c, tape.matmul(kernel_t, a));
    a = tape.divide(mu_c, tape.matmul(kernel, b));
    ++it;

    // convergence bookkeeping on plain values; the row marginal is exact by
    // construction right after the a-update
    const Vec col_sums =
        (kernel.value().transpose() * a.value().col(0)).cwiseProduct(b.value().col(0));
    const Vec row_sums =
        (kernel.value() * b.value().col(0)).cwiseProduct(a.value().col(0));
    const double violation = std::max((col_sums - gamma).cwiseAbs().maxCoeff(),
                                      (row_sums - mu).cwiseAbs().maxCoeff());
    done = violation < tol;
  }
  if (iterations) *iterations = it;
  if (converged) *converged = done;

  return tape.scale_cols(tape.scale_rows(kernel, a), b);
}

ad::Var ipot_pair_loss(ad::Tape& tape, const TrainPair& pair, const ModelParams& params,
                       const TrainConfig& cfg, LossParts* parts) {
  const Vec counts = pair.selection_counts();
  std::vector<Index> selected;
  for (Index i = 0; i < counts.size(); ++i)
    if (counts(i) > 0.0) selected.push_back(i);
  if (selected.empty())
    throw std::invalid_argument("pair " + pair.id + ": no selected movie shots");

  ForwardTrace trace = encode(tape, pair.movie, pair.music, params, true);
  ad::Var cost = cost_matrix(tape, trace);
  ad::Var sub_cost = tape.gather_rows(cost, selected);

  Vec mu_sub(static_cast<Index>(selected.size()));
  for (std::size_t k = 0; k < selected.size(); ++k)
    mu_sub(static_cast<Index>(k)) = counts(selected[k]);
  mu_sub /= mu_sub.sum();
  const Vec gamma = Vec::Constant(pair.music_shots(),
                                  1.0 / static_cast<double>(pair.music_shots()));

  int iters = 0;
  bool converged = false;
  ad::Var plan = differentiable_sinkhorn(tape, sub_cost, mu_sub, gamma, cfg.lambda,
                                         cfg.sinkhorn_tol, cfg.sinkhorn_max_iter,
                                         &iters, &converged);
  if (!converged)
    log_warn("pair " + pair.id + ": lower-level solve hit max_iter (" +
             std::to_string(iters) + "), continuing with last iterate");

  // Rows outside the selection are zero in both plans and contribute nothing,
  // so the divergence is evaluated on the selected-row submatrix.
  const Mat truth_full = pair.truth_plan().values;
  Mat truth_sub(static_cast<Index>(selected.size()), pair.music_shots());
  for (std::size_t k = 0; k < selected.size(); ++k)
    truth_sub.row(static_cast<Index>(k)) = truth_full.row(selected[k]);

  ad::Var loss_align;
  if (cfg.kl_direction == KlDirection::TruthToPrediction) {
    double truth_entropy_term = 0.0;  // sum q log q with 0 log 0 := 0
    for (Index i = 0; i < truth_sub.rows(); ++i)
      for (Index j = 0; j < truth_sub.cols(); ++j)
        if (truth_sub(i, j) > 0.0)
          truth_entropy_term += truth_sub(i, j) * std::log(truth_sub(i, j));
    ad::Var truth_c = tape.constant(truth_sub);
    ad::Var cross = tape.sum(tape.mul(truth_c, tape.log(tape.add_scalar(plan, cfg.kl_eps))));
    loss_align = tape.add_scalar(tape.scale(cross, -1.0), truth_entropy_term);
  } else {
    ad::Var smoothed = tape.constant(((truth_sub.array() + cfg.kl_eps).log()).matrix());
    ad::Var log_plan = tape.log(plan);  // entropic plan entries are strictly positive
    loss_align = tape.sum(tape.mul(plan, tape.sub(log_plan, smoothed)));
  }

  ad::Var loss = loss_align;
  ad::Var loss_sel;
  if (cfg.delta != 0.0) {
    Mat y(counts.size(), 1);
    for (Index i = 0; i < counts.size(); ++i) y(i, 0) = counts(i) > 0.0 ? 1.0 : 0.0;
    ad::Var y_c = tape.constant(y);
    ad::Var one_minus_y = tape.constant((1.0 - y.array()).matrix());
    ad::Var p = tape.clamp(trace.select_probs, 1e-12, 1.0 - 1e-12);
    ad::Var one_minus_p = tape.clamp(
        tape.add_scalar(tape.scale(trace.select_probs, -1.0), 1.0), 1e-12, 1.0 - 1e-12);
    ad::Var bce = tape.scale(
        tape.mean(tape.add(tape.mul(y_c, tape.log(p)),
                           tape.mul(one_minus_y, tape.log(one_minus_p)))),
        -1.0);
    loss_sel = bce;
    loss = tape.add(loss_align, tape.scale(bce, cfg.delta));
  }

  const double total = loss.value()(0, 0);
  if (!std::isfinite(total)) {
    std::ostringstream msg;
    msg << "pair " << pair.id << ": non-finite loss (aligner="
        << loss_align.value()(0, 0) << ", iterations=" << iters << ")";
    throw std::runtime_error(msg.str());
  }
  if (parts) {
    parts->total = total;
    parts->aligner = loss_align.value()(0, 0);
    parts->selector = cfg.delta != 0.0 ? loss_sel.value()(0, 0) : 0.0;
  }
  return loss;
}

ad::GradientMap batch_gradients(const std::vector<const TrainPair*>& batch,
                                const ModelParams& params, const TrainConfig& cfg,
                                LossParts* parts) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  ad::GradientMap total;
  LossParts acc;
  for (const TrainPair* pair : batch) {
    ad::Tape tape;
    LossParts pair_parts;
    ad::Var loss = ipot_pair_loss(tape, *pair, params, cfg, &pair_parts);
    ad::GradientMap grads = tape.backward(loss);
    if (total.empty()) {
      total = std::move(grads);
    } else {
      for (auto& [name, g] : grads) total.at(name) += g;
    }
    acc.total += pair_parts.total;
    acc.aligner += pair_parts.aligner;
    acc.selector += pair_parts.selector;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& [name, g] : total) g *= inv;
  if (parts) {
    parts->total = acc.total * inv;
    parts->aligner = acc.aligner * inv;
    parts->selector = acc.selector * inv;
  }
  return total;
}

LossParts ipot_step(const std::vector<const TrainPair*>& batch, ModelParams& params,
                    const TrainConfig& cfg, AdamState& adam) {
  cfg.validate();
  LossParts parts;
  ad::GradientMap grads = batch_gradients(batch, params, cfg, &parts);
  adam.update(params, grads, cfg);
  return parts;
}

static TrainResult train_impl(const std::vector<TrainPair>& dataset,
                              const TrainConfig& cfg, ModelParams params) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (const TrainPair& p : dataset) p.validate();

  AdamState adam = AdamState::init(params);
  Rng shuffle_rng(cfg.seed);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffle_rng.permutation(dataset.size());
    double loss_sum = 0.0, align_sum = 0.0, sel_sum = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      std::vector<const TrainPair*> batch;
      for (std::size_t k = at; k < std::min(order.size(), at + cfg.batch_size); ++k)
        batch.push_back(&dataset[order[k]]);
      const LossParts parts = ipot_step(batch, params, cfg, adam);
      loss_sum += parts.total;
      align_sum += parts.aligner;
      sel_sum += parts.selector;
      ++batches;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / batches;
    stats.mean_aligner = align_sum / batches;
    stats.mean_selector = sel_sum / batches;
    result.history.push_back(stats);

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        (epoch + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(cfg.checkpoint_path, params,
                      {{"epoch", std::to_string(epoch + 1)}});
    }
    log_debug("epoch " + std::to_string(epoch) + " loss " +
              std::to_string(stats.mean_loss));
  }
  result.params = std::move(params);
  return result;
}

TrainResult train(const std::vector<TrainPair>& dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  const int dim = static_cast<int>(dataset.front().movie.cols());
  return train_impl(dataset, cfg, init_params(dim, 2, cfg.seed));
}

TrainResult train(const std::vector<TrainPair>& dataset, const TrainConfig& cfg,
                  const ModelParams& warm_start) {
  return train_impl(dataset, cfg, warm_start);
}

std::string format_loss_history(const std::vector<EpochStats>& history) {
  std::string out = "# epoch  mean_loss  aligner  selector\n";
  char buf[128];
  for (const EpochStats& row : history) {
    std::snprintf(buf, sizeof(buf), "%6d  %.10g  %.10g  %.10g\n", row.epoch,
                  row.mean_loss, row.mean_aligner, row.mean_selector);
    out += buf;
  }
  return out;
}

}  // namespace trailermatch
