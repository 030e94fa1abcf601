// trailermatch: music-guided trailer assembly from precomputed shot embeddings.
// Subcommands: train, infer, eval, synth, sinkhorn, annotate.
// Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.

#include <CLI11.hpp>
#include <json.hpp>

#include "trailermatch/checkpoint.hpp"
#include "trailermatch/dataio.hpp"
#include "trailermatch/io_util.hpp"
#include "trailermatch/metrics.hpp"
#include "trailermatch/pipeline.hpp"
#include "trailermatch/sinkhorn.hpp"
#include "trailermatch/trainer.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace trailermatch;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

ordered_json edl_to_json(const EditDecisionList& edl) {
  ordered_json doc;
  doc["format"] = "trailermatch-edl-v1";
  doc["music_shot_count"] = edl.entries.size();
  ordered_json entries = ordered_json::array();
  for (const EdlEntry& e : edl.entries) {
    ordered_json je;
    je["music_shot"] = e.music_shot;
    je["primary_movie_shot"] = e.primary_movie_shot;
    je["argmax_movie_shot"] = e.argmax_movie_shot;
    je["music_duration"] = e.music_duration;
    ordered_json segs = ordered_json::array();
    for (const EdlSegment& s : e.segments)
      segs.push_back({{"movie_shot", s.movie_shot},
                      {"start", s.start},
                      {"length", s.length}});
    je["segments"] = segs;
    je["padding"] = e.padding;
    je["padded"] = e.padded;
    entries.push_back(std::move(je));
  }
  doc["entries"] = entries;
  return doc;
}

EditDecisionList edl_from_json(const ordered_json& doc) {
  if (doc.value("format", "") != "trailermatch-edl-v1")
    throw std::invalid_argument("not a trailermatch-edl-v1 document");
  EditDecisionList edl;
  for (const auto& je : doc.at("entries")) {
    EdlEntry e;
    e.music_shot = je.at("music_shot").get<Index>();
    e.primary_movie_shot = je.at("primary_movie_shot").get<Index>();
    e.argmax_movie_shot = je.value("argmax_movie_shot", e.primary_movie_shot);
    e.music_duration = je.at("music_duration").get<double>();
    for (const auto& js : je.at("segments")) {
      EdlSegment s;
      s.movie_shot = js.at("movie_shot").get<Index>();
      s.start = js.at("start").get<double>();
      s.length = js.at("length").get<double>();
      e.segments.push_back(s);
    }
    e.padding = je.value("padding", 0.0);
    e.padded = je.value("padded", false);
    edl.entries.push_back(std::move(e));
  }
  return edl;
}

// Sequence of primary movie shots ordered by music shot. Accepts an EDL
// document, an alignment pair list, or a bare JSON array of indices.
IndexSequence sequence_from_file(const fs::path& path) {
  const ordered_json doc = ordered_json::parse(read_file(path));
  if (doc.is_array()) {
    IndexSequence seq;
    for (const auto& v : doc) seq.push_back(v.get<Index>());
    return seq;
  }
  const std::string format = doc.value("format", "");
  if (format == "trailermatch-edl-v1") {
    const EditDecisionList edl = edl_from_json(doc);
    IndexSequence seq;
    for (const EdlEntry& e : edl.entries) seq.push_back(e.primary_movie_shot);
    return seq;
  }
  if (format == "trailermatch-alignment-v1") {
    std::vector<std::pair<Index, Index>> pairs;
    for (const auto& ab : doc.at("pairs"))
      pairs.emplace_back(ab[0].get<Index>(), ab[1].get<Index>());
    Index max_music = -1;
    for (const auto& [i, j] : pairs) max_music = std::max(max_music, j);
    IndexSequence seq(static_cast<std::size_t>(max_music + 1), -1);
    for (const auto& [i, j] : pairs) seq[static_cast<std::size_t>(j)] = i;
    for (Index v : seq)
      if (v < 0) throw std::invalid_argument(path.string() + ": alignment has gaps");
    return seq;
  }
  throw std::invalid_argument(path.string() + ": unsupported document for evaluation");
}

Mat read_blob_with_dim(const fs::path& path, int dim) {
  const auto size = fs::file_size(path);
  if (size % (static_cast<std::uintmax_t>(dim) * sizeof(float)) != 0)
    throw std::invalid_argument(path.string() + ": size is not a multiple of dim*4");
  const Index rows = static_cast<Index>(size / (dim * sizeof(float)));
  return read_embedding_blob(path, rows, dim);
}

int run_train(const std::string& data, const std::string& out, int epochs, double lr,
              double delta, double lambda, int batch, std::uint64_t seed,
              const std::string& init, const std::string& kl_direction, int dim,
              int heads, int ckpt_every) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.delta = delta;
  cfg.lambda = lambda;
  cfg.batch_size = batch;
  cfg.seed = seed;
  cfg.checkpoint_path = out;
  cfg.checkpoint_every = ckpt_every;
  if (kl_direction == "truth-to-pred")
    cfg.kl_direction = KlDirection::TruthToPrediction;
  else if (kl_direction == "pred-to-smoothed-truth")
    cfg.kl_direction = KlDirection::PredictionToSmoothedTruth;
  else
    throw CLI::ValidationError("--kl-direction",
                               "expected truth-to-pred or pred-to-smoothed-truth");

  const std::vector<TrainPair> dataset = load_dataset(data);

  TrainResult result;
  if (!init.empty()) {
    Checkpoint warm = load_checkpoint(init);
    result = train(dataset, cfg, warm.params);
  } else {
    const int data_dim = static_cast<int>(dataset.front().movie.cols());
    if (dim != 0 && dim != data_dim)
      throw std::invalid_argument("--dim does not match the manifest dim");
    result = train(dataset, cfg, init_params(data_dim, heads, seed));
  }

  std::map<std::string, std::string> meta;
  meta["epoch"] = std::to_string(epochs);
  meta["lr"] = std::to_string(lr);
  meta["delta"] = std::to_string(delta);
  meta["lambda"] = std::to_string(lambda);
  meta["batch"] = std::to_string(batch);
  save_checkpoint(out, result.params, meta);
  atomic_write_file(out + ".history.txt", format_loss_history(result.history));
  if (!result.history.empty())
    log_info("final mean loss " + std::to_string(result.history.back().mean_loss));
  return 0;
}

int run_infer(const std::string& ckpt_path, const std::string& movie_path,
              const std::string& music_path, const std::string& durations_path,
              double eta, double lambda, double spoiler, const std::string& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Mat movie = read_blob_with_dim(movie_path, ckpt.params.dim);
  const Mat music = read_blob_with_dim(music_path, ckpt.params.dim);
  const ShotDurations durations = load_durations(durations_path);
  if (durations.movie.size() != movie.rows() || durations.music.size() != music.rows())
    throw std::invalid_argument("durations file does not match blob shot counts");

  InferConfig cfg;
  cfg.eta = eta;
  cfg.lambda = lambda;
  cfg.spoiler_fraction = spoiler;
  const EditDecisionList edl = generate(movie, music, durations, ckpt.params, cfg);
  atomic_write_file(out, edl_to_json(edl).dump(2) + "\n");
  return 0;
}

int run_eval(const std::string& pred, const std::string& truth, const std::string& out) {
  const IndexSequence pred_seq = sequence_from_file(pred);
  const IndexSequence truth_seq = sequence_from_file(truth);
  MetricReport report = evaluate_sequences(pred_seq, truth_seq);

  // Plans induced by the two sequences share a column space, so the KL column
  // is well defined whenever both cover the same music shots.
  if (pred_seq.size() == truth_seq.size()) {
    const Index rows = 1 + std::max(*std::max_element(pred_seq.begin(), pred_seq.end()),
                                    *std::max_element(truth_seq.begin(), truth_seq.end()));
    const Index cols = static_cast<Index>(pred_seq.size());
    const double mass = 1.0 / static_cast<double>(cols);
    TransportPlan p, t;
    p.values = Mat::Zero(rows, cols);
    t.values = Mat::Zero(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      p.values(pred_seq[static_cast<std::size_t>(j)], j) = mass;
      t.values(truth_seq[static_cast<std::size_t>(j)], j) = mass;
    }
    report.kl = alignment_kl(p, t, 1e-12);
    report.has_kl = true;
  }

  // shot statistics when the prediction is an EDL
  const ordered_json doc = ordered_json::parse(read_file(pred));
  if (doc.is_object() && doc.value("format", "") == "trailermatch-edl-v1") {
    report.stats = shot_stats(edl_from_json(doc));
    report.has_stats = true;
  }

  std::cout << format_report_table(report);
  if (!out.empty()) atomic_write_file(out, report_to_json(report));
  return 0;
}

int run_synth(Index shots, Index music, int dim, double noise, std::uint64_t seed,
              int n_pairs, const std::string& out_dir) {
  std::vector<TrainPair> pairs;
  std::vector<std::vector<Index>> planted;
  for (int p = 0; p < n_pairs; ++p) {
    SynthResult r = synth_gen(shots, music, dim, noise, seed + static_cast<std::uint64_t>(p));
    r.pair.id = "pair" + std::to_string(p);
    pairs.push_back(std::move(r.pair));
    planted.push_back(std::move(r.planted));
  }
  write_dataset(out_dir, pairs);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const fs::path pair_dir = fs::path(out_dir) / pairs[p].id;
    save_alignment(pair_dir / "alignment.json", pairs[p].alignment);
    ShotDurations d{pairs[p].movie_durations, pairs[p].music_durations};
    save_durations(pair_dir / "durations.json", d);
  }
  log_info("wrote " + std::to_string(pairs.size()) + " synthetic pair(s) to " + out_dir);
  return 0;
}

int run_sinkhorn(const std::string& cost_path, const std::string& mu_path,
                 const std::string& gamma_path, double lambda, double tol, int max_iter,
                 bool multiplicative, const std::string& out) {
  const CostMatrix cost(parse_matrix(read_file(cost_path)));
  const Marginal mu(parse_vector(read_file(mu_path)));
  const Marginal gamma(parse_vector(read_file(gamma_path)));

  SinkhornConfig cfg;
  cfg.lambda = lambda;
  cfg.tol = tol;
  cfg.max_iter = max_iter;
  cfg.log_domain = !multiplicative;
  const SinkhornResult result = sinkhorn(cost, mu, gamma, cfg);
  if (!result.converged)
    log_warn("sinkhorn did not reach tol; max marginal violation " +
             std::to_string(result.max_violation) + " after " +
             std::to_string(result.iterations) + " iterations");
  atomic_write_file(out, format_matrix(result.plan.values));
  return 0;
}

int run_annotate(const std::string& movie_frames, const std::string& trailer_frames,
                 const std::string& out) {
  const FrameSet movie = load_frameset(movie_frames);
  const FrameSet trailer = load_frameset(trailer_frames);
  save_alignment(out, annotate_alignment(movie, trailer));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"music-guided trailer assembly from precomputed shot embeddings"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "fit the selector and aligner on a dataset");
  std::string train_data, train_out, train_init, kl_direction = "truth-to-pred";
  int epochs = 500, batch = 4, heads = 2, dim = 0, ckpt_every = 0;
  double lr = 1e-5, delta = 1.0, train_lambda = 1.0;
  std::uint64_t train_seed = 0;
  train_cmd->add_option("--data", train_data, "dataset manifest path")->required();
  train_cmd->add_option("--out", train_out, "output checkpoint path")->required();
  train_cmd->add_option("--epochs", epochs, "training epochs");
  train_cmd->add_option("--lr", lr, "learning rate");
  train_cmd->add_option("--delta", delta, "selector loss weight");
  train_cmd->add_option("--lambda", train_lambda, "entropic weight");
  train_cmd->add_option("--batch", batch, "batch size");
  train_cmd->add_option("--seed", train_seed, "RNG seed");
  train_cmd->add_option("--init", train_init, "warm-start checkpoint");
  train_cmd->add_option("--kl-direction", kl_direction,
                        "truth-to-pred | pred-to-smoothed-truth");
  train_cmd->add_option("--heads", heads, "attention heads for fresh models");
  train_cmd->add_option("--dim", dim, "expected embedding dim (sanity check)");
  train_cmd->add_option("--ckpt-every", ckpt_every, "checkpoint cadence in epochs");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "produce an edit decision list");
  std::string infer_ckpt, infer_movie, infer_music, infer_durations, infer_out;
  double eta = 1.0, infer_lambda = 1.0, spoiler = 0.9;
  infer_cmd->add_option("--ckpt", infer_ckpt, "trained checkpoint")->required();
  infer_cmd->add_option("--movie", infer_movie, "movie embeddings blob")->required();
  infer_cmd->add_option("--music", infer_music, "music embeddings blob")->required();
  infer_cmd->add_option("--durations", infer_durations, "durations JSON")->required();
  infer_cmd->add_option("--eta", eta, "temporal cost weight");
  infer_cmd->add_option("--lambda", infer_lambda, "entropic weight");
  infer_cmd->add_option("--spoiler", spoiler, "candidate fraction of the movie head");
  infer_cmd->add_option("--out", infer_out, "output EDL path")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a prediction against ground truth");
  std::string eval_pred, eval_truth, eval_out;
  eval_cmd->add_option("--pred", eval_pred, "EDL, alignment, or index-array JSON")->required();
  eval_cmd->add_option("--truth", eval_truth, "EDL, alignment, or index-array JSON")->required();
  eval_cmd->add_option("--out", eval_out, "optional JSON report path");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic planted dataset");
  Index synth_shots = 40, synth_music = 10;
  int synth_dim = 16, synth_pairs = 1;
  double synth_noise = 0.05;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth_cmd->add_option("--shots", synth_shots, "movie shots per pair");
  synth_cmd->add_option("--music", synth_music, "music shots per pair");
  synth_cmd->add_option("--dim", synth_dim, "embedding dim");
  synth_cmd->add_option("--noise", synth_noise, "noise sigma");
  synth_cmd->add_option("--seed", synth_seed, "RNG seed");
  synth_cmd->add_option("--pairs", synth_pairs, "number of pairs");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  // sinkhorn
  auto* sink_cmd = app.add_subcommand("sinkhorn", "solve one entropic OT problem");
  std::string sink_cost, sink_mu, sink_gamma, sink_out;
  double sink_lambda = 1.0, sink_tol = 1e-9;
  int sink_max_iter = 500;
  bool sink_mult = false;
  sink_cmd->add_option("--cost", sink_cost, "cost matrix text file")->required();
  sink_cmd->add_option("--mu", sink_mu, "row marginal text file")->required();
  sink_cmd->add_option("--gamma", sink_gamma, "column marginal text file")->required();
  sink_cmd->add_option("--lambda", sink_lambda, "entropic weight");
  sink_cmd->add_option("--tol", sink_tol, "marginal violation tolerance");
  sink_cmd->add_option("--max-iter", sink_max_iter, "iteration cap");
  sink_cmd->add_flag("--multiplicative", sink_mult, "kernel scaling instead of log-domain");
  sink_cmd->add_option("--out", sink_out, "output plan text file")->required();

  // annotate
  auto* ann_cmd = app.add_subcommand("annotate", "derive shot alignment from frame embeddings");
  std::string ann_movie, ann_trailer, ann_out;
  ann_cmd->add_option("--movie-frames", ann_movie, "movie frame set JSON")->required();
  ann_cmd->add_option("--trailer-frames", ann_trailer, "trailer frame set JSON")->required();
  ann_cmd->add_option("--out", ann_out, "output alignment JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd)
      return run_train(train_data, train_out, epochs, lr, delta, train_lambda, batch,
                       train_seed, train_init, kl_direction, dim, heads, ckpt_every);
    if (*infer_cmd)
      return run_infer(infer_ckpt, infer_movie, infer_music, infer_durations, eta,
                       infer_lambda, spoiler, infer_out);
    if (*eval_cmd) return run_eval(eval_pred, eval_truth, eval_out);
    if (*synth_cmd)
      return run_synth(synth_shots, synth_music, synth_dim, synth_noise, synth_seed,
                       synth_pairs, synth_out);
    if (*sink_cmd)
      return run_sinkhorn(sink_cost, sink_mu, sink_gamma, sink_lambda, sink_tol,
                          sink_max_iter, sink_mult, sink_out);
    if (*ann_cmd) return run_annotate(ann_movie, ann_trailer, ann_out);
  } catch (const LoadError& e) {
    log_error(e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    log_error(e.what());
    return kExitValidation;
  } catch (const std::domain_error& e) {
    log_error(e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    log_error(e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
