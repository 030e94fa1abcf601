#pragma once

#include "trailermatch/common.hpp"
#include "trailermatch/pipeline.hpp"
#include "trailermatch/sinkhorn.hpp"

#include <string>
#include <vector>

namespace trailermatch {

/// Ordered movie-shot indices, e.g. the shots of a trailer in playback order.
using IndexSequence = std::vector<Index>;

struct PrfResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Positional top-K match: positions i (over the common prefix) count as hits
/// when |a_i - b_i| <= K-1. Precision divides by |a|, recall by |b|;
/// F1 = 2PR/(P+R), zero when there are no hits.
PrfResult topk_prf(const IndexSequence& a, const IndexSequence& b, int k);

/// sum truth * (log truth - log(pred + eps)) with 0 log 0 := 0.
double alignment_kl(const TransportPlan& pred, const TransportPlan& truth, double eps);

struct ShotStats {
  std::size_t count = 0;
  double mean_duration = 0.0;
  double std_duration = 0.0;  // population standard deviation
};

ShotStats shot_stats(const EditDecisionList& edl);

struct MetricReport {
  PrfResult at1, at3, at5;
  double kl = 0.0;
  bool has_kl = false;
  ShotStats stats;
  bool has_stats = false;
};

MetricReport evaluate_sequences(const IndexSequence& predicted, const IndexSequence& truth);

std::string format_report_table(const MetricReport& report);
std::string report_to_json(const MetricReport& report);

}  // namespace trailermatch
