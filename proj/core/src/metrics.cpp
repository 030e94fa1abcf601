#include "trailermatch/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace trailermatch {

PrfResult topk_prf(const IndexSequence& a, const IndexSequence& b, int k) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("topk_prf: sequences must be nonempty");
  if (k < 1) throw std::invalid_argument("topk_prf: k must be >= 1");

  const std::size_t common = std::min(a.size(), b.size());
  std::size_t matches = 0;
  for (std::size_t i = 0; i < common; ++i) {
    if (std::llabs(static_cast<long long>(a[i]) - static_cast<long long>(b[i])) <= k - 1)
      ++matches;
  }
  PrfResult r;
  r.precision = static_cast<double>(matches) / static_cast<double>(a.size());
  r.recall = static_cast<double>(matches) / static_cast<double>(b.size());
  r.f1 = matches == 0 ? 0.0
                      : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

double alignment_kl(const TransportPlan& pred, const TransportPlan& truth, double eps) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw std::invalid_argument("alignment_kl: shape mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("alignment_kl: eps must be > 0");
  double kl = 0.0;
  for (Index i = 0; i < truth.rows(); ++i) {
    for (Index j = 0; j < truth.cols(); ++j) {
      const double q = truth.values(i, j);
      if (q > 0.0) kl += q * (std::log(q) - std::log(pred.values(i, j) + eps));
    }
  }
  return kl;
}

ShotStats shot_stats(const EditDecisionList& edl) {
  if (edl.entries.empty()) throw std::invalid_argument("shot_stats: empty EDL");
  ShotStats s;
  s.count = edl.entries.size();
  double sum = 0.0;
  for (const EdlEntry& e : edl.entries) sum += e.total_length();
  s.mean_duration = sum / static_cast<double>(s.count);
  double var = 0.0;
  for (const EdlEntry& e : edl.entries) {
    const double d = e.total_length() - s.mean_duration;
    var += d * d;
  }
  s.std_duration = std::sqrt(var / static_cast<double>(s.count));
  return s;
}

MetricReport evaluate_sequences(const IndexSequence& predicted, const IndexSequence& truth) {
  MetricReport report;
  report.at1 = topk_prf(predicted, truth, 1);
  report.at3 = topk_prf(predicted, truth, 3);
  report.at5 = topk_prf(predicted, truth, 5);
  return report;
}

std::string format_report_table(const MetricReport& report) {
  char buf[256];
  std::string out;
  out += "metric        K=1       K=3       K=5\n";
  std::snprintf(buf, sizeof(buf), "precision  %8.4f  %8.4f  %8.4f\n",
                report.at1.precision, report.at3.precision, report.at5.precision);
  out += buf;
  std::snprintf(buf, sizeof(buf), "recall     %8.4f  %8.4f  %8.4f\n",
                report.at1.recall, report.at3.recall, report.at5.recall);
  out += buf;
  std::snprintf(buf, sizeof(buf), "f1         %8.4f  %8.4f  %8.4f\n",
                report.at1.f1, report.at3.f1, report.at5.f1);
  out += buf;
  if (report.has_kl) {
    std::snprintf(buf, sizeof(buf), "kl         %10.6f\n", report.kl);
    out += buf;
  }
  if (report.has_stats) {
    std::snprintf(buf, sizeof(buf), "shots      %zu  mean %.4f s  std %.4f s\n",
                  report.stats.count, report.stats.mean_duration,
                  report.stats.std_duration);
    out += buf;
  }
  return out;
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::ordered_json doc;
  doc["format"] = "trailermatch-report-v1";
  auto prf = [](const PrfResult& r) {
    return nlohmann::ordered_json{
        {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
  };
  doc["k1"] = prf(report.at1);
  doc["k3"] = prf(report.at3);
  doc["k5"] = prf(report.at5);
  if (report.has_kl) doc["kl"] = report.kl;
  if (report.has_stats) {
    doc["shot_count"] = report.stats.count;
    doc["mean_duration"] = report.stats.mean_duration;
    doc["std_duration"] = report.stats.std_duration;
  }
  return doc.dump(2) + "\n";
}

}  // namespace trailermatch
