#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace trailermatch {

// Row-major everywhere: file formats are row-major and most operations walk rows.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

bool all_finite(const Mat& m);
bool all_finite(const Vec& v);

// Deterministic RNG. The engine is std::mt19937_64 (portable by definition);
// the mappings to doubles are hand-rolled because the standard distributions
// are implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1) with 53 bits of entropy
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  // Fisher-Yates permutation of {0, ..., n-1}
  std::vector<std::size_t> permutation(std::size_t n);

  // k distinct draws from {0, ..., n-1}, in draw order
  std::vector<Index> sample_without_replacement(Index n, Index k);

 private:
  std::uint64_t below(std::uint64_t bound);

  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace trailermatch
