#pragma once

// Hardness degrees and histogram distance. These are the primitives the
// whole detector is built from; everything here is a pure function.

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace hoda {

/// Hardness degree of a label trace: the index at which the predicted label
/// converges, i.e. the last position whose label differs from the label
/// before it (position 0 always counts as a change, there is no label before
/// it). 0 therefore means the trace is constant, and the result is always in
/// [0, len - 1].
template <typename Derived>
int hardness_degree(const Eigen::MatrixBase<Derived>& trace) {
  static_assert(std::is_integral_v<typename Derived::Scalar>,
                "label traces are integer-valued");
  const Eigen::Index n = trace.size();
  if (n == 0) throw std::invalid_argument("empty label trace");
  auto label = trace(0);
  if (label < 0) throw std::invalid_argument("negative label in trace");
  int degree = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    const auto pred = trace(i);
    if (pred < 0) throw std::invalid_argument("negative label in trace");
    if (pred != label) {
      degree = static_cast<int>(i);
      label = pred;
    }
  }
  return degree;
}

inline int hardness_degree(const std::vector<int>& trace) {
  return hardness_degree(Eigen::Map<const Eigen::VectorXi>(
      trace.data(), static_cast<Eigen::Index>(trace.size())));
}

/// Integer-count histogram over hardness degrees: one bin per possible
/// degree, so num_bins equals the subclassifier-sequence length.
class HardnessHistogram {
 public:
  HardnessHistogram() = default;
  explicit HardnessHistogram(int num_bins);

  void add(int degree);
  void reset();

  int num_bins() const { return static_cast<int>(counts_.size()); }
  std::int64_t total() const { return total_; }
  const Eigen::VectorXi& counts() const { return counts_; }

 private:
  Eigen::VectorXi counts_;
  std::int64_t total_ = 0;
};

/// Real-valued histogram, the elementwise average of count histograms.
struct NormalHistogram {
  Eigen::VectorXd bins;

  int num_bins() const { return static_cast<int>(bins.size()); }
};

/// Counts divided by their total; entries sum to 1. Throws
/// std::invalid_argument("empty histogram") when the total is zero.
Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& bins);
Eigen::VectorXd normalize(const HardnessHistogram& h);
Eigen::VectorXd normalize(const NormalHistogram& h);

/// Pearson distance 1 - cov(a,b) / (sigma_a * sigma_b) between two
/// probability vectors, treating bins as paired observations with
/// population (divide-by-n) statistics. Result is clamped to [0, 2].
///
/// Degenerate inputs, where the correlation is undefined, are resolved as
/// follows rather than raising: if the vectors are elementwise equal the
/// distance is 0; otherwise, if either vector has zero variance (a uniform
/// probability vector, or any vector of length 1), the distance is the
/// neutral midpoint 1.
double pearson_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                        const Eigen::Ref<const Eigen::VectorXd>& b);

/// pearson_distance of the two normalized histograms.
double histogram_distance(const HardnessHistogram& user,
                          const NormalHistogram& normal);

}  // namespace hoda
