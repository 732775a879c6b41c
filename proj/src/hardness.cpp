#include "hoda/hardness.hpp"

#include <cmath>

namespace hoda {

HardnessHistogram::HardnessHistogram(int num_bins) {
  if (num_bins <= 0)
    throw std::invalid_argument("histogram needs at least one bin");
  counts_ = Eigen::VectorXi::Zero(num_bins);
}

void HardnessHistogram::add(int degree) {
  if (degree < 0 || degree >= num_bins())
    throw std::out_of_range("hardness degree outside histogram range");
  counts_[degree] += 1;
  total_ += 1;
}

void HardnessHistogram::reset() {
  counts_.setZero();
  total_ = 0;
}

Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& bins) {
  const double total = bins.sum();
  if (!(total > 0.0)) throw std::invalid_argument("empty histogram");
  return bins / total;
}

Eigen::VectorXd normalize(const HardnessHistogram& h) {
  return normalize(Eigen::VectorXd(h.counts().cast<double>()));
}

Eigen::VectorXd normalize(const NormalHistogram& h) { return normalize(h.bins); }

double pearson_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                        const Eigen::Ref<const Eigen::VectorXd>& b) {
  const Eigen::Index n = a.size();
  if (n != b.size())
    throw std::invalid_argument("pearson_distance: length mismatch");
  if (n == 0) throw std::invalid_argument("pearson_distance: empty input");

  if ((a.array() == b.array()).all()) return 0.0;

  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double var_a = da.squaredNorm() * inv_n;
  const double var_b = db.squaredNorm() * inv_n;
  if (var_a == 0.0 || var_b == 0.0) return 1.0;

  const double cov = da.dot(db) * inv_n;
  const double d = 1.0 - cov / (std::sqrt(var_a) * std::sqrt(var_b));
  if (d < -1e-9 || d > 2.0 + 1e-9)
    throw std::logic_error("pearson_distance outside [0,2]");
  return std::min(std::max(d, 0.0), 2.0);
}

double histogram_distance(const HardnessHistogram& user,
                          const NormalHistogram& normal) {
  if (user.num_bins() != normal.num_bins())
    throw std::invalid_argument("histogram_distance: bin-count mismatch");
  return pearson_distance(normalize(user), normalize(normal));
}

}  // namespace hoda
