#pragma once

// Offline half of the detector: build the normal histogram H_n and the
// detection threshold delta from random benign sample sequences.

#include "hoda/hardness.hpp"
#include "hoda/prediction.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hoda {

struct CalibrationConfig {
  int num_s = 100;     // sequence length == detection window size
  int num_seq = 5000;  // number of calibration sequences
  double quantile = 1.0;  // 1.0 takes the max distance as delta
  std::uint64_t seed = 7;

  /// num_s must fit the pool when sampling without replacement.
  void validate(Eigen::Index pool_size) const;
};

struct CalibrationResult {
  NormalHistogram normal;  // elementwise mean of the sequence histograms
  double delta = 0.0;
  CalibrationConfig config;
  SubclassifierSequence sequence;       // provenance: which epochs the bins mean
  std::vector<double> distance_samples; // one distance per calibration sequence

  int num_bins() const { return normal.num_bins(); }

  /// Versioned text format; the unit of deployment to the monitor.
  void save(const std::filesystem::path& path) const;
  static CalibrationResult load(const std::filesystem::path& path);
};

/// Draws num_seq sequences of num_s samples (uniform, without replacement
/// within a sequence, independently across sequences), builds each sequence's
/// hardness histogram, averages them into H_n and takes delta as the
/// quantile-q distance between H_n and the sequence histograms (max at
/// q = 1.0). Deterministic in the config seed regardless of thread count.
CalibrationResult calibrate(const PredictionMatrix& matrix,
                            const CalibrationConfig& cfg);

/// Same, starting from precomputed per-sample degrees.
CalibrationResult calibrate_degrees(const Eigen::VectorXi& degrees,
                                    const SubclassifierSequence& sequence,
                                    const CalibrationConfig& cfg);

/// The exact pool indices calibration draws for sequence seq_index; exposed
/// so benign replay fixtures can reproduce a calibration sequence.
std::vector<int> calibration_sequence_indices(const CalibrationConfig& cfg,
                                              Eigen::Index pool_size,
                                              int seq_index);

/// Fraction of `trials` fresh benign sequences drawn from the held-out
/// matrix whose distance to H_n exceeds delta.
double fpr_estimate(const CalibrationResult& result,
                    const PredictionMatrix& heldout, int trials,
                    std::uint64_t seed);

double fpr_estimate_degrees(const CalibrationResult& result,
                            const Eigen::VectorXi& degrees, int trials,
                            std::uint64_t seed);

}  // namespace hoda
