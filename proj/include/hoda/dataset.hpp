#pragma once

// Synthetic Gaussian-cluster datasets. Desk-scale stand-in for the image
// benchmarks the detector is normally run against.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hoda {

struct SyntheticDatasetSpec {
  int num_classes = 5;
  int dim = 8;
  int samples_per_class = 200;
  double cluster_spread = 1.0;      // per-coordinate stddev within a class
  double cluster_separation = 3.0;  // radius of the sphere class means live on
  std::uint64_t seed = 42;

  void validate() const;
};

/// Feature rows plus labels. `role` records which protocol split a pool
/// plays: train, hoda_calibration, user_simulation or attack_seed.
struct SamplePool {
  Eigen::MatrixXd features;  // one row per sample
  Eigen::VectorXi labels;
  int num_classes = 0;
  std::string role;

  Eigen::Index size() const { return features.rows(); }
  int dim() const { return static_cast<int>(features.cols()); }
};

struct Dataset {
  SamplePool train;
  SamplePool test;
  Eigen::MatrixXd class_means;  // num_classes x dim
};

/// Deterministic in spec.seed; train and test are disjoint draws from
/// the same clusters, each with samples_per_class rows per class.
Dataset generate_dataset(const SyntheticDatasetSpec& spec);

SamplePool select_pool_rows(const SamplePool& pool, const std::vector<int>& rows,
                            std::string role);

void write_pool_csv(const SamplePool& pool, const std::filesystem::path& path);
SamplePool read_pool_csv(const std::filesystem::path& path);

}  // namespace hoda
