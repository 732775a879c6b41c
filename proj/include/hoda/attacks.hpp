#pragma once

// Adversarial query-stream generators (out-of-distribution sampling,
// jacobian-based augmentation, normal-sample mixing) plus surrogate training
// and scoring.

#include "hoda/dataset.hpp"
#include "hoda/model.hpp"
#include "hoda/prediction.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hoda {

enum class Provenance { normal, synthetic, ood };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Query stream in generation order; one provenance tag per row.
struct AttackStream {
  Eigen::MatrixXd features;
  std::vector<Provenance> provenance;

  Eigen::Index size() const { return features.rows(); }
  int dim() const { return static_cast<int>(features.cols()); }

  void write_csv(const std::filesystem::path& path) const;
  static AttackStream read_csv(const std::filesystem::path& path);
};

struct OodStreamSpec {
  enum class Kind { uniform_box, shifted_clusters, pool_resample };

  Kind kind = Kind::uniform_box;
  int dim = 8;
  // uniform_box: i.i.d. coordinates in [box_lo, box_hi].
  double box_lo = -20.0;
  double box_hi = 20.0;
  // shifted_clusters: the base dataset's clusters, means scaled by
  // mean_shift_factor and spread scaled by spread_factor.
  SyntheticDatasetSpec base;
  double mean_shift_factor = 3.0;
  double spread_factor = 1.0;
  // pool_resample: rows drawn with replacement from this pool (control
  // "attack" from the benign distribution; provenance is tagged normal).
  std::shared_ptr<const SamplePool> pool;

  void validate() const;
};

AttackStream ood_stream(const OodStreamSpec& spec, int budget,
                        std::uint64_t seed);

struct JbdaConfig {
  double lambda = 0.25;  // sign-step size
  int kappa = 200;       // samples perturbed per round
  int rounds = 10;
  SamplePool seed_samples;
  int jbrand_iters = 5;
  int jbrand_targets_per_sample = 3;
  TrainConfig surrogate;  // hyper for the per-round surrogates
  std::uint64_t seed = 11;
  // Optional per-dimension clamp of perturbed samples; off by default since
  // feature space has no pixel box.
  std::optional<std::pair<double, double>> clip_box;

  void validate() const;
};

/// Multi-round jacobian-based augmentation against `target`. Each round
/// retrains a surrogate from scratch on everything labeled so far, picks
/// kappa samples and emits x' = x + lambda * sign(grad). The stream opens
/// with the seed samples (they are queries too) and rounds continue past
/// cfg.rounds if needed to fill the budget; generation stops mid-round at
/// budget. With random_targets (the JBRAND variant) each picked sample emits
/// jbrand_targets_per_sample descent steps toward uniformly random classes,
/// taking jbrand_iters equal sign-steps of lambda / jbrand_iters.
AttackStream jbda_stream(const SnapshotModel& target, const JbdaConfig& cfg,
                         int budget, bool random_targets = false);

struct AdaptiveMixConfig {
  double p_n = 0.5;  // probability a position is a normal sample; in [0, 1)
  int normal_pool_size = 1000;
  std::uint64_t seed = 13;

  void validate() const;
};

/// Each emitted position is a normal sample with probability p_n (drawn with
/// replacement from a fixed pool of normal_pool_size rows of user_pool) and
/// the next base-attack sample otherwise (cycling once the base stream is
/// exhausted). The attack-cost multiplier 1/(1-p_n) is reported by the eval
/// harness.
AttackStream adaptive_stream(const AttackStream& base,
                             const SamplePool& user_pool,
                             const AdaptiveMixConfig& cfg, int budget);

/// Surrogate trained on target-model outputs: soft targets are probability
/// vectors, hard targets are argmax labels re-encoded one-hot.
SnapshotModel train_surrogate(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::MatrixXd>& soft_targets,
                              const TrainConfig& cfg);
SnapshotModel train_surrogate_hard(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXi>& labels,
                                   int num_classes, const TrainConfig& cfg);

struct HardnessGroupMetrics {
  int group = 0;  // 1-based; group 1 holds the easiest samples
  Eigen::Index count = 0;
  std::optional<double> accuracy;
  std::optional<double> fidelity;
};

struct SurrogateReport {
  double accuracy = 0.0;
  double fidelity = 0.0;
  std::vector<HardnessGroupMetrics> groups;  // ten equal degree ranges
};

/// Accuracy (surrogate argmax == true label) and fidelity (surrogate argmax
/// == target argmax) on the test pool, overall and per hardness group. The
/// degree range [0, m) is partitioned into ten equal ranges using the
/// full-sequence matrix over the same pool.
SurrogateReport score_surrogate(const SnapshotModel& surrogate,
                                const SnapshotModel& target,
                                const SamplePool& test,
                                const PredictionMatrix& full_matrix);

}  // namespace hoda
