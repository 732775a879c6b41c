#pragma once

// End-to-end experiment harness: simulate benign and adversarial user
// populations against a calibrated monitor, sweep window sizes and
// subclassifier subsampling, and score detection rate / FPR / AUC.

#include "hoda/attacks.hpp"
#include "hoda/calibration.hpp"
#include "hoda/dataset.hpp"
#include "hoda/model.hpp"
#include "hoda/prediction.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hoda {

enum class AttackKind { ood_random, jbda, jbrand, adaptive_mix };

const char* to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackConfig {
  std::string name;  // row label in reports
  AttackKind kind = AttackKind::ood_random;
  int budget = 2000;
  std::uint64_t seed = 0;  // 0 derives one from the plan seed and the name
  OodStreamSpec ood;       // ood_random
  JbdaConfig jbda;         // jbda / jbrand (seed_samples filled by the harness)
  AdaptiveMixConfig adaptive;               // adaptive_mix
  std::shared_ptr<AttackConfig> adaptive_base;  // base attack for adaptive_mix

  void validate() const;
};

struct ExperimentPlan {
  SyntheticDatasetSpec dataset;
  TrainConfig train;
  std::vector<std::string> sequences{"full", "hoda-11", "hoda-5"};
  std::vector<int> num_s_sweep{25, 50, 100, 200};
  int num_users = 2000;
  int num_adversaries = 2000;
  int num_seq = 5000;
  double quantile = 1.0;
  double hoda_fraction = 0.4;  // calibration share of the test pool
  int jbda_num_seeds = 50;     // seed samples drawn from the user pool
  std::vector<AttackConfig> attacks;
  std::uint64_t seed = 42;

  void validate() const;
};

struct DetectionRow {
  std::string attack;
  int num_s = 0;
  std::string sequence;
  double delta = 0.0;
  double fpr = 0.0;
  double detection_rate = 0.0;
  double auc = 0.0;
  double attack_cost_factor = 1.0;  // 1/(1-p_n) for adaptive adversaries
  Eigen::VectorXi benign_distance_hist;     // fixed bins over [0,2]
  Eigen::VectorXi adversary_distance_hist;  // same binning
};

struct HardnessHistRow {
  std::string population;  // "benign" or an attack name
  std::string sequence;
  Eigen::VectorXi hist;  // one bin per degree
};

struct GroupRow {
  int group = 0;  // 1-based decile over [0, m)
  double fraction = 0.0;
  std::optional<double> accuracy;  // absent for empty groups
};

struct MisclassReport {
  std::vector<GroupRow> groups;
  std::optional<double> spearman;  // group index vs misclassification rate
};

struct DetectionReport {
  std::uint64_t seed = 0;
  std::string plan_digest;
  double target_train_accuracy = 0.0;
  double target_test_accuracy = 0.0;
  std::vector<DetectionRow> rows;
  std::vector<HardnessHistRow> hardness_hists;
  MisclassReport misclass;
  std::optional<double> transfer_correlation;
  SurrogateReport surrogate;  // default OOD-stream surrogate vs the target

  void save_json(const std::filesystem::path& path) const;
  static DetectionReport load_json(const std::filesystem::path& path);
};

/// Mann-Whitney AUC: probability that a uniformly random adversary distance
/// exceeds a uniformly random benign distance, ties counted one half.
double auc(const std::vector<double>& benign_distances,
           const std::vector<double>& adversary_distances);

/// Per hardness-decile sample fraction and final-model accuracy, plus the
/// Spearman rank correlation between group index and misclassification rate.
MisclassReport hardness_misclassification_report(
    const PredictionMatrix& full_matrix,
    const Eigen::Ref<const Eigen::VectorXi>& true_labels);

/// Pearson correlation between per-sample hardness degrees of two models
/// over one pool (full sequences); nullopt when either degree vector is
/// constant.
std::optional<double> transferability_report(
    const SnapshotModel& model_a, const SnapshotModel& model_b,
    const Eigen::Ref<const Eigen::MatrixXd>& pool);

/// Trains the target, calibrates per (sequence, num_s), simulates the
/// populations and scores every attack. Deterministic in plan.seed.
DetectionReport run_experiment(const ExperimentPlan& plan);

/// Writes the CSV tables and SVG histogram plots for a report. CSVs are
/// byte-stable across runs with the same seed; SVGs are presentation-only.
void emit_reports(const DetectionReport& report,
                  const std::filesystem::path& out_dir);

/// Number of fixed distance-histogram bins used in DetectionRow.
inline constexpr int kDistanceHistBins = 40;

}  // namespace hoda
