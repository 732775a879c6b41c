#pragma once

// Snapshot classifier: a small softmax network trained with SGD + momentum
// that keeps the parameter vector from the end of every epoch. Each snapshot
// answers "what would the model have predicted after epoch e", which is the
// substrate hardness degrees are computed from.

#include "hoda/dataset.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hoda {

struct TrainConfig {
  int hidden_width = 32;  // 0 trains a plain linear softmax classifier
  int epochs = 100;
  double learning_rate = 0.10;
  double lr_decay = 0.97;  // multiplicative, applied after every epoch
  double momentum = 0.9;
  int batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

class SnapshotModel {
 public:
  SnapshotModel() = default;

  /// Trains on hard labels (one-hot targets).
  static SnapshotModel train(const SamplePool& pool, const TrainConfig& cfg);

  /// Trains against row-stochastic soft targets (e.g. another model's
  /// probability vectors). targets is n x num_classes.
  static SnapshotModel train_soft(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                  const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                  const TrainConfig& cfg);

  int epochs() const { return static_cast<int>(snapshots_.size()); }
  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }
  int hidden_width() const { return cfg_.hidden_width; }
  const TrainConfig& config() const { return cfg_; }

  /// End-of-epoch mean training loss, one entry per epoch.
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }

  Eigen::MatrixXd logits(int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  Eigen::MatrixXd probabilities(int epoch,
                                const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// Argmax labels; ties resolve to the lowest class index.
  Eigen::VectorXi predict(int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  int predict_one(int epoch, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Gradient of the cross-entropy loss toward target_class with respect to
  /// the input. Ascending it increases that class's loss.
  Eigen::VectorXd input_gradient(int epoch, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 int target_class) const;

  double mean_loss(int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x,
                   const Eigen::Ref<const Eigen::VectorXi>& labels) const;
  double accuracy(int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x,
                  const Eigen::Ref<const Eigen::VectorXi>& labels) const;

  void save(const std::filesystem::path& path) const;
  static SnapshotModel load(const std::filesystem::path& path);

  /// Exact parameter equality across all snapshots.
  bool same_parameters(const SnapshotModel& other) const;

 private:
  struct Params {
    Eigen::MatrixXd w1;  // hidden x dim (empty in linear mode)
    Eigen::VectorXd b1;  // hidden
    Eigen::MatrixXd w2;  // classes x hidden (classes x dim in linear mode)
    Eigen::VectorXd b2;  // classes
  };

  const Params& snapshot(int epoch) const;
  Eigen::MatrixXd logits_for(const Params& p,
                             const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  std::vector<Params> snapshots_;
  std::vector<double> epoch_losses_;
  TrainConfig cfg_;
  int input_dim_ = 0;
  int num_classes_ = 0;
};

/// Row-wise softmax with the usual max-shift for stability.
Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits);

}  // namespace hoda
