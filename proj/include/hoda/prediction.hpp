#pragma once

// Per-sample predicted labels across a subclassifier sequence, plus the CSV
// form the pipeline stages exchange.

#include "hoda/model.hpp"
#include "hoda/sequence.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace hoda {

struct PredictionMatrix {
  std::vector<std::string> sample_ids;  // one per row
  Eigen::MatrixXi labels;               // rows x sequence.size()
  SubclassifierSequence sequence;

  Eigen::Index rows() const { return labels.rows(); }
  int cols() const { return static_cast<int>(labels.cols()); }

  /// Row-wise hardness degrees over this sequence.
  Eigen::VectorXi hardness_degrees() const;

  /// CSV with header sample_id,e<i0>,e<i1>,... and integer labels.
  void write_csv(const std::filesystem::path& path) const;
  static PredictionMatrix read_csv(const std::filesystem::path& path);
};

/// Entry [i][k] is the argmax of snapshot sequence.indices[k] on pool row i
/// (ties to the lowest class index). Parallelizes over snapshots; the result
/// is identical to serial evaluation.
PredictionMatrix predict_matrix(const SnapshotModel& model,
                                const SubclassifierSequence& sequence,
                                const Eigen::Ref<const Eigen::MatrixXd>& pool,
                                std::vector<std::string> sample_ids = {});

/// Restriction of `full` to the epochs in `seq` (every index of seq must be
/// present in full.sequence).
PredictionMatrix subselect(const PredictionMatrix& full,
                           const SubclassifierSequence& seq);

PredictionMatrix select_matrix_rows(const PredictionMatrix& matrix,
                                    const std::vector<int>& rows);

}  // namespace hoda
