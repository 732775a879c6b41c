#pragma once

#include <string>
#include <vector>

namespace hoda {

/// Ordered subset of training-epoch snapshots used to compute hardness
/// degrees. The histogram bin count downstream always equals size().
struct SubclassifierSequence {
  std::vector<int> indices;  // strictly increasing epoch indices
  std::string name;

  int size() const { return static_cast<int>(indices.size()); }

  /// Checks non-empty, strictly increasing, all indices in [0, epochs).
  void validate(int epochs) const;

  static SubclassifierSequence full(int epochs);

  /// Epoch 0 plus ten evenly spaced later epochs ending at epochs-1
  /// ({0,9,19,...,99} when epochs is 100).
  static SubclassifierSequence hoda11(int epochs);

  /// Five evenly spaced late epochs ending at epochs-1
  /// ({19,39,59,79,99} when epochs is 100).
  static SubclassifierSequence hoda5(int epochs);

  /// Resolves "full", "hoda-11" or "hoda-5".
  static SubclassifierSequence named(const std::string& name, int epochs);
};

}  // namespace hoda
