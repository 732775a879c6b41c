#include "hoda/sequence.hpp"

#include <numeric>
#include <stdexcept>

namespace hoda {
namespace {

// k steps of size ceil(epochs/k), each end-of-step index clamped to the last
// epoch; duplicates collapse for tiny epoch counts.
std::vector<int> spaced_tail(int epochs, int k) {
  const int step = (epochs + k - 1) / k;
  std::vector<int> idx;
  for (int i = 1; i <= k; ++i) {
    const int e = std::min(i * step - 1, epochs - 1);
    if (idx.empty() || e > idx.back()) idx.push_back(e);
  }
  return idx;
}

}  // namespace

void SubclassifierSequence::validate(int epochs) const {
  if (indices.empty())
    throw std::invalid_argument("subclassifier sequence is empty");
  int prev = -1;
  for (const int i : indices) {
    if (i <= prev)
      throw std::invalid_argument(
          "subclassifier sequence indices must be strictly increasing");
    if (i < 0 || i >= epochs)
      throw std::invalid_argument(
          "subclassifier sequence index out of range for " +
          std::to_string(epochs) + " epochs");
    prev = i;
  }
}

SubclassifierSequence SubclassifierSequence::full(int epochs) {
  SubclassifierSequence seq;
  seq.indices.resize(static_cast<std::size_t>(epochs));
  std::iota(seq.indices.begin(), seq.indices.end(), 0);
  seq.name = "full";
  seq.validate(epochs);
  return seq;
}

SubclassifierSequence SubclassifierSequence::hoda11(int epochs) {
  SubclassifierSequence seq;
  seq.indices = spaced_tail(epochs, 10);
  if (seq.indices.empty() || seq.indices.front() != 0)
    seq.indices.insert(seq.indices.begin(), 0);
  seq.name = "hoda-11";
  seq.validate(epochs);
  return seq;
}

SubclassifierSequence SubclassifierSequence::hoda5(int epochs) {
  SubclassifierSequence seq;
  seq.indices = spaced_tail(epochs, 5);
  seq.name = "hoda-5";
  seq.validate(epochs);
  return seq;
}

SubclassifierSequence SubclassifierSequence::named(const std::string& name,
                                                   int epochs) {
  if (name == "full") return full(epochs);
  if (name == "hoda-11") return hoda11(epochs);
  if (name == "hoda-5") return hoda5(epochs);
  throw std::invalid_argument("unknown subclassifier sequence '" + name +
                              "' (expected full, hoda-11 or hoda-5)");
}

}  // namespace hoda
