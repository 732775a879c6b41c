#include "hoda/prediction.hpp"

#include "hoda/hardness.hpp"
#include "io_util.hpp"
#include "parallel.hpp"

#include <stdexcept>

namespace hoda {

Eigen::VectorXi PredictionMatrix::hardness_degrees() const {
  Eigen::VectorXi degrees(labels.rows());
  for (Eigen::Index i = 0; i < labels.rows(); ++i)
    degrees[i] = hardness_degree(labels.row(i));
  return degrees;
}

void PredictionMatrix::write_csv(const std::filesystem::path& path) const {
  auto out = detail::open_out(path);
  out << "sample_id";
  for (const int e : sequence.indices) out << ",e" << e;
  out << "\n";
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    out << sample_ids[static_cast<std::size_t>(i)];
    for (int k = 0; k < cols(); ++k) out << ',' << labels(i, k);
    out << "\n";
  }
}

PredictionMatrix PredictionMatrix::read_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty prediction matrix file " + path.string());
  const auto header = detail::split(line, ',');
  if (header.empty() || header[0] != "sample_id")
    throw std::runtime_error("bad prediction matrix header in " + path.string());
  PredictionMatrix m;
  for (std::size_t k = 1; k < header.size(); ++k) {
    const std::string& h = header[k];
    if (h.size() < 2 || h[0] != 'e')
      throw std::runtime_error("bad epoch column '" + h + "' in " +
                               path.string());
    m.sequence.indices.push_back(
        static_cast<int>(detail::parse_long(h.substr(1))));
  }
  m.sequence.name = "file";
  const int cols = static_cast<int>(m.sequence.indices.size());
  std::vector<std::vector<int>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (static_cast<int>(fields.size()) != cols + 1)
      throw std::runtime_error("bad prediction matrix row in " + path.string());
    m.sample_ids.push_back(fields[0]);
    std::vector<int> row(static_cast<std::size_t>(cols));
    for (int k = 0; k < cols; ++k)
      row[static_cast<std::size_t>(k)] = static_cast<int>(
          detail::parse_long(fields[static_cast<std::size_t>(k) + 1]));
    rows.push_back(std::move(row));
  }
  m.labels.resize(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int k = 0; k < cols; ++k)
      m.labels(static_cast<Eigen::Index>(i), k) =
          rows[i][static_cast<std::size_t>(k)];
  return m;
}

PredictionMatrix predict_matrix(const SnapshotModel& model,
                                const SubclassifierSequence& sequence,
                                const Eigen::Ref<const Eigen::MatrixXd>& pool,
                                std::vector<std::string> sample_ids) {
  sequence.validate(model.epochs());
  if (pool.rows() > 0 && pool.cols() != model.input_dim())
    throw std::invalid_argument("feature dimension mismatch: expected " +
                                std::to_string(model.input_dim()) + ", got " +
                                std::to_string(pool.cols()));
  PredictionMatrix m;
  m.sequence = sequence;
  if (sample_ids.empty()) {
    sample_ids.reserve(static_cast<std::size_t>(pool.rows()));
    for (Eigen::Index i = 0; i < pool.rows(); ++i)
      sample_ids.push_back("s" + std::to_string(i));
  }
  if (static_cast<Eigen::Index>(sample_ids.size()) != pool.rows())
    throw std::invalid_argument("sample_ids length differs from pool rows");
  m.sample_ids = std::move(sample_ids);
  m.labels.resize(pool.rows(), sequence.size());
  detail::parallel_for(sequence.size(), [&](int begin, int end) {
    for (int k = begin; k < end; ++k)
      m.labels.col(k) = model.predict(sequence.indices[static_cast<std::size_t>(k)], pool);
  });
  return m;
}

PredictionMatrix subselect(const PredictionMatrix& full,
                           const SubclassifierSequence& seq) {
  PredictionMatrix out;
  out.sample_ids = full.sample_ids;
  out.sequence = seq;
  out.labels.resize(full.rows(), seq.size());
  for (int k = 0; k < seq.size(); ++k) {
    const int epoch = seq.indices[static_cast<std::size_t>(k)];
    int col = -1;
    for (int c = 0; c < full.cols(); ++c) {
      if (full.sequence.indices[static_cast<std::size_t>(c)] == epoch) {
        col = c;
        break;
      }
    }
    if (col < 0)
      throw std::invalid_argument("subselect: epoch " + std::to_string(epoch) +
                                  " not present in source matrix");
    out.labels.col(k) = full.labels.col(col);
  }
  return out;
}

PredictionMatrix select_matrix_rows(const PredictionMatrix& matrix,
                                    const std::vector<int>& rows) {
  PredictionMatrix out;
  out.sequence = matrix.sequence;
  out.labels.resize(static_cast<Eigen::Index>(rows.size()), matrix.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || r >= matrix.rows())
      throw std::out_of_range("select_matrix_rows: row index out of range");
    out.labels.row(static_cast<Eigen::Index>(i)) = matrix.labels.row(r);
    out.sample_ids.push_back(matrix.sample_ids[static_cast<std::size_t>(r)]);
  }
  return out;
}

}  // namespace hoda
