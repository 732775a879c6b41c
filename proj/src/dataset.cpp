#include "hoda/dataset.hpp"

#include "hoda/rng.hpp"
#include "io_util.hpp"

#include <stdexcept>

namespace hoda {
namespace {

// Samples per class drawn from N(mean_c, spread^2 I), interleaved by class so
// labels stay balanced in every prefix.
SamplePool draw_pool(const SyntheticDatasetSpec& spec,
                     const Eigen::MatrixXd& means, std::uint64_t seed,
                     std::string role) {
  const Eigen::Index n =
      static_cast<Eigen::Index>(spec.num_classes) * spec.samples_per_class;
  SamplePool pool;
  pool.features.resize(n, spec.dim);
  pool.labels.resize(n);
  pool.num_classes = spec.num_classes;
  pool.role = std::move(role);
  Rng rng(seed);
  Eigen::Index row = 0;
  for (int i = 0; i < spec.samples_per_class; ++i) {
    for (int c = 0; c < spec.num_classes; ++c, ++row) {
      for (int d = 0; d < spec.dim; ++d) {
        pool.features(row, d) =
            means(c, d) + spec.cluster_spread * rng.normal();
      }
      pool.labels[row] = c;
    }
  }
  return pool;
}

}  // namespace

void SyntheticDatasetSpec::validate() const {
  std::string err;
  if (num_classes < 2) err += "num_classes must be >= 2; ";
  if (dim < 2) err += "dim must be >= 2; ";
  if (samples_per_class < 1) err += "samples_per_class must be >= 1; ";
  if (!(cluster_spread > 0)) err += "cluster_spread must be positive; ";
  if (!(cluster_separation > 0)) err += "cluster_separation must be positive; ";
  if (!err.empty()) throw std::invalid_argument("dataset spec: " + err);
}

Dataset generate_dataset(const SyntheticDatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  // Class means on a sphere of radius cluster_separation, random directions.
  Rng mean_rng(derive_seed(spec.seed, "dataset/means"));
  ds.class_means.resize(spec.num_classes, spec.dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    Eigen::VectorXd dir(spec.dim);
    double norm = 0.0;
    do {
      for (int d = 0; d < spec.dim; ++d) dir[d] = mean_rng.normal();
      norm = dir.norm();
    } while (norm < 1e-12);
    ds.class_means.row(c) = (spec.cluster_separation / norm) * dir.transpose();
  }
  ds.train = draw_pool(spec, ds.class_means,
                       derive_seed(spec.seed, "dataset/train"), "train");
  ds.test = draw_pool(spec, ds.class_means,
                      derive_seed(spec.seed, "dataset/test"), "test");
  return ds;
}

SamplePool select_pool_rows(const SamplePool& pool, const std::vector<int>& rows,
                            std::string role) {
  SamplePool out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), pool.dim());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  out.num_classes = pool.num_classes;
  out.role = std::move(role);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || r >= pool.size())
      throw std::out_of_range("select_pool_rows: row index out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = pool.features.row(r);
    out.labels[static_cast<Eigen::Index>(i)] = pool.labels[r];
  }
  return out;
}

void write_pool_csv(const SamplePool& pool, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (int d = 0; d < pool.dim(); ++d) out << "f" << d << ",";
  out << "label\n";
  for (Eigen::Index i = 0; i < pool.size(); ++i) {
    for (int d = 0; d < pool.dim(); ++d)
      out << detail::fmt_double(pool.features(i, d)) << ",";
    out << pool.labels[i] << "\n";
  }
}

SamplePool read_pool_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty pool file " + path.string());
  const auto header = detail::split(line, ',');
  if (header.size() < 2 || header.back() != "label")
    throw std::runtime_error("bad pool header in " + path.string());
  const int dim = static_cast<int>(header.size()) - 1;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (static_cast<int>(fields.size()) != dim + 1)
      throw std::runtime_error("bad pool row in " + path.string());
    std::vector<double> row(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d)
      row[static_cast<std::size_t>(d)] = detail::parse_double(fields[d]);
    rows.push_back(std::move(row));
    labels.push_back(static_cast<int>(
        detail::parse_long(fields[static_cast<std::size_t>(dim)])));
  }
  SamplePool pool;
  pool.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  pool.labels.resize(static_cast<Eigen::Index>(labels.size()));
  int max_label = -1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int d = 0; d < dim; ++d)
      pool.features(static_cast<Eigen::Index>(i), d) =
          rows[i][static_cast<std::size_t>(d)];
    pool.labels[static_cast<Eigen::Index>(i)] = labels[i];
    max_label = std::max(max_label, labels[i]);
  }
  pool.num_classes = max_label + 1;
  pool.role = "file";
  return pool;
}

}  // namespace hoda
