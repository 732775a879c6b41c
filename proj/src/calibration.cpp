#include "hoda/calibration.hpp"

#include "hoda/rng.hpp"
#include "io_util.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hoda {
namespace {

Eigen::VectorXi sequence_histogram(const Eigen::VectorXi& degrees,
                                   const std::vector<int>& picks, int bins) {
  Eigen::VectorXi hist = Eigen::VectorXi::Zero(bins);
  for (const int i : picks) hist[degrees[i]] += 1;
  return hist;
}

double quantile_of(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const auto n = static_cast<long>(values.size());
  long k = static_cast<long>(std::ceil(q * static_cast<double>(n))) - 1;
  k = std::clamp<long>(k, 0, n - 1);
  return values[static_cast<std::size_t>(k)];
}

}  // namespace

void CalibrationConfig::validate(Eigen::Index pool_size) const {
  std::string err;
  if (num_s < 1) err += "num_s must be >= 1; ";
  if (num_seq < 1) err += "num_seq must be >= 1; ";
  if (!(quantile > 0.0) || quantile > 1.0) err += "quantile must be in (0,1]; ";
  if (num_s > pool_size)
    err += "num_s (" + std::to_string(num_s) + ") exceeds pool size (" +
           std::to_string(pool_size) + "); ";
  if (!err.empty()) throw std::invalid_argument("calibration config: " + err);
}

std::vector<int> calibration_sequence_indices(const CalibrationConfig& cfg,
                                              Eigen::Index pool_size,
                                              int seq_index) {
  Rng rng(derive_seed(cfg.seed, "calibration/seq",
                      static_cast<std::uint64_t>(seq_index)));
  return rng.sample_without_replacement(static_cast<int>(pool_size), cfg.num_s);
}

CalibrationResult calibrate_degrees(const Eigen::VectorXi& degrees,
                                    const SubclassifierSequence& sequence,
                                    const CalibrationConfig& cfg) {
  const Eigen::Index pool = degrees.size();
  cfg.validate(pool);
  const int bins = sequence.size();
  for (Eigen::Index i = 0; i < pool; ++i)
    if (degrees[i] < 0 || degrees[i] >= bins)
      throw std::invalid_argument("degree out of range for sequence bins");

  // Pass 1: per-sequence histograms, seeded per index so the schedule does
  // not matter.
  std::vector<Eigen::VectorXi> hists(static_cast<std::size_t>(cfg.num_seq));
  detail::parallel_for(cfg.num_seq, [&](int begin, int end) {
    for (int s = begin; s < end; ++s) {
      const auto picks = calibration_sequence_indices(cfg, pool, s);
      hists[static_cast<std::size_t>(s)] =
          sequence_histogram(degrees, picks, bins);
    }
  });

  // Reduce in index order; counts are integers so the mean is exact.
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(bins);
  for (const auto& h : hists) sum += h.cast<double>();

  CalibrationResult result;
  result.config = cfg;
  result.sequence = sequence;
  result.normal.bins = sum / static_cast<double>(cfg.num_seq);

  result.distance_samples.resize(static_cast<std::size_t>(cfg.num_seq));
  const Eigen::VectorXd normal_prob = normalize(result.normal);
  detail::parallel_for(cfg.num_seq, [&](int begin, int end) {
    for (int s = begin; s < end; ++s) {
      const Eigen::VectorXd user_prob =
          normalize(Eigen::VectorXd(hists[static_cast<std::size_t>(s)].cast<double>()));
      result.distance_samples[static_cast<std::size_t>(s)] =
          pearson_distance(user_prob, normal_prob);
    }
  });

  result.delta = quantile_of(result.distance_samples, cfg.quantile);
  return result;
}

CalibrationResult calibrate(const PredictionMatrix& matrix,
                            const CalibrationConfig& cfg) {
  if (matrix.rows() == 0)
    throw std::invalid_argument("calibration pool is empty");
  return calibrate_degrees(matrix.hardness_degrees(), matrix.sequence, cfg);
}

double fpr_estimate_degrees(const CalibrationResult& result,
                            const Eigen::VectorXi& degrees, int trials,
                            std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("fpr_estimate: trials must be >= 1");
  const int bins = result.num_bins();
  const Eigen::Index pool = degrees.size();
  if (result.config.num_s > pool)
    throw std::invalid_argument("fpr_estimate: num_s exceeds held-out pool");
  const Eigen::VectorXd normal_prob = normalize(result.normal);
  std::vector<int> exceed(static_cast<std::size_t>(trials), 0);
  detail::parallel_for(trials, [&](int begin, int end) {
    for (int t = begin; t < end; ++t) {
      Rng rng(derive_seed(seed, "fpr/seq", static_cast<std::uint64_t>(t)));
      const auto picks =
          rng.sample_without_replacement(static_cast<int>(pool), result.config.num_s);
      const Eigen::VectorXi hist = sequence_histogram(degrees, picks, bins);
      const double d =
          pearson_distance(normalize(Eigen::VectorXd(hist.cast<double>())), normal_prob);
      exceed[static_cast<std::size_t>(t)] = d > result.delta ? 1 : 0;
    }
  });
  long hits = 0;
  for (const int e : exceed) hits += e;
  return static_cast<double>(hits) / static_cast<double>(trials);
}

double fpr_estimate(const CalibrationResult& result,
                    const PredictionMatrix& heldout, int trials,
                    std::uint64_t seed) {
  if (heldout.cols() != result.num_bins())
    throw std::invalid_argument("fpr_estimate: sequence length mismatch");
  return fpr_estimate_degrees(result, heldout.hardness_degrees(), trials, seed);
}

void CalibrationResult::save(const std::filesystem::path& path) const {
  auto out = detail::open_out(path);
  out << "hoda-calibration v1\n";
  out << "num_bins " << num_bins() << "\n";
  out << "sequence " << sequence.name;
  for (const int i : sequence.indices) out << ' ' << i;
  out << "\n";
  out << "num_s " << config.num_s << "\n";
  out << "num_seq " << config.num_seq << "\n";
  out << "quantile " << detail::fmt_double(config.quantile) << "\n";
  out << "seed " << config.seed << "\n";
  out << "delta " << detail::fmt_double(delta) << "\n";
  out << "bins";
  for (int b = 0; b < num_bins(); ++b)
    out << ' ' << detail::fmt_double(normal.bins[b]);
  out << "\n";
  out << "distance_samples " << distance_samples.size() << "\n";
  for (const double d : distance_samples)
    out << detail::fmt_double(d) << "\n";
}

CalibrationResult CalibrationResult::load(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "hoda-calibration v1")
    throw std::runtime_error("not a hoda-calibration v1 file: " + path.string());

  CalibrationResult result;
  std::string key, tok;
  int num_bins = 0;
  auto expect_key = [&](const char* want) {
    if (!(in >> key) || key != want)
      throw std::runtime_error("calibration file: expected '" +
                               std::string(want) + "' in " + path.string());
  };
  expect_key("num_bins");
  in >> num_bins;
  expect_key("sequence");
  in >> result.sequence.name;
  result.sequence.indices.resize(static_cast<std::size_t>(num_bins));
  for (int i = 0; i < num_bins; ++i) in >> result.sequence.indices[static_cast<std::size_t>(i)];
  expect_key("num_s");
  in >> result.config.num_s;
  expect_key("num_seq");
  in >> result.config.num_seq;
  expect_key("quantile");
  in >> tok;
  result.config.quantile = detail::parse_double(tok);
  expect_key("seed");
  in >> result.config.seed;
  expect_key("delta");
  in >> tok;
  result.delta = detail::parse_double(tok);
  expect_key("bins");
  result.normal.bins.resize(num_bins);
  for (int b = 0; b < num_bins; ++b) {
    in >> tok;
    result.normal.bins[b] = detail::parse_double(tok);
  }
  expect_key("distance_samples");
  std::size_t count = 0;
  in >> count;
  result.distance_samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    in >> tok;
    result.distance_samples[i] = detail::parse_double(tok);
  }
  if (!in) throw std::runtime_error("truncated calibration file " + path.string());

  // This file is deployed straight into the monitor; refuse corrupt content.
  std::string bad;
  if (num_bins < 1) bad = "no bins";
  if (result.config.num_s < 1) bad = "num_s < 1";
  if (result.normal.bins.size() > 0 && result.normal.bins.minCoeff() < 0)
    bad = "negative H_n bin";
  if (result.delta < 0 || result.delta > 2) bad = "delta outside [0,2]";
  int prev = -1;
  for (const int i : result.sequence.indices) {
    if (i <= prev) bad = "sequence indices not strictly increasing";
    prev = i;
  }
  if (!bad.empty())
    throw std::runtime_error("calibration file " + path.string() +
                             " is invalid: " + bad);
  return result;
}

}  // namespace hoda
