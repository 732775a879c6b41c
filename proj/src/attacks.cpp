#include "hoda/attacks.hpp"

#include "hoda/rng.hpp"
#include "io_util.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hoda {
namespace {

Eigen::VectorXd sign_of(const Eigen::VectorXd& g) {
  Eigen::VectorXd s(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i)
    s[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
  return s;
}

void clip_rows(Eigen::Ref<Eigen::VectorXd> x,
               const std::optional<std::pair<double, double>>& box) {
  if (!box) return;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x[i] = std::clamp(x[i], box->first, box->second);
}

}  // namespace

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::normal: return "normal";
    case Provenance::synthetic: return "synthetic";
    case Provenance::ood: return "ood";
  }
  return "?";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "normal") return Provenance::normal;
  if (s == "synthetic") return Provenance::synthetic;
  if (s == "ood") return Provenance::ood;
  throw std::invalid_argument("unknown provenance '" + s + "'");
}

void AttackStream::write_csv(const std::filesystem::path& path) const {
  auto out = detail::open_out(path);
  out << "provenance";
  for (int d = 0; d < dim(); ++d) out << ",f" << d;
  out << "\n";
  for (Eigen::Index i = 0; i < size(); ++i) {
    out << to_string(provenance[static_cast<std::size_t>(i)]);
    for (int d = 0; d < dim(); ++d)
      out << ',' << detail::fmt_double(features(i, d));
    out << "\n";
  }
}

AttackStream AttackStream::read_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty attack stream file " + path.string());
  const auto header = detail::split(line, ',');
  if (header.empty() || header[0] != "provenance")
    throw std::runtime_error("bad attack stream header in " + path.string());
  const int dim = static_cast<int>(header.size()) - 1;
  if (dim < 1)
    throw std::runtime_error("attack stream has no feature columns");
  std::vector<std::vector<double>> rows;
  std::vector<Provenance> tags;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (static_cast<int>(fields.size()) != dim + 1)
      throw std::runtime_error("bad attack stream row in " + path.string());
    tags.push_back(provenance_from_string(fields[0]));
    std::vector<double> row(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d)
      row[static_cast<std::size_t>(d)] =
          detail::parse_double(fields[static_cast<std::size_t>(d) + 1]);
    rows.push_back(std::move(row));
  }
  AttackStream stream;
  stream.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int d = 0; d < dim; ++d)
      stream.features(static_cast<Eigen::Index>(i), d) =
          rows[i][static_cast<std::size_t>(d)];
  stream.provenance = std::move(tags);
  return stream;
}

void OodStreamSpec::validate() const {
  std::string err;
  switch (kind) {
    case Kind::uniform_box:
      if (dim < 1) err += "dim must be >= 1; ";
      if (!(box_lo < box_hi)) err += "box_lo must be < box_hi; ";
      break;
    case Kind::shifted_clusters:
      base.validate();
      if (!(spread_factor > 0)) err += "spread_factor must be positive; ";
      break;
    case Kind::pool_resample:
      if (!pool || pool->size() == 0) err += "pool_resample needs a non-empty pool; ";
      break;
  }
  if (!err.empty()) throw std::invalid_argument("ood stream spec: " + err);
}

AttackStream ood_stream(const OodStreamSpec& spec, int budget,
                        std::uint64_t seed) {
  spec.validate();
  if (budget < 1) throw std::invalid_argument("attack budget must be >= 1");
  AttackStream stream;
  Rng rng(derive_seed(seed, "attack/ood"));
  switch (spec.kind) {
    case OodStreamSpec::Kind::uniform_box: {
      stream.features.resize(budget, spec.dim);
      for (Eigen::Index i = 0; i < budget; ++i)
        for (int d = 0; d < spec.dim; ++d)
          stream.features(i, d) = rng.uniform(spec.box_lo, spec.box_hi);
      stream.provenance.assign(static_cast<std::size_t>(budget),
                               Provenance::ood);
      break;
    }
    case OodStreamSpec::Kind::shifted_clusters: {
      SyntheticDatasetSpec shifted = spec.base;
      shifted.cluster_separation *= spec.mean_shift_factor;
      shifted.cluster_spread *= spec.spread_factor;
      shifted.seed = derive_seed(seed, "attack/ood/shifted");
      const Dataset ds = generate_dataset(shifted);
      stream.features.resize(budget, shifted.dim);
      for (Eigen::Index i = 0; i < budget; ++i) {
        const int row = rng.uniform_int(static_cast<int>(ds.train.size()));
        stream.features.row(i) = ds.train.features.row(row);
      }
      stream.provenance.assign(static_cast<std::size_t>(budget),
                               Provenance::ood);
      break;
    }
    case OodStreamSpec::Kind::pool_resample: {
      stream.features.resize(budget, spec.pool->dim());
      for (Eigen::Index i = 0; i < budget; ++i) {
        const int row = rng.uniform_int(static_cast<int>(spec.pool->size()));
        stream.features.row(i) = spec.pool->features.row(row);
      }
      stream.provenance.assign(static_cast<std::size_t>(budget),
                               Provenance::normal);
      break;
    }
  }
  return stream;
}

void JbdaConfig::validate() const {
  std::string err;
  if (!(lambda >= 0)) err += "lambda must be >= 0; ";
  if (kappa < 1) err += "kappa must be >= 1; ";
  if (rounds < 1) err += "rounds must be >= 1; ";
  if (seed_samples.size() == 0) err += "seed sample pool is empty; ";
  if (jbrand_iters < 1) err += "jbrand_iters must be >= 1; ";
  if (jbrand_targets_per_sample < 1)
    err += "jbrand_targets_per_sample must be >= 1; ";
  if (!err.empty()) throw std::invalid_argument("jbda config: " + err);
}

AttackStream jbda_stream(const SnapshotModel& target, const JbdaConfig& cfg,
                         int budget, bool random_targets) {
  cfg.validate();
  if (budget < 1) throw std::invalid_argument("attack budget must be >= 1");
  const int dim = target.input_dim();
  if (cfg.seed_samples.dim() != dim)
    throw std::invalid_argument("seed samples dimension differs from target");
  const int final_epoch = target.epochs() - 1;
  const int classes = target.num_classes();

  std::vector<Eigen::VectorXd> emitted;
  std::vector<Provenance> tags;
  emitted.reserve(static_cast<std::size_t>(budget));

  // The seed samples are queries too: they open the stream and form the
  // first labeled set.
  for (Eigen::Index i = 0; i < cfg.seed_samples.size() &&
                           static_cast<int>(emitted.size()) < budget;
       ++i) {
    emitted.push_back(cfg.seed_samples.features.row(i).transpose());
    tags.push_back(Provenance::normal);
  }

  std::vector<Eigen::VectorXd> labeled_x = emitted;
  int round = 0;
  while (static_cast<int>(emitted.size()) < budget) {
    ++round;
    // Retrain the surrogate from scratch on everything labeled so far.
    Eigen::MatrixXd x(static_cast<Eigen::Index>(labeled_x.size()), dim);
    for (std::size_t i = 0; i < labeled_x.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = labeled_x[i].transpose();
    const Eigen::MatrixXd y = target.probabilities(final_epoch, x);
    TrainConfig hyper = cfg.surrogate;
    hyper.seed = derive_seed(cfg.seed, "jbda/surrogate",
                             static_cast<std::uint64_t>(round));
    const SnapshotModel surrogate = SnapshotModel::train_soft(x, y, hyper);
    const int surrogate_epoch = surrogate.epochs() - 1;

    Rng round_rng(derive_seed(cfg.seed, "jbda/round",
                              static_cast<std::uint64_t>(round)));
    const int n_pick =
        std::min<int>(cfg.kappa, static_cast<int>(labeled_x.size()));
    const auto picks = round_rng.sample_without_replacement(
        static_cast<int>(labeled_x.size()), n_pick);

    std::vector<Eigen::VectorXd> fresh;
    for (const int idx : picks) {
      const Eigen::VectorXd& src = labeled_x[static_cast<std::size_t>(idx)];
      if (!random_targets) {
        // Ascend the surrogate's loss toward the target's predicted label.
        const int label = target.predict_one(final_epoch, src);
        const Eigen::VectorXd grad =
            surrogate.input_gradient(surrogate_epoch, src, label);
        Eigen::VectorXd perturbed = src + cfg.lambda * sign_of(grad);
        clip_rows(perturbed, cfg.clip_box);
        fresh.push_back(std::move(perturbed));
      } else {
        // Descend toward uniformly random target classes, several variants
        // per source, each in jbrand_iters equal sign-steps.
        for (int t = 0; t < cfg.jbrand_targets_per_sample; ++t) {
          const int wanted = round_rng.uniform_int(classes);
          Eigen::VectorXd perturbed = src;
          const double step =
              cfg.lambda / static_cast<double>(cfg.jbrand_iters);
          for (int it = 0; it < cfg.jbrand_iters; ++it) {
            const Eigen::VectorXd grad = surrogate.input_gradient(
                surrogate_epoch, perturbed, wanted);
            perturbed -= step * sign_of(grad);
          }
          clip_rows(perturbed, cfg.clip_box);
          fresh.push_back(std::move(perturbed));
        }
      }
      if (static_cast<int>(emitted.size() + fresh.size()) >= budget) break;
    }
    for (auto& p : fresh) {
      if (static_cast<int>(emitted.size()) >= budget) break;
      emitted.push_back(p);
      tags.push_back(Provenance::synthetic);
      labeled_x.push_back(std::move(p));
    }
  }

  AttackStream stream;
  stream.features.resize(static_cast<Eigen::Index>(emitted.size()), dim);
  for (std::size_t i = 0; i < emitted.size(); ++i)
    stream.features.row(static_cast<Eigen::Index>(i)) = emitted[i].transpose();
  stream.provenance = std::move(tags);
  return stream;
}

void AdaptiveMixConfig::validate() const {
  std::string err;
  if (p_n < 0.0 || p_n >= 1.0) err += "p_n must be in [0,1); ";
  if (normal_pool_size < 1) err += "normal_pool_size must be >= 1; ";
  if (!err.empty()) throw std::invalid_argument("adaptive mix config: " + err);
}

AttackStream adaptive_stream(const AttackStream& base,
                             const SamplePool& user_pool,
                             const AdaptiveMixConfig& cfg, int budget) {
  cfg.validate();
  if (budget < 1) throw std::invalid_argument("attack budget must be >= 1");
  if (base.size() == 0) throw std::invalid_argument("base attack stream is empty");
  if (user_pool.size() == 0) throw std::invalid_argument("user pool is empty");
  if (base.dim() != user_pool.dim())
    throw std::invalid_argument("base stream and user pool dimensions differ");

  // Fixed pool of normal samples available to the adversary. The desk-scale
  // user pool can be smaller than the configured pool size, so draws are
  // with replacement (the protocol allows duplicate normal samples anyway).
  Rng pool_rng(derive_seed(cfg.seed, "adaptive/pool"));
  Eigen::MatrixXd normal_pool(cfg.normal_pool_size, user_pool.dim());
  for (int i = 0; i < cfg.normal_pool_size; ++i)
    normal_pool.row(i) = user_pool.features.row(
        pool_rng.uniform_int(static_cast<int>(user_pool.size())));

  AttackStream stream;
  stream.features.resize(budget, base.dim());
  stream.provenance.resize(static_cast<std::size_t>(budget));
  Rng rng(derive_seed(cfg.seed, "adaptive/mix"));
  Eigen::Index base_next = 0;
  for (Eigen::Index i = 0; i < budget; ++i) {
    if (cfg.p_n > 0.0 && rng.uniform() < cfg.p_n) {
      stream.features.row(i) =
          normal_pool.row(rng.uniform_int(cfg.normal_pool_size));
      stream.provenance[static_cast<std::size_t>(i)] = Provenance::normal;
    } else {
      stream.features.row(i) = base.features.row(base_next);
      stream.provenance[static_cast<std::size_t>(i)] =
          base.provenance[static_cast<std::size_t>(base_next)];
      base_next = (base_next + 1) % base.size();
    }
  }
  return stream;
}

SnapshotModel train_surrogate(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::MatrixXd>& soft_targets,
                              const TrainConfig& cfg) {
  if (x.rows() == 0) throw std::invalid_argument("surrogate training set is empty");
  return SnapshotModel::train_soft(x, soft_targets, cfg);
}

SnapshotModel train_surrogate_hard(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXi>& labels,
                                   int num_classes, const TrainConfig& cfg) {
  if (x.rows() == 0) throw std::invalid_argument("surrogate training set is empty");
  if (labels.size() != x.rows())
    throw std::invalid_argument("labels length differs from inputs");
  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(x.rows(), num_classes);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("label out of range for surrogate training");
    targets(i, labels[i]) = 1.0;
  }
  return SnapshotModel::train_soft(x, targets, cfg);
}

SurrogateReport score_surrogate(const SnapshotModel& surrogate,
                                const SnapshotModel& target,
                                const SamplePool& test,
                                const PredictionMatrix& full_matrix) {
  if (full_matrix.rows() != test.size())
    throw std::invalid_argument("prediction matrix does not cover the test pool");
  const int m = target.epochs();
  const Eigen::VectorXi degrees = full_matrix.hardness_degrees();
  const Eigen::VectorXi surrogate_pred =
      surrogate.predict(surrogate.epochs() - 1, test.features);
  const Eigen::VectorXi target_pred = target.predict(m - 1, test.features);

  SurrogateReport report;
  Eigen::Index acc_hits = 0, fid_hits = 0;
  std::vector<Eigen::Index> group_n(10, 0), group_acc(10, 0), group_fid(10, 0);
  for (Eigen::Index i = 0; i < test.size(); ++i) {
    const bool acc = surrogate_pred[i] == test.labels[i];
    const bool fid = surrogate_pred[i] == target_pred[i];
    acc_hits += acc;
    fid_hits += fid;
    // Ten equal ranges over [0, m).
    int g = static_cast<int>((static_cast<long>(degrees[i]) * 10) / m);
    g = std::min(g, 9);
    group_n[static_cast<std::size_t>(g)] += 1;
    group_acc[static_cast<std::size_t>(g)] += acc;
    group_fid[static_cast<std::size_t>(g)] += fid;
  }
  report.accuracy =
      static_cast<double>(acc_hits) / static_cast<double>(test.size());
  report.fidelity =
      static_cast<double>(fid_hits) / static_cast<double>(test.size());
  for (int g = 0; g < 10; ++g) {
    HardnessGroupMetrics gm;
    gm.group = g + 1;
    gm.count = group_n[static_cast<std::size_t>(g)];
    if (gm.count > 0) {
      gm.accuracy = static_cast<double>(group_acc[static_cast<std::size_t>(g)]) /
                    static_cast<double>(gm.count);
      gm.fidelity = static_cast<double>(group_fid[static_cast<std::size_t>(g)]) /
                    static_cast<double>(gm.count);
    }
    report.groups.push_back(gm);
  }
  return report;
}

}  // namespace hoda
