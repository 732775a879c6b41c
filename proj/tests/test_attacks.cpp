#include "hoda/attacks.hpp"

#include "hoda/dataset.hpp"
#include "hoda/model.hpp"
#include "hoda/prediction.hpp"
#include "hoda/rng.hpp"
#include "hoda/sequence.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

using namespace hoda;

namespace {

SyntheticDatasetSpec small_spec() {
  SyntheticDatasetSpec spec;
  spec.num_classes = 3;
  spec.dim = 4;
  spec.samples_per_class = 80;
  spec.cluster_spread = 0.8;
  spec.cluster_separation = 3.0;
  spec.seed = 31;
  return spec;
}

TrainConfig small_train(int epochs = 15) {
  TrainConfig cfg;
  cfg.hidden_width = 16;
  cfg.epochs = epochs;
  cfg.learning_rate = 0.1;
  cfg.lr_decay = 0.95;
  cfg.batch_size = 16;
  cfg.seed = 8;
  return cfg;
}

const Dataset& dataset() {
  static const Dataset ds = generate_dataset(small_spec());
  return ds;
}

const SnapshotModel& target() {
  static const SnapshotModel model =
      SnapshotModel::train(dataset().train, small_train());
  return model;
}

JbdaConfig jbda_config(double lambda = 0.3) {
  JbdaConfig cfg;
  cfg.lambda = lambda;
  cfg.kappa = 30;
  cfg.rounds = 5;
  cfg.surrogate = small_train(8);
  cfg.seed = 77;
  Rng rng(5);
  const auto rows = rng.sample_without_replacement(
      static_cast<int>(dataset().test.size()), 12);
  cfg.seed_samples = select_pool_rows(dataset().test, rows, "attack_seed");
  return cfg;
}

}  // namespace

TEST_CASE("ood uniform box stream is deterministic, in-box, length-exact") {
  OodStreamSpec spec;
  spec.kind = OodStreamSpec::Kind::uniform_box;
  spec.dim = 4;
  spec.box_lo = -10;
  spec.box_hi = 10;
  const AttackStream a = ood_stream(spec, 200, 9);
  const AttackStream b = ood_stream(spec, 200, 9);
  CHECK(a.size() == 200);
  CHECK((a.features.array() == b.features.array()).all());
  CHECK(a.features.minCoeff() >= -10.0);
  CHECK(a.features.maxCoeff() <= 10.0);
  for (const auto p : a.provenance) CHECK(p == Provenance::ood);

  CHECK_THROWS_AS(ood_stream(spec, 0, 9), std::invalid_argument);
  spec.box_hi = spec.box_lo;
  CHECK_THROWS_AS(ood_stream(spec, 10, 9), std::invalid_argument);
}

TEST_CASE("pool resample control stream draws normal rows") {
  OodStreamSpec spec;
  spec.kind = OodStreamSpec::Kind::pool_resample;
  spec.pool = std::make_shared<SamplePool>(dataset().test);
  const AttackStream s = ood_stream(spec, 150, 4);
  CHECK(s.size() == 150);
  for (const auto p : s.provenance) CHECK(p == Provenance::normal);
  // Every row is literally a pool row.
  for (Eigen::Index i = 0; i < 20; ++i) {
    bool found = false;
    for (Eigen::Index r = 0; r < dataset().test.size() && !found; ++r)
      found = (s.features.row(i).array() == dataset().test.features.row(r).array()).all();
    CHECK(found);
  }
}

TEST_CASE("jbda with lambda zero emits only seed duplicates") {
  const auto cfg = jbda_config(0.0);
  const AttackStream s = jbda_stream(target(), cfg, 60);
  CHECK(s.size() == 60);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    bool is_seed = false;
    for (Eigen::Index r = 0; r < cfg.seed_samples.size() && !is_seed; ++r)
      is_seed = (s.features.row(i).array() ==
                 cfg.seed_samples.features.row(r).array()).all();
    CHECK(is_seed);
  }
}

TEST_CASE("jbda with positive lambda never re-emits a raw seed") {
  const auto cfg = jbda_config(0.3);
  const AttackStream s = jbda_stream(target(), cfg, 80);
  CHECK(s.size() == 80);
  const Eigen::Index n_seed = cfg.seed_samples.size();
  // The stream opens with the seeds themselves (tagged normal)...
  for (Eigen::Index i = 0; i < n_seed; ++i) {
    CHECK(s.provenance[static_cast<std::size_t>(i)] == Provenance::normal);
    CHECK((s.features.row(i).array() ==
           cfg.seed_samples.features.row(i).array()).all());
  }
  // ...and everything after is synthetic and distinct from every seed.
  for (Eigen::Index i = n_seed; i < s.size(); ++i) {
    CHECK(s.provenance[static_cast<std::size_t>(i)] == Provenance::synthetic);
    for (Eigen::Index r = 0; r < n_seed; ++r)
      CHECK_FALSE((s.features.row(i).array() ==
                   cfg.seed_samples.features.row(r).array()).all());
  }
}

TEST_CASE("single jbda step ascends the surrogate loss") {
  // One round, kappa 1, small lambda, linear surrogate: the sign step must
  // strictly increase the surrogate's loss toward the target's label.
  JbdaConfig cfg = jbda_config(0.01);
  cfg.kappa = 1;
  cfg.rounds = 1;
  cfg.surrogate.hidden_width = 0;
  const int budget = static_cast<int>(cfg.seed_samples.size()) + 1;
  const AttackStream s = jbda_stream(target(), cfg, budget);
  REQUIRE(s.size() == budget);
  const Eigen::VectorXd perturbed = s.features.row(budget - 1).transpose();

  // Rebuild the same surrogate the generator trained (same derivation).
  Eigen::MatrixXd x = cfg.seed_samples.features;
  const Eigen::MatrixXd y = target().probabilities(target().epochs() - 1, x);
  TrainConfig hyper = cfg.surrogate;
  hyper.seed = derive_seed(cfg.seed, "jbda/surrogate", 1);
  const SnapshotModel surrogate = SnapshotModel::train_soft(x, y, hyper);

  // Identify the source sample: the one whose perturbation matches.
  Rng round_rng(derive_seed(cfg.seed, "jbda/round", 1));
  const auto picks = round_rng.sample_without_replacement(
      static_cast<int>(cfg.seed_samples.size()), 1);
  const Eigen::VectorXd src = cfg.seed_samples.features.row(picks[0]).transpose();
  const int label = target().predict_one(target().epochs() - 1, src);

  const auto loss_of = [&](const Eigen::VectorXd& pt) {
    const Eigen::MatrixXd probs =
        surrogate.probabilities(surrogate.epochs() - 1, pt.transpose());
    return -std::log(std::max(probs(0, label), 1e-300));
  };
  CHECK(loss_of(perturbed) > loss_of(src));
}

TEST_CASE("jbrand emits the configured number of variants per source") {
  JbdaConfig cfg = jbda_config(0.3);
  cfg.kappa = 4;
  cfg.rounds = 1;
  cfg.jbrand_iters = 5;
  cfg.jbrand_targets_per_sample = 3;
  const int n_seed = static_cast<int>(cfg.seed_samples.size());
  const AttackStream s = jbda_stream(target(), cfg, n_seed + 12, true);
  CHECK(s.size() == n_seed + 12);  // 4 sources x 3 variants
  for (Eigen::Index i = n_seed; i < s.size(); ++i)
    CHECK(s.provenance[static_cast<std::size_t>(i)] == Provenance::synthetic);
}

TEST_CASE("adaptive stream mixes the base with pool draws") {
  OodStreamSpec ood;
  ood.kind = OodStreamSpec::Kind::uniform_box;
  ood.dim = 4;
  const AttackStream base = ood_stream(ood, 300, 2);

  AdaptiveMixConfig cfg;
  cfg.p_n = 0.0;
  cfg.seed = 6;
  const AttackStream same = adaptive_stream(base, dataset().test, cfg, 300);
  CHECK((same.features.array() == base.features.array()).all());

  cfg.p_n = 0.5;
  cfg.normal_pool_size = 50;
  const AttackStream mixed = adaptive_stream(base, dataset().test, cfg, 2000);
  const AttackStream mixed2 = adaptive_stream(base, dataset().test, cfg, 2000);
  CHECK((mixed.features.array() == mixed2.features.array()).all());
  CHECK(mixed.size() == 2000);

  // Empirical normal fraction within 3 binomial sigmas of p_n.
  int normals = 0;
  for (const auto p : mixed.provenance)
    if (p == Provenance::normal) ++normals;
  const double frac = static_cast<double>(normals) / 2000.0;
  const double sigma = std::sqrt(0.5 * 0.5 / 2000.0);
  CHECK(std::abs(frac - 0.5) <= 3 * sigma);

  cfg.p_n = 1.0;
  CHECK_THROWS_AS(adaptive_stream(base, dataset().test, cfg, 100),
                  std::invalid_argument);
}

TEST_CASE("surrogate trained on the true training set tracks target accuracy") {
  const auto& ds = dataset();
  const SnapshotModel surrogate = train_surrogate_hard(
      ds.train.features, ds.train.labels, 3, small_train());
  const double target_acc =
      target().accuracy(target().epochs() - 1, ds.test.features, ds.test.labels);
  const double surrogate_acc = surrogate.accuracy(
      surrogate.epochs() - 1, ds.test.features, ds.test.labels);
  CHECK(std::abs(surrogate_acc - target_acc) <= 0.05);

  const Eigen::MatrixXd empty(0, 4);
  const Eigen::MatrixXd empty_t(0, 3);
  CHECK_THROWS_AS(train_surrogate(empty, empty_t, small_train()),
                  std::invalid_argument);
}

TEST_CASE("soft-label surrogates are at least as faithful as hard-label ones") {
  OodStreamSpec ood;
  ood.kind = OodStreamSpec::Kind::uniform_box;
  ood.dim = 4;
  ood.box_lo = -12;
  ood.box_hi = 12;
  const AttackStream stream = ood_stream(ood, 400, 19);
  const int final_epoch = target().epochs() - 1;
  const Eigen::MatrixXd soft = target().probabilities(final_epoch, stream.features);
  const Eigen::VectorXi hard = target().predict(final_epoch, stream.features);

  const SnapshotModel s_soft = train_surrogate(stream.features, soft, small_train());
  const SnapshotModel s_hard =
      train_surrogate_hard(stream.features, hard, 3, small_train());

  const Eigen::VectorXi target_pred = target().predict(final_epoch, dataset().test.features);
  const auto fidelity = [&](const SnapshotModel& s) {
    const Eigen::VectorXi pred =
        s.predict(s.epochs() - 1, dataset().test.features);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i)
      if (pred[i] == target_pred[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
  };
  CHECK(fidelity(s_soft) >= fidelity(s_hard) - 0.02);
}

TEST_CASE("surrogate scoring: self-fidelity and exact counts") {
  const auto& ds = dataset();
  const auto full = SubclassifierSequence::full(target().epochs());
  const PredictionMatrix matrix = predict_matrix(target(), full, ds.test.features);

  // Same model as its own surrogate: fidelity exactly 1.
  const SurrogateReport self = score_surrogate(target(), target(), ds.test, matrix);
  CHECK(self.fidelity == 1.0);

  // A constant-output surrogate on the balanced pool scores exactly the
  // class share.
  SamplePool one_class = ds.train;
  one_class.labels.setZero();
  TrainConfig cfg = small_train(3);
  const SnapshotModel constant = SnapshotModel::train(one_class, cfg);
  const SurrogateReport rep = score_surrogate(constant, target(), ds.test, matrix);
  Eigen::Index zeros = 0;
  for (Eigen::Index i = 0; i < ds.test.size(); ++i)
    if (ds.test.labels[i] == 0) ++zeros;
  CHECK(rep.accuracy ==
        static_cast<double>(zeros) / static_cast<double>(ds.test.size()));

  // Groups partition the pool.
  Eigen::Index total = 0;
  for (const auto& g : rep.groups) total += g.count;
  CHECK(total == ds.test.size());
  for (const auto& g : rep.groups) {
    CHECK(g.accuracy.has_value() == (g.count > 0));
    CHECK(g.fidelity.has_value() == (g.count > 0));
  }
}

TEST_CASE("attack stream csv round-trips") {
  OodStreamSpec ood;
  ood.kind = OodStreamSpec::Kind::uniform_box;
  ood.dim = 4;
  AttackStream s = ood_stream(ood, 50, 3);
  s.provenance[0] = Provenance::normal;
  s.provenance[1] = Provenance::synthetic;
  const auto path = std::filesystem::temp_directory_path() / "hoda_stream_rt.csv";
  s.write_csv(path);
  const AttackStream loaded = AttackStream::read_csv(path);
  CHECK(loaded.size() == s.size());
  CHECK((loaded.features.array() == s.features.array()).all());
  CHECK(loaded.provenance == s.provenance);
  std::filesystem::remove(path);
}
