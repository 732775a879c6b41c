#include "hoda/model.hpp"

#include "hoda/dataset.hpp"
#include "hoda/hardness.hpp"
#include "hoda/prediction.hpp"
#include "hoda/rng.hpp"
#include "hoda/sequence.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace hoda;

namespace {

SyntheticDatasetSpec small_spec() {
  SyntheticDatasetSpec spec;
  spec.num_classes = 3;
  spec.dim = 4;
  spec.samples_per_class = 60;
  spec.cluster_spread = 0.8;
  spec.cluster_separation = 3.0;
  spec.seed = 11;
  return spec;
}

TrainConfig small_train(int epochs = 20) {
  TrainConfig cfg;
  cfg.hidden_width = 16;
  cfg.epochs = epochs;
  cfg.learning_rate = 0.1;
  cfg.lr_decay = 0.95;
  cfg.batch_size = 16;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("dataset generation is deterministic and balanced") {
  const auto spec = small_spec();
  const Dataset a = generate_dataset(spec);
  const Dataset b = generate_dataset(spec);
  CHECK(a.train.size() == 180);
  CHECK(a.test.size() == 180);
  CHECK((a.train.features.array() == b.train.features.array()).all());
  CHECK((a.test.labels.array() == b.test.labels.array()).all());

  Eigen::VectorXi counts = Eigen::VectorXi::Zero(spec.num_classes);
  for (Eigen::Index i = 0; i < a.train.size(); ++i) counts[a.train.labels[i]] += 1;
  for (int c = 0; c < spec.num_classes; ++c) CHECK(counts[c] == 60);

  // Different seed, different draw.
  SyntheticDatasetSpec other = spec;
  other.seed = 12;
  const Dataset c = generate_dataset(other);
  CHECK_FALSE((a.train.features.array() == c.train.features.array()).all());
}

TEST_CASE("five-class spec yields 1000/1000 balanced pools") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 5;
  spec.dim = 8;
  spec.samples_per_class = 200;
  const Dataset ds = generate_dataset(spec);
  CHECK(ds.train.size() == 1000);
  CHECK(ds.test.size() == 1000);
  for (const auto* pool : {&ds.train, &ds.test}) {
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(5);
    for (Eigen::Index i = 0; i < pool->size(); ++i) counts[pool->labels[i]] += 1;
    for (int c = 0; c < 5; ++c) CHECK(counts[c] == 200);
  }
}

TEST_CASE("degenerate clusters put every point nearest its own mean") {
  SyntheticDatasetSpec spec = small_spec();
  spec.cluster_separation = 100.0;
  spec.cluster_spread = 1e-3;
  const Dataset ds = generate_dataset(spec);
  for (Eigen::Index i = 0; i < ds.test.size(); ++i) {
    int nearest = 0;
    double best = (ds.test.features.row(i) - ds.class_means.row(0)).norm();
    for (int c = 1; c < spec.num_classes; ++c) {
      const double d = (ds.test.features.row(i) - ds.class_means.row(c)).norm();
      if (d < best) {
        best = d;
        nearest = c;
      }
    }
    CHECK(nearest == ds.test.labels[i]);
  }
}

TEST_CASE("dataset spec validation") {
  SyntheticDatasetSpec spec = small_spec();
  spec.num_classes = 1;
  CHECK_THROWS_AS(generate_dataset(spec), std::invalid_argument);
  spec = small_spec();
  spec.cluster_spread = 0;
  CHECK_THROWS_AS(generate_dataset(spec), std::invalid_argument);
}

TEST_CASE("training produces one snapshot per epoch, deterministically") {
  const Dataset ds = generate_dataset(small_spec());
  const auto cfg = small_train();
  const SnapshotModel a = SnapshotModel::train(ds.train, cfg);
  const SnapshotModel b = SnapshotModel::train(ds.train, cfg);
  CHECK(a.epochs() == cfg.epochs);
  CHECK(a.epoch_losses().size() == static_cast<std::size_t>(cfg.epochs));
  CHECK(a.same_parameters(b));
  const Eigen::VectorXi pa = a.predict(cfg.epochs - 1, ds.test.features);
  const Eigen::VectorXi pb = b.predict(cfg.epochs - 1, ds.test.features);
  CHECK((pa.array() == pb.array()).all());
}

TEST_CASE("snapshots are prefix-reproducible from (seed, hyper, epoch)") {
  // Retraining with a shorter epoch budget reproduces the shared prefix of
  // snapshots bit for bit.
  const Dataset ds = generate_dataset(small_spec());
  const SnapshotModel long_run = SnapshotModel::train(ds.train, small_train(12));
  const SnapshotModel short_run = SnapshotModel::train(ds.train, small_train(7));
  for (int e = 0; e < 7; ++e) {
    const Eigen::MatrixXd pa = long_run.probabilities(e, ds.test.features);
    const Eigen::MatrixXd pb = short_run.probabilities(e, ds.test.features);
    CHECK((pa.array() == pb.array()).all());
  }
  CHECK(long_run.epoch_losses()[3] == short_run.epoch_losses()[3]);
}

TEST_CASE("m=1 model yields all-zero hardness degrees") {
  const Dataset ds = generate_dataset(small_spec());
  const SnapshotModel model = SnapshotModel::train(ds.train, small_train(1));
  CHECK(model.epochs() == 1);
  const auto seq = SubclassifierSequence::full(1);
  const PredictionMatrix m = predict_matrix(model, seq, ds.test.features);
  CHECK((m.hardness_degrees().array() == 0).all());
}

TEST_CASE("divergent training reports the epoch") {
  const Dataset ds = generate_dataset(small_spec());
  TrainConfig cfg = small_train();
  cfg.hidden_width = 0;  // saturated tanh units cannot overflow
  cfg.learning_rate = 1e307;
  CHECK_THROWS_WITH_AS(SnapshotModel::train(ds.train, cfg),
                       doctest::Contains("diverged at epoch"),
                       std::runtime_error);
}

TEST_CASE("separable two-class run has monotone epoch losses") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 2;
  spec.dim = 4;
  spec.samples_per_class = 100;
  spec.cluster_separation = 8.0;
  spec.cluster_spread = 0.3;
  spec.seed = 7;
  const Dataset ds = generate_dataset(spec);
  TrainConfig cfg;
  cfg.hidden_width = 16;
  cfg.epochs = 50;
  cfg.learning_rate = 0.05;
  cfg.lr_decay = 0.97;
  cfg.batch_size = 16;
  cfg.seed = 3;
  const SnapshotModel model = SnapshotModel::train(ds.train, cfg);
  const auto& losses = model.epoch_losses();
  for (std::size_t e = 1; e < losses.size(); ++e)
    CHECK(losses[e] <= losses[e - 1] + 1e-6);
  CHECK(model.accuracy(cfg.epochs - 1, ds.train.features, ds.train.labels) == 1.0);
}

TEST_CASE("zero-hidden model reduces to linear softmax with known gradient") {
  const Dataset ds = generate_dataset(small_spec());
  TrainConfig cfg = small_train(10);
  cfg.hidden_width = 0;
  const SnapshotModel model = SnapshotModel::train(ds.train, cfg);

  Rng rng(99);
  for (int probe = 0; probe < 20; ++probe) {
    Eigen::VectorXd x(4);
    for (int d = 0; d < 4; ++d) x[d] = rng.normal(0, 2);
    const int cls = rng.uniform_int(3);
    const int epoch = rng.uniform_int(model.epochs());
    const Eigen::VectorXd grad = model.input_gradient(epoch, x, cls);
    // Closed form for linear softmax: W^T (p - e_cls).
    const Eigen::MatrixXd probs = model.probabilities(epoch, x.transpose());
    // Recover W from logit differences: logits = W x + b, so the gradient of
    // logit_k wrt x_d can be probed with unit vectors.
    Eigen::MatrixXd w(3, 4);
    const Eigen::MatrixXd base = model.logits(epoch, Eigen::MatrixXd::Zero(1, 4));
    for (int d = 0; d < 4; ++d) {
      Eigen::MatrixXd unit = Eigen::MatrixXd::Zero(1, 4);
      unit(0, d) = 1.0;
      w.col(d) = (model.logits(epoch, unit) - base).row(0).transpose();
    }
    Eigen::VectorXd dz = probs.row(0).transpose();
    dz[cls] -= 1.0;
    const Eigen::VectorXd expected = w.transpose() * dz;
    CHECK((grad - expected).norm() <= 1e-9 * std::max(1.0, expected.norm()));
  }
}

TEST_CASE("zero-weight model has zero input gradient") {
  // Craft a linear model file with all-zero parameters.
  const auto path = std::filesystem::temp_directory_path() / "hoda_zero_model.txt";
  {
    std::ofstream out(path);
    out << "hoda-model v1\n"
        << "input_dim 3\nnum_classes 2\nhidden_width 0\nepochs 1\n"
        << "learning_rate 0.1\nlr_decay 1\nmomentum 0\nbatch_size 1\nseed 0\n"
        << "epoch_losses 0.6931471805599453\n"
        << "snapshot 0\n"
        << "0 0 0\n0 0 0\n"   // w2 (2x3)
        << "0 0\n";           // b2
  }
  const SnapshotModel zero = SnapshotModel::load(path);
  Eigen::VectorXd x(3);
  x << 1.5, -2.0, 0.25;
  CHECK(zero.input_gradient(0, x, 1).norm() == 0.0);
  // All logits tie at zero, so the argmax resolves to the lowest class.
  CHECK(zero.predict_one(0, x) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("input gradients match central finite differences") {
  const Dataset ds = generate_dataset(small_spec());
  const SnapshotModel model = SnapshotModel::train(ds.train, small_train());
  Rng rng(4242);
  for (int probe = 0; probe < 100; ++probe) {
    Eigen::VectorXd x(4);
    for (int d = 0; d < 4; ++d) x[d] = rng.normal(0, 2);
    const int cls = rng.uniform_int(3);
    const int epoch = rng.uniform_int(model.epochs());
    const Eigen::VectorXd grad = model.input_gradient(epoch, x, cls);
    const Eigen::VectorXd fd = oracle::fd_input_gradient(model, epoch, x, cls);
    const double rel = (grad - fd).norm() / std::max(grad.norm(), 1e-8);
    CHECK(rel <= 1e-4);
  }
  CHECK_THROWS_AS(model.input_gradient(0, ds.test.features.row(0).transpose(), 7),
                  std::invalid_argument);
}

TEST_CASE("prediction matrix matches per-sample evaluation and final column") {
  const Dataset ds = generate_dataset(small_spec());
  const SnapshotModel model = SnapshotModel::train(ds.train, small_train());
  const int m = model.epochs();

  const auto final_only = SubclassifierSequence{{m - 1}, "final"};
  const PredictionMatrix last = predict_matrix(model, final_only, ds.test.features);
  const Eigen::VectorXi direct = model.predict(m - 1, ds.test.features);
  CHECK((last.labels.col(0).array() == direct.array()).all());

  // Empty pool -> zero-row matrix.
  const Eigen::MatrixXd empty(0, 4);
  CHECK(predict_matrix(model, final_only, empty).rows() == 0);

  // Row-wise degrees equal an online sample-by-sample pass.
  const auto full = SubclassifierSequence::full(m);
  const PredictionMatrix matrix = predict_matrix(model, full, ds.test.features);
  const Eigen::VectorXi degrees = matrix.hardness_degrees();
  for (Eigen::Index i = 0; i < 25; ++i) {
    std::vector<int> trace;
    for (int e = 0; e < m; ++e)
      trace.push_back(
          model.predict_one(e, ds.test.features.row(i).transpose()));
    CHECK(degrees[i] == hardness_degree(trace));
  }
}

TEST_CASE("hoda sequence analogs") {
  const auto h11 = SubclassifierSequence::hoda11(100);
  CHECK(h11.indices == std::vector<int>{0, 9, 19, 29, 39, 49, 59, 69, 79, 89, 99});
  const auto h5 = SubclassifierSequence::hoda5(100);
  CHECK(h5.indices == std::vector<int>{19, 39, 59, 79, 99});
  CHECK(SubclassifierSequence::full(5).indices == std::vector<int>{0, 1, 2, 3, 4});

  // Non-multiple epoch counts stay strictly increasing and in range.
  for (const int m : {1, 7, 23, 95, 101}) {
    for (const auto& seq :
         {SubclassifierSequence::hoda11(m), SubclassifierSequence::hoda5(m)}) {
      seq.validate(m);
      CHECK(seq.indices.back() == m - 1);
    }
  }

  SubclassifierSequence bad{{3, 3, 5}, "dup"};
  CHECK_THROWS_AS(bad.validate(10), std::invalid_argument);
  SubclassifierSequence oor{{0, 12}, "oor"};
  CHECK_THROWS_AS(oor.validate(10), std::invalid_argument);
  CHECK_THROWS_AS(SubclassifierSequence::named("hoda-7", 100),
                  std::invalid_argument);
}

TEST_CASE("subselect picks the right columns") {
  const Dataset ds = generate_dataset(small_spec());
  const SnapshotModel model = SnapshotModel::train(ds.train, small_train());
  const auto full = SubclassifierSequence::full(model.epochs());
  const PredictionMatrix matrix = predict_matrix(model, full, ds.test.features);
  const auto h5 = SubclassifierSequence::hoda5(model.epochs());
  const PredictionMatrix sub = subselect(matrix, h5);
  const PredictionMatrix direct = predict_matrix(model, h5, ds.test.features);
  CHECK((sub.labels.array() == direct.labels.array()).all());

  SubclassifierSequence missing{{0, 1, 1000}, "missing"};
  CHECK_THROWS_AS(subselect(matrix, missing), std::invalid_argument);
}

TEST_CASE("model file round-trips exactly") {
  const Dataset ds = generate_dataset(small_spec());
  const SnapshotModel model = SnapshotModel::train(ds.train, small_train(5));
  const auto path = std::filesystem::temp_directory_path() / "hoda_model_rt.txt";
  model.save(path);
  const SnapshotModel loaded = SnapshotModel::load(path);
  CHECK(loaded.same_parameters(model));
  CHECK(loaded.epoch_losses() == model.epoch_losses());
  const Eigen::MatrixXd p0 = model.probabilities(4, ds.test.features);
  const Eigen::MatrixXd p1 = loaded.probabilities(4, ds.test.features);
  CHECK((p0.array() == p1.array()).all());
  std::filesystem::remove(path);
}

TEST_CASE("prediction matrix csv round-trips") {
  const Dataset ds = generate_dataset(small_spec());
  const SnapshotModel model = SnapshotModel::train(ds.train, small_train(6));
  const auto seq = SubclassifierSequence::hoda5(6);
  const PredictionMatrix matrix = predict_matrix(model, seq, ds.test.features);
  const auto path = std::filesystem::temp_directory_path() / "hoda_matrix_rt.csv";
  matrix.write_csv(path);
  const PredictionMatrix loaded = PredictionMatrix::read_csv(path);
  CHECK(loaded.sequence.indices == matrix.sequence.indices);
  CHECK(loaded.sample_ids == matrix.sample_ids);
  CHECK((loaded.labels.array() == matrix.labels.array()).all());
  std::filesystem::remove(path);
}

TEST_CASE("pool csv round-trips") {
  const Dataset ds = generate_dataset(small_spec());
  const auto path = std::filesystem::temp_directory_path() / "hoda_pool_rt.csv";
  write_pool_csv(ds.test, path);
  const SamplePool loaded = read_pool_csv(path);
  CHECK(loaded.size() == ds.test.size());
  CHECK((loaded.features.array() == ds.test.features.array()).all());
  CHECK((loaded.labels.array() == ds.test.labels.array()).all());
  std::filesystem::remove(path);
}
