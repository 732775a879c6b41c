#include "hoda/model.hpp"

#include "hoda/rng.hpp"
#include "io_util.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hoda {
namespace {

Eigen::MatrixXd read_matrix(std::ifstream& in, Eigen::Index rows,
                            Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  std::string tok;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(in >> tok)) throw std::runtime_error("truncated model file");
      m(r, c) = detail::parse_double(tok);
    }
  return m;
}

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << detail::fmt_double(m(r, c));
    }
    out << '\n';
  }
}

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (int c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;  // strict: ties keep the lowest index
  return best;
}

}  // namespace

void TrainConfig::validate() const {
  std::string err;
  if (hidden_width < 0) err += "hidden_width must be >= 0; ";
  if (epochs < 1) err += "epochs must be >= 1; ";
  if (!(learning_rate > 0)) err += "learning_rate must be positive; ";
  if (!(lr_decay > 0) || lr_decay > 1) err += "lr_decay must be in (0,1]; ";
  if (momentum < 0 || momentum >= 1) err += "momentum must be in [0,1); ";
  if (batch_size < 1) err += "batch_size must be >= 1; ";
  if (!err.empty()) throw std::invalid_argument("train config: " + err);
}

Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

SnapshotModel SnapshotModel::train(const SamplePool& pool,
                                   const TrainConfig& cfg) {
  if (pool.size() == 0)
    throw std::invalid_argument("training pool is empty");
  Eigen::MatrixXd targets =
      Eigen::MatrixXd::Zero(pool.size(), pool.num_classes);
  for (Eigen::Index i = 0; i < pool.size(); ++i)
    targets(i, pool.labels[i]) = 1.0;
  return train_soft(pool.features, targets, cfg);
}

SnapshotModel SnapshotModel::train_soft(
    const Eigen::Ref<const Eigen::MatrixXd>& x,
    const Eigen::Ref<const Eigen::MatrixXd>& targets, const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = x.rows();
  if (n == 0) throw std::invalid_argument("training set is empty");
  if (targets.rows() != n)
    throw std::invalid_argument("targets row count differs from inputs");
  const int dim = static_cast<int>(x.cols());
  const int classes = static_cast<int>(targets.cols());
  if (classes < 2) throw std::invalid_argument("need at least two classes");
  const int hidden = cfg.hidden_width;

  SnapshotModel model;
  model.cfg_ = cfg;
  model.input_dim_ = dim;
  model.num_classes_ = classes;

  // He-style scaled normal init, biases zero.
  Rng init_rng(derive_seed(cfg.seed, "model/init"));
  Params p;
  if (hidden > 0) {
    p.w1.resize(hidden, dim);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index r = 0; r < p.w1.rows(); ++r)
      for (Eigen::Index c = 0; c < p.w1.cols(); ++c)
        p.w1(r, c) = s1 * init_rng.normal();
    p.b1 = Eigen::VectorXd::Zero(hidden);
    p.w2.resize(classes, hidden);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (Eigen::Index r = 0; r < p.w2.rows(); ++r)
      for (Eigen::Index c = 0; c < p.w2.cols(); ++c)
        p.w2(r, c) = s2 * init_rng.normal();
  } else {
    p.w2.resize(classes, dim);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index r = 0; r < p.w2.rows(); ++r)
      for (Eigen::Index c = 0; c < p.w2.cols(); ++c)
        p.w2(r, c) = s2 * init_rng.normal();
  }
  p.b2 = Eigen::VectorXd::Zero(classes);

  Params vel;  // momentum buffers, same shapes, zero-initialized
  vel.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
  vel.b1 = Eigen::VectorXd::Zero(p.b1.size());
  vel.w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
  vel.b2 = Eigen::VectorXd::Zero(p.b2.size());

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  double lr = cfg.learning_rate;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "model/shuffle",
                                static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(bsz, dim), yb(bsz, classes);
      for (Eigen::Index i = 0; i < bsz; ++i) {
        const int row = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = x.row(row);
        yb.row(i) = targets.row(row);
      }

      // Forward.
      Eigen::MatrixXd a1;  // bsz x hidden
      Eigen::MatrixXd z2;  // bsz x classes
      if (hidden > 0) {
        a1 = ((xb * p.w1.transpose()).rowwise() + p.b1.transpose())
                 .array()
                 .tanh();
        z2 = (a1 * p.w2.transpose()).rowwise() + p.b2.transpose();
      } else {
        z2 = (xb * p.w2.transpose()).rowwise() + p.b2.transpose();
      }
      const Eigen::MatrixXd probs = softmax_rows(z2);

      // Backward: dL/dz2 = (p - y) / batch.
      const Eigen::MatrixXd dz2 = (probs - yb) / static_cast<double>(bsz);
      Eigen::MatrixXd gw2;
      Eigen::VectorXd gb2 = dz2.colwise().sum();
      Eigen::MatrixXd gw1;
      Eigen::VectorXd gb1;
      if (hidden > 0) {
        gw2 = dz2.transpose() * a1;
        const Eigen::MatrixXd da1 = dz2 * p.w2;
        const Eigen::MatrixXd dz1 =
            da1.array() * (1.0 - a1.array().square());
        gw1 = dz1.transpose() * xb;
        gb1 = dz1.colwise().sum();
      } else {
        gw2 = dz2.transpose() * xb;
      }

      vel.w2 = cfg.momentum * vel.w2 - lr * gw2;
      vel.b2 = cfg.momentum * vel.b2 - lr * gb2;
      p.w2 += vel.w2;
      p.b2 += vel.b2;
      if (hidden > 0) {
        vel.w1 = cfg.momentum * vel.w1 - lr * gw1;
        vel.b1 = cfg.momentum * vel.b1 - lr * gb1;
        p.w1 += vel.w1;
        p.b1 += vel.b1;
      }
    }

    // End-of-epoch bookkeeping: snapshot + full-set loss.
    model.snapshots_.push_back(p);
    const Eigen::MatrixXd probs =
        softmax_rows(model.logits_for(p, x));
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < classes; ++c)
        if (targets(i, c) > 0.0)
          loss -= targets(i, c) * std::log(std::max(probs(i, c), 1e-300));
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss))
      throw std::runtime_error("training diverged at epoch " +
                               std::to_string(epoch));
    model.epoch_losses_.push_back(loss);
    lr *= cfg.lr_decay;
  }
  return model;
}

const SnapshotModel::Params& SnapshotModel::snapshot(int epoch) const {
  if (epoch < 0 || epoch >= epochs())
    throw std::out_of_range("snapshot epoch out of range");
  return snapshots_[static_cast<std::size_t>(epoch)];
}

Eigen::MatrixXd SnapshotModel::logits_for(
    const Params& p, const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.cols() != input_dim_)
    throw std::invalid_argument("feature dimension mismatch: expected " +
                                std::to_string(input_dim_) + ", got " +
                                std::to_string(x.cols()));
  if (cfg_.hidden_width > 0) {
    const Eigen::MatrixXd a1 =
        ((x * p.w1.transpose()).rowwise() + p.b1.transpose()).array().tanh();
    return (a1 * p.w2.transpose()).rowwise() + p.b2.transpose();
  }
  return (x * p.w2.transpose()).rowwise() + p.b2.transpose();
}

Eigen::MatrixXd SnapshotModel::logits(
    int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  return logits_for(snapshot(epoch), x);
}

Eigen::MatrixXd SnapshotModel::probabilities(
    int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  return softmax_rows(logits(epoch, x));
}

Eigen::VectorXi SnapshotModel::predict(
    int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  const Eigen::MatrixXd z = logits(epoch, x);
  Eigen::VectorXi labels(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    labels[i] = argmax_row(z.row(i));
  return labels;
}

int SnapshotModel::predict_one(int epoch,
                               const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::MatrixXd z = logits(epoch, x.transpose());
  return argmax_row(z.row(0));
}

Eigen::VectorXd SnapshotModel::input_gradient(
    int epoch, const Eigen::Ref<const Eigen::VectorXd>& x,
    int target_class) const {
  if (target_class < 0 || target_class >= num_classes_)
    throw std::invalid_argument("invalid class index " +
                                std::to_string(target_class));
  const Params& p = snapshot(epoch);
  // dCE/dz2 = softmax(z2) - e_target, then backprop to the input.
  if (cfg_.hidden_width > 0) {
    const Eigen::VectorXd z1 = p.w1 * x + p.b1;
    const Eigen::VectorXd a1 = z1.array().tanh();
    const Eigen::VectorXd z2 = p.w2 * a1 + p.b2;
    Eigen::VectorXd dz2 =
        softmax_rows(z2.transpose()).row(0).transpose();
    dz2[target_class] -= 1.0;
    const Eigen::VectorXd da1 = p.w2.transpose() * dz2;
    const Eigen::VectorXd dz1 =
        da1.array() * (1.0 - a1.array().square());
    return p.w1.transpose() * dz1;
  }
  const Eigen::VectorXd z2 = p.w2 * x + p.b2;
  Eigen::VectorXd dz2 = softmax_rows(z2.transpose()).row(0).transpose();
  dz2[target_class] -= 1.0;
  return p.w2.transpose() * dz2;
}

double SnapshotModel::mean_loss(
    int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x,
    const Eigen::Ref<const Eigen::VectorXi>& labels) const {
  const Eigen::MatrixXd probs = probabilities(epoch, x);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    loss -= std::log(std::max(probs(i, labels[i]), 1e-300));
  return loss / static_cast<double>(x.rows());
}

double SnapshotModel::accuracy(
    int epoch, const Eigen::Ref<const Eigen::MatrixXd>& x,
    const Eigen::Ref<const Eigen::VectorXi>& labels) const {
  const Eigen::VectorXi pred = predict(epoch, x);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

void SnapshotModel::save(const std::filesystem::path& path) const {
  auto out = detail::open_out(path);
  out << "hoda-model v1\n";
  out << "input_dim " << input_dim_ << "\n";
  out << "num_classes " << num_classes_ << "\n";
  out << "hidden_width " << cfg_.hidden_width << "\n";
  out << "epochs " << epochs() << "\n";
  out << "learning_rate " << detail::fmt_double(cfg_.learning_rate) << "\n";
  out << "lr_decay " << detail::fmt_double(cfg_.lr_decay) << "\n";
  out << "momentum " << detail::fmt_double(cfg_.momentum) << "\n";
  out << "batch_size " << cfg_.batch_size << "\n";
  out << "seed " << cfg_.seed << "\n";
  out << "epoch_losses";
  for (const double l : epoch_losses_) out << ' ' << detail::fmt_double(l);
  out << "\n";
  for (int e = 0; e < epochs(); ++e) {
    const Params& p = snapshots_[static_cast<std::size_t>(e)];
    out << "snapshot " << e << "\n";
    write_matrix(out, p.w1);
    write_matrix(out, Eigen::MatrixXd(p.b1.transpose()));
    write_matrix(out, p.w2);
    write_matrix(out, Eigen::MatrixXd(p.b2.transpose()));
  }
}

SnapshotModel SnapshotModel::load(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "hoda-model v1")
    throw std::runtime_error("not a hoda-model v1 file: " + path.string());

  SnapshotModel model;
  std::string key;
  int epochs = 0;
  auto expect_key = [&](const char* want) {
    if (!(in >> key) || key != want)
      throw std::runtime_error("model file: expected '" + std::string(want) +
                               "' in " + path.string());
  };
  expect_key("input_dim");
  in >> model.input_dim_;
  expect_key("num_classes");
  in >> model.num_classes_;
  expect_key("hidden_width");
  in >> model.cfg_.hidden_width;
  expect_key("epochs");
  in >> epochs;
  std::string tok;
  expect_key("learning_rate");
  in >> tok;
  model.cfg_.learning_rate = detail::parse_double(tok);
  expect_key("lr_decay");
  in >> tok;
  model.cfg_.lr_decay = detail::parse_double(tok);
  expect_key("momentum");
  in >> tok;
  model.cfg_.momentum = detail::parse_double(tok);
  expect_key("batch_size");
  in >> model.cfg_.batch_size;
  expect_key("seed");
  in >> model.cfg_.seed;
  model.cfg_.epochs = epochs;
  expect_key("epoch_losses");
  model.epoch_losses_.resize(static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e) {
    in >> tok;
    model.epoch_losses_[static_cast<std::size_t>(e)] = detail::parse_double(tok);
  }

  const int hidden = model.cfg_.hidden_width;
  const int dim = model.input_dim_;
  const int classes = model.num_classes_;
  for (int e = 0; e < epochs; ++e) {
    expect_key("snapshot");
    int idx = -1;
    in >> idx;
    if (idx != e) throw std::runtime_error("model file: snapshot order broken");
    Params p;
    if (hidden > 0) {
      p.w1 = read_matrix(in, hidden, dim);
      p.b1 = read_matrix(in, 1, hidden).row(0).transpose();
      p.w2 = read_matrix(in, classes, hidden);
    } else {
      p.w1.resize(0, 0);
      p.b1.resize(0);
      p.w2 = read_matrix(in, classes, dim);
    }
    p.b2 = read_matrix(in, 1, classes).row(0).transpose();
    model.snapshots_.push_back(std::move(p));
  }
  return model;
}

bool SnapshotModel::same_parameters(const SnapshotModel& other) const {
  if (epochs() != other.epochs() || input_dim_ != other.input_dim_ ||
      num_classes_ != other.num_classes_ ||
      cfg_.hidden_width != other.cfg_.hidden_width)
    return false;
  auto equal = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.array() == b.array()).all();
  };
  for (int e = 0; e < epochs(); ++e) {
    const Params& a = snapshots_[static_cast<std::size_t>(e)];
    const Params& b = other.snapshots_[static_cast<std::size_t>(e)];
    if (!equal(a.w1, b.w1) || !equal(a.b1, b.b1) || !equal(a.w2, b.w2) ||
        !equal(a.b2, b.b2))
      return false;
  }
  return true;
}

}  // namespace hoda
