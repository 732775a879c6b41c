#include "hoda/eval.hpp"

#include "hoda/rng.hpp"
#include "io_util.hpp"
#include "parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace hoda {
namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<double> ranks_with_ties(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson_correlation(const std::vector<double>& x,
                                          const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

Eigen::VectorXi distance_histogram(const std::vector<double>& distances) {
  Eigen::VectorXi hist = Eigen::VectorXi::Zero(kDistanceHistBins);
  for (const double d : distances) {
    int bin = static_cast<int>(d / 2.0 * kDistanceHistBins);
    bin = std::clamp(bin, 0, kDistanceHistBins - 1);
    hist[bin] += 1;
  }
  return hist;
}

Eigen::VectorXi degree_histogram(const Eigen::VectorXi& degrees, int bins) {
  Eigen::VectorXi hist = Eigen::VectorXi::Zero(bins);
  for (Eigen::Index i = 0; i < degrees.size(); ++i) hist[degrees[i]] += 1;
  return hist;
}

// One simulated sequence of num_s degrees -> distance to H_n.
double sequence_distance(const Eigen::VectorXi& degrees,
                         const std::vector<int>& picks,
                         const Eigen::VectorXd& normal_prob, int bins) {
  Eigen::VectorXi hist = Eigen::VectorXi::Zero(bins);
  for (const int i : picks) hist[degrees[i]] += 1;
  return pearson_distance(normalize(Eigen::VectorXd(hist.cast<double>())),
                          normal_prob);
}

// Benign users pick num_s samples at random from the user pool; adversaries
// pick num_s positions of their attack stream, kept in generation order.
std::vector<double> population_distances(const Eigen::VectorXi& degrees,
                                         int num_s, int population,
                                         const Eigen::VectorXd& normal_prob,
                                         int bins, std::uint64_t seed,
                                         std::string_view stream) {
  std::vector<double> out(static_cast<std::size_t>(population));
  detail::parallel_for(population, [&](int begin, int end) {
    for (int u = begin; u < end; ++u) {
      Rng rng(derive_seed(seed, stream, static_cast<std::uint64_t>(u)));
      auto picks = rng.sample_without_replacement(
          static_cast<int>(degrees.size()), num_s);
      std::sort(picks.begin(), picks.end());  // generation order
      out[static_cast<std::size_t>(u)] =
          sequence_distance(degrees, picks, normal_prob, bins);
    }
  });
  return out;
}

double exceed_fraction(const std::vector<double>& distances, double delta) {
  long hits = 0;
  for (const double d : distances)
    if (d > delta) ++hits;
  return static_cast<double>(hits) / static_cast<double>(distances.size());
}

std::string sanitize_name(const std::string& name) {
  for (const char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok)
      throw std::invalid_argument(
          "attack name '" + name +
          "' may only use lowercase letters, digits, '-', '_' and '.'");
  }
  return name;
}

void write_svg_histogram(const std::filesystem::path& path,
                         const std::string& title,
                         const std::vector<std::pair<std::string, Eigen::VectorXi>>& series) {
  const int width = 720, height = 320, margin = 40;
  int bins = 0;
  int max_count = 1;
  for (const auto& [label, hist] : series) {
    bins = std::max<int>(bins, static_cast<int>(hist.size()));
    if (hist.size() > 0) max_count = std::max(max_count, hist.maxCoeff());
  }
  if (bins == 0) bins = 1;
  const double plot_w = width - 2.0 * margin;
  const double plot_h = height - 2.0 * margin;
  const double bar_w = plot_w / bins / static_cast<double>(series.size());
  static const char* colors[] = {"#5b7fbd", "#c05b5b", "#58a27a", "#b28c42"};

  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"13\">" << title
      << "</text>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
      << width - margin << "\" y2=\"" << height - margin
      << "\" stroke=\"#333\"/>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& hist = series[s].second;
    out << "<text x=\"" << margin + 110 * static_cast<int>(s)
        << "\" y=\"34\" font-size=\"11\" fill=\"" << colors[s % 4] << "\">"
        << series[s].first << "</text>\n";
    for (int b = 0; b < hist.size(); ++b) {
      const double h = plot_h * hist[b] / max_count;
      const double x = margin + (b * static_cast<double>(series.size()) + s) * bar_w;
      const double y = height - margin - h;
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w
          << "\" height=\"" << h << "\" fill=\"" << colors[s % 4] << "\"/>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::ood_random: return "ood_random";
    case AttackKind::jbda: return "jbda";
    case AttackKind::jbrand: return "jbrand";
    case AttackKind::adaptive_mix: return "adaptive_mix";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "ood_random") return AttackKind::ood_random;
  if (s == "jbda") return AttackKind::jbda;
  if (s == "jbrand") return AttackKind::jbrand;
  if (s == "adaptive_mix") return AttackKind::adaptive_mix;
  throw std::invalid_argument("unknown attack kind '" + s + "'");
}

void AttackConfig::validate() const {
  std::string err;
  if (name.empty()) err += "attack name is empty; ";
  if (budget < 1) err += "budget must be >= 1; ";
  if (kind == AttackKind::adaptive_mix) {
    try {
      adaptive.validate();
    } catch (const std::exception& e) {
      err += std::string(e.what()) + "; ";
    }
    if (!adaptive_base) err += "adaptive_mix needs a base attack; ";
    else if (adaptive_base->kind == AttackKind::adaptive_mix)
      err += "adaptive_mix base cannot itself be adaptive; ";
  }
  if (!err.empty())
    throw std::invalid_argument("attack config '" + name + "': " + err);
}

void ExperimentPlan::validate() const {
  std::string err;
  try {
    dataset.validate();
  } catch (const std::exception& e) {
    err += std::string(e.what()) + "; ";
  }
  try {
    train.validate();
  } catch (const std::exception& e) {
    err += std::string(e.what()) + "; ";
  }
  if (sequences.empty()) err += "no subclassifier sequences selected; ";
  if (num_s_sweep.empty()) err += "num_s sweep is empty; ";
  for (const int s : num_s_sweep)
    if (s < 1) err += "num_s values must be >= 1; ";
  if (num_users < 1) err += "num_users must be >= 1; ";
  if (num_adversaries < 1) err += "num_adversaries must be >= 1; ";
  if (num_seq < 1) err += "num_seq must be >= 1; ";
  if (!(quantile > 0) || quantile > 1) err += "quantile must be in (0,1]; ";
  if (!(hoda_fraction > 0) || hoda_fraction >= 1)
    err += "hoda_fraction must be in (0,1); ";
  if (jbda_num_seeds < 1) err += "jbda_num_seeds must be >= 1; ";
  std::set<std::string> names;
  for (const auto& a : attacks) {
    try {
      a.validate();
      sanitize_name(a.name);
    } catch (const std::exception& e) {
      err += std::string(e.what()) + "; ";
    }
    if (!names.insert(a.name).second)
      err += "duplicate attack name '" + a.name + "'; ";
    const int max_num_s = *std::max_element(num_s_sweep.begin(), num_s_sweep.end());
    if (a.budget < max_num_s)
      err += "attack '" + a.name + "' budget below largest num_s; ";
  }
  if (!err.empty()) throw std::invalid_argument("experiment plan: " + err);
}

double auc(const std::vector<double>& benign_distances,
           const std::vector<double>& adversary_distances) {
  if (benign_distances.empty() || adversary_distances.empty())
    throw std::invalid_argument("auc: empty input");
  std::vector<double> benign = benign_distances;
  std::sort(benign.begin(), benign.end());
  double score = 0.0;
  for (const double d : adversary_distances) {
    const auto lo = std::lower_bound(benign.begin(), benign.end(), d);
    const auto hi = std::upper_bound(benign.begin(), benign.end(), d);
    score += static_cast<double>(lo - benign.begin());
    score += 0.5 * static_cast<double>(hi - lo);
  }
  return score / (static_cast<double>(benign.size()) *
                  static_cast<double>(adversary_distances.size()));
}

MisclassReport hardness_misclassification_report(
    const PredictionMatrix& full_matrix,
    const Eigen::Ref<const Eigen::VectorXi>& true_labels) {
  if (full_matrix.rows() != true_labels.size())
    throw std::invalid_argument("labels length differs from matrix rows");
  const int m = full_matrix.cols();
  const Eigen::VectorXi degrees = full_matrix.hardness_degrees();
  const Eigen::Index n = full_matrix.rows();

  std::vector<Eigen::Index> count(10, 0), correct(10, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    int g = static_cast<int>((static_cast<long>(degrees[i]) * 10) / m);
    g = std::min(g, 9);
    count[static_cast<std::size_t>(g)] += 1;
    // Final-model prediction is the last column of the full matrix.
    if (full_matrix.labels(i, m - 1) == true_labels[i])
      correct[static_cast<std::size_t>(g)] += 1;
  }

  MisclassReport report;
  std::vector<double> xs, ys;
  for (int g = 0; g < 10; ++g) {
    GroupRow row;
    row.group = g + 1;
    row.fraction = n > 0 ? static_cast<double>(count[static_cast<std::size_t>(g)]) /
                               static_cast<double>(n)
                         : 0.0;
    if (count[static_cast<std::size_t>(g)] > 0) {
      row.accuracy = static_cast<double>(correct[static_cast<std::size_t>(g)]) /
                     static_cast<double>(count[static_cast<std::size_t>(g)]);
      xs.push_back(static_cast<double>(g + 1));
      ys.push_back(1.0 - *row.accuracy);  // misclassification rate
    }
    report.groups.push_back(row);
  }
  report.spearman =
      pearson_correlation(ranks_with_ties(xs), ranks_with_ties(ys));
  return report;
}

std::optional<double> transferability_report(
    const SnapshotModel& model_a, const SnapshotModel& model_b,
    const Eigen::Ref<const Eigen::MatrixXd>& pool) {
  const auto degrees_of = [&](const SnapshotModel& model) {
    const auto seq = SubclassifierSequence::full(model.epochs());
    return predict_matrix(model, seq, pool).hardness_degrees();
  };
  const Eigen::VectorXi da = degrees_of(model_a);
  const Eigen::VectorXi db = degrees_of(model_b);
  std::vector<double> xa(static_cast<std::size_t>(da.size()));
  std::vector<double> xb(static_cast<std::size_t>(db.size()));
  for (Eigen::Index i = 0; i < da.size(); ++i) {
    xa[static_cast<std::size_t>(i)] = da[i];
    xb[static_cast<std::size_t>(i)] = db[i];
  }
  return pearson_correlation(xa, xb);
}

namespace {

// Rethrows submodule failures with the experiment stage attached.
template <typename Fn>
auto at_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("experiment stage '") + stage +
                                "': " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string("experiment stage '") + stage +
                             "': " + e.what());
  }
}

}  // namespace

DetectionReport run_experiment(const ExperimentPlan& plan) {
  plan.validate();

  const Dataset ds =
      at_stage("dataset", [&] { return generate_dataset(plan.dataset); });
  TrainConfig target_cfg = plan.train;
  target_cfg.seed = derive_seed(plan.seed, "experiment/target");
  const SnapshotModel target = at_stage(
      "train-target", [&] { return SnapshotModel::train(ds.train, target_cfg); });
  const int m = target.epochs();

  // 40/60-style split of the test pool into calibration and user pools.
  std::vector<int> test_rows(static_cast<std::size_t>(ds.test.size()));
  std::iota(test_rows.begin(), test_rows.end(), 0);
  Rng split_rng(derive_seed(plan.seed, "experiment/split"));
  split_rng.shuffle(test_rows);
  const int n_hoda =
      static_cast<int>(plan.hoda_fraction * static_cast<double>(ds.test.size()));
  if (n_hoda < 1 || n_hoda >= ds.test.size())
    throw std::invalid_argument("hoda_fraction leaves an empty pool");
  const std::vector<int> hoda_rows(test_rows.begin(), test_rows.begin() + n_hoda);
  const std::vector<int> user_rows(test_rows.begin() + n_hoda, test_rows.end());
  const SamplePool s_hoda = select_pool_rows(ds.test, hoda_rows, "hoda_calibration");
  const SamplePool s_user = select_pool_rows(ds.test, user_rows, "user_simulation");

  const auto full_seq = SubclassifierSequence::full(m);
  const PredictionMatrix hoda_full = predict_matrix(target, full_seq, s_hoda.features);
  const PredictionMatrix user_full = predict_matrix(target, full_seq, s_user.features);
  const PredictionMatrix test_full = predict_matrix(target, full_seq, ds.test.features);

  const int max_num_s =
      *std::max_element(plan.num_s_sweep.begin(), plan.num_s_sweep.end());
  if (max_num_s > s_hoda.size())
    throw std::invalid_argument("largest num_s exceeds the calibration pool");
  if (max_num_s > s_user.size())
    throw std::invalid_argument("largest num_s exceeds the user pool");

  // Build every attack stream once, then reuse its full prediction matrix
  // across the (sequence, num_s) grid.
  struct BuiltAttack {
    const AttackConfig* cfg;
    AttackStream stream;
    PredictionMatrix full_matrix;
    double cost_factor = 1.0;
  };
  const auto build_stream = [&](const AttackConfig& cfg,
                                auto&& recurse) -> AttackStream {
    const std::uint64_t seed =
        cfg.seed ? cfg.seed : derive_seed(plan.seed, "experiment/attack/" + cfg.name);
    switch (cfg.kind) {
      case AttackKind::ood_random: {
        OodStreamSpec spec = cfg.ood;
        if (spec.kind == OodStreamSpec::Kind::pool_resample && !spec.pool)
          spec.pool = std::make_shared<SamplePool>(s_user);
        if (spec.kind == OodStreamSpec::Kind::uniform_box)
          spec.dim = plan.dataset.dim;
        if (spec.kind == OodStreamSpec::Kind::shifted_clusters)
          spec.base = plan.dataset;
        return ood_stream(spec, cfg.budget, seed);
      }
      case AttackKind::jbda:
      case AttackKind::jbrand: {
        JbdaConfig jcfg = cfg.jbda;
        jcfg.seed = seed;
        if (jcfg.surrogate.epochs <= 0) jcfg.surrogate = plan.train;
        Rng seed_rng(derive_seed(seed, "jbda/seed-pool"));
        const auto seed_rows = seed_rng.sample_without_replacement(
            static_cast<int>(s_user.size()),
            std::min<int>(plan.jbda_num_seeds, static_cast<int>(s_user.size())));
        jcfg.seed_samples = select_pool_rows(s_user, seed_rows, "attack_seed");
        return jbda_stream(target, jcfg, cfg.budget,
                           cfg.kind == AttackKind::jbrand);
      }
      case AttackKind::adaptive_mix: {
        AttackConfig base = *cfg.adaptive_base;
        if (base.seed == 0)
          base.seed = derive_seed(seed, "adaptive/base");
        AttackStream base_stream = recurse(base, recurse);
        AdaptiveMixConfig acfg = cfg.adaptive;
        acfg.seed = seed;
        return adaptive_stream(base_stream, s_user, acfg, cfg.budget);
      }
    }
    throw std::logic_error("unreachable attack kind");
  };

  std::vector<BuiltAttack> built;
  for (const auto& cfg : plan.attacks) {
    BuiltAttack ba;
    ba.cfg = &cfg;
    ba.stream = at_stage(("attack '" + cfg.name + "'").c_str(),
                         [&] { return build_stream(cfg, build_stream); });
    ba.full_matrix = predict_matrix(target, full_seq, ba.stream.features);
    if (cfg.kind == AttackKind::adaptive_mix)
      ba.cost_factor = 1.0 / (1.0 - cfg.adaptive.p_n);
    built.push_back(std::move(ba));
  }

  DetectionReport report;
  report.seed = plan.seed;
  report.target_train_accuracy =
      target.accuracy(m - 1, ds.train.features, ds.train.labels);
  report.target_test_accuracy =
      target.accuracy(m - 1, ds.test.features, ds.test.labels);

  for (const auto& seq_name : plan.sequences) {
    const auto seq = SubclassifierSequence::named(seq_name, m);
    const Eigen::VectorXi hoda_degrees =
        subselect(hoda_full, seq).hardness_degrees();
    const Eigen::VectorXi user_degrees =
        subselect(user_full, seq).hardness_degrees();

    report.hardness_hists.push_back(
        {"benign", seq_name, degree_histogram(user_degrees, seq.size())});
    for (const auto& ba : built) {
      report.hardness_hists.push_back(
          {ba.cfg->name, seq_name,
           degree_histogram(subselect(ba.full_matrix, seq).hardness_degrees(),
                            seq.size())});
    }

    for (const int num_s : plan.num_s_sweep) {
      CalibrationConfig ccfg;
      ccfg.num_s = num_s;
      ccfg.num_seq = plan.num_seq;
      ccfg.quantile = plan.quantile;
      ccfg.seed = derive_seed(plan.seed, "experiment/calibrate/" + seq_name,
                              static_cast<std::uint64_t>(num_s));
      const CalibrationResult calib =
          at_stage(("calibrate " + seq_name + "/num_s=" +
                    std::to_string(num_s)).c_str(),
                   [&] { return calibrate_degrees(hoda_degrees, seq, ccfg); });
      const Eigen::VectorXd normal_prob = normalize(calib.normal);

      const std::vector<double> benign = population_distances(
          user_degrees, num_s, plan.num_users, normal_prob, seq.size(),
          derive_seed(plan.seed, "experiment/benign/" + seq_name,
                      static_cast<std::uint64_t>(num_s)),
          "user");
      const double fpr = exceed_fraction(benign, calib.delta);

      for (const auto& ba : built) {
        const Eigen::VectorXi attack_degrees =
            subselect(ba.full_matrix, seq).hardness_degrees();
        const std::vector<double> adversary = population_distances(
            attack_degrees, num_s, plan.num_adversaries, normal_prob,
            seq.size(),
            derive_seed(plan.seed,
                        "experiment/adversary/" + ba.cfg->name + "/" + seq_name,
                        static_cast<std::uint64_t>(num_s)),
            "adversary");

        DetectionRow row;
        row.attack = ba.cfg->name;
        row.num_s = num_s;
        row.sequence = seq_name;
        row.delta = calib.delta;
        row.fpr = fpr;
        row.detection_rate = exceed_fraction(adversary, calib.delta);
        row.auc = auc(benign, adversary);
        row.attack_cost_factor = ba.cost_factor;
        row.benign_distance_hist = distance_histogram(benign);
        row.adversary_distance_hist = distance_histogram(adversary);
        report.rows.push_back(std::move(row));
      }
    }
  }

  report.misclass = hardness_misclassification_report(test_full, ds.test.labels);

  TrainConfig partner_cfg = plan.train;
  partner_cfg.seed = derive_seed(plan.seed, "experiment/target-partner");
  const SnapshotModel partner = SnapshotModel::train(ds.train, partner_cfg);
  report.transfer_correlation =
      transferability_report(target, partner, ds.test.features);

  // Default surrogate for the hardness-group breakdown: meant to mirror the
  // strongest attacker setting, so it trains on the first OOD stream with
  // probability-vector outputs (falls back to the first attack if none).
  const BuiltAttack* surrogate_source = nullptr;
  for (const auto& ba : built)
    if (ba.cfg->kind == AttackKind::ood_random) {
      surrogate_source = &ba;
      break;
    }
  if (!surrogate_source && !built.empty()) surrogate_source = &built[0];
  if (surrogate_source) {
    TrainConfig scfg = plan.train;
    scfg.seed = derive_seed(plan.seed, "experiment/surrogate");
    const Eigen::MatrixXd soft =
        target.probabilities(m - 1, surrogate_source->stream.features);
    const SnapshotModel surrogate =
        train_surrogate(surrogate_source->stream.features, soft, scfg);
    report.surrogate = score_surrogate(surrogate, target, ds.test, test_full);
  }
  return report;
}

namespace {

ordered_json row_to_json(const DetectionRow& row) {
  ordered_json j;
  j["attack"] = row.attack;
  j["num_s"] = row.num_s;
  j["sequence"] = row.sequence;
  j["delta"] = row.delta;
  j["fpr"] = row.fpr;
  j["detection_rate"] = row.detection_rate;
  j["auc"] = row.auc;
  j["attack_cost_factor"] = row.attack_cost_factor;
  j["benign_distance_hist"] = std::vector<int>(
      row.benign_distance_hist.data(),
      row.benign_distance_hist.data() + row.benign_distance_hist.size());
  j["adversary_distance_hist"] = std::vector<int>(
      row.adversary_distance_hist.data(),
      row.adversary_distance_hist.data() + row.adversary_distance_hist.size());
  return j;
}

Eigen::VectorXi json_to_hist(const ordered_json& j) {
  Eigen::VectorXi hist(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    hist[static_cast<Eigen::Index>(i)] = j[i].get<int>();
  return hist;
}

}  // namespace

void DetectionReport::save_json(const std::filesystem::path& path) const {
  ordered_json j;
  j["format"] = "hoda-detection-report v1";
  j["seed"] = seed;
  j["plan_digest"] = plan_digest;
  j["target_train_accuracy"] = target_train_accuracy;
  j["target_test_accuracy"] = target_test_accuracy;
  j["rows"] = ordered_json::array();
  for (const auto& row : rows) j["rows"].push_back(row_to_json(row));
  j["hardness_hists"] = ordered_json::array();
  for (const auto& h : hardness_hists) {
    ordered_json hj;
    hj["population"] = h.population;
    hj["sequence"] = h.sequence;
    hj["hist"] =
        std::vector<int>(h.hist.data(), h.hist.data() + h.hist.size());
    j["hardness_hists"].push_back(hj);
  }
  j["misclass_groups"] = ordered_json::array();
  for (const auto& g : misclass.groups) {
    ordered_json gj;
    gj["group"] = g.group;
    gj["fraction"] = g.fraction;
    if (g.accuracy) gj["accuracy"] = *g.accuracy;
    j["misclass_groups"].push_back(gj);
  }
  if (misclass.spearman) j["misclass_spearman"] = *misclass.spearman;
  if (transfer_correlation) j["transfer_correlation"] = *transfer_correlation;
  ordered_json sj;
  sj["accuracy"] = surrogate.accuracy;
  sj["fidelity"] = surrogate.fidelity;
  sj["groups"] = ordered_json::array();
  for (const auto& g : surrogate.groups) {
    ordered_json gj;
    gj["group"] = g.group;
    gj["count"] = g.count;
    if (g.accuracy) gj["accuracy"] = *g.accuracy;
    if (g.fidelity) gj["fidelity"] = *g.fidelity;
    sj["groups"].push_back(gj);
  }
  j["surrogate"] = sj;
  auto out = detail::open_out(path);
  out << j.dump(2) << "\n";
}

DetectionReport DetectionReport::load_json(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  ordered_json j = ordered_json::parse(in);
  if (j.value("format", "") != "hoda-detection-report v1")
    throw std::runtime_error("not a hoda-detection-report v1 file: " +
                             path.string());
  DetectionReport report;
  report.seed = j["seed"].get<std::uint64_t>();
  report.plan_digest = j.value("plan_digest", "");
  report.target_train_accuracy = j["target_train_accuracy"].get<double>();
  report.target_test_accuracy = j["target_test_accuracy"].get<double>();
  for (const auto& rj : j["rows"]) {
    DetectionRow row;
    row.attack = rj["attack"].get<std::string>();
    row.num_s = rj["num_s"].get<int>();
    row.sequence = rj["sequence"].get<std::string>();
    row.delta = rj["delta"].get<double>();
    row.fpr = rj["fpr"].get<double>();
    row.detection_rate = rj["detection_rate"].get<double>();
    row.auc = rj["auc"].get<double>();
    row.attack_cost_factor = rj["attack_cost_factor"].get<double>();
    row.benign_distance_hist = json_to_hist(rj["benign_distance_hist"]);
    row.adversary_distance_hist = json_to_hist(rj["adversary_distance_hist"]);
    report.rows.push_back(std::move(row));
  }
  for (const auto& hj : j["hardness_hists"]) {
    HardnessHistRow h;
    h.population = hj["population"].get<std::string>();
    h.sequence = hj["sequence"].get<std::string>();
    h.hist = json_to_hist(hj["hist"]);
    report.hardness_hists.push_back(std::move(h));
  }
  for (const auto& gj : j["misclass_groups"]) {
    GroupRow g;
    g.group = gj["group"].get<int>();
    g.fraction = gj["fraction"].get<double>();
    if (gj.contains("accuracy")) g.accuracy = gj["accuracy"].get<double>();
    report.misclass.groups.push_back(g);
  }
  if (j.contains("misclass_spearman"))
    report.misclass.spearman = j["misclass_spearman"].get<double>();
  if (j.contains("transfer_correlation"))
    report.transfer_correlation = j["transfer_correlation"].get<double>();
  const auto& sj = j["surrogate"];
  report.surrogate.accuracy = sj["accuracy"].get<double>();
  report.surrogate.fidelity = sj["fidelity"].get<double>();
  for (const auto& gj : sj["groups"]) {
    HardnessGroupMetrics g;
    g.group = gj["group"].get<int>();
    g.count = gj["count"].get<Eigen::Index>();
    if (gj.contains("accuracy")) g.accuracy = gj["accuracy"].get<double>();
    if (gj.contains("fidelity")) g.fidelity = gj["fidelity"].get<double>();
    report.surrogate.groups.push_back(g);
  }
  return report;
}

void emit_reports(const DetectionReport& report,
                  const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec && !std::filesystem::is_directory(out_dir))
    throw std::runtime_error("cannot create report directory " +
                             out_dir.string());

  {
    auto out = detail::open_out(out_dir / "detection.csv");
    out << "attack,num_s,sequence,delta,fpr,detection_rate,auc,attack_cost_factor\n";
    for (const auto& row : report.rows) {
      out << row.attack << ',' << row.num_s << ',' << row.sequence << ','
          << detail::fmt_double(row.delta) << ',' << detail::fmt_double(row.fpr)
          << ',' << detail::fmt_double(row.detection_rate) << ','
          << detail::fmt_double(row.auc) << ','
          << detail::fmt_double(row.attack_cost_factor) << "\n";
    }
  }

  for (const auto& row : report.rows) {
    const std::string base = "dist_hist__" + row.attack + "__" + row.sequence +
                             "__nums" + std::to_string(row.num_s);
    auto out = detail::open_out(out_dir / (base + ".csv"));
    out << "bin_lo,bin_hi,benign,adversary\n";
    for (int b = 0; b < kDistanceHistBins; ++b) {
      out << detail::fmt_double(2.0 * b / kDistanceHistBins) << ','
          << detail::fmt_double(2.0 * (b + 1) / kDistanceHistBins) << ','
          << row.benign_distance_hist[b] << ',' << row.adversary_distance_hist[b]
          << "\n";
    }
    write_svg_histogram(out_dir / (base + ".svg"),
                        "Pearson distance: " + row.attack + " (" + row.sequence +
                            ", num_s=" + std::to_string(row.num_s) + ")",
                        {{"benign", row.benign_distance_hist},
                         {"adversary", row.adversary_distance_hist}});
  }

  for (const auto& h : report.hardness_hists) {
    const std::string base =
        "hardness_hist__" + h.population + "__" + h.sequence;
    auto out = detail::open_out(out_dir / (base + ".csv"));
    out << "degree,count\n";
    for (int d = 0; d < h.hist.size(); ++d)
      out << d << ',' << h.hist[d] << "\n";
    write_svg_histogram(out_dir / (base + ".svg"),
                        "Hardness degrees: " + h.population + " (" + h.sequence + ")",
                        {{h.population, h.hist}});
  }

  {
    auto out = detail::open_out(out_dir / "misclass_groups.csv");
    out << "group,fraction,accuracy\n";
    for (const auto& g : report.misclass.groups) {
      out << g.group << ',' << detail::fmt_double(g.fraction) << ',';
      if (g.accuracy) out << detail::fmt_double(*g.accuracy);
      out << "\n";
    }
  }

  {
    auto out = detail::open_out(out_dir / "surrogate_groups.csv");
    out << "group,count,accuracy,fidelity\n";
    for (const auto& g : report.surrogate.groups) {
      out << g.group << ',' << g.count << ',';
      if (g.accuracy) out << detail::fmt_double(*g.accuracy);
      out << ',';
      if (g.fidelity) out << detail::fmt_double(*g.fidelity);
      out << "\n";
    }
  }

  {
    ordered_json j;
    j["seed"] = report.seed;
    j["plan_digest"] = report.plan_digest;
    j["target_train_accuracy"] = report.target_train_accuracy;
    j["target_test_accuracy"] = report.target_test_accuracy;
    j["surrogate_accuracy"] = report.surrogate.accuracy;
    j["surrogate_fidelity"] = report.surrogate.fidelity;
    if (report.misclass.spearman)
      j["misclass_spearman"] = *report.misclass.spearman;
    if (report.transfer_correlation)
      j["transfer_correlation"] = *report.transfer_correlation;
    auto out = detail::open_out(out_dir / "summary.json");
    out << j.dump(2) << "\n";
  }
}

}  // namespace hoda
