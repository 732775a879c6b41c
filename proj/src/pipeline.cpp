#include "hoda/pipeline.hpp"

#include "hoda/version.hpp"
#include "io_util.hpp"

#include <set>
#include <vector>

namespace hoda {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

class Collector {
 public:
  void add(const std::string& msg) { errors_.push_back(msg); }

  template <typename Fn>
  void check(Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors_.emplace_back(e.what());
    }
  }

  void raise_if_any() const {
    if (errors_.empty()) return;
    std::string msg = "config validation failed:";
    for (const auto& e : errors_) msg += "\n  - " + e;
    throw ValidationError(msg);
  }

 private:
  std::vector<std::string> errors_;
};

SyntheticDatasetSpec dataset_from_json(const json& j) {
  SyntheticDatasetSpec spec;
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.dim = j.value("dim", spec.dim);
  spec.samples_per_class = j.value("samples_per_class", spec.samples_per_class);
  spec.cluster_spread = j.value("cluster_spread", spec.cluster_spread);
  spec.cluster_separation =
      j.value("cluster_separation", spec.cluster_separation);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

ordered_json dataset_to_json(const SyntheticDatasetSpec& spec) {
  ordered_json j;
  j["num_classes"] = spec.num_classes;
  j["dim"] = spec.dim;
  j["samples_per_class"] = spec.samples_per_class;
  j["cluster_spread"] = spec.cluster_spread;
  j["cluster_separation"] = spec.cluster_separation;
  j["seed"] = spec.seed;
  return j;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig cfg;
  cfg.hidden_width = j.value("hidden_width", cfg.hidden_width);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.lr_decay = j.value("lr_decay", cfg.lr_decay);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

ordered_json train_to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["hidden_width"] = cfg.hidden_width;
  j["epochs"] = cfg.epochs;
  j["learning_rate"] = cfg.learning_rate;
  j["lr_decay"] = cfg.lr_decay;
  j["momentum"] = cfg.momentum;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  return j;
}

AttackConfig attack_from_json(const json& j) {
  AttackConfig cfg;
  cfg.name = j.value("name", "");
  cfg.kind = attack_kind_from_string(j.value("kind", "ood_random"));
  cfg.budget = j.value("budget", cfg.budget);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("ood")) {
    const auto& oj = j["ood"];
    const std::string kind = oj.value("kind", "uniform_box");
    if (kind == "uniform_box")
      cfg.ood.kind = OodStreamSpec::Kind::uniform_box;
    else if (kind == "shifted_clusters")
      cfg.ood.kind = OodStreamSpec::Kind::shifted_clusters;
    else if (kind == "pool_resample")
      cfg.ood.kind = OodStreamSpec::Kind::pool_resample;
    else
      throw ValidationError("attack '" + cfg.name + "': unknown ood kind '" +
                            kind + "'");
    cfg.ood.box_lo = oj.value("box_lo", cfg.ood.box_lo);
    cfg.ood.box_hi = oj.value("box_hi", cfg.ood.box_hi);
    cfg.ood.mean_shift_factor =
        oj.value("mean_shift_factor", cfg.ood.mean_shift_factor);
    cfg.ood.spread_factor = oj.value("spread_factor", cfg.ood.spread_factor);
  }
  if (j.contains("jbda")) {
    const auto& jj = j["jbda"];
    cfg.jbda.lambda = jj.value("lambda", cfg.jbda.lambda);
    cfg.jbda.kappa = jj.value("kappa", cfg.jbda.kappa);
    cfg.jbda.rounds = jj.value("rounds", cfg.jbda.rounds);
    cfg.jbda.jbrand_iters = jj.value("jbrand_iters", cfg.jbda.jbrand_iters);
    cfg.jbda.jbrand_targets_per_sample =
        jj.value("jbrand_targets_per_sample", cfg.jbda.jbrand_targets_per_sample);
    if (jj.contains("surrogate"))
      cfg.jbda.surrogate = train_from_json(jj["surrogate"]);
    else
      cfg.jbda.surrogate.epochs = 0;  // harness substitutes the plan's hyper
    if (jj.contains("clip_lo") && jj.contains("clip_hi"))
      cfg.jbda.clip_box = std::make_pair(jj["clip_lo"].get<double>(),
                                         jj["clip_hi"].get<double>());
  } else if (cfg.kind == AttackKind::jbda || cfg.kind == AttackKind::jbrand) {
    cfg.jbda.surrogate.epochs = 0;
  }
  if (j.contains("adaptive")) {
    const auto& aj = j["adaptive"];
    cfg.adaptive.p_n = aj.value("p_n", cfg.adaptive.p_n);
    cfg.adaptive.normal_pool_size =
        aj.value("normal_pool_size", cfg.adaptive.normal_pool_size);
    if (aj.contains("base"))
      cfg.adaptive_base =
          std::make_shared<AttackConfig>(attack_from_json(aj["base"]));
  }
  return cfg;
}

ordered_json attack_to_json(const AttackConfig& cfg) {
  ordered_json j;
  j["name"] = cfg.name;
  j["kind"] = to_string(cfg.kind);
  j["budget"] = cfg.budget;
  j["seed"] = cfg.seed;
  if (cfg.kind == AttackKind::ood_random) {
    ordered_json oj;
    switch (cfg.ood.kind) {
      case OodStreamSpec::Kind::uniform_box:
        oj["kind"] = "uniform_box";
        oj["box_lo"] = cfg.ood.box_lo;
        oj["box_hi"] = cfg.ood.box_hi;
        break;
      case OodStreamSpec::Kind::shifted_clusters:
        oj["kind"] = "shifted_clusters";
        oj["mean_shift_factor"] = cfg.ood.mean_shift_factor;
        oj["spread_factor"] = cfg.ood.spread_factor;
        break;
      case OodStreamSpec::Kind::pool_resample:
        oj["kind"] = "pool_resample";
        break;
    }
    j["ood"] = oj;
  }
  if (cfg.kind == AttackKind::jbda || cfg.kind == AttackKind::jbrand) {
    ordered_json jj;
    jj["lambda"] = cfg.jbda.lambda;
    jj["kappa"] = cfg.jbda.kappa;
    jj["rounds"] = cfg.jbda.rounds;
    jj["jbrand_iters"] = cfg.jbda.jbrand_iters;
    jj["jbrand_targets_per_sample"] = cfg.jbda.jbrand_targets_per_sample;
    if (cfg.jbda.surrogate.epochs > 0)
      jj["surrogate"] = train_to_json(cfg.jbda.surrogate);
    if (cfg.jbda.clip_box) {
      jj["clip_lo"] = cfg.jbda.clip_box->first;
      jj["clip_hi"] = cfg.jbda.clip_box->second;
    }
    j["jbda"] = jj;
  }
  if (cfg.kind == AttackKind::adaptive_mix) {
    ordered_json aj;
    aj["p_n"] = cfg.adaptive.p_n;
    aj["normal_pool_size"] = cfg.adaptive.normal_pool_size;
    if (cfg.adaptive_base) aj["base"] = attack_to_json(*cfg.adaptive_base);
    j["adaptive"] = aj;
  }
  return j;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig cfg;
  Collector errors;

  errors.check([&] {
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("dataset")) cfg.dataset = dataset_from_json(j["dataset"]);
    if (j.contains("train")) cfg.train = train_from_json(j["train"]);
    if (j.contains("calibration")) {
      const auto& cj = j["calibration"];
      cfg.calibration.num_s = cj.value("num_s", cfg.calibration.num_s);
      cfg.calibration.num_seq = cj.value("num_seq", cfg.calibration.num_seq);
      cfg.calibration.quantile = cj.value("quantile", cfg.calibration.quantile);
      cfg.calibration.seed = cj.value("seed", cfg.calibration.seed);
    }
    cfg.sequence = j.value("sequence", cfg.sequence);
    if (j.contains("monitor")) {
      const auto& mj = j["monitor"];
      cfg.window_policy =
          window_policy_from_string(mj.value("window_policy", "tumbling"));
      cfg.action_on_flag =
          flag_action_from_string(mj.value("action_on_flag", "flag_only"));
    }

    cfg.experiment.dataset = cfg.dataset;
    cfg.experiment.train = cfg.train;
    cfg.experiment.num_seq = cfg.calibration.num_seq;
    cfg.experiment.quantile = cfg.calibration.quantile;
    cfg.experiment.seed = cfg.seed;
    if (j.contains("experiment")) {
      const auto& ej = j["experiment"];
      if (ej.contains("sequences"))
        cfg.experiment.sequences =
            ej["sequences"].get<std::vector<std::string>>();
      if (ej.contains("num_s_sweep"))
        cfg.experiment.num_s_sweep = ej["num_s_sweep"].get<std::vector<int>>();
      cfg.experiment.num_users =
          ej.value("num_users", cfg.experiment.num_users);
      cfg.experiment.num_adversaries =
          ej.value("num_adversaries", cfg.experiment.num_adversaries);
      cfg.experiment.hoda_fraction =
          ej.value("hoda_fraction", cfg.experiment.hoda_fraction);
      cfg.experiment.jbda_num_seeds =
          ej.value("jbda_num_seeds", cfg.experiment.jbda_num_seeds);
      if (ej.contains("attacks")) {
        cfg.experiment.attacks.clear();
        for (const auto& aj : ej["attacks"])
          cfg.experiment.attacks.push_back(attack_from_json(aj));
      }
    }
  });

  errors.check([&] { cfg.dataset.validate(); });
  errors.check([&] { cfg.train.validate(); });
  errors.check([&] {
    const Eigen::Index test_pool = static_cast<Eigen::Index>(cfg.dataset.num_classes) *
                                   cfg.dataset.samples_per_class;
    cfg.calibration.validate(test_pool);
  });
  errors.check([&] { SubclassifierSequence::named(cfg.sequence, cfg.train.epochs); });
  errors.check([&] { cfg.experiment.validate(); });
  errors.check([&] {
    // Cross-reference: every sequence must resolve for the trained epochs,
    // and the sweep cannot exceed the calibration share of the test pool.
    const int test_n = cfg.dataset.num_classes * cfg.dataset.samples_per_class;
    const int hoda_n =
        static_cast<int>(cfg.experiment.hoda_fraction * test_n);
    for (const auto& s : cfg.experiment.sequences)
      SubclassifierSequence::named(s, cfg.train.epochs);
    for (const int num_s : cfg.experiment.num_s_sweep)
      if (num_s > hoda_n)
        throw ValidationError("num_s " + std::to_string(num_s) +
                              " exceeds the calibration pool (" +
                              std::to_string(hoda_n) + " samples)");
  });

  errors.raise_if_any();
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config file " + path.string() +
                          " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["dataset"] = dataset_to_json(dataset);
  j["train"] = train_to_json(train);
  ordered_json cj;
  cj["num_s"] = calibration.num_s;
  cj["num_seq"] = calibration.num_seq;
  cj["quantile"] = calibration.quantile;
  cj["seed"] = calibration.seed;
  j["calibration"] = cj;
  j["sequence"] = sequence;
  ordered_json mj;
  mj["window_policy"] = to_string(window_policy);
  mj["action_on_flag"] = to_string(action_on_flag);
  j["monitor"] = mj;
  ordered_json ej;
  ej["sequences"] = experiment.sequences;
  ej["num_s_sweep"] = experiment.num_s_sweep;
  ej["num_users"] = experiment.num_users;
  ej["num_adversaries"] = experiment.num_adversaries;
  ej["hoda_fraction"] = experiment.hoda_fraction;
  ej["jbda_num_seeds"] = experiment.jbda_num_seeds;
  ej["attacks"] = ordered_json::array();
  for (const auto& a : experiment.attacks)
    ej["attacks"].push_back(attack_to_json(a));
  j["experiment"] = ej;
  return j;
}

std::string PipelineConfig::digest() const {
  const std::string dump = to_json().dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : dump) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void init_run_dir(const std::filesystem::path& dir, const PipelineConfig& cfg,
                  const std::string& command) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("cannot create run directory " + dir.string());
  const auto manifest = dir / "manifest.json";
  if (std::filesystem::exists(manifest))
    throw ValidationError("run directory " + dir.string() +
                          " already holds a manifest; runs are immutable, "
                          "use a fresh directory");
  ordered_json j;
  j["tool"] = std::string(kToolName) + " " + kToolVersion;
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["config_digest"] = cfg.digest();
  auto out = detail::open_out(manifest);
  out << j.dump(2) << "\n";
}

}  // namespace hoda
