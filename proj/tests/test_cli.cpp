#include <doctest.h>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// End-to-end checks of the command-line tool: stage choreography, artifact
// formats, determinism of re-runs and exit codes.

namespace {

namespace fs = std::filesystem;

const char* kCli = HODA_CLI_PATH;

struct TempTree {
  fs::path root;
  TempTree() {
    root = fs::temp_directory_path() /
           ("hoda_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
  fs::path operator/(const std::string& name) const { return root / name; }
};

int run(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_config(const fs::path& path) {
  std::ofstream out(path);
  out << R"({
  "seed": 9,
  "dataset": {"num_classes": 3, "dim": 4, "samples_per_class": 100,
              "cluster_spread": 0.9, "cluster_separation": 3.0, "seed": 12},
  "train": {"hidden_width": 12, "epochs": 15, "learning_rate": 0.1,
            "lr_decay": 0.95, "batch_size": 16, "seed": 4},
  "calibration": {"num_s": 20, "num_seq": 200, "quantile": 1.0, "seed": 5},
  "sequence": "full",
  "experiment": {
    "sequences": ["full"],
    "num_s_sweep": [20],
    "num_users": 200,
    "num_adversaries": 200,
    "jbda_num_seeds": 8,
    "attacks": [
      {"name": "ood", "kind": "ood_random", "budget": 300,
       "ood": {"kind": "uniform_box", "box_lo": -15.0, "box_hi": 15.0}},
      {"name": "jbda", "kind": "jbda", "budget": 120,
       "jbda": {"lambda": 0.3, "kappa": 20, "rounds": 4}}
    ]
  }
})";
}

}  // namespace

TEST_CASE("full pipeline choreography through the cli") {
  TempTree tmp;
  const fs::path cfg = tmp / "config.json";
  write_config(cfg);
  const std::string c = " --config " + cfg.string();

  REQUIRE(run("gen-data" + c + " --out " + (tmp / "data").string()) == 0);
  CHECK(fs::exists(tmp / "data" / "train.csv"));
  CHECK(fs::exists(tmp / "data" / "test.csv"));
  CHECK(fs::exists(tmp / "data" / "manifest.json"));

  REQUIRE(run("train" + c + " --data " + (tmp / "data").string() + " --out " +
              (tmp / "model").string()) == 0);
  CHECK(fs::exists(tmp / "model" / "model.txt"));

  REQUIRE(run("predict-matrix" + c + " --model " +
              (tmp / "model" / "model.txt").string() + " --pool " +
              (tmp / "data" / "test.csv").string() + " --sequence full --out " +
              (tmp / "matrix").string()) == 0);
  CHECK(fs::exists(tmp / "matrix" / "matrix.csv"));
  {
    std::ifstream in(tmp / "matrix" / "matrix.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("sample_id,e0,e1,", 0) == 0);
  }

  REQUIRE(run("calibrate" + c + " --matrix " +
              (tmp / "matrix" / "matrix.csv").string() + " --out " +
              (tmp / "calib").string()) == 0);
  CHECK(fs::exists(tmp / "calib" / "calibration.txt"));

  REQUIRE(run("attack" + c + " --model " +
              (tmp / "model" / "model.txt").string() + " --pool " +
              (tmp / "data" / "test.csv").string() + " --name ood --out " +
              (tmp / "attack").string()) == 0);
  CHECK(fs::exists(tmp / "attack" / "stream.csv"));

  REQUIRE(run("evaluate" + c + " --out " + (tmp / "eval").string()) == 0);
  CHECK(fs::exists(tmp / "eval" / "report.json"));
  CHECK(fs::exists(tmp / "eval" / "reports" / "detection.csv"));

  REQUIRE(run("report --in " + (tmp / "eval" / "report.json").string() +
              " --out " + (tmp / "rereport").string()) == 0);
  CHECK(slurp(tmp / "rereport" / "detection.csv") ==
        slurp(tmp / "eval" / "reports" / "detection.csv"));
}

TEST_CASE("same seed twice produces byte-identical artifacts") {
  TempTree tmp;
  const fs::path cfg = tmp / "config.json";
  write_config(cfg);
  const std::string c = " --config " + cfg.string();

  REQUIRE(run("evaluate" + c + " --out " + (tmp / "run1").string()) == 0);
  REQUIRE(run("evaluate" + c + " --out " + (tmp / "run2").string()) == 0);
  int compared = 0;
  for (const auto& entry :
       fs::directory_iterator(tmp / "run1" / "reports")) {
    if (entry.path().extension() != ".csv") continue;
    ++compared;
    CHECK(slurp(entry.path()) ==
          slurp(tmp / "run2" / "reports" / entry.path().filename()));
  }
  CHECK(compared > 3);

  // gen-data determinism too.
  REQUIRE(run("gen-data" + c + " --out " + (tmp / "d1").string()) == 0);
  REQUIRE(run("gen-data" + c + " --out " + (tmp / "d2").string()) == 0);
  CHECK(slurp(tmp / "d1" / "train.csv") == slurp(tmp / "d2" / "train.csv"));
}

TEST_CASE("run directories are immutable") {
  TempTree tmp;
  const fs::path cfg = tmp / "config.json";
  write_config(cfg);
  const std::string c = " --config " + cfg.string();
  REQUIRE(run("gen-data" + c + " --out " + (tmp / "data").string()) == 0);
  CHECK(run("gen-data" + c + " --out " + (tmp / "data").string()) == 1);
}

TEST_CASE("validation failures exit with code 1") {
  TempTree tmp;
  const fs::path cfg = tmp / "config.json";
  write_config(cfg);
  const std::string c = " --config " + cfg.string();

  REQUIRE(run("gen-data" + c + " --out " + (tmp / "data").string()) == 0);
  REQUIRE(run("train" + c + " --data " + (tmp / "data").string() + " --out " +
              (tmp / "model").string()) == 0);
  REQUIRE(run("predict-matrix" + c + " --model " +
              (tmp / "model" / "model.txt").string() + " --pool " +
              (tmp / "data" / "test.csv").string() + " --sequence full --out " +
              (tmp / "matrix").string()) == 0);

  // num_s larger than the pool: aggregated validation error, exit 1.
  std::string big = slurp(cfg);
  const auto pos = big.find("\"num_s\": 20");
  REQUIRE(pos != std::string::npos);
  big.replace(pos, 11, "\"num_s\": 9000");
  {
    std::ofstream out(tmp / "big.json");
    out << big;
  }
  CHECK(run("calibrate --config " + (tmp / "big.json").string() +
            " --matrix " + (tmp / "matrix" / "matrix.csv").string() +
            " --out " + (tmp / "calib").string()) == 1);

  // Unknown attack name.
  CHECK(run("evaluate" + c + " --attack nosuch --out " +
            (tmp / "e").string()) == 1);

  // Broken JSON.
  {
    std::ofstream out(tmp / "broken.json");
    out << "{ not json";
  }
  CHECK(run("gen-data --config " + (tmp / "broken.json").string() +
            " --out " + (tmp / "x").string()) == 1);

  // Missing input file is a runtime error, exit 2.
  CHECK(run("train" + c + " --data " + (tmp / "nowhere").string() +
            " --out " + (tmp / "m2").string()) == 2);
}

TEST_CASE("evaluate with the default config reproduces the frozen row") {
  // `evaluate --attack ood --num-s 100` on the shipped default config must
  // match the committed expectations for that detection row.
  const fs::path expectations = fs::path(HODA_TESTDATA_DIR) / "expectations.json";
  REQUIRE(fs::exists(expectations));

  TempTree tmp;
  const std::string cfg = std::string(HODA_CONFIG_DIR) + "/default.json";
  REQUIRE(run("evaluate --config " + cfg + " --attack ood --num-s 100 --out " +
              (tmp / "run").string()) == 0);

  // Parse the ood/full row out of detection.csv.
  std::ifstream det(tmp / "run" / "reports" / "detection.csv");
  REQUIRE(det.good());
  std::string line;
  std::getline(det, line);  // header
  double delta = -1, fpr = -1, detection = -1, auc = -1;
  while (std::getline(det, line)) {
    if (line.rfind("ood,100,full,", 0) != 0) continue;
    std::istringstream is(line.substr(13));
    std::string tok;
    std::getline(is, tok, ',');
    delta = std::stod(tok);
    std::getline(is, tok, ',');
    fpr = std::stod(tok);
    std::getline(is, tok, ',');
    detection = std::stod(tok);
    std::getline(is, tok, ',');
    auc = std::stod(tok);
  }
  REQUIRE(delta >= 0);

  // Pull the frozen values (flat JSON, parsed with string scanning to keep
  // this test independent of the library's JSON choices).
  const std::string frozen = slurp(expectations);
  const auto value_after = [&](const std::string& key, std::size_t from) {
    const auto kpos = frozen.find("\"" + key + "\"", from);
    REQUIRE(kpos != std::string::npos);
    const auto colon = frozen.find(':', kpos);
    return std::stod(frozen.substr(colon + 1));
  };
  const std::size_t ood_row = frozen.find("\"attack\": \"ood\"");
  REQUIRE(ood_row != std::string::npos);
  CHECK(std::abs(delta - value_after("delta", ood_row)) <= 1e-6);
  CHECK(std::abs(fpr - value_after("fpr", ood_row)) <= 0.005);
  CHECK(std::abs(detection - value_after("detection_rate", ood_row)) <= 0.005);
  CHECK(std::abs(auc - value_after("auc", ood_row)) <= 0.005);
}

TEST_CASE("config validation reports multiple violations at once") {
  TempTree tmp;
  {
    std::ofstream out(tmp / "bad.json");
    out << R"({"dataset": {"num_classes": 1, "dim": 1},
               "train": {"epochs": 0, "learning_rate": -1}})";
  }
  const std::string cmd = std::string(kCli) + " gen-data --config " +
                          (tmp / "bad.json").string() + " --out " +
                          (tmp / "out").string() + " 2>" +
                          (tmp / "err.txt").string();
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 1);
  const std::string err = slurp(tmp / "err.txt");
  CHECK(err.find("num_classes") != std::string::npos);
  CHECK(err.find("epochs") != std::string::npos);
  CHECK(err.find("learning_rate") != std::string::npos);
}
