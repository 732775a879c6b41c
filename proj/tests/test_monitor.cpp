#include "hoda/monitor.hpp"

#include "hoda/rng.hpp"

#include <doctest.h>

#include <thread>

using namespace hoda;

namespace {

// Calibration over a synthetic degree pool; bins and num_s configurable.
CalibrationResult make_calibration(int bins, int num_s, int num_seq = 200,
                                   std::uint64_t seed = 3) {
  Rng rng(seed);
  Eigen::VectorXi degrees(400);
  for (Eigen::Index i = 0; i < degrees.size(); ++i) {
    const double u = rng.uniform();
    degrees[i] = u < 0.7 ? rng.uniform_int(std::max(1, bins / 4))
                         : rng.uniform_int(bins);
  }
  SubclassifierSequence seq;
  for (int b = 0; b < bins; ++b) seq.indices.push_back(b);
  seq.name = "full";
  CalibrationConfig cfg;
  cfg.num_s = num_s;
  cfg.num_seq = num_seq;
  cfg.seed = seed;
  return calibrate_degrees(degrees, seq, cfg);
}

MonitorConfig make_config(int bins, int num_s,
                          WindowPolicy policy = WindowPolicy::tumbling) {
  MonitorConfig cfg;
  cfg.calibration = make_calibration(bins, num_s);
  cfg.window_policy = policy;
  return cfg;
}

}  // namespace

TEST_CASE("ingest computes hardness and evaluates at the window boundary") {
  Monitor monitor(make_config(5, 3));
  Eigen::VectorXi trace(5);
  trace << 2, 2, 2, 2, 2;  // degree 0
  auto v = monitor.ingest("alice", trace);
  CHECK(v.hardness == 0);
  CHECK_FALSE(v.evaluated);
  CHECK_FALSE(v.distance.has_value());

  trace << 0, 1, 1, 1, 1;  // degree 1
  v = monitor.ingest("alice", trace);
  CHECK_FALSE(v.evaluated);

  trace << 0, 1, 0, 1, 4;  // degree 4
  v = monitor.ingest("alice", trace);
  CHECK(v.evaluated);
  CHECK(v.distance.has_value());

  // Tumbling: histogram reset after evaluation.
  const auto state = monitor.user_state("alice");
  REQUIRE(state.has_value());
  CHECK(state->samples_seen == 3);
  CHECK(state->windows_completed == 1);
  CHECK(state->histogram.sum() == 0);
}

TEST_CASE("trace length must match calibration bins") {
  Monitor monitor(make_config(5, 3));
  Eigen::VectorXi bad(3);
  bad << 1, 1, 1;
  CHECK_THROWS_WITH_AS(monitor.ingest("u", bad),
                       doctest::Contains("does not match calibration bins"),
                       std::invalid_argument);
  CHECK_THROWS_AS(monitor.ingest_degree("u", 5), std::invalid_argument);
  CHECK_THROWS_AS(monitor.ingest_degree("u", -1), std::invalid_argument);
}

TEST_CASE("a replayed calibration sequence is never flagged at quantile 1") {
  // Build a tiny pool and calibration, then replay calibration sequence 0's
  // exact degree multiset as a user stream.
  Rng rng(17);
  Eigen::VectorXi degrees(60);
  for (Eigen::Index i = 0; i < degrees.size(); ++i)
    degrees[i] = rng.uniform_int(6);
  SubclassifierSequence seq;
  for (int b = 0; b < 6; ++b) seq.indices.push_back(b);
  seq.name = "full";
  CalibrationConfig ccfg;
  ccfg.num_s = 20;
  ccfg.num_seq = 30;
  ccfg.seed = 5;
  MonitorConfig mcfg;
  mcfg.calibration = calibrate_degrees(degrees, seq, ccfg);

  Monitor monitor(mcfg);
  for (int s = 0; s < 30; ++s) {
    const std::string user = "replayer-" + std::to_string(s);
    QueryVerdict last;
    for (const int idx : calibration_sequence_indices(ccfg, 60, s))
      last = monitor.ingest_degree(user, degrees[idx]);
    CHECK(last.evaluated);
    CHECK_FALSE(last.flagged);
  }
}

TEST_CASE("single-sample windows agree with hardness_core directly") {
  const auto cfg = make_config(8, 1);
  const Eigen::VectorXd normal_prob = normalize(cfg.calibration.normal);
  Monitor monitor(cfg);
  for (int d = 0; d < 8; ++d) {
    const auto v = monitor.ingest_degree("u" + std::to_string(d), d);
    CHECK(v.evaluated);
    HardnessHistogram h(8);
    h.add(d);
    CHECK(*v.distance == histogram_distance(h, cfg.calibration.normal));
  }
}

TEST_CASE("flags are sticky and strictly-greater is required") {
  auto cfg = make_config(4, 2);
  cfg.calibration.delta = 2.0;  // nothing can strictly exceed 2
  Monitor monitor(cfg);
  for (int i = 0; i < 10; ++i) {
    const auto v = monitor.ingest_degree("calm", i % 4);
    CHECK_FALSE(v.flagged);
  }

  auto loose = make_config(4, 2);
  loose.calibration.delta = -1.0;  // any evaluation flags
  Monitor strict(loose);
  auto v = strict.ingest_degree("spike", 0);
  CHECK_FALSE(v.flagged);  // window not complete yet
  v = strict.ingest_degree("spike", 0);
  CHECK(v.flagged);
  // Sticky across later windows even if later distances were fine.
  strict.ingest_degree("spike", 0);
  v = strict.ingest_degree("spike", 0);
  CHECK(v.flagged);
  const auto st = strict.user_state("spike");
  CHECK(st->flagged);
  CHECK(st->windows_completed == 2);
}

TEST_CASE("cumulative windows evaluate at multiples without reset") {
  Monitor monitor(make_config(6, 3, WindowPolicy::cumulative));
  int evaluations = 0;
  for (int i = 1; i <= 12; ++i) {
    const auto v = monitor.ingest_degree("u", i % 6);
    if (v.evaluated) ++evaluations;
    CHECK(v.evaluated == (i % 3 == 0));
  }
  CHECK(evaluations == 4);
  const auto st = monitor.user_state("u");
  CHECK(st->histogram.sum() == 12);  // never reset
  CHECK(st->windows_completed == 4);
}

TEST_CASE("snapshot users is ordered and consistent") {
  Monitor monitor(make_config(5, 4));
  CHECK(monitor.snapshot_users().empty());
  CHECK_FALSE(monitor.user_state("ghost").has_value());

  for (int i = 0; i < 7; ++i) monitor.ingest_degree("bob", i % 5);
  for (int i = 0; i < 3; ++i) monitor.ingest_degree("alice", 0);
  const auto users = monitor.snapshot_users();
  REQUIRE(users.size() == 2);
  CHECK(users[0].user_id == "alice");
  CHECK(users[1].user_id == "bob");
  CHECK(users[0].samples_seen == 3);
  CHECK(users[1].samples_seen == 7);
  CHECK(monitor.user_count() == 2);
}

TEST_CASE("per-user state is bin-sized, no samples retained") {
  const auto cfg = make_config(10, 5);
  Monitor monitor(cfg);
  for (int i = 0; i < 500; ++i) monitor.ingest_degree("heavy", i % 10);
  const auto st = monitor.user_state("heavy");
  CHECK(st->histogram.size() == 10);  // O(num_bins) regardless of traffic
  CHECK(st->samples_seen == 500);
  static_assert(std::is_same_v<decltype(UserState::histogram), Eigen::VectorXi>,
                "user state holds bin counts only");
}

TEST_CASE("tumbling verdicts depend only on their own window's events") {
  const auto cfg = make_config(6, 8);
  Rng rng(321);

  // Window 2's multiset fixed; permuting it or swapping window 1 entirely
  // must not change window 2's distance.
  std::vector<int> window1(8), window1_alt(8), window2(8);
  for (auto& d : window1) d = rng.uniform_int(6);
  for (auto& d : window1_alt) d = rng.uniform_int(6);
  for (auto& d : window2) d = rng.uniform_int(6);

  const auto second_window_distance = [&](std::vector<int> first,
                                          std::vector<int> second) {
    Monitor monitor(cfg);
    QueryVerdict last;
    for (const int d : first) last = monitor.ingest_degree("u", d);
    for (const int d : second) last = monitor.ingest_degree("u", d);
    REQUIRE(last.evaluated);
    return *last.distance;
  };

  const double base = second_window_distance(window1, window2);
  CHECK(second_window_distance(window1_alt, window2) == base);
  std::vector<int> permuted = window2;
  Rng perm_rng(99);
  perm_rng.shuffle(permuted);
  CHECK(second_window_distance(window1, permuted) == base);
}

TEST_CASE("interleaving users preserves per-user verdicts") {
  // Solo runs first.
  const auto cfg = make_config(6, 4);
  const int users = 5, events_per_user = 24;
  Rng gen(2024);
  std::vector<std::vector<int>> streams(users);
  for (auto& s : streams)
    for (int i = 0; i < events_per_user; ++i) s.push_back(gen.uniform_int(6));

  std::vector<std::vector<QueryVerdict>> solo(users);
  for (int u = 0; u < users; ++u) {
    Monitor monitor(cfg);
    for (const int d : streams[static_cast<std::size_t>(u)])
      solo[static_cast<std::size_t>(u)].push_back(
          monitor.ingest_degree("u", d));
  }

  for (int trial = 0; trial < 200; ++trial) {
    // Random interleaving: multiset of user ids in random order, stable
    // within each user.
    std::vector<int> slots;
    for (int u = 0; u < users; ++u)
      for (int i = 0; i < events_per_user; ++i) slots.push_back(u);
    Rng shuffle_rng(derive_seed(99, "interleave", trial));
    shuffle_rng.shuffle(slots);

    Monitor monitor(cfg);
    std::vector<int> next(users, 0);
    std::vector<std::vector<QueryVerdict>> got(users);
    for (const int u : slots) {
      const int d = streams[static_cast<std::size_t>(u)]
                           [static_cast<std::size_t>(next[static_cast<std::size_t>(u)]++)];
      got[static_cast<std::size_t>(u)].push_back(
          monitor.ingest_degree("user-" + std::to_string(u), d));
    }
    for (int u = 0; u < users; ++u) {
      REQUIRE(got[static_cast<std::size_t>(u)].size() ==
              solo[static_cast<std::size_t>(u)].size());
      for (std::size_t i = 0; i < solo[static_cast<std::size_t>(u)].size(); ++i) {
        const auto& a = solo[static_cast<std::size_t>(u)][i];
        const auto& b = got[static_cast<std::size_t>(u)][i];
        CHECK(a.hardness == b.hardness);
        CHECK(a.evaluated == b.evaluated);
        CHECK(a.flagged == b.flagged);
        CHECK(a.distance == b.distance);
      }
    }
  }
}

TEST_CASE("concurrent ingest keeps counts exact") {
  Monitor monitor(make_config(8, 50));
  const int threads = 8, per_thread = 500;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&monitor, t] {
      Rng rng(derive_seed(5, "thread", t));
      for (int i = 0; i < per_thread; ++i) {
        monitor.ingest_degree("shared", rng.uniform_int(8));
        monitor.ingest_degree("own-" + std::to_string(t), rng.uniform_int(8));
      }
    });
  }
  for (auto& t : pool) t.join();
  CHECK(monitor.user_state("shared")->samples_seen == threads * per_thread);
  for (int t = 0; t < threads; ++t)
    CHECK(monitor.user_state("own-" + std::to_string(t))->samples_seen ==
          per_thread);
  CHECK(monitor.total_queries() == 2 * threads * per_thread);
}
