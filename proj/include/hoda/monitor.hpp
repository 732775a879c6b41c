#pragma once

// Online half of the detector: per-user hardness histograms with windowed
// distance checks against the calibrated normal histogram. State per user is
// one integer vector plus counters; no query features are ever retained.

#include "hoda/calibration.hpp"
#include "hoda/hardness.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace hoda {

enum class WindowPolicy { tumbling, cumulative };
enum class FlagAction { flag_only, reject_user };

WindowPolicy window_policy_from_string(const std::string& s);
FlagAction flag_action_from_string(const std::string& s);
const char* to_string(WindowPolicy p);
const char* to_string(FlagAction a);

struct MonitorConfig {
  CalibrationResult calibration;
  WindowPolicy window_policy = WindowPolicy::tumbling;
  FlagAction action_on_flag = FlagAction::flag_only;

  int num_s() const { return calibration.config.num_s; }
  int num_bins() const { return calibration.num_bins(); }
};

struct QueryVerdict {
  int hardness = 0;
  bool evaluated = false;            // window boundary reached by this query
  std::optional<double> distance;    // present iff evaluated
  bool flagged = false;              // user's (sticky) flag after this query
};

struct UserState {
  std::string user_id;
  Eigen::VectorXi histogram;  // current-window bin counts (tumbling resets it)
  std::int64_t samples_seen = 0;
  bool flagged = false;
  std::int64_t windows_completed = 0;
};

/// Safe for concurrent ingest: events for the same user are serialized,
/// different users proceed in parallel, and snapshots never observe a
/// half-applied ingest.
class Monitor {
 public:
  explicit Monitor(MonitorConfig cfg);

  /// Computes the trace's hardness degree and feeds it to the user's
  /// histogram. When the window boundary is reached (tumbling: histogram
  /// total == num_s; cumulative: samples_seen is a positive multiple of
  /// num_s) the distance to H_n is evaluated and the user is flagged when it
  /// strictly exceeds delta. Flags are sticky.
  QueryVerdict ingest(const std::string& user_id,
                      const Eigen::Ref<const Eigen::VectorXi>& trace);

  /// Same window semantics for a precomputed degree; used by replay and
  /// population simulation so both share this code path.
  QueryVerdict ingest_degree(const std::string& user_id, int degree);

  /// Point-in-time view of all users, sorted by user_id.
  std::vector<UserState> snapshot_users() const;

  std::optional<UserState> user_state(const std::string& user_id) const;
  std::size_t user_count() const;
  std::int64_t total_queries() const;

  const MonitorConfig& config() const { return cfg_; }

 private:
  struct PerUser {
    mutable std::mutex mutex;
    UserState state;
  };

  std::shared_ptr<PerUser> find_or_create(const std::string& user_id);

  MonitorConfig cfg_;
  Eigen::VectorXd normal_prob_;  // normalize(H_n), fixed at construction
  mutable std::mutex map_mutex_;
  std::unordered_map<std::string, std::shared_ptr<PerUser>> users_;
  std::int64_t total_queries_ = 0;
};

}  // namespace hoda
