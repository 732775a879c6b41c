#include "hoda/monitor.hpp"

#include <algorithm>
#include <stdexcept>

namespace hoda {

WindowPolicy window_policy_from_string(const std::string& s) {
  if (s == "tumbling") return WindowPolicy::tumbling;
  if (s == "cumulative") return WindowPolicy::cumulative;
  throw std::invalid_argument("unknown window policy '" + s +
                              "' (expected tumbling or cumulative)");
}

FlagAction flag_action_from_string(const std::string& s) {
  if (s == "flag_only") return FlagAction::flag_only;
  if (s == "reject_user") return FlagAction::reject_user;
  throw std::invalid_argument("unknown flag action '" + s +
                              "' (expected flag_only or reject_user)");
}

const char* to_string(WindowPolicy p) {
  return p == WindowPolicy::tumbling ? "tumbling" : "cumulative";
}

const char* to_string(FlagAction a) {
  return a == FlagAction::flag_only ? "flag_only" : "reject_user";
}

Monitor::Monitor(MonitorConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.num_bins() < 1)
    throw std::invalid_argument("monitor: calibration has no bins");
  if (cfg_.num_s() < 1)
    throw std::invalid_argument("monitor: calibration num_s must be >= 1");
  normal_prob_ = normalize(cfg_.calibration.normal);
}

std::shared_ptr<Monitor::PerUser> Monitor::find_or_create(
    const std::string& user_id) {
  std::lock_guard lock(map_mutex_);
  auto it = users_.find(user_id);
  if (it == users_.end()) {
    auto user = std::make_shared<PerUser>();
    user->state.user_id = user_id;
    user->state.histogram = Eigen::VectorXi::Zero(cfg_.num_bins());
    it = users_.emplace(user_id, std::move(user)).first;
  }
  ++total_queries_;
  return it->second;
}

QueryVerdict Monitor::ingest(const std::string& user_id,
                             const Eigen::Ref<const Eigen::VectorXi>& trace) {
  if (trace.size() != cfg_.num_bins())
    throw std::invalid_argument(
        "trace length " + std::to_string(trace.size()) +
        " does not match calibration bins " + std::to_string(cfg_.num_bins()));
  return ingest_degree(user_id, hardness_degree(trace));
}

QueryVerdict Monitor::ingest_degree(const std::string& user_id, int degree) {
  if (degree < 0 || degree >= cfg_.num_bins())
    throw std::invalid_argument("hardness degree outside calibration bins");
  auto user = find_or_create(user_id);
  std::lock_guard lock(user->mutex);
  UserState& st = user->state;

  st.histogram[degree] += 1;
  st.samples_seen += 1;

  QueryVerdict verdict;
  verdict.hardness = degree;

  const int num_s = cfg_.num_s();
  const std::int64_t window_total =
      cfg_.window_policy == WindowPolicy::tumbling ? st.histogram.sum()
                                                   : st.samples_seen;
  const bool boundary = cfg_.window_policy == WindowPolicy::tumbling
                            ? window_total == num_s
                            : window_total % num_s == 0;
  if (boundary) {
    const double dist = pearson_distance(
        normalize(Eigen::VectorXd(st.histogram.cast<double>())), normal_prob_);
    verdict.evaluated = true;
    verdict.distance = dist;
    if (dist > cfg_.calibration.delta) st.flagged = true;  // strict, sticky
    st.windows_completed += 1;
    if (cfg_.window_policy == WindowPolicy::tumbling) st.histogram.setZero();
  }
  verdict.flagged = st.flagged;
  return verdict;
}

std::vector<UserState> Monitor::snapshot_users() const {
  std::vector<std::shared_ptr<PerUser>> users;
  {
    std::lock_guard lock(map_mutex_);
    users.reserve(users_.size());
    for (const auto& [id, user] : users_) users.push_back(user);
  }
  std::vector<UserState> out;
  out.reserve(users.size());
  for (const auto& user : users) {
    std::lock_guard lock(user->mutex);
    out.push_back(user->state);
  }
  std::sort(out.begin(), out.end(),
            [](const UserState& a, const UserState& b) {
              return a.user_id < b.user_id;
            });
  return out;
}

std::optional<UserState> Monitor::user_state(const std::string& user_id) const {
  std::shared_ptr<PerUser> user;
  {
    std::lock_guard lock(map_mutex_);
    const auto it = users_.find(user_id);
    if (it == users_.end()) return std::nullopt;
    user = it->second;
  }
  std::lock_guard lock(user->mutex);
  return user->state;
}

std::size_t Monitor::user_count() const {
  std::lock_guard lock(map_mutex_);
  return users_.size();
}

std::int64_t Monitor::total_queries() const {
  std::lock_guard lock(map_mutex_);
  return total_queries_;
}

}  // namespace hoda
