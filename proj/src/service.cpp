#include "hoda/service.hpp"

#include "io_util.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace hoda {
namespace {

using nlohmann::json;

json error_response(const json& request, const std::string& message) {
  json r;
  r["id"] = request.contains("id") ? request["id"] : json(nullptr);
  r["error"] = message;
  return r;
}

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, 0);
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

DetectionServer::DetectionServer(SnapshotModel model,
                                 CalibrationResult calibration,
                                 ServiceConfig cfg)
    : model_(std::move(model)),
      calibration_(std::move(calibration)),
      cfg_(std::move(cfg)) {
  if (calibration_.sequence.size() != calibration_.num_bins())
    throw std::invalid_argument(
        "calibration file inconsistent: sequence length differs from bins");
  calibration_.sequence.validate(model_.epochs());
  MonitorConfig mcfg;
  mcfg.calibration = calibration_;
  mcfg.window_policy = cfg_.window_policy;
  mcfg.action_on_flag = cfg_.action_on_flag;
  monitor_ = std::make_unique<Monitor>(std::move(mcfg));
}

DetectionServer::~DetectionServer() { stop(); }

json DetectionServer::handle_query(const json& request) {
  if (!request.contains("user") || !request["user"].is_string())
    return error_response(request, "query needs a string 'user'");
  const std::string user = request["user"].get<std::string>();
  if (user.empty() || user.size() > 128)
    return error_response(request, "user id must be 1..128 bytes");
  if (!request.contains("features") || !request["features"].is_array())
    return error_response(request, "query needs a 'features' array");
  const auto& jf = request["features"];
  if (static_cast<int>(jf.size()) != model_.input_dim())
    return error_response(request,
                          "feature dimension mismatch: expected " +
                              std::to_string(model_.input_dim()) + ", got " +
                              std::to_string(jf.size()));
  Eigen::VectorXd x(model_.input_dim());
  for (int d = 0; d < model_.input_dim(); ++d) {
    if (!jf[static_cast<std::size_t>(d)].is_number())
      return error_response(request, "features must be numbers");
    x[d] = jf[static_cast<std::size_t>(d)].get<double>();
  }

  json r;
  r["id"] = request.contains("id") ? request["id"] : json(nullptr);
  r["user"] = user;

  if (cfg_.action_on_flag == FlagAction::reject_user) {
    const auto state = monitor_->user_state(user);
    if (state && state->flagged) {
      r["refused"] = true;
      r["flagged"] = true;
      r["reason"] = "user flagged";
      return r;
    }
  }

  // Evaluate the whole subclassifier sequence for the trace; the serving
  // prediction is the last snapshot's argmax.
  const auto& seq = calibration_.sequence;
  Eigen::VectorXi trace(seq.size());
  for (int k = 0; k < seq.size(); ++k)
    trace[k] =
        model_.predict_one(seq.indices[static_cast<std::size_t>(k)], x);
  const QueryVerdict verdict = monitor_->ingest(user, trace);

  r["predicted_label"] = model_.predict_one(model_.epochs() - 1, x);
  r["hardness"] = verdict.hardness;
  r["window_evaluated"] = verdict.evaluated;
  if (verdict.distance) r["distance"] = *verdict.distance;
  r["flagged"] = verdict.flagged;
  return r;
}

json DetectionServer::handle_admin(const json& request) {
  if (!request.contains("query") || !request["query"].is_string())
    return error_response(request, "admin needs a string 'query'");
  const std::string q = request["query"].get<std::string>();
  json r;
  r["id"] = request.contains("id") ? request["id"] : json(nullptr);

  const auto user_to_json = [](const UserState& st) {
    json u;
    u["user"] = st.user_id;
    u["samples_seen"] = st.samples_seen;
    u["flagged"] = st.flagged;
    u["windows_completed"] = st.windows_completed;
    u["histogram"] = std::vector<int>(
        st.histogram.data(), st.histogram.data() + st.histogram.size());
    return u;
  };

  if (q == "health") {
    r["status"] = "ok";
    r["users"] = monitor_->user_count();
    r["queries"] = monitor_->total_queries();
    return r;
  }
  if (q == "calibration") {
    r["delta"] = calibration_.delta;
    r["num_s"] = calibration_.config.num_s;
    r["num_bins"] = calibration_.num_bins();
    r["sequence"] = calibration_.sequence.name;
    r["window_policy"] = to_string(cfg_.window_policy);
    r["action_on_flag"] = to_string(cfg_.action_on_flag);
    return r;
  }
  if (q == "users") {
    r["users"] = json::array();
    for (const auto& st : monitor_->snapshot_users())
      r["users"].push_back(user_to_json(st));
    return r;
  }
  if (q.rfind("user:", 0) == 0) {
    const std::string id = q.substr(5);
    const auto state = monitor_->user_state(id);
    if (!state) {
      r["error"] = "user not found";
      r["not_found"] = true;
      return r;
    }
    r.update(user_to_json(*state));
    return r;
  }
  return error_response(request, "unknown admin query '" + q + "'");
}

json DetectionServer::handle_request(const json& request) {
  if (!request.is_object())
    return error_response(request, "request must be a JSON object");
  const std::string kind = request.value("kind", "");
  if (kind == "query") return handle_query(request);
  if (kind == "admin") return handle_admin(request);
  return error_response(request, "unknown request kind '" + kind + "'");
}

void DetectionServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(cfg_.port));
  if (::inet_pton(AF_INET, cfg_.listen_host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("bad listen address " + cfg_.listen_host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("cannot listen on " + cfg_.listen_host + ":" +
                             std::to_string(cfg_.port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void DetectionServer::run() {
  if (!running_) start();
  if (accept_thread_.joinable()) accept_thread_.join();
}

void DetectionServer::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 100);
    if (!running_) break;
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    std::lock_guard lock(conn_mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    open_fds_.push_back(fd);
    connections_.emplace_back([this, fd] { connection_loop(fd); });
  }
}

void DetectionServer::connection_loop(int fd) {
  std::string buffer;
  char chunk[4096];
  while (running_) {
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t pos = 0;
    while (true) {
      const std::size_t nl = buffer.find('\n', pos);
      if (nl == std::string::npos) break;
      const std::string line = buffer.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      json response;
      try {
        response = handle_request(json::parse(line));
      } catch (const json::exception&) {
        json r;
        r["id"] = nullptr;
        r["error"] = "malformed JSON record";
        response = r;
      } catch (const std::exception& e) {
        json r;
        r["id"] = nullptr;
        r["error"] = e.what();
        response = r;
      }
      if (!send_all(fd, response.dump() + "\n")) {
        pos = buffer.size();
        break;
      }
    }
    buffer.erase(0, pos);
  }
  ::close(fd);
  std::lock_guard lock(conn_mutex_);
  open_fds_.erase(std::remove(open_fds_.begin(), open_fds_.end(), fd),
                  open_fds_.end());
}

void DetectionServer::stop() {
  if (!running_.exchange(false)) return;
  // The accept loop polls with a timeout, so it notices running_ == false
  // within one tick; only close the socket after it has exited.
  if (accept_thread_.joinable() &&
      accept_thread_.get_id() != std::this_thread::get_id())
    accept_thread_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::vector<std::thread> conns;
  {
    // Wake any connection thread blocked in recv.
    std::lock_guard lock(conn_mutex_);
    for (const int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    conns.swap(connections_);
  }
  for (auto& t : conns)
    if (t.joinable()) t.join();
  write_snapshot();
}

void DetectionServer::write_snapshot() const {
  if (cfg_.shutdown_snapshot_path.empty()) return;
  json j;
  j["format"] = "hoda-user-snapshot v1";
  j["users"] = json::array();
  for (const auto& st : monitor_->snapshot_users()) {
    json u;
    u["user"] = st.user_id;
    u["samples_seen"] = st.samples_seen;
    u["flagged"] = st.flagged;
    u["windows_completed"] = st.windows_completed;
    u["histogram"] = std::vector<int>(
        st.histogram.data(), st.histogram.data() + st.histogram.size());
    j["users"].push_back(u);
  }
  auto out = detail::open_out(cfg_.shutdown_snapshot_path);
  out << j.dump(2) << "\n";
}

ServiceClient::ServiceClient(const std::string& host, int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw std::runtime_error("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw std::runtime_error("bad host address " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw std::runtime_error("cannot connect to " + host + ":" +
                             std::to_string(port));
  }
}

ServiceClient::~ServiceClient() {
  if (fd_ >= 0) ::close(fd_);
}

nlohmann::json ServiceClient::request(const nlohmann::json& payload) {
  if (!send_all(fd_, payload.dump() + "\n"))
    throw std::runtime_error("connection closed while sending");
  while (true) {
    const std::size_t nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      const std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return nlohmann::json::parse(line);
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n <= 0) throw std::runtime_error("connection closed while receiving");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::vector<nlohmann::json> replay_stream(const std::string& host, int port,
                                          const std::string& user_id,
                                          const Eigen::MatrixXd& features) {
  ServiceClient client(host, port);
  std::vector<nlohmann::json> responses;
  responses.reserve(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    nlohmann::json q;
    q["kind"] = "query";
    q["id"] = "r" + std::to_string(i);
    q["user"] = user_id;
    std::vector<double> row(static_cast<std::size_t>(features.cols()));
    for (Eigen::Index d = 0; d < features.cols(); ++d)
      row[static_cast<std::size_t>(d)] = features(i, d);
    q["features"] = row;
    responses.push_back(client.request(q));
  }
  return responses;
}

}  // namespace hoda
