#pragma once

// Detection gateway: newline-delimited JSON over TCP, wrapping the monitor.
// Request kinds are "query" and "admin"; every response echoes the request's
// correlation id. One thread per connection keeps per-connection response
// order equal to request order.

#include "hoda/calibration.hpp"
#include "hoda/model.hpp"
#include "hoda/monitor.hpp"
#include "hoda/sequence.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace hoda {

struct ServiceConfig {
  std::string listen_host = "127.0.0.1";
  int port = 0;  // 0 binds an ephemeral port
  WindowPolicy window_policy = WindowPolicy::tumbling;
  FlagAction action_on_flag = FlagAction::flag_only;
  // Written on graceful shutdown when non-empty: a JSON snapshot of all
  // user states.
  std::filesystem::path shutdown_snapshot_path;
};

class DetectionServer {
 public:
  /// Validates that the calibration's sequence fits the model (every epoch
  /// index in range, bin count equal to sequence length).
  DetectionServer(SnapshotModel model, CalibrationResult calibration,
                  ServiceConfig cfg);
  ~DetectionServer();

  DetectionServer(const DetectionServer&) = delete;
  DetectionServer& operator=(const DetectionServer&) = delete;

  /// Bind, listen and serve on a background accept thread.
  void start();

  /// Blocks until stop() is called from elsewhere (e.g. a signal handler).
  void run();

  /// Graceful shutdown: stops accepting, drains connection threads, writes
  /// the user-state snapshot.
  void stop();

  int port() const { return port_; }
  const Monitor& monitor() const { return *monitor_; }

  /// Request -> response mapping, exposed for tests; serve() uses exactly
  /// this per line.
  nlohmann::json handle_request(const nlohmann::json& request);

 private:
  void accept_loop();
  void connection_loop(int fd);
  nlohmann::json handle_query(const nlohmann::json& request);
  nlohmann::json handle_admin(const nlohmann::json& request);
  void write_snapshot() const;

  SnapshotModel model_;
  CalibrationResult calibration_;
  ServiceConfig cfg_;
  std::unique_ptr<Monitor> monitor_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<std::thread> connections_;
  std::vector<int> open_fds_;
};

/// Minimal blocking client for the wire protocol.
class ServiceClient {
 public:
  ServiceClient(const std::string& host, int port);
  ~ServiceClient();

  ServiceClient(const ServiceClient&) = delete;
  ServiceClient& operator=(const ServiceClient&) = delete;

  nlohmann::json request(const nlohmann::json& payload);

 private:
  int fd_ = -1;
  std::string buffer_;
};

/// Replays an attack-stream file as queries for one user; returns the
/// verdict records in request order.
std::vector<nlohmann::json> replay_stream(const std::string& host, int port,
                                          const std::string& user_id,
                                          const Eigen::MatrixXd& features);

}  // namespace hoda
