#pragma once

#include <atomic>
#include <cstdint>
#include <istream>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "nfp/classifier.hpp"
#include "nfp/fingerprint.hpp"

namespace nfp {

// One request line in, one reply line out (no trailing newline).
// Requests: {"id": <any json>, "input": [reals]}. Replies:
//   {"id":..., "accepted":bool, "best_class":int, "min_d":real}
// or {"id":..., "error":"parse"|"malformed"|"dimension"}.
// Replies never carry suite contents (directions, targets, or seed) —
// the suite is the detection private key.
std::string handle_request_line(const std::string& line,
                                const MlpClassifier& model,
                                const FingerprintSuite& suite);

// Serves newline-delimited requests from `in` until EOF. Empty lines are
// skipped; every other line gets exactly one reply line on `out`.
void run_serve_loop(std::istream& in, std::ostream& out,
                    const MlpClassifier& model, const FingerprintSuite& suite);

// Minimal thread-per-client TCP server over a frozen model + suite.
// port 0 binds an ephemeral port (see port() after construction).
class TcpServer {
 public:
  TcpServer(const MlpClassifier& model, const FingerprintSuite& suite,
            uint16_t port);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  uint16_t port() const { return port_; }
  void start();  // launches the accept loop; returns immediately
  void stop();   // closes the listener and joins all threads

 private:
  void accept_loop();
  void client_loop(int fd);

  const MlpClassifier& model_;
  const FingerprintSuite& suite_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex clients_mutex_;
  std::vector<std::thread> client_threads_;
};

}  // namespace nfp
