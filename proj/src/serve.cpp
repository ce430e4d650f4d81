#include "nfp/serve.hpp"

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <utility>

#include "json.hpp"

namespace nfp {

namespace {

std::string error_reply(const nlohmann::json& id, const char* kind) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["error"] = kind;
  return j.dump();
}

}  // namespace

std::string handle_request_line(const std::string& line,
                                const MlpClassifier& model,
                                const FingerprintSuite& suite) {
  nlohmann::json req = nlohmann::json::parse(line, nullptr, false);
  if (req.is_discarded()) return error_reply(nullptr, "parse");
  nlohmann::json id = req.contains("id") ? req["id"] : nlohmann::json(nullptr);
  if (!req.is_object() || !req.contains("input") || !req["input"].is_array())
    return error_reply(id, "malformed");
  std::vector<double> x;
  x.reserve(req["input"].size());
  for (const auto& v : req["input"]) {
    if (!v.is_number()) return error_reply(id, "malformed");
    const double d = v.get<double>();
    if (!std::isfinite(d)) return error_reply(id, "malformed");
    x.push_back(d);
  }
  if (x.size() != model.input_dim()) return error_reply(id, "dimension");
  const DetectionVerdict verdict = detect(model, x, suite);
  nlohmann::ordered_json j;
  j["id"] = id;
  j["accepted"] = verdict.accepted;
  j["best_class"] = verdict.best_class;
  j["min_d"] = verdict.per_class_d[static_cast<std::size_t>(verdict.best_class)];
  return j.dump();
}

void run_serve_loop(std::istream& in, std::ostream& out,
                    const MlpClassifier& model, const FingerprintSuite& suite) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_request_line(line, model, suite) << "\n";
    out.flush();
  }
}

TcpServer::TcpServer(const MlpClassifier& model, const FingerprintSuite& suite,
                     uint16_t port)
    : model_(model), suite_(suite) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(listen_fd_);
    throw std::runtime_error("bind() failed on port " + std::to_string(port));
  }
  if (::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    throw std::runtime_error("listen() failed");
  }
  socklen_t len = sizeof addr;
  if (::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len) < 0) {
    ::close(listen_fd_);
    throw std::runtime_error("getsockname() failed");
  }
  port_ = ntohs(addr.sin_port);
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> clients;
  {
    std::lock_guard<std::mutex> lock(clients_mutex_);
    clients.swap(client_threads_);
  }
  for (auto& t : clients)
    if (t.joinable()) t.join();
}

void TcpServer::accept_loop() {
  while (!stopping_.load()) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (stopping_.load()) break;
      continue;  // transient accept failure
    }
    std::lock_guard<std::mutex> lock(clients_mutex_);
    client_threads_.emplace_back([this, fd] { client_loop(fd); });
  }
}

void TcpServer::client_loop(int fd) {
  std::string pending;
  char buf[4096];
  while (true) {
    const ssize_t got = ::recv(fd, buf, sizeof buf, 0);
    if (got <= 0) break;
    pending.append(buf, static_cast<std::size_t>(got));
    std::size_t nl;
    while ((nl = pending.find('\n')) != std::string::npos) {
      std::string line = pending.substr(0, nl);
      pending.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::string reply = handle_request_line(line, model_, suite_) + "\n";
      std::size_t sent = 0;
      while (sent < reply.size()) {
        const ssize_t n = ::send(fd, reply.data() + sent, reply.size() - sent, 0);
        if (n <= 0) {
          ::close(fd);
          return;
        }
        sent += static_cast<std::size_t>(n);
      }
    }
  }
  ::close(fd);
}

}  // namespace nfp
