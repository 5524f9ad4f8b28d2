#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dwmarket/transport/network.hpp"

namespace dwm {

namespace tcp {

struct HostPort {
  std::string host;
  std::string port;
};

/// "host:port"; an empty host means all interfaces when listening.
inline HostPort parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon + 1 == addr.size()) {
    throw ProtocolError("address '" + addr + "' is not of the form host:port");
  }
  return {addr.substr(0, colon), addr.substr(colon + 1)};
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void shutdown_both() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void send_all(std::string_view data) const {
    while (!data.empty()) {
      const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_ = -1;
};

/// Waits until fd is readable. False on timeout.
inline bool wait_readable(int fd, Clock::time_point deadline) {
  for (;;) {
    const auto now = Clock::now();
    int timeout_ms = -1;
    if (deadline != Clock::time_point::max()) {
      if (now >= deadline) return false;
      timeout_ms = static_cast<int>(
          std::min<long long>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1,
                              1 << 30));
    }
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, timeout_ms);
    if (r > 0) return true;
    if (r == 0) {
      if (deadline == Clock::time_point::max()) continue;
      return false;
    }
    if (errno != EINTR) throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
  }
}

inline Socket listen_on(const std::string& addr) {
  const HostPort hp = parse_address(addr);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(hp.host.empty() ? nullptr : hp.host.c_str(), hp.port.c_str(), &hints, &res);
  if (rc != 0) throw ProtocolError("cannot resolve '" + addr + "': " + ::gai_strerror(rc));
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) throw ProtocolError(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(s.fd(), res->ai_addr, res->ai_addrlen) != 0) {
    throw ProtocolError("cannot bind '" + addr + "': " + std::strerror(errno));
  }
  if (::listen(s.fd(), 256) != 0) throw ProtocolError(std::string("listen: ") + std::strerror(errno));
  return s;
}

inline std::string local_address(const Socket& s) {
  sockaddr_in sa{};
  socklen_t len = sizeof sa;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&sa), &len) != 0) {
    throw ProtocolError(std::string("getsockname: ") + std::strerror(errno));
  }
  char host[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &sa.sin_addr, host, sizeof host);
  return std::string(host) + ":" + std::to_string(ntohs(sa.sin_port));
}

/// Connects, retrying refused connections until the deadline.
inline Socket connect_to(const std::string& addr, Clock::time_point deadline) {
  const HostPort hp = parse_address(addr);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(hp.host.empty() ? "127.0.0.1" : hp.host.c_str(), hp.port.c_str(), &hints, &res);
  if (rc != 0) throw ProtocolError("cannot resolve '" + addr + "': " + ::gai_strerror(rc));
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  for (;;) {
    Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    if (!s.valid()) throw ProtocolError(std::string("socket: ") + std::strerror(errno));
    if (::connect(s.fd(), res->ai_addr, res->ai_addrlen) == 0) {
      const int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return s;
    }
    const int err = errno;
    if ((err != ECONNREFUSED && err != EINTR) || Clock::now() >= deadline) {
      throw ProtocolError("cannot connect to '" + addr + "': " + std::strerror(err));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

/// Splits a byte stream into newline-terminated lines.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  /// Next line without its terminator; nullopt on timeout. Throws ProtocolError on EOF.
  std::optional<std::string> read_line(Clock::time_point deadline = Clock::time_point::max()) {
    for (;;) {
      if (auto nl = buffer_.find('\n', scanned_); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        scanned_ = 0;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      scanned_ = buffer_.size();
      if (!wait_readable(fd_, deadline)) return std::nullopt;
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n == 0) throw ProtocolError("connection closed by peer");
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("recv failed: ") + std::strerror(errno));
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
  std::size_t scanned_ = 0;
};

}  // namespace tcp

/// Agent side of a TCP connection.
class TcpAgentLink : public AgentLink {
 public:
  explicit TcpAgentLink(tcp::Socket socket) : socket_(std::move(socket)), reader_(socket_.fd()) {}

  static TcpAgentLink connect(const std::string& addr, std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
    return TcpAgentLink(tcp::connect_to(addr, Clock::now() + timeout));
  }

  void send(const Message& msg) override { socket_.send_all(encode(msg) + "\n"); }

  std::optional<Message> receive(Clock::time_point deadline) override {
    auto line = reader_.read_line(deadline);
    if (!line) return std::nullopt;
    return decode(*line);
  }

 private:
  tcp::Socket socket_;
  tcp::LineReader reader_;
};

/// Coordinator endpoint: accepts agent connections, one reader thread per connection.
class TcpNetwork : public MessageHub {
 public:
  TcpNetwork(std::size_t horizon, const std::string& listen_addr)
      : MessageHub(horizon), listener_(tcp::listen_on(listen_addr)), address_(tcp::local_address(listener_)) {}

  ~TcpNetwork() override { shutdown(); }

  /// Bound address, with the actual port when listening on port 0.
  const std::string& address() const { return address_; }

  /// Accepts connections until every expected id has registered, then stops listening.
  void accept_registrations(const std::set<std::string>& expected, Clock::time_point deadline) {
    accepting_ = true;
    std::thread acceptor([this] { accept_loop(); });
    try {
      await_registrations(expected, deadline);
    } catch (...) {
      accepting_ = false;
      acceptor.join();
      listener_.reset();
      throw;
    }
    accepting_ = false;
    acceptor.join();
    listener_.reset();
  }

  void shutdown() override {
    if (stopped_) return;
    stopped_ = true;
    accepting_ = false;
    send_shutdown_to_all();
    close_all_links();
    std::vector<std::thread> readers;
    {
      std::lock_guard lock(readers_mutex_);
      readers.swap(readers_);
    }
    for (auto& t : readers) {
      if (t.joinable()) t.join();
    }
    inbox_.close();
  }

 private:
  class Link : public CoordinatorLink {
   public:
    explicit Link(std::shared_ptr<tcp::Socket> s) : socket_(std::move(s)) {}
    void send(const Message& msg) override {
      std::lock_guard lock(mutex_);
      if (closed_) throw ProtocolError("connection is closed");
      socket_->send_all(encode(msg) + "\n");
    }
    void close() override {
      std::lock_guard lock(mutex_);
      closed_ = true;
      socket_->shutdown_both();
    }

   private:
    std::shared_ptr<tcp::Socket> socket_;
    std::mutex mutex_;
    bool closed_ = false;
  };

  void accept_loop() {
    while (accepting_) {
      if (!tcp::wait_readable(listener_.fd(), Clock::now() + std::chrono::milliseconds(50))) continue;
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) continue;
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto sock = std::make_shared<tcp::Socket>(fd);
      const std::size_t conn = next_connection_++;
      add_link(conn, std::make_unique<Link>(sock));
      std::lock_guard lock(readers_mutex_);
      readers_.emplace_back([this, conn, sock] { read_loop(conn, sock); });
    }
  }

  void read_loop(std::size_t conn, std::shared_ptr<tcp::Socket> sock) {
    tcp::LineReader reader(sock->fd());
    try {
      for (;;) {
        auto line = reader.read_line();
        if (!line) continue;
        if (!inbox_.push(Inbound{conn, decode(*line), {}})) return;
      }
    } catch (const std::exception& e) {
      inbox_.push(Inbound{conn, std::nullopt, e.what()});
    }
  }

  tcp::Socket listener_;
  std::string address_;
  std::atomic<bool> accepting_{false};
  std::size_t next_connection_ = 0;
  std::mutex readers_mutex_;
  std::vector<std::thread> readers_;
  bool stopped_ = false;
};

/// Connects an agent to a coordinator and serves it until shutdown.
inline void run_tcp_agent(Agent& agent, const std::string& addr,
                          std::chrono::milliseconds connect_timeout = std::chrono::seconds(10)) {
  auto link = TcpAgentLink::connect(addr, connect_timeout);
  run_agent(agent, link);
}

/// Runs agents on background threads, each over its own TCP connection.
class TcpAgentPool {
 public:
  TcpAgentPool(std::vector<std::shared_ptr<Agent>> agents, const std::string& addr) : agents_(std::move(agents)) {
    errors_.resize(agents_.size());
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      threads_.emplace_back([this, i, addr] {
        try {
          run_tcp_agent(*agents_[i], addr);
        } catch (const std::exception& e) {
          errors_[i] = e.what();
        }
      });
    }
  }
  ~TcpAgentPool() { join(); }

  /// Waits for every agent to finish; returns the failures as "id: message".
  std::vector<std::string> join() {
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      if (!errors_[i].empty()) out.push_back(agents_[i]->id() + ": " + errors_[i]);
    }
    return out;
  }

  const std::vector<std::shared_ptr<Agent>>& agents() const { return agents_; }

 private:
  std::vector<std::shared_ptr<Agent>> agents_;
  std::vector<std::string> errors_;
  std::vector<std::thread> threads_;
};

}  // namespace dwm
