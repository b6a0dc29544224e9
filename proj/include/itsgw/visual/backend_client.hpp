#pragma once

// Client side of the NDJSON backend protocol. The backend is either a child
// process speaking over its stdin/stdout or a TCP peer.

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "itsgw/core/base64.hpp"
#include "itsgw/visual/caption.hpp"
#include "json.hpp"

extern char** environ;

namespace itsgw::visual {

using json = nlohmann::json;

inline constexpr int kProtocolVersion = 1;

/// Where a backend lives: a shell command, or "host:port".
struct BackendEndpoint {
  std::string command;
  std::string tcp;

  bool empty() const noexcept { return command.empty() && tcp.empty(); }
  std::string describe() const { return command.empty() ? "tcp " + tcp : "command '" + command + "'"; }
};

/// One live connection: line-oriented reads and writes with deadlines.
class BackendConnection {
 public:
  using clock = std::chrono::steady_clock;

  BackendConnection() = default;
  BackendConnection(const BackendConnection&) = delete;
  BackendConnection& operator=(const BackendConnection&) = delete;
  ~BackendConnection() { close(); }

  static std::unique_ptr<BackendConnection> open(const BackendEndpoint& ep) {
    auto c = std::make_unique<BackendConnection>();
    if (!ep.command.empty())
      c->spawn(ep.command);
    else if (!ep.tcp.empty())
      c->connect_tcp(ep.tcp);
    else
      fail(errc::invalid_config, "no backend configured");
    return c;
  }

  bool is_open() const noexcept { return read_fd_ >= 0; }

  /// Writes all of `data`, reading any available input into the buffer while
  /// the peer is not accepting bytes, so neither side can deadlock.
  void write_all(std::string_view data, clock::time_point deadline) {
    std::size_t off = 0;
    while (off < data.size()) {
      pollfd fds[2] = {{write_fd_, POLLOUT, 0}, {read_fd_, POLLIN, 0}};
      wait(fds, 2, deadline);
      if (fds[1].revents & (POLLIN | POLLHUP)) fill_buffer();
      if (fds[0].revents & (POLLERR | POLLHUP)) fail(errc::io_error, "backend stopped reading");
      if (fds[0].revents & POLLOUT) {
        const ssize_t n = is_socket_ ? ::send(write_fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL)
                                     : ::write(write_fd_, data.data() + off, data.size() - off);
        if (n < 0 && errno != EAGAIN && errno != EINTR) fail(errc::io_error, std::string("backend write failed: ") + std::strerror(errno));
        if (n > 0) off += static_cast<std::size_t>(n);
      }
    }
  }

  void send_line(std::string_view line, clock::time_point deadline) {
    std::string framed(line);
    framed += '\n';
    write_all(framed, deadline);
  }

  /// Next complete line, without the newline.
  std::string read_line(clock::time_point deadline) {
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (eof_) fail(errc::io_error, "backend closed the connection");
      pollfd fd{read_fd_, POLLIN, 0};
      wait(&fd, 1, deadline);
      fill_buffer();
    }
  }

  bool has_buffered_line() const { return buffer_.find('\n') != std::string::npos; }

  /// Half-closes the request direction and waits for the peer to finish.
  /// Returns true when the peer closed its side before the deadline.
  bool shutdown_gracefully(clock::time_point deadline) {
    if (!is_open()) return true;
    if (is_socket_)
      ::shutdown(write_fd_, SHUT_WR);
    else if (write_fd_ >= 0)
      ::close(write_fd_);
    if (!is_socket_) write_fd_ = -1;
    bool closed = false;
    try {
      while (!eof_) {
        pollfd fd{read_fd_, POLLIN, 0};
        wait(&fd, 1, deadline);
        fill_buffer();
      }
      closed = true;
    } catch (const error&) {
    }
    if (child_ > 0) {
      while (clock::now() < deadline) {
        if (::waitpid(child_, nullptr, WNOHANG) == child_) {
          child_ = -1;
          break;
        }
        ::usleep(2000);
      }
    }
    close();
    return closed;
  }

  void close() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    read_fd_ = write_fd_ = -1;
    if (child_ > 0) {
      ::kill(child_, SIGTERM);
      ::waitpid(child_, nullptr, 0);
      child_ = -1;
    }
  }

 private:
  void wait(pollfd* fds, nfds_t n, clock::time_point deadline) {
    while (true) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
      if (left <= 0) fail(errc::backend_timeout, "backend did not respond in time");
      const int rc = ::poll(fds, n, static_cast<int>(std::min<long long>(left, 1 << 30)));
      if (rc > 0) return;
      if (rc < 0 && errno != EINTR) fail(errc::io_error, std::string("poll failed: ") + std::strerror(errno));
    }
  }

  void fill_buffer() {
    char chunk[4096];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n > 0)
      buffer_.append(chunk, static_cast<std::size_t>(n));
    else if (n == 0)
      eof_ = true;
    else if (errno != EAGAIN && errno != EINTR)
      eof_ = true;
  }

  void spawn(const std::string& command) {
    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) fail(errc::io_error, "pipe failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      fail(errc::io_error, "pipe failed");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    const char* argv[] = {"sh", "-c", command.c_str(), nullptr};
    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      fail(errc::io_error, "cannot start backend '" + command + "'");
    }
    // a dead child must surface as an error on write, not kill the gateway
    ::signal(SIGPIPE, SIG_IGN);
    child_ = pid;
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    ::fcntl(write_fd_, F_SETFL, ::fcntl(write_fd_, F_GETFL) | O_NONBLOCK);
  }

  void connect_tcp(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) fail(errc::invalid_config, "backend_tcp must be host:port");
    const std::string host = endpoint.substr(0, colon), port = endpoint.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0) fail(errc::io_error, "cannot resolve " + endpoint);
    int fd = -1;
    for (auto* ai = res; ai; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) fail(errc::io_error, "cannot connect to backend at " + endpoint);
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
    is_socket_ = true;
    read_fd_ = write_fd_ = fd;
  }

  int read_fd_ = -1;
  int write_fd_ = -1;
  pid_t child_ = -1;
  bool is_socket_ = false;
  bool eof_ = false;
  std::string buffer_;
};

inline json hello_message() {
  return {{"v", kProtocolVersion}, {"type", "hello"}, {"capabilities", {"caption", "refine"}}};
}

/// What the backend announced in its hello.
struct BackendInfo {
  std::string id = "backend";
  std::set<std::string> capabilities;
  bool nondeterministic = false;
};

inline BackendInfo parse_hello(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    fail(errc::backend_protocol_error, "hello is not valid JSON");
  }
  if (!j.is_object() || j.value("type", "") != "hello") fail(errc::backend_protocol_error, "first backend message must be a hello");
  BackendInfo info;
  if (j.contains("capabilities")) {
    if (!j["capabilities"].is_array()) fail(errc::backend_protocol_error, "hello capabilities must be a list");
    for (const auto& c : j["capabilities"])
      if (c.is_string()) info.capabilities.insert(c.get<std::string>());
  }
  for (const char* key : {"model", "name", "id"})
    if (j.contains(key) && j[key].is_string() && !j[key].get<std::string>().empty()) {
      info.id = j[key].get<std::string>();
      break;
    }
  info.nondeterministic = j.value("nondeterministic", false);
  return info;
}

/// Captioner backed by an external process or TCP service. Requests of one
/// call are pipelined; responses are matched by id in any order. Any failure
/// drops the connection and the next call reconnects.
class BackendClient final : public Captioner {
 public:
  BackendClient(BackendEndpoint endpoint, std::chrono::milliseconds timeout) : endpoint_(std::move(endpoint)), timeout_(timeout) {
    if (timeout_.count() <= 0) fail(errc::invalid_config, "backend timeout must be positive");
  }

  std::string provenance() const override {
    std::lock_guard lock(mu_);
    return "external:" + info_.id;
  }
  bool nondeterministic() const override {
    std::lock_guard lock(mu_);
    return info_.nondeterministic;
  }

  /// Connects and performs the handshake if not yet connected.
  BackendInfo connect() {
    std::lock_guard lock(mu_);
    ensure_connected();
    return info_;
  }

  std::vector<std::string> caption(const std::vector<const GrayImage*>& frames) override {
    std::lock_guard lock(mu_);
    ensure_connected();
    if (!info_.capabilities.contains("caption")) {
      drop();
      fail(errc::io_error, "backend offers no caption capability");
    }
    std::vector<json> reqs;
    for (const auto* f : frames)
      reqs.push_back({{"v", kProtocolVersion}, {"type", "caption_req"}, {"id", next_id_++}, {"image_pgm_b64", base64_encode(encode_pgm(*f))}});
    const auto responses = exchange(reqs, "caption_res");
    std::vector<std::string> out;
    for (const auto& r : responses) out.push_back(string_field(r, "caption"));
    return out;
  }

  std::string refine(const std::vector<std::string>& captions, RefineTask task) override {
    std::lock_guard lock(mu_);
    ensure_connected();
    if (!info_.capabilities.contains("refine")) return builtin_refine(captions, task);
    if (captions.empty()) fail(errc::empty_caption_list, "nothing to refine");
    const std::vector<json> reqs{
        {{"v", kProtocolVersion}, {"type", "refine_req"}, {"id", next_id_++}, {"task", std::string(to_string(task))}, {"captions", captions}}};
    return string_field(exchange(reqs, "refine_res").front(), "text");
  }

  void disconnect() {
    std::lock_guard lock(mu_);
    drop();
  }

 private:
  static std::string string_field(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) fail(errc::backend_protocol_error, std::string("response lacks string field '") + key + "'");
    return j[key].get<std::string>();
  }

  void ensure_connected() {
    if (conn_ && conn_->is_open()) return;
    try {
      conn_ = BackendConnection::open(endpoint_);
      const auto deadline = BackendConnection::clock::now() + timeout_;
      conn_->send_line(hello_message().dump(), deadline);
      info_ = parse_hello(conn_->read_line(deadline));
    } catch (...) {
      drop();
      throw;
    }
  }

  void drop() {
    if (conn_) conn_->close();
    conn_.reset();
  }

  /// Sends all requests, then collects one response per id. The timeout
  /// bounds each wait for progress rather than the whole batch.
  std::vector<json> exchange(const std::vector<json>& reqs, const std::string& expected_type) {
    try {
      std::map<std::string, std::size_t> slot;
      std::string wire;
      for (std::size_t i = 0; i < reqs.size(); ++i) {
        slot[reqs[i]["id"].dump()] = i;
        wire += reqs[i].dump();
        wire += '\n';
      }
      conn_->write_all(wire, BackendConnection::clock::now() + timeout_ * std::max<std::size_t>(1, reqs.size()));
      std::vector<std::optional<json>> got(reqs.size());
      std::size_t remaining = reqs.size();
      while (remaining > 0) {
        const std::string line = conn_->read_line(BackendConnection::clock::now() + timeout_);
        json j;
        try {
          j = json::parse(line);
        } catch (const json::exception&) {
          fail(errc::backend_protocol_error, "backend sent a line that is not JSON");
        }
        if (!j.is_object() || !j.contains("id")) fail(errc::backend_protocol_error, "backend response has no id");
        const auto it = slot.find(j["id"].dump());
        if (it == slot.end()) fail(errc::backend_protocol_error, "backend answered unknown id " + j["id"].dump());
        if (got[it->second]) fail(errc::backend_protocol_error, "backend answered id " + it->first + " twice");
        const std::string type = j.value("type", "");
        if (type == "err")
          fail(errc::backend_protocol_error, "backend error " + j.value("code", std::string("?")) + ": " + j.value("message", std::string()));
        if (type != expected_type) fail(errc::backend_protocol_error, "expected " + expected_type + ", got '" + type + "'");
        got[it->second] = std::move(j);
        --remaining;
      }
      std::vector<json> out;
      for (auto& g : got) out.push_back(std::move(*g));
      return out;
    } catch (...) {
      drop();
      throw;
    }
  }

  BackendEndpoint endpoint_;
  std::chrono::milliseconds timeout_;
  mutable std::mutex mu_;
  std::unique_ptr<BackendConnection> conn_;
  BackendInfo info_;
  std::int64_t next_id_ = 1;
};

}  // namespace itsgw::visual
