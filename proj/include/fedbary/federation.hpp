#pragma once

// Coordinator/client round protocol over pluggable transports.
//
// Wire format: every message is one frame, a 4-byte big-endian payload
// length followed by a JSON object.  Payloads are written by a canonical
// encoder (fixed key order, reals at 17 significant digits) so identical
// messages produce identical bytes and decode(encode(m)) == m.  The
// in-process transport carries the same encoded frames through queues as the
// TCP transport does through sockets, so the two differ only in plumbing.
//
// Message shapes:
//   report     {"type":"report","round":R,"client_id":C,"t":[...]}
//              dense t: K reals; sparse t: [[k, value], ...] for the scored
//              candidates only
//   broadcast  {"type":"broadcast","round":R,"gamma":[0|1 x K],
//               "theta0_done":bool}
//   hello      {"type":"hello","client_id":C,"k":K}
//   stop       {"type":"stop","reason":"..."}
//
// The cardinality multiplier theta0 itself is never transmitted; clients only
// ever see gamma.  Round logs are JSON-lines records of every frame the
// coordinator sends or receives, with exact byte counts, preceded by one
// "meta" record carrying run provenance.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedbary/dual.hpp"
#include "fedbary/error.hpp"
#include "fedbary/measures.hpp"
#include "fedbary/rng.hpp"

namespace fedbary {

struct Message {
  enum class Kind { report, broadcast, hello, stop };
  Kind kind = Kind::stop;
  long round = -1;
  int client_id = -1;
  bool sparse = false;
  std::vector<double> t;                        // report, dense
  std::vector<std::pair<int, double>> t_pairs;  // report, sparse
  std::vector<std::uint8_t> gamma;              // broadcast
  bool theta0_done = false;                     // broadcast
  int k = 0;                                    // hello
  std::string reason;                           // stop

  bool operator==(const Message&) const = default;
};

namespace detail {

inline void append_real(std::string& s, double v) {
  if (!std::isfinite(v))
    throw ProtocolError("refusing to encode a non-finite real");
  if (v == 0.0 && std::signbit(v)) {
    // %.17g prints "-0", which decodes as the integer 0 and loses the sign.
    s += "-0.0";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  s += buf;
}

inline void append_escaped(std::string& s, const std::string& raw) {
  s += '"';
  for (char c : raw) {
    switch (c) {
      case '"': s += "\\\""; break;
      case '\\': s += "\\\\"; break;
      case '\n': s += "\\n"; break;
      case '\r': s += "\\r"; break;
      case '\t': s += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          s += buf;
        } else {
          s += c;
        }
    }
  }
  s += '"';
}

}  // namespace detail

// Canonical JSON payload (no frame prefix).
inline std::string encode_payload(const Message& m) {
  std::string s;
  switch (m.kind) {
    case Message::Kind::report: {
      s += "{\"type\":\"report\",\"round\":";
      s += std::to_string(m.round);
      s += ",\"client_id\":";
      s += std::to_string(m.client_id);
      s += ",\"t\":[";
      if (!m.sparse) {
        for (std::size_t i = 0; i < m.t.size(); ++i) {
          if (i) s += ',';
          detail::append_real(s, m.t[i]);
        }
      } else {
        for (std::size_t i = 0; i < m.t_pairs.size(); ++i) {
          if (i) s += ',';
          s += '[';
          s += std::to_string(m.t_pairs[i].first);
          s += ',';
          detail::append_real(s, m.t_pairs[i].second);
          s += ']';
        }
      }
      s += "]}";
      break;
    }
    case Message::Kind::broadcast: {
      s += "{\"type\":\"broadcast\",\"round\":";
      s += std::to_string(m.round);
      s += ",\"gamma\":[";
      for (std::size_t i = 0; i < m.gamma.size(); ++i) {
        if (i) s += ',';
        s += m.gamma[i] ? '1' : '0';
      }
      s += "],\"theta0_done\":";
      s += m.theta0_done ? "true" : "false";
      s += '}';
      break;
    }
    case Message::Kind::hello: {
      s += "{\"type\":\"hello\",\"client_id\":";
      s += std::to_string(m.client_id);
      s += ",\"k\":";
      s += std::to_string(m.k);
      s += '}';
      break;
    }
    case Message::Kind::stop: {
      s += "{\"type\":\"stop\",\"reason\":";
      detail::append_escaped(s, m.reason);
      s += '}';
      break;
    }
  }
  return s;
}

inline std::vector<std::uint8_t> encode(const Message& m) {
  const std::string payload = encode_payload(m);
  std::vector<std::uint8_t> frame(4 + payload.size());
  const std::uint32_t n = static_cast<std::uint32_t>(payload.size());
  frame[0] = static_cast<std::uint8_t>((n >> 24) & 0xff);
  frame[1] = static_cast<std::uint8_t>((n >> 16) & 0xff);
  frame[2] = static_cast<std::uint8_t>((n >> 8) & 0xff);
  frame[3] = static_cast<std::uint8_t>(n & 0xff);
  std::memcpy(frame.data() + 4, payload.data(), payload.size());
  return frame;
}

inline Message decode(const std::uint8_t* data, std::size_t len) {
  if (len < 4) throw ProtocolError("incomplete frame", static_cast<long>(len));
  const std::uint32_t declared = (static_cast<std::uint32_t>(data[0]) << 24) |
                                 (static_cast<std::uint32_t>(data[1]) << 16) |
                                 (static_cast<std::uint32_t>(data[2]) << 8) |
                                 static_cast<std::uint32_t>(data[3]);
  if (len < 4 + static_cast<std::size_t>(declared))
    throw ProtocolError("incomplete frame", static_cast<long>(len));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(data + 4, data + 4 + declared);
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("malformed frame payload", 4);
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw ProtocolError("frame payload has no type", 4);
  const std::string type = j["type"].get<std::string>();
  Message m;
  auto need = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field))
      throw ProtocolError("malformed " + type + " message: missing '" +
                              field + "'",
                          4);
    return j[field];
  };
  if (type == "report") {
    m.kind = Message::Kind::report;
    m.round = need("round").get<long>();
    m.client_id = need("client_id").get<int>();
    const nlohmann::json& t = need("t");
    if (!t.is_array()) throw ProtocolError("report t is not an array", 4);
    if (!t.empty() && t.front().is_array()) {
      m.sparse = true;
      for (const auto& e : t) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
            !e[1].is_number())
          throw ProtocolError("report sparse entry is not [k, value]", 4);
        m.t_pairs.emplace_back(e[0].get<int>(), e[1].get<double>());
      }
    } else {
      for (const auto& e : t) {
        if (!e.is_number())
          throw ProtocolError("report t entry is not a number", 4);
        m.t.push_back(e.get<double>());
      }
    }
  } else if (type == "broadcast") {
    m.kind = Message::Kind::broadcast;
    m.round = need("round").get<long>();
    const nlohmann::json& g = need("gamma");
    if (!g.is_array()) throw ProtocolError("broadcast gamma is not an array", 4);
    for (const auto& e : g) {
      if (!e.is_number_integer())
        throw ProtocolError("broadcast gamma entry is not an integer", 4);
      const int v = e.get<int>();
      if (v != 0 && v != 1)
        throw ProtocolError("broadcast gamma entry is not a bit", 4);
      m.gamma.push_back(static_cast<std::uint8_t>(v));
    }
    m.theta0_done = need("theta0_done").get<bool>();
  } else if (type == "hello") {
    m.kind = Message::Kind::hello;
    m.client_id = need("client_id").get<int>();
    m.k = need("k").get<int>();
  } else if (type == "stop") {
    m.kind = Message::Kind::stop;
    m.reason = need("reason").get<std::string>();
  } else {
    throw ProtocolError("unknown message type '" + type + "'", 4);
  }
  return m;
}

inline Message decode(const std::vector<std::uint8_t>& frame) {
  return decode(frame.data(), frame.size());
}

// ---------------------------------------------------------------------------
// Transports

class Conn {
 public:
  virtual ~Conn() = default;
  virtual void send(const std::vector<std::uint8_t>& frame) = 0;
  // One whole frame, or nullopt on timeout.  Throws ProtocolError if the peer
  // vanished mid-frame.
  virtual std::optional<std::vector<std::uint8_t>> recv(
      std::chrono::milliseconds timeout) = 0;
};

namespace detail {

struct FrameQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> q;
  bool closed = false;

  void push(std::vector<std::uint8_t> f) {
    {
      std::lock_guard<std::mutex> lk(mu);
      q.push_back(std::move(f));
    }
    cv.notify_one();
  }
  void close() {
    {
      std::lock_guard<std::mutex> lk(mu);
      closed = true;
    }
    cv.notify_all();
  }
  std::optional<std::vector<std::uint8_t>> pop(std::chrono::milliseconds to) {
    std::unique_lock<std::mutex> lk(mu);
    if (!cv.wait_for(lk, to, [&] { return !q.empty() || closed; }))
      return std::nullopt;
    if (q.empty()) throw ProtocolError("connection closed");
    std::vector<std::uint8_t> f = std::move(q.front());
    q.pop_front();
    return f;
  }
};

}  // namespace detail

class PipeConn : public Conn {
 public:
  PipeConn(std::shared_ptr<detail::FrameQueue> in,
           std::shared_ptr<detail::FrameQueue> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~PipeConn() override { out_->close(); }

  void send(const std::vector<std::uint8_t>& frame) override {
    out_->push(frame);
  }
  std::optional<std::vector<std::uint8_t>> recv(
      std::chrono::milliseconds timeout) override {
    return in_->pop(timeout);
  }

 private:
  std::shared_ptr<detail::FrameQueue> in_, out_;
};

inline std::pair<std::unique_ptr<Conn>, std::unique_ptr<Conn>> make_pipe() {
  auto a = std::make_shared<detail::FrameQueue>();
  auto b = std::make_shared<detail::FrameQueue>();
  return {std::make_unique<PipeConn>(a, b), std::make_unique<PipeConn>(b, a)};
}

class TcpConn : public Conn {
 public:
  explicit TcpConn(int fd) : fd_(fd) {
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpConn() override {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpConn(const TcpConn&) = delete;
  TcpConn& operator=(const TcpConn&) = delete;

  void send(const std::vector<std::uint8_t>& frame) override {
    std::size_t off = 0;
    while (off < frame.size()) {
      const ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off,
                               MSG_NOSIGNAL);
      if (n < 0) throw ProtocolError("send failed: " + std::string(strerror(errno)));
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::vector<std::uint8_t>> recv(
      std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (buf_.size() >= 4) {
        const std::uint32_t declared =
            (static_cast<std::uint32_t>(buf_[0]) << 24) |
            (static_cast<std::uint32_t>(buf_[1]) << 16) |
            (static_cast<std::uint32_t>(buf_[2]) << 8) |
            static_cast<std::uint32_t>(buf_[3]);
        if (buf_.size() >= 4 + static_cast<std::size_t>(declared)) {
          std::vector<std::uint8_t> frame(
              buf_.begin(), buf_.begin() + 4 + static_cast<std::size_t>(declared));
          buf_.erase(buf_.begin(),
                     buf_.begin() + 4 + static_cast<std::size_t>(declared));
          return frame;
        }
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) return std::nullopt;
      struct pollfd pfd{fd_, POLLIN, 0};
      const int ms = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
              .count());
      const int pr = ::poll(&pfd, 1, std::max(1, ms));
      if (pr < 0) throw ProtocolError("poll failed: " + std::string(strerror(errno)));
      if (pr == 0) return std::nullopt;
      std::uint8_t chunk[65536];
      const ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0) throw ProtocolError("read failed: " + std::string(strerror(errno)));
      if (n == 0) {
        if (buf_.empty()) throw ProtocolError("connection closed");
        throw ProtocolError("incomplete frame", static_cast<long>(buf_.size()));
      }
      buf_.insert(buf_.end(), chunk, chunk + n);
    }
  }

 private:
  int fd_;
  std::vector<std::uint8_t> buf_;
};

namespace detail {

struct HostPort {
  std::string host;
  std::uint16_t port;
};

inline HostPort parse_hostport(const std::string& s,
                               const std::string& default_host,
                               bool allow_port0 = false) {
  const std::size_t colon = s.rfind(':');
  if (colon == std::string::npos)
    throw ValidationError("address must look like host:port, got '" + s + "'");
  std::string host = s.substr(0, colon);
  if (host.empty()) host = default_host;
  if (host == "localhost") host = "127.0.0.1";
  const std::string port_str = s.substr(colon + 1);
  int port;
  try {
    port = std::stoi(port_str);
  } catch (...) {
    throw ValidationError("bad port in address '" + s + "'");
  }
  // Port 0 means "pick an ephemeral port" and only makes sense when binding.
  if (port < (allow_port0 ? 0 : 1) || port > 65535)
    throw ValidationError("bad port in address '" + s + "'");
  return {host, static_cast<std::uint16_t>(port)};
}

inline sockaddr_in make_sockaddr(const HostPort& hp) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(hp.port);
  if (hp.host == "0.0.0.0" || hp.host.empty()) {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (::inet_pton(AF_INET, hp.host.c_str(), &addr.sin_addr) != 1) {
    throw ValidationError("cannot parse IPv4 address '" + hp.host + "'");
  }
  return addr;
}

}  // namespace detail

class TcpListener {
 public:
  explicit TcpListener(const std::string& listen_addr) {
    const detail::HostPort hp =
        detail::parse_hostport(listen_addr, "0.0.0.0", /*allow_port0=*/true);
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ProtocolError("socket failed: " + std::string(strerror(errno)));
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = detail::make_sockaddr(hp);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
      throw ProtocolError("bind to " + listen_addr + " failed: " +
                          std::string(strerror(errno)));
    if (::listen(fd_, 16) < 0)
      throw ProtocolError("listen failed: " + std::string(strerror(errno)));
  }
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  std::unique_ptr<Conn> accept(std::chrono::milliseconds timeout) {
    struct pollfd pfd{fd_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (pr < 0) throw ProtocolError("poll failed: " + std::string(strerror(errno)));
    if (pr == 0) throw ProtocolError("timed out waiting for a client to connect");
    const int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) throw ProtocolError("accept failed: " + std::string(strerror(errno)));
    return std::make_unique<TcpConn>(cfd);
  }

 private:
  int fd_ = -1;
};

// Connect with retry until the deadline; the coordinator may come up later.
inline std::unique_ptr<Conn> tcp_connect(const std::string& addr,
                                         std::chrono::milliseconds timeout) {
  const detail::HostPort hp = detail::parse_hostport(addr, "127.0.0.1");
  sockaddr_in sa = detail::make_sockaddr(hp);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ProtocolError("socket failed: " + std::string(strerror(errno)));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0)
      return std::make_unique<TcpConn>(fd);
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline)
      throw ProtocolError("cannot connect to " + addr + ": " +
                          std::string(strerror(errno)));
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

// ---------------------------------------------------------------------------
// Round log

class RoundLogWriter {
 public:
  RoundLogWriter() = default;
  explicit RoundLogWriter(const std::string& path) : out_(path) {
    if (!out_) throw ValidationError("cannot write round log: " + path);
  }

  void meta(const nlohmann::json& j) {
    nlohmann::json rec;
    rec["dir"] = "meta";
    rec["info"] = j;
    out_ << rec.dump() << "\n";
  }

  // `payload` is the frame's JSON body; it is embedded verbatim.
  void log(const char* dir, long round, std::size_t frame_bytes,
           const std::string& payload) {
    out_ << "{\"dir\":\"" << dir << "\",\"round\":" << round
         << ",\"bytes\":" << frame_bytes << ",\"msg\":" << payload << "}\n";
  }

  void log_frame(const char* dir, long round,
                 const std::vector<std::uint8_t>& frame) {
    log(dir, round, frame.size(),
        std::string(reinterpret_cast<const char*>(frame.data()) + 4,
                    frame.size() - 4));
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Coordinator and client round loops.  Both mirror run_dual in dual.hpp
// operation for operation; keep the three in sync.

struct FedConfig {
  DualHyper hyper;
  int n_clients = 0;
  int k = 0;
  int m = 0;
  std::chrono::milliseconds timeout{30000};
};

struct CoordinatorOutcome {
  std::vector<RoundTrace> trace;
  std::vector<std::vector<std::uint8_t>> gammas;
  double theta0_final = 0.0;
  double best_dual = -std::numeric_limits<double>::infinity();
  long best_round = -1;
  bool converged = false;
  long rounds = 0;
};

namespace detail {

inline long eval_period(std::size_t K, int B) {
  return static_cast<long>((K + static_cast<std::size_t>(B) - 1) /
                           static_cast<std::size_t>(B));
}

inline void broadcast_stop(const std::vector<Conn*>& conns,
                           const std::string& reason, RoundLogWriter* log) {
  Message stop;
  stop.kind = Message::Kind::stop;
  stop.reason = reason;
  const std::vector<std::uint8_t> frame = encode(stop);
  for (Conn* c : conns) {
    try {
      c->send(frame);
      if (log) log->log_frame("down", -1, frame);
    } catch (...) {
    }
  }
}

}  // namespace detail

// Runs the coordinator side over already-open connections.  Deliberately
// takes no instance data: everything here is computable from the reported
// totals, K, M, and the hyperparameters.
inline CoordinatorOutcome coordinate(const std::vector<Conn*>& conns,
                                     const FedConfig& cfg,
                                     RoundLogWriter* log = nullptr) {
  const std::size_t K = static_cast<std::size_t>(cfg.k);
  const std::size_t N = static_cast<std::size_t>(cfg.n_clients);
  if (conns.size() != N)
    throw ValidationError("connection count does not match client count");
  cfg.hyper.validate(K);
  const int B = cfg.hyper.effective_batch(K);
  const long period = detail::eval_period(K, B);

  // Handshake: one hello per connection, ids unique in [0, N), K must match.
  // Hellos are logged in client-id order, not arrival order, so the round log
  // does not depend on connection timing.
  std::vector<Conn*> by_id(N, nullptr);
  std::vector<std::vector<std::uint8_t>> hello_frames(N);
  try {
    for (Conn* c : conns) {
      auto frame = c->recv(cfg.timeout);
      if (!frame) throw ProtocolError("timed out waiting for a client hello");
      const Message m = decode(*frame);
      if (m.kind != Message::Kind::hello)
        throw ProtocolError("expected hello, got another message type");
      if (m.k != cfg.k)
        throw ProtocolError("hello K mismatch: client " +
                            std::to_string(m.client_id) + " reports K=" +
                            std::to_string(m.k) + ", coordinator has K=" +
                            std::to_string(cfg.k));
      if (m.client_id < 0 || m.client_id >= cfg.n_clients)
        throw ProtocolError("hello client id " + std::to_string(m.client_id) +
                            " out of range");
      if (by_id[static_cast<std::size_t>(m.client_id)])
        throw ProtocolError("duplicate hello for client " +
                            std::to_string(m.client_id));
      by_id[static_cast<std::size_t>(m.client_id)] = c;
      hello_frames[static_cast<std::size_t>(m.client_id)] = std::move(*frame);
    }
    for (std::size_t s = 0; s < N; ++s) {
      if (log) log->log_frame("up", -1, hello_frames[s]);
      Message ack;
      ack.kind = Message::Kind::hello;
      ack.client_id = static_cast<int>(s);
      ack.k = cfg.k;
      const std::vector<std::uint8_t> frame = encode(ack);
      by_id[s]->send(frame);
      if (log) log->log_frame("down", -1, frame);
    }
  } catch (...) {
    detail::broadcast_stop(conns, "handshake failed", log);
    throw;
  }

  Rng batch_rng(child_seed(cfg.hyper.seed, 0));
  std::vector<int> all(K);
  std::iota(all.begin(), all.end(), 0);

  CoordinatorOutcome out;
  std::vector<std::uint8_t> gamma(K, 0);
  double theta0 = cfg.hyper.theta0_init, m0 = 0.0;
  double prev_full = 0.0;
  bool have_prev = false;

  try {
    for (long j = 0; j < cfg.hyper.max_rounds; ++j) {
      const auto r0 = std::chrono::steady_clock::now();
      const bool dense = (B == cfg.k) || (j % period == 0);
      const std::vector<int> batch =
          (B == cfg.k) ? all : batch_rng.sample_indices(cfg.k, B);
      const std::vector<int>& scored = dense ? all : batch;

      std::vector<ClientReport> reports;
      reports.reserve(N);
      for (std::size_t s = 0; s < N; ++s) {
        auto frame = by_id[s]->recv(cfg.timeout);
        if (!frame)
          throw ProtocolError("client " + std::to_string(s) +
                              " timed out in round " + std::to_string(j));
        const Message m = decode(*frame);
        if (m.kind == Message::Kind::stop)
          throw ProtocolError("client " + std::to_string(s) + " stopped: " +
                              m.reason);
        if (m.kind != Message::Kind::report)
          throw ProtocolError("expected report from client " +
                              std::to_string(s));
        if (m.round != j)
          throw ProtocolError("out-of-phase report: client " +
                              std::to_string(s) + " sent round " +
                              std::to_string(m.round) + " during round " +
                              std::to_string(j));
        if (m.client_id != static_cast<int>(s))
          throw ProtocolError("report client id mismatch");
        ClientReport r;
        r.client_id = m.client_id;
        r.round = m.round;
        if (m.sparse) {
          r.t.assign(K, std::numeric_limits<double>::quiet_NaN());
          for (const auto& [kk, v] : m.t_pairs) {
            if (kk < 0 || kk >= cfg.k)
              throw ProtocolError("sparse report index out of range");
            r.t[static_cast<std::size_t>(kk)] = v;
          }
        } else {
          if (m.t.size() != K)
            throw ProtocolError("dense report has wrong length");
          r.t = m.t;
        }
        reports.push_back(std::move(r));
        if (log) log->log_frame("up", j, *frame);
      }

      gamma = select_support(reports, theta0, batch, K, &gamma);
      const double Lrec =
          batch_dual_value(reports, theta0, cfg.m, scored, K);
      if (!std::isfinite(Lrec))
        throw SolverError("non-finite dual value at round " + std::to_string(j));
      int count = 0;
      for (std::uint8_t g : gamma) count += g;
      const double alpha = step_size(cfg.hyper, j);
      out.trace.push_back({j, Lrec, count, alpha, theta0, 0.0});
      out.gammas.push_back(gamma);

      if (dense) {
        if (Lrec > out.best_dual) {
          out.best_dual = Lrec;
          out.best_round = j;
        }
        if (have_prev) {
          const double diff = std::abs(Lrec - prev_full);
          const double tol =
              cfg.hyper.epsilon_relative
                  ? cfg.hyper.epsilon * std::max(std::abs(prev_full), 1e-12)
                  : cfg.hyper.epsilon;
          const double band = cfg.hyper.support_band * static_cast<double>(cfg.m);
          if (diff <= tol && std::abs(count - cfg.m) <= band + 1e-12)
            out.converged = true;
        }
        prev_full = Lrec;
        have_prev = true;
      }

      Message bc;
      bc.kind = Message::Kind::broadcast;
      bc.round = j;
      bc.gamma = gamma;
      bc.theta0_done = out.converged;
      const std::vector<std::uint8_t> frame = encode(bc);
      for (std::size_t s = 0; s < N; ++s) {
        by_id[s]->send(frame);
        if (log) log->log_frame("down", j, frame);
      }

      if (out.converged) {
        out.trace.back().wall_ms =
            std::chrono::duration<double, std::milli>(
                std::chrono::steady_clock::now() - r0)
                .count();
        break;
      }

      const double g0 = global_subgradient(gamma, cfg.m, batch, K);
      momentum_step(theta0, m0, g0, alpha, cfg.hyper.kappa1);
      out.trace.back().wall_ms =
          std::chrono::duration<double, std::milli>(
              std::chrono::steady_clock::now() - r0)
              .count();
    }
  } catch (...) {
    detail::broadcast_stop(conns, "coordinator aborted", log);
    throw;
  }

  out.rounds = static_cast<long>(out.trace.size());
  out.theta0_final = theta0;
  if (log) log->flush();
  return out;
}

// Runs one client over an open connection.  `cost_block` is this client's
// |I| x K cost matrix.  Returns the final multipliers.
inline std::vector<double> client_session(Conn& conn, const Matrix& cost_block,
                                          double w, int client_id,
                                          const FedConfig& cfg) {
  const std::size_t K = static_cast<std::size_t>(cfg.k);
  if (cost_block.cols != K)
    throw ValidationError("client cost block does not have K columns");
  cfg.hyper.validate(K);
  const int B = cfg.hyper.effective_batch(K);
  const long period = detail::eval_period(K, B);
  const Matrix costT = transpose(cost_block);

  Message hello;
  hello.kind = Message::Kind::hello;
  hello.client_id = client_id;
  hello.k = cfg.k;
  conn.send(encode(hello));
  {
    auto frame = conn.recv(cfg.timeout);
    if (!frame) throw ProtocolError("timed out waiting for the handshake ack");
    const Message m = decode(*frame);
    if (m.kind == Message::Kind::stop)
      throw ProtocolError("coordinator stopped: " + m.reason);
    if (m.kind != Message::Kind::hello || m.k != cfg.k)
      throw ProtocolError("bad handshake ack");
  }

  std::vector<double> theta(cost_block.rows, 0.0);
  std::vector<double> mom(cost_block.rows, 0.0);
  Rng batch_rng(child_seed(cfg.hyper.seed, 0));
  Rng tie_rng(child_seed(cfg.hyper.seed, 2 + static_cast<std::uint64_t>(
                                                 client_id)));
  std::vector<int> all(K);
  std::iota(all.begin(), all.end(), 0);

  for (long j = 0; j < cfg.hyper.max_rounds; ++j) {
    const bool dense = (B == cfg.k) || (j % period == 0);
    const std::vector<int> batch =
        (B == cfg.k) ? all : batch_rng.sample_indices(cfg.k, B);
    const std::vector<int>& scored = dense ? all : batch;

    const ClientReport rep =
        client_report(costT, w, theta, scored, client_id, j);
    Message m;
    m.kind = Message::Kind::report;
    m.round = j;
    m.client_id = client_id;
    if (dense) {
      m.t = rep.t;
    } else {
      m.sparse = true;
      m.t_pairs.reserve(scored.size());
      for (int k : scored)
        m.t_pairs.emplace_back(k, rep.t[static_cast<std::size_t>(k)]);
    }
    conn.send(encode(m));

    auto frame = conn.recv(cfg.timeout);
    if (!frame)
      throw ProtocolError("timed out waiting for the round " +
                          std::to_string(j) + " broadcast");
    const Message bc = decode(*frame);
    if (bc.kind == Message::Kind::stop)
      throw ProtocolError("coordinator stopped: " + bc.reason);
    if (bc.kind != Message::Kind::broadcast || bc.round != j ||
        bc.gamma.size() != K)
      throw ProtocolError("bad broadcast in round " + std::to_string(j));
    if (bc.theta0_done) break;

    const std::vector<int> istar =
        local_couplings(costT, w, theta, bc.gamma, tie_rng);
    const std::vector<double> gs =
        local_subgradient(istar, bc.gamma, theta.size(), batch, K);
    const double alpha = step_size(cfg.hyper, j);
    for (std::size_t i = 0; i < theta.size(); ++i)
      momentum_step(theta[i], mom[i], gs[i], alpha, cfg.hyper.kappa2);
  }
  return theta;
}

// All-in-one runner: clients as in-process worker threads over framed queues,
// coordinator on the calling thread.  Produces the same result object as
// run_dual.
inline SolveResult run_federated_inprocess(const ProblemInstance& inst,
                                           const CostProfile& prof,
                                           const DualHyper& hyper,
                                           RoundLogWriter* log = nullptr,
                                           std::chrono::milliseconds timeout =
                                               std::chrono::milliseconds(30000)) {
  const std::size_t N = inst.n_clients();
  FedConfig cfg;
  cfg.hyper = hyper;
  cfg.n_clients = static_cast<int>(N);
  cfg.k = static_cast<int>(inst.n_candidates());
  cfg.m = inst.support_size;
  cfg.timeout = timeout;

  std::vector<std::unique_ptr<Conn>> coord_side, client_side;
  for (std::size_t s = 0; s < N; ++s) {
    auto [a, b] = make_pipe();
    coord_side.push_back(std::move(a));
    client_side.push_back(std::move(b));
  }

  std::vector<std::vector<double>> thetas(N);
  std::vector<std::exception_ptr> errs(N);
  std::vector<std::thread> workers;
  workers.reserve(N);
  for (std::size_t s = 0; s < N; ++s) {
    workers.emplace_back([&, s] {
      try {
        thetas[s] = client_session(*client_side[s], prof.client_cost[s],
                                   inst.w(s), static_cast<int>(s), cfg);
      } catch (...) {
        errs[s] = std::current_exception();
      }
    });
  }

  const auto t0 = std::chrono::steady_clock::now();
  CoordinatorOutcome outcome;
  std::exception_ptr coord_err;
  try {
    std::vector<Conn*> conns;
    for (auto& c : coord_side) conns.push_back(c.get());
    outcome = coordinate(conns, cfg, log);
  } catch (...) {
    coord_err = std::current_exception();
  }
  for (auto& w : workers) w.join();
  if (coord_err) std::rethrow_exception(coord_err);
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);

  SolveResult r;
  r.trace = std::move(outcome.trace);
  r.gammas = std::move(outcome.gammas);
  r.theta0_final = outcome.theta0_final;
  r.theta_final = std::move(thetas);
  r.best_dual = outcome.best_dual;
  r.best_round = outcome.best_round;
  r.converged = outcome.converged;
  r.rounds = outcome.rounds;
  attach_recovery(inst, prof, hyper, r);
  r.wall_ms_total = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return r;
}

// Coordinator role over TCP: accept exactly n_clients connections, then run
// the round loop.
inline CoordinatorOutcome run_coordinator_tcp(const std::string& listen_addr,
                                              const FedConfig& cfg,
                                              RoundLogWriter* log = nullptr) {
  TcpListener listener(listen_addr);
  std::vector<std::unique_ptr<Conn>> owned;
  owned.reserve(static_cast<std::size_t>(cfg.n_clients));
  for (int s = 0; s < cfg.n_clients; ++s)
    owned.push_back(listener.accept(cfg.timeout));
  std::vector<Conn*> conns;
  for (auto& c : owned) conns.push_back(c.get());
  return coordinate(conns, cfg, log);
}

// Client role over TCP.
inline std::vector<double> run_client_tcp(const std::string& addr,
                                          const Matrix& cost_block, double w,
                                          int client_id, const FedConfig& cfg) {
  std::unique_ptr<Conn> conn = tcp_connect(addr, cfg.timeout);
  return client_session(*conn, cost_block, w, client_id, cfg);
}

// ---------------------------------------------------------------------------
// Privacy audit

struct AuditReport {
  bool pass = true;
  long violation_index = -1;  // index among message records, -1 if clean
  std::string message = "ok";
  long records = 0;
  long upstream_records = 0;
  long max_upstream_reals = 0;
  long max_upstream_bytes = 0;
  int k = -1;
};

namespace detail {

inline bool audit_fail(AuditReport& rep, long idx, const std::string& why) {
  rep.pass = false;
  rep.violation_index = idx;
  rep.message = why;
  return false;
}

// Upstream payloads may contain exactly these fields.
inline bool audit_up_msg(const nlohmann::json& msg, long idx, int expected_k,
                         AuditReport& rep) {
  if (!msg.is_object()) return audit_fail(rep, idx, "upstream msg is not an object");
  if (!msg.contains("type") || !msg["type"].is_string())
    return audit_fail(rep, idx, "upstream msg has no type");
  const std::string type = msg["type"].get<std::string>();
  if (type == "hello") {
    for (const auto& [key, val] : msg.items()) {
      (void)val;
      if (key != "type" && key != "client_id" && key != "k")
        return audit_fail(rep, idx, "hello carries forbidden field '" + key + "'");
    }
    if (!msg.contains("client_id") || !msg["client_id"].is_number_integer())
      return audit_fail(rep, idx, "hello missing integer client_id");
    if (!msg.contains("k") || !msg["k"].is_number_integer())
      return audit_fail(rep, idx, "hello missing integer k");
    if (expected_k >= 0 && msg["k"].get<int>() != expected_k)
      return audit_fail(rep, idx, "hello k disagrees with the instance");
    return true;
  }
  if (type == "report") {
    for (const auto& [key, val] : msg.items()) {
      (void)val;
      if (key != "type" && key != "round" && key != "client_id" && key != "t")
        return audit_fail(rep, idx,
                          "report carries forbidden field '" + key + "'");
    }
    if (!msg.contains("round") || !msg["round"].is_number_integer())
      return audit_fail(rep, idx, "report missing integer round");
    if (!msg.contains("client_id") || !msg["client_id"].is_number_integer())
      return audit_fail(rep, idx, "report missing integer client_id");
    if (!msg.contains("t") || !msg["t"].is_array())
      return audit_fail(rep, idx, "report missing array t");
    const nlohmann::json& t = msg["t"];
    long reals = 0;
    const bool sparse = !t.empty() && t.front().is_array();
    for (const auto& e : t) {
      if (sparse) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
            !e[1].is_number())
          return audit_fail(rep, idx, "report t entry is not a [k, value] pair");
        if (expected_k >= 0 &&
            (e[0].get<int>() < 0 || e[0].get<int>() >= expected_k))
          return audit_fail(rep, idx, "report t index out of range");
      } else if (!e.is_number()) {
        return audit_fail(rep, idx, "report t entry is not a number");
      }
      ++reals;
    }
    if (expected_k >= 0) {
      if (!sparse && reals != expected_k)
        return audit_fail(rep, idx, "dense report does not carry exactly K reals");
      if (reals > expected_k)
        return audit_fail(rep, idx, "report carries more than K reals");
    }
    rep.max_upstream_reals = std::max(rep.max_upstream_reals, reals);
    return true;
  }
  return audit_fail(rep, idx, "upstream msg has forbidden type '" + type + "'");
}

// Downstream payloads must be broadcasts, hello acks, or stops; in
// particular the cardinality multiplier must never travel down the wire.
inline bool audit_down_msg(const nlohmann::json& msg, long idx, int expected_k,
                           AuditReport& rep) {
  if (!msg.is_object())
    return audit_fail(rep, idx, "downstream msg is not an object");
  if (!msg.contains("type") || !msg["type"].is_string())
    return audit_fail(rep, idx, "downstream msg has no type");
  const std::string type = msg["type"].get<std::string>();
  if (type == "broadcast") {
    for (const auto& [key, val] : msg.items()) {
      (void)val;
      if (key != "type" && key != "round" && key != "gamma" &&
          key != "theta0_done")
        return audit_fail(rep, idx,
                          "broadcast carries forbidden field '" + key + "'");
    }
    if (!msg.contains("gamma") || !msg["gamma"].is_array())
      return audit_fail(rep, idx, "broadcast missing array gamma");
    for (const auto& e : msg["gamma"])
      if (!e.is_number_integer() ||
          (e.get<int>() != 0 && e.get<int>() != 1))
        return audit_fail(rep, idx, "broadcast gamma entry is not a bit");
    if (expected_k >= 0 &&
        static_cast<int>(msg["gamma"].size()) != expected_k)
      return audit_fail(rep, idx, "broadcast gamma does not have K entries");
    if (!msg.contains("theta0_done") || !msg["theta0_done"].is_boolean())
      return audit_fail(rep, idx, "broadcast missing boolean theta0_done");
    return true;
  }
  if (type == "hello") {
    for (const auto& [key, val] : msg.items()) {
      (void)val;
      if (key != "type" && key != "client_id" && key != "k")
        return audit_fail(rep, idx,
                          "hello ack carries forbidden field '" + key + "'");
    }
    return true;
  }
  if (type == "stop") {
    for (const auto& [key, val] : msg.items()) {
      (void)val;
      if (key != "type" && key != "reason")
        return audit_fail(rep, idx, "stop carries forbidden field '" + key + "'");
    }
    return true;
  }
  return audit_fail(rep, idx, "downstream msg has forbidden type '" + type + "'");
}

}  // namespace detail

// Field-level disclosure audit of a round log.  Upstream (client to
// coordinator) records must be hellos or reports carrying exactly the
// whitelisted fields with flat numeric payloads; anything else fails with the
// offending record index.
inline AuditReport privacy_audit(std::istream& in, int expected_k = -1) {
  AuditReport rep;
  rep.k = expected_k;
  std::string line;
  long idx = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      ++idx;
      detail::audit_fail(rep, idx, "unparseable log line");
      return rep;
    }
    if (rec.contains("dir") && rec["dir"] == "meta") {
      if (rep.k < 0 && rec.contains("info") && rec["info"].contains("k"))
        rep.k = rec["info"]["k"].get<int>();
      continue;
    }
    ++idx;
    ++rep.records;
    if (!rec.contains("dir") || !rec.contains("msg") ||
        !rec.contains("bytes")) {
      detail::audit_fail(rep, idx, "log record missing dir/bytes/msg");
      return rep;
    }
    if (rec["dir"] == "up") {
      ++rep.upstream_records;
      rep.max_upstream_bytes =
          std::max(rep.max_upstream_bytes, rec["bytes"].get<long>());
      if (!detail::audit_up_msg(rec["msg"], idx, rep.k, rep)) return rep;
    } else if (rec["dir"] == "down") {
      if (!detail::audit_down_msg(rec["msg"], idx, rep.k, rep)) return rep;
    } else {
      detail::audit_fail(rep, idx, "log record has unknown dir");
      return rep;
    }
  }
  return rep;
}

inline AuditReport privacy_audit_file(const std::string& path,
                                      int expected_k = -1) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open round log: " + path);
  return privacy_audit(in, expected_k);
}

}  // namespace fedbary
