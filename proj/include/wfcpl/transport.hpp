#pragma once

// Framed binary exchange between the orchestrator and its participants.
//
// Frame: tag (1 byte) | payload length (u32 LE) | payload. All integers and
// doubles are little-endian; doubles travel as raw binary64 bit patterns.

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "wfcpl/error.hpp"
#include "wfcpl/orchestrator.hpp"
#include "wfcpl/participant.hpp"
#include "wfcpl/waveform.hpp"

namespace wfcpl::transport {

using Bytes = std::vector<std::uint8_t>;

enum class Tag : std::uint8_t { Hello = 0x01, Config = 0x02, WindowData = 0x03, Control = 0x04, Bye = 0x05 };
enum class Control : std::uint8_t { Iterate = 0x00, WindowConverged = 0x01, Terminate = 0x02 };
enum class Role { Orchestrator, Participant };

inline constexpr std::string_view kMagic = "WFCPL1";
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderSize = 5;
inline constexpr std::uint32_t kMaxPayload = 1u << 28;
inline constexpr std::chrono::milliseconds kDefaultTimeout{30000};

struct Frame {
  Tag tag = Tag::Bye;
  Bytes payload;

  bool operator==(const Frame&) const = default;
};

namespace detail {

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(Bytes& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline double get_f64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return std::bit_cast<double>(v);
}

inline bool known_tag(std::uint8_t t) { return t >= 0x01 && t <= 0x05; }

inline std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw Error(ErrorCode::MalformedFrame, std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline Bytes encode_frame(const Frame& f) {
  if (f.payload.size() > kMaxPayload) throw Error(ErrorCode::MalformedFrame, "payload too large");
  Bytes out;
  out.reserve(kHeaderSize + f.payload.size());
  out.push_back(static_cast<std::uint8_t>(f.tag));
  detail::put_u32(out, static_cast<std::uint32_t>(f.payload.size()));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

/// Checks a 5-byte header and returns the payload length.
inline std::uint32_t parse_header(std::span<const std::uint8_t> header, Tag& tag) {
  if (header.size() != kHeaderSize) throw Error(ErrorCode::MalformedFrame, "short frame header");
  if (!detail::known_tag(header[0])) {
    throw Error(ErrorCode::MalformedFrame, "unknown frame tag " + std::to_string(header[0]));
  }
  const std::uint32_t length = detail::get_u32(header.data() + 1);
  if (length > kMaxPayload) throw Error(ErrorCode::MalformedFrame, "frame length " + std::to_string(length) + " too large");
  tag = static_cast<Tag>(header[0]);
  return length;
}

/// Incremental decoder for a concatenated frame stream.
class FrameDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

  /// Next complete frame, or nullopt if more bytes are needed.
  std::optional<Frame> next() {
    if (buffer_.size() - pos_ < kHeaderSize) return std::nullopt;
    Tag tag{};
    const std::uint32_t length = parse_header({buffer_.data() + pos_, kHeaderSize}, tag);
    if (buffer_.size() - pos_ - kHeaderSize < length) return std::nullopt;
    const auto begin = buffer_.begin() + static_cast<std::ptrdiff_t>(pos_ + kHeaderSize);
    Frame f{tag, Bytes(begin, begin + length)};
    pos_ += kHeaderSize + length;
    if (pos_ == buffer_.size()) {
      buffer_.clear();
      pos_ = 0;
    }
    return f;
  }

  std::size_t pending() const { return buffer_.size() - pos_; }

 private:
  Bytes buffer_;
  std::size_t pos_ = 0;
};

/// Decodes a complete stream; trailing partial frames are malformed.
inline std::vector<Frame> decode_frames(std::span<const std::uint8_t> bytes) {
  FrameDecoder dec;
  dec.feed(bytes);
  std::vector<Frame> frames;
  while (auto f = dec.next()) frames.push_back(std::move(*f));
  if (dec.pending() != 0) throw Error(ErrorCode::MalformedFrame, "truncated frame at end of stream");
  return frames;
}

// ---- payloads -------------------------------------------------------------

inline Bytes encode_hello(std::uint16_t version = kProtocolVersion) {
  Bytes out(kMagic.begin(), kMagic.end());
  detail::put_u16(out, version);
  return out;
}

inline std::uint16_t decode_hello(std::span<const std::uint8_t> payload) {
  if (payload.size() != kMagic.size() + 2 || !std::equal(kMagic.begin(), kMagic.end(), payload.begin())) {
    throw Error(ErrorCode::MalformedFrame, "bad HELLO payload");
  }
  return detail::get_u16(payload.data() + kMagic.size());
}

using ConfigDigest = std::map<std::string, std::string>;

/// One "key=value" line per entry, keys sorted.
inline std::string canonical_config(const ConfigDigest& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "config entry '" + k + "' cannot be encoded");
    }
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

inline ConfigDigest parse_canonical_config(std::string_view text) {
  ConfigDigest cfg;
  std::string_view prev;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    if (nl == std::string_view::npos) throw Error(ErrorCode::MalformedFrame, "CONFIG line not terminated");
    const std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl + 1);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) throw Error(ErrorCode::MalformedFrame, "bad CONFIG line");
    const std::string_view key = line.substr(0, eq);
    if (!prev.empty() && !(prev < key)) throw Error(ErrorCode::MalformedFrame, "CONFIG keys not sorted");
    prev = key;
    cfg.emplace(std::string(key), std::string(line.substr(eq + 1)));
  }
  return cfg;
}

/// First differing key ignoring "role", or nullopt.
inline std::optional<std::string> config_difference(const ConfigDigest& a, const ConfigDigest& b) {
  for (const auto& [k, v] : a) {
    if (k == "role") continue;
    auto it = b.find(k);
    if (it == b.end() || it->second != v) return k;
  }
  for (const auto& [k, v] : b) {
    if (k != "role" && !a.contains(k)) return k;
  }
  return std::nullopt;
}

/// Window payload: the first `n` vectors of `values`, each of equal length m.
struct WindowData {
  std::uint32_t window = 0;
  std::uint32_t iteration = 0;
  std::vector<Vector> values;

  bool operator==(const WindowData&) const = default;
};

inline Bytes encode_window_data(const WindowData& d) {
  const std::size_t n = d.values.size();
  const std::size_t m = n == 0 ? 0 : d.values.front().size();
  if (n * m == 0) throw Error(ErrorCode::MalformedFrame, "empty window data");
  Bytes out;
  out.reserve(16 + 8 * n * m);
  detail::put_u32(out, d.window);
  detail::put_u32(out, d.iteration);
  detail::put_u32(out, detail::to_u32(n, "substep count"));
  detail::put_u32(out, detail::to_u32(m, "DoF count"));
  for (const auto& v : d.values) {
    if (v.size() != m) throw Error(ErrorCode::LayoutMismatch, "window data vectors differ in length");
    for (double x : v) detail::put_f64(out, x);
  }
  return out;
}

inline WindowData decode_window_data(std::span<const std::uint8_t> payload) {
  if (payload.size() < 16) throw Error(ErrorCode::MalformedFrame, "WINDOW_DATA header too short");
  WindowData d;
  d.window = detail::get_u32(payload.data());
  d.iteration = detail::get_u32(payload.data() + 4);
  const std::uint64_t n = detail::get_u32(payload.data() + 8);
  const std::uint64_t m = detail::get_u32(payload.data() + 12);
  if (n * m == 0) throw Error(ErrorCode::MalformedFrame, "WINDOW_DATA with n*m = 0");
  if (payload.size() - 16 != 8 * n * m) {
    throw Error(ErrorCode::MalformedFrame, "WINDOW_DATA length inconsistent with n*m");
  }
  d.values.assign(n, Vector(m));
  const std::uint8_t* p = payload.data() + 16;
  for (auto& v : d.values) {
    for (auto& x : v) {
      x = detail::get_f64(p);
      p += 8;
    }
  }
  return d;
}

inline Bytes encode_control(Control c) { return {static_cast<std::uint8_t>(c)}; }

inline Control decode_control(std::span<const std::uint8_t> payload) {
  if (payload.size() != 1 || payload[0] > 0x02) throw Error(ErrorCode::MalformedFrame, "bad CONTROL payload");
  return static_cast<Control>(payload[0]);
}

/// Checks the payload of any frame against its tag.
inline void validate_frame(const Frame& f) {
  switch (f.tag) {
    case Tag::Hello: decode_hello(f.payload); break;
    case Tag::Config: parse_canonical_config({reinterpret_cast<const char*>(f.payload.data()), f.payload.size()}); break;
    case Tag::WindowData: decode_window_data(f.payload); break;
    case Tag::Control: decode_control(f.payload); break;
    case Tag::Bye:
      if (!f.payload.empty()) throw Error(ErrorCode::MalformedFrame, "BYE carries a payload");
      break;
  }
}

// ---- channels -------------------------------------------------------------

/// Reliable, ordered byte stream.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void write(std::span<const std::uint8_t> bytes) = 0;
  /// Fills `out` completely or throws ChannelClosed.
  virtual void read_exact(std::span<std::uint8_t> out) = 0;
  virtual void close() = 0;
};

namespace detail {

struct PipeBuffer {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::uint8_t> data;
  bool closed = false;
};

}  // namespace detail

/// One end of an in-memory duplex pipe.
class MemoryChannel : public Channel {
 public:
  MemoryChannel(std::shared_ptr<detail::PipeBuffer> in, std::shared_ptr<detail::PipeBuffer> out,
                std::chrono::milliseconds timeout)
      : in_(std::move(in)), out_(std::move(out)), timeout_(timeout) {}
  ~MemoryChannel() override { close(); }

  void write(std::span<const std::uint8_t> bytes) override {
    std::lock_guard lock(out_->mutex);
    if (out_->closed) throw Error(ErrorCode::ChannelClosed, "write on closed pipe");
    out_->data.insert(out_->data.end(), bytes.begin(), bytes.end());
    out_->cv.notify_all();
  }

  void read_exact(std::span<std::uint8_t> out) override {
    std::unique_lock lock(in_->mutex);
    std::size_t got = 0;
    while (got < out.size()) {
      const bool ready = in_->cv.wait_for(lock, timeout_, [&] { return !in_->data.empty() || in_->closed; });
      if (!ready) throw Error(ErrorCode::ChannelClosed, "read timed out");
      if (in_->data.empty()) throw Error(ErrorCode::ChannelClosed, "peer closed the pipe");
      const std::size_t k = std::min(out.size() - got, in_->data.size());
      std::copy_n(in_->data.begin(), k, out.begin() + static_cast<std::ptrdiff_t>(got));
      in_->data.erase(in_->data.begin(), in_->data.begin() + static_cast<std::ptrdiff_t>(k));
      got += k;
    }
  }

  void close() override {
    for (auto* b : {in_.get(), out_.get()}) {
      std::lock_guard lock(b->mutex);
      b->closed = true;
      b->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<detail::PipeBuffer> in_;
  std::shared_ptr<detail::PipeBuffer> out_;
  std::chrono::milliseconds timeout_;
};

inline std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> memory_pipe(
    std::chrono::milliseconds timeout = kDefaultTimeout) {
  auto a = std::make_shared<detail::PipeBuffer>();
  auto b = std::make_shared<detail::PipeBuffer>();
  return {std::make_unique<MemoryChannel>(a, b, timeout), std::make_unique<MemoryChannel>(b, a, timeout)};
}

/// Blocking TCP stream with a per-read timeout.
class TcpChannel : public Channel {
 public:
  TcpChannel(int fd, std::chrono::milliseconds timeout) : fd_(fd), timeout_(timeout) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpChannel() override { close(); }
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  void write(std::span<const std::uint8_t> bytes) override {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      if (fd_ < 0) throw Error(ErrorCode::ChannelClosed, "write on closed socket");
      const ssize_t k = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::ChannelClosed, std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(k);
    }
  }

  void read_exact(std::span<std::uint8_t> out) override {
    std::size_t got = 0;
    while (got < out.size()) {
      if (fd_ < 0) throw Error(ErrorCode::ChannelClosed, "read on closed socket");
      pollfd pfd{fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(timeout_.count()));
      if (r == 0) throw Error(ErrorCode::ChannelClosed, "read timed out");
      if (r < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::ChannelClosed, std::string("poll failed: ") + std::strerror(errno));
      }
      const ssize_t k = ::recv(fd_, out.data() + got, out.size() - got, 0);
      if (k == 0) throw Error(ErrorCode::ChannelClosed, "peer closed the connection");
      if (k < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::ChannelClosed, std::string("recv failed: ") + std::strerror(errno));
      }
      got += static_cast<std::size_t>(k);
    }
  }

  void close() override {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_;
  std::chrono::milliseconds timeout_;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// Parses "host:port".
inline Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw Error(ErrorCode::InvalidConfig, "expected host:port, got '" + std::string(text) + "'");
  }
  unsigned long port = 0;
  for (char c : text.substr(colon + 1)) {
    if (c < '0' || c > '9') throw Error(ErrorCode::InvalidConfig, "bad port in '" + std::string(text) + "'");
    port = port * 10 + static_cast<unsigned long>(c - '0');
    if (port > 65535) throw Error(ErrorCode::InvalidConfig, "port out of range in '" + std::string(text) + "'");
  }
  return {std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

namespace detail {

inline addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  if (int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::ChannelClosed, "cannot resolve " + ep.host + ": " + ::gai_strerror(rc));
  }
  return res;
}

}  // namespace detail

class TcpListener {
 public:
  explicit TcpListener(const Endpoint& ep) {
    addrinfo* res = detail::resolve(ep, true);
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd_ < 0) {
      ::freeaddrinfo(res);
      throw Error(ErrorCode::ChannelClosed, "socket() failed");
    }
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const int rc = ::bind(fd_, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0 || ::listen(fd_, 4) != 0) {
      const std::string why = std::strerror(errno);
      ::close(fd_);
      throw Error(ErrorCode::ChannelClosed, "cannot listen on " + ep.host + ":" + std::to_string(ep.port) + ": " + why);
    }
  }
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  /// Bound port (useful when listening on port 0).
  std::uint16_t port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  std::unique_ptr<Channel> accept(std::chrono::milliseconds timeout = kDefaultTimeout) {
    pollfd pfd{fd_, POLLIN, 0};
    int r;
    do {
      r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    } while (r < 0 && errno == EINTR);
    if (r <= 0) throw Error(ErrorCode::ChannelClosed, "no participant connected before the timeout");
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) throw Error(ErrorCode::ChannelClosed, std::string("accept failed: ") + std::strerror(errno));
    return std::make_unique<TcpChannel>(fd, timeout);
  }

 private:
  int fd_ = -1;
};

/// Connects, retrying until the listener is up or the timeout passes.
inline std::unique_ptr<Channel> tcp_connect(const Endpoint& ep, std::chrono::milliseconds timeout = kDefaultTimeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    addrinfo* res = detail::resolve(ep, false);
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    const int rc = fd < 0 ? -1 : ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc == 0) return std::make_unique<TcpChannel>(fd, timeout);
    if (fd >= 0) ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw Error(ErrorCode::ChannelClosed, "cannot connect to " + ep.host + ":" + std::to_string(ep.port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

// ---- session ----------------------------------------------------------------

class Session {
 public:
  explicit Session(std::unique_ptr<Channel> channel) : channel_(std::move(channel)) {}

  void send(const Frame& f) { channel_->write(encode_frame(f)); }

  Frame recv() {
    std::uint8_t header[kHeaderSize];
    channel_->read_exact(header);
    Frame f;
    const std::uint32_t length = parse_header(header, f.tag);
    f.payload.resize(length);
    if (length > 0) channel_->read_exact(f.payload);
    return f;
  }

  Frame expect(Tag tag) {
    Frame f = recv();
    if (f.tag != tag) {
      throw Error(ErrorCode::MalformedFrame, "expected frame tag " + std::to_string(static_cast<int>(tag)) + ", got " +
                                                 std::to_string(static_cast<int>(f.tag)));
    }
    return f;
  }

  void close() { channel_->close(); }

 private:
  std::unique_ptr<Channel> channel_;
};

/// Exchanges HELLO and CONFIG; returns the peer's digest.
///
/// The orchestrator speaks first in each exchange. Both sides always send
/// their own frame before reporting a mismatch, so the peer sees it too.
inline ConfigDigest handshake(Session& s, Role role, const ConfigDigest& cfg,
                              std::uint16_t version = kProtocolVersion) {
  const auto check_version = [&](std::uint16_t peer) {
    if (peer != version) {
      throw Error(ErrorCode::VersionMismatch,
                  "protocol version " + std::to_string(version) + " vs peer " + std::to_string(peer));
    }
  };
  const auto send_config = [&] {
    const std::string text = canonical_config(cfg);
    s.send({Tag::Config, Bytes(text.begin(), text.end())});
  };
  const auto recv_config = [&] {
    const Frame f = s.expect(Tag::Config);
    return parse_canonical_config({reinterpret_cast<const char*>(f.payload.data()), f.payload.size()});
  };

  ConfigDigest peer;
  if (role == Role::Orchestrator) {
    s.send({Tag::Hello, encode_hello(version)});
    check_version(decode_hello(s.expect(Tag::Hello).payload));
    send_config();
    peer = recv_config();
  } else {
    const std::uint16_t v = decode_hello(s.expect(Tag::Hello).payload);
    s.send({Tag::Hello, encode_hello(version)});
    check_version(v);
    peer = recv_config();
    send_config();
  }
  if (auto key = config_difference(cfg, peer)) {
    const auto show = [](const ConfigDigest& d, const std::string& k) {
      auto it = d.find(k);
      return it == d.end() ? std::string("<missing>") : it->second;
    };
    throw Error(ErrorCode::ConfigMismatch, "key '" + *key + "': " + show(cfg, *key) + " vs peer " + show(peer, *key));
  }
  return peer;
}

inline void send_window_data(Session& s, const WindowData& d) { s.send({Tag::WindowData, encode_window_data(d)}); }

inline void send_window_data(Session& s, const SampleSet& samples, std::uint32_t window, std::uint32_t iteration) {
  send_window_data(s, WindowData{window, iteration, samples.values});
}

inline WindowData recv_window_data(Session& s) { return decode_window_data(s.expect(Tag::WindowData).payload); }

/// Receives window data as the samples of `window`.
inline SampleSet recv_window_data(Session& s, const TimeWindow& window) {
  return make_samples(window, recv_window_data(s).values);
}

inline void send_control(Session& s, Control c) { s.send({Tag::Control, encode_control(c)}); }

inline Control recv_control(Session& s) { return decode_control(s.expect(Tag::Control).payload); }

// ---- participant plumbing -----------------------------------------------------

/// Orchestrator-side stand-in for a participant served over a session.
///
/// checkpoint() is implicit: the served side checkpoints at start and after
/// every WINDOW_CONVERGED. restore() maps to ITERATE, accept() to
/// WINDOW_CONVERGED.
class RemoteParticipant : public Participant {
 public:
  RemoteParticipant(Session& session, CouplingConfig cfg, std::size_t substeps)
      : session_(session), cfg_(std::move(cfg)), substeps_(substeps) {
    WindowData init = recv_window_data(session_);
    if (init.values.size() != 1) throw Error(ErrorCode::MalformedFrame, "initial interface must be one vector");
    initial_ = std::move(init.values.front());
  }

  std::size_t interface_size() const override { return initial_.size(); }
  std::size_t substeps() const override { return substeps_; }
  Vector initial_interface() override { return initial_; }
  void checkpoint() override { iteration_ = 0; }
  void restore() override {
    send_control(session_, Control::Iterate);
    ++iteration_;
  }
  void accept() override {
    send_control(session_, Control::WindowConverged);
    iteration_ = 0;
  }

  SampleSet solve_window(const TimeWindow& window, const Waveform& boundary) override {
    const auto w = static_cast<std::uint32_t>(std::llround(window.t_ini() / cfg_.dt_window));
    send_window_data(session_, boundary.samples(), w, iteration_);
    const WindowData reply = recv_window_data(session_);
    if (reply.window != w || reply.iteration != iteration_) {
      throw Error(ErrorCode::MalformedFrame, "reply for window " + std::to_string(reply.window) + " iteration " +
                                                 std::to_string(reply.iteration) + " out of order");
    }
    if (reply.values.size() != substeps_ + 1) throw Error(ErrorCode::LayoutMismatch, "reply has wrong substep count");
    return make_samples(window, reply.values);
  }

  /// Sends TERMINATE and completes the BYE exchange.
  void terminate() {
    send_control(session_, Control::Terminate);
    session_.expect(Tag::Bye);
    session_.send({Tag::Bye, {}});
  }

 private:
  Session& session_;
  CouplingConfig cfg_;
  std::size_t substeps_;
  Vector initial_;
  std::uint32_t iteration_ = 0;
};

/// Runs `participant` for the orchestrator on the other end of `session`
/// until TERMINATE. Incoming boundary samples are turned into waveforms with
/// boundary_waveform, exactly as the orchestrator built them.
inline void serve_participant(Session& session, Participant& participant, const CouplingConfig& cfg) {
  send_window_data(session, WindowData{0, 0, {participant.initial_interface()}});
  participant.checkpoint();
  for (;;) {
    const Frame f = session.recv();
    switch (f.tag) {
      case Tag::WindowData: {
        const WindowData d = decode_window_data(f.payload);
        const TimeWindow window = window_at(cfg, d.window);
        const Waveform boundary = boundary_waveform(cfg.scheme, cfg.p, make_samples(window, d.values));
        const SampleSet out = participant.solve_window(window, boundary);
        send_window_data(session, out, d.window, d.iteration);
        break;
      }
      case Tag::Control:
        switch (decode_control(f.payload)) {
          case Control::Iterate: participant.restore(); break;
          case Control::WindowConverged:
            participant.accept();
            participant.checkpoint();
            break;
          case Control::Terminate:
            session.send({Tag::Bye, {}});
            session.expect(Tag::Bye);
            return;
        }
        break;
      default: throw Error(ErrorCode::MalformedFrame, "unexpected frame while serving");
    }
  }
}

}  // namespace wfcpl::transport
