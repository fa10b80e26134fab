#include "banditmt/bandit_net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "banditmt/csv.hpp"

namespace banditmt {
namespace {

using ojson = nlohmann::ordered_json;

constexpr std::size_t kMaxLine = 1 << 20;

const std::pair<FrameKind, std::string_view> kKindNames[] = {
    {FrameKind::kHello, "HELLO"}, {FrameKind::kSrc, "SRC"}, {FrameKind::kTrans, "TRANS"},
    {FrameKind::kReward, "REWARD"}, {FrameKind::kErr, "ERR"}, {FrameKind::kBye, "BYE"},
};

[[noreturn]] void malformed() { throw ProtocolError("malformed frame"); }

void require_fields(const Frame& f) {
  const bool ok = [&] {
    switch (f.kind) {
      case FrameKind::kHello: return f.text.has_value();
      case FrameKind::kSrc:
      case FrameKind::kTrans: return f.id.has_value() && f.text.has_value();
      case FrameKind::kReward: return f.id.has_value() && f.value.has_value();
      case FrameKind::kErr: return f.message.has_value();
      case FrameKind::kBye: return true;
    }
    return false;
  }();
  if (!ok) malformed();
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class FrameLog {
 public:
  FrameLog() = default;
  explicit FrameLog(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write session log " + path.string());
    out_ << "time_ms,direction,kind,id,text,value,message\n";
    out_.precision(17);
  }
  void write(const char* direction, const Frame& f) {
    if (!out_.is_open()) return;
    out_ << now_ms() << ',' << direction << ',' << frame_kind_name(f.kind) << ',';
    if (f.id) out_ << *f.id;
    out_ << ',' << (f.text ? csv_field(*f.text) : "") << ',';
    if (f.value) out_ << *f.value;
    out_ << ',' << (f.message ? csv_field(*f.message) : "") << '\n';
  }
  void flush() {
    if (out_.is_open()) out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace

std::string_view frame_kind_name(FrameKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

std::string encode_frame(const Frame& frame) {
  ojson j;
  j["kind"] = frame_kind_name(frame.kind);
  if (frame.id) j["id"] = *frame.id;
  if (frame.text) j["text"] = *frame.text;
  if (frame.value) j["value"] = *frame.value;
  if (frame.message) j["message"] = *frame.message;
  return j.dump();
}

Frame decode_frame(std::string_view line) {
  ojson j = ojson::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) malformed();
  Frame f;
  bool have_kind = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") {
      if (!v.is_string()) malformed();
      const auto name = v.get<std::string>();
      auto it = std::find_if(std::begin(kKindNames), std::end(kKindNames),
                             [&](const auto& p) { return p.second == name; });
      if (it == std::end(kKindNames)) malformed();
      f.kind = it->first;
      have_kind = true;
    } else if (key == "id") {
      if (!v.is_number_unsigned()) malformed();
      f.id = v.get<std::uint64_t>();
    } else if (key == "text") {
      if (!v.is_string()) malformed();
      f.text = v.get<std::string>();
    } else if (key == "value") {
      if (!v.is_number()) malformed();
      f.value = v.get<Real>();
    } else if (key == "message") {
      if (!v.is_string()) malformed();
      f.message = v.get<std::string>();
    } else {
      malformed();
    }
  }
  if (!have_kind) malformed();
  require_fields(f);
  return f;
}

LineConnection::LineConnection(LineConnection&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), buffer_(std::move(other.buffer_)) {}

LineConnection& LineConnection::operator=(LineConnection&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
    buffer_ = std::move(other.buffer_);
  }
  return *this;
}

LineConnection::~LineConnection() {
  if (fd_ >= 0) ::close(fd_);
}

LineConnection LineConnection::connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw std::runtime_error("cannot resolve " + host + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw std::runtime_error("cannot connect to " + host + ":" + service);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return LineConnection(fd);
}

bool LineConnection::send_line(std::string_view line) {
  std::string data(line);
  data += '\n';
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<std::string> LineConnection::read_line() {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (buffer_.size() > kMaxLine) {
      buffer_.clear();
      return std::string("\x01");  // decodes as a malformed frame
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return std::nullopt;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void LineConnection::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 == address.size())
    throw std::invalid_argument("address must be host:port, got '" + address + "'");
  std::string host = address.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(address.substr(colon + 1), &used);
    if (used != address.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in address '" + address + "'");
  }
  if (port > 65535) throw std::invalid_argument("port out of range in '" + address + "'");
  return {host, static_cast<std::uint16_t>(port)};
}

BanditServer::BanditServer(std::vector<Sentence> sources, std::vector<Sentence> references, ServerConfig config)
    : sources_(std::move(sources)), references_(std::move(references)), config_(std::move(config)) {
  if (sources_.empty()) throw std::invalid_argument("serve: empty corpus");
  if (sources_.size() != references_.size()) throw std::invalid_argument("serve: source and reference counts differ");
  if (config_.window == 0) throw std::invalid_argument("serve: window must be >= 1");
  if (!config_.reward) throw std::invalid_argument("serve: no reward function");
}

BanditServer::~BanditServer() { stop(); }

void BanditServer::start() {
  if (config_.log_dir) std::filesystem::create_directories(*config_.log_dir);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(config_.port);
  if (const int rc = ::getaddrinfo(config_.host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw std::runtime_error("cannot resolve " + config_.host + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, p->ai_addr, p->ai_addrlen) == 0 && ::listen(fd, 16) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw std::runtime_error("cannot listen on " + config_.host + ":" + service + ": " + std::strerror(errno));
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                           : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  listen_fd_ = fd;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void BanditServer::accept_loop() {
  std::size_t accepted = 0;
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(mutex_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    session_fds_.push_back(fd);
    sessions_.emplace_back([this, index = accepted, fd] { run_session(index, LineConnection(fd)); });
    ++accepted;
    if (config_.max_sessions != 0 && accepted >= config_.max_sessions) break;
  }
}

void BanditServer::run_session(std::size_t index, LineConnection conn) {
  SessionSummary summary;
  summary.session = index;
  FrameLog frames;
  if (config_.log_dir) frames = FrameLog(*config_.log_dir / ("session_" + std::to_string(index) + "_frames.csv"));

  auto send = [&](const Frame& f) {
    frames.write("out", f);
    return conn.send_line(encode_frame(f));
  };
  auto send_error = [&](const std::string& message) {
    ++summary.errors;
    return send(Frame{FrameKind::kErr, std::nullopt, std::nullopt, std::nullopt, message});
  };

  std::set<std::uint64_t> rewarded;
  std::uint64_t next = 0;
  bool bye_sent = false;
  bool alive = send(Frame{FrameKind::kHello, std::nullopt, std::string(kProtocolVersion), std::nullopt, std::nullopt});
  while (alive) {
    while (next < sources_.size() && next - rewarded.size() < config_.window && alive) {
      alive = send(Frame{FrameKind::kSrc, next, join(sources_[next]), std::nullopt, std::nullopt});
      ++next;
      ++summary.sources_sent;
    }
    if (alive && next == sources_.size() && !bye_sent) {
      alive = send(Frame{FrameKind::kBye, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
      bye_sent = true;
    }
    if (!alive) break;
    const std::optional<std::string> line = conn.read_line();
    if (!line) break;
    Frame f;
    try {
      f = decode_frame(*line);
    } catch (const ProtocolError&) {
      alive = send_error("malformed frame");
      continue;
    }
    frames.write("in", f);
    if (f.kind == FrameKind::kBye) {
      summary.client_bye = true;
      break;
    }
    if (f.kind != FrameKind::kTrans) {
      alive = send_error("malformed frame");
      continue;
    }
    const std::uint64_t id = *f.id;
    if (id >= next) {
      alive = send_error("unknown id");
      continue;
    }
    if (rewarded.count(id)) {
      alive = send_error("duplicate id");
      continue;
    }
    const Sentence hyp = tokenize(*f.text);
    Real r = config_.reward(hyp, references_[id]);
    if (!(r >= 0.0)) r = 0.0;
    r = std::min(r, 1.0);
    rewarded.insert(id);
    summary.triples.push_back({id, join(sources_[id]), *f.text, r});
    ++summary.rewards_sent;
    alive = send(Frame{FrameKind::kReward, id, std::nullopt, r, std::nullopt});
  }
  frames.flush();
  if (config_.log_dir)
    write_triples_csv(*config_.log_dir / ("session_" + std::to_string(index) + "_triples.csv"), summary.triples);
  conn.shutdown();

  std::lock_guard lock(mutex_);
  summaries_.push_back(std::move(summary));
}

void BanditServer::wait() {
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mutex_);
    threads.swap(sessions_);
  }
  for (auto& t : threads)
    if (t.joinable()) t.join();
}

void BanditServer::stop() {
  stopping_ = true;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  {
    std::lock_guard lock(mutex_);
    for (int fd : session_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  wait();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
}

std::vector<SessionSummary> BanditServer::summaries() const {
  std::lock_guard lock(mutex_);
  std::vector<SessionSummary> out = summaries_;
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.session < b.session; });
  return out;
}

NetworkFeedback::NetworkFeedback(const std::string& host, std::uint16_t port)
    : conn_(LineConnection::connect(host, port)) {
  const Frame hello = read_frame();
  if (hello.kind != FrameKind::kHello || hello.text != std::string(kProtocolVersion))
    throw ProtocolError("server does not speak " + std::string(kProtocolVersion));
}

NetworkFeedback::~NetworkFeedback() {
  try {
    close();
  } catch (...) {
  }
}

Frame NetworkFeedback::read_frame() {
  const std::optional<std::string> line = conn_.read_line();
  if (!line) throw std::runtime_error("connection lost");
  return decode_frame(*line);
}

std::optional<SourceItem> NetworkFeedback::next_source() {
  for (;;) {
    if (!sources_.empty()) {
      SourceItem item = std::move(sources_.front());
      sources_.pop_front();
      return item;
    }
    if (server_bye_ || closed_) return std::nullopt;
    Frame f = read_frame();
    switch (f.kind) {
      case FrameKind::kSrc: sources_.push_back({*f.id, tokenize(*f.text)}); break;
      case FrameKind::kReward: rewards_.push_back({*f.id, *f.value}); break;
      case FrameKind::kBye: server_bye_ = true; break;
      case FrameKind::kErr: errors_.push_back(*f.message); break;
      default: break;
    }
  }
}

void NetworkFeedback::submit(std::uint64_t id, const Sentence& translation) {
  if (closed_) throw std::runtime_error("connection closed");
  if (!conn_.send_line(encode_frame(Frame{FrameKind::kTrans, id, join(translation), std::nullopt, std::nullopt})))
    throw std::runtime_error("connection lost");
}

RewardEvent NetworkFeedback::next_reward() {
  for (;;) {
    if (!rewards_.empty()) {
      RewardEvent ev = rewards_.front();
      rewards_.pop_front();
      return ev;
    }
    Frame f = read_frame();
    switch (f.kind) {
      case FrameKind::kReward: return {*f.id, *f.value};
      case FrameKind::kSrc: sources_.push_back({*f.id, tokenize(*f.text)}); break;
      case FrameKind::kBye: server_bye_ = true; break;
      case FrameKind::kErr:
        errors_.push_back(*f.message);
        throw ProtocolError(*f.message);
      default: break;
    }
  }
}

void NetworkFeedback::close() {
  if (closed_) return;
  closed_ = true;
  conn_.send_line(encode_frame(Frame{FrameKind::kBye, std::nullopt, std::nullopt, std::nullopt, std::nullopt}));
  conn_.shutdown();
}

ClientLog run_static_client(NetworkFeedback& channel, const NmtParams& params, const TextCodec& codec,
                            const DecodeConfig& decode_config, std::size_t limit) {
  ClientLog log;
  std::map<std::uint64_t, TripleRecord> open;
  std::size_t count = 0;
  while (limit == 0 || count < limit) {
    std::optional<SourceItem> src = channel.next_source();
    if (!src) break;
    ++count;
    const Hypothesis h = decode(params, codec.encode_source(src->text), decode_config);
    const Sentence words = codec.decode_target(h.tokens);
    log.sources.push_back(join(src->text));
    open[src->id] = {src->id, join(src->text), join(words), 0.0};
    channel.submit(src->id, words);
    const RewardEvent ev = channel.next_reward();
    auto it = open.find(ev.id);
    if (it == open.end()) {
      log.errors.push_back("reward for unknown id " + std::to_string(ev.id));
      continue;
    }
    it->second.reward = ev.value;
    log.triples.push_back(it->second);
    open.erase(it);
  }
  channel.close();
  log.errors.insert(log.errors.end(), channel.errors().begin(), channel.errors().end());
  return log;
}

ClientLog run_log_sources_client(NetworkFeedback& channel, std::size_t limit) {
  ClientLog log;
  std::size_t count = 0;
  while (limit == 0 || count < limit) {
    std::optional<SourceItem> src = channel.next_source();
    if (!src) break;
    ++count;
    log.sources.push_back(join(src->text));
    channel.submit(src->id, {});
    const RewardEvent ev = channel.next_reward();
    log.triples.push_back({ev.id, log.sources.back(), "", ev.value});
  }
  channel.close();
  log.errors.insert(log.errors.end(), channel.errors().begin(), channel.errors().end());
  return log;
}

}  // namespace banditmt
