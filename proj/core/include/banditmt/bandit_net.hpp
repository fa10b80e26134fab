#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "banditmt/bandit_rl.hpp"
#include "banditmt/codec.hpp"
#include "banditmt/metrics.hpp"

namespace banditmt {

inline constexpr const char* kProtocolVersion = "banditmt-proto-1";

enum class FrameKind { kHello, kSrc, kTrans, kReward, kErr, kBye };

std::string_view frame_kind_name(FrameKind kind);

/// One protocol message. Fields that do not apply to a kind stay empty and are
/// omitted on the wire.
struct Frame {
  FrameKind kind = FrameKind::kHello;
  std::optional<std::uint64_t> id;
  std::optional<std::string> text;
  std::optional<Real> value;
  std::optional<std::string> message;

  bool operator==(const Frame&) const = default;
};

/// Single-line JSON object with keys in the order kind, id, text, value, message.
std::string encode_frame(const Frame& frame);
/// Throws ProtocolError("malformed frame") on anything that is not a valid frame.
Frame decode_frame(std::string_view line);

/// Blocking newline-delimited connection over a TCP socket.
class LineConnection {
 public:
  explicit LineConnection(int fd) : fd_(fd) {}
  LineConnection(LineConnection&& other) noexcept;
  LineConnection& operator=(LineConnection&& other) noexcept;
  LineConnection(const LineConnection&) = delete;
  LineConnection& operator=(const LineConnection&) = delete;
  ~LineConnection();

  static LineConnection connect(const std::string& host, std::uint16_t port);

  /// False once the peer has gone away.
  bool send_line(std::string_view line);
  /// nullopt on end of stream.
  std::optional<std::string> read_line();
  void shutdown();
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
  std::string buffer_;
};

/// Parses "host:port"; throws std::invalid_argument.
std::pair<std::string, std::uint16_t> parse_address(const std::string& address);

struct ServerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::size_t window = 64;  // outstanding un-rewarded SRC frames per session
  std::size_t max_sessions = 0;  // stop accepting after this many; 0 = unlimited
  std::optional<std::filesystem::path> log_dir;
  RewardFn reward = sentence_reward;
};

struct SessionSummary {
  std::size_t session = 0;
  std::size_t sources_sent = 0;
  std::size_t rewards_sent = 0;
  std::size_t errors = 0;
  bool client_bye = false;
  std::vector<TripleRecord> triples;  // in reward order
};

/// Streams every source sentence to each connecting client and answers each
/// translation with a reward against the hidden reference of the same id.
class BanditServer {
 public:
  BanditServer(std::vector<Sentence> sources, std::vector<Sentence> references, ServerConfig config);
  ~BanditServer();
  BanditServer(const BanditServer&) = delete;
  BanditServer& operator=(const BanditServer&) = delete;

  /// Binds, listens and starts accepting on a background thread.
  void start();
  std::uint16_t port() const { return port_; }
  /// Blocks until max_sessions sessions have finished (or stop() is called).
  void wait();
  void stop();

  std::vector<SessionSummary> summaries() const;

 private:
  void accept_loop();
  void run_session(std::size_t index, LineConnection conn);

  std::vector<Sentence> sources_;
  std::vector<Sentence> references_;
  ServerConfig config_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  mutable std::mutex mutex_;
  std::vector<std::thread> sessions_;
  std::vector<int> session_fds_;
  std::vector<SessionSummary> summaries_;
};

/// Client side of a session, usable as the learner's feedback channel.
/// REWARD frames that arrive while waiting for sources (and vice versa) are
/// queued, so callers see each stream in arrival order.
class NetworkFeedback : public FeedbackChannel {
 public:
  NetworkFeedback(const std::string& host, std::uint16_t port);
  ~NetworkFeedback() override;

  std::optional<SourceItem> next_source() override;
  void submit(std::uint64_t id, const Sentence& translation) override;
  /// Throws ProtocolError on an ERR frame and std::runtime_error on connection loss.
  RewardEvent next_reward() override;

  /// Sends BYE and closes the connection.
  void close();
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  Frame read_frame();

  LineConnection conn_;
  std::deque<SourceItem> sources_;
  std::deque<RewardEvent> rewards_;
  std::vector<std::string> errors_;
  bool server_bye_ = false;
  bool closed_ = false;
};

struct ClientLog {
  std::vector<TripleRecord> triples;
  std::vector<std::string> sources;  // every SRC text in arrival order
  std::vector<std::string> errors;
};

/// Translates each source with a fixed model and records the rewards.
ClientLog run_static_client(NetworkFeedback& channel, const NmtParams& params, const TextCodec& codec,
                            const DecodeConfig& decode_config, std::size_t limit = 0);

/// Records the source stream, answering each with an empty placeholder.
ClientLog run_log_sources_client(NetworkFeedback& channel, std::size_t limit = 0);

}  // namespace banditmt
