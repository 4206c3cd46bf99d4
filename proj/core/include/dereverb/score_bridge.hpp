#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "dereverb/prior.hpp"
#include "dereverb/types.hpp"

namespace dereverb::bridge {

// Frame layout (all little-endian):
//   magic "DRVB" | code u32 | sigma f64 | length u64 | payload
// Requests: code is the op. score carries `length` float32 samples; vjp carries
// `length` samples of x followed by `length` of cotangent; meta has no payload.
// Responses: code is the status. On success score/vjp return `length` float32
// values, meta returns `length` bytes of JSON {data_rms, sample_rate, max_len, vjp};
// on error the payload is `length` bytes of UTF-8 message.
inline constexpr std::array<unsigned char, 4> kMagic = {'D', 'R', 'V', 'B'};
inline constexpr std::size_t kHeaderBytes = 24;

enum class Op : std::uint32_t { score = 1, vjp = 2, meta = 3 };
enum class Status : std::uint32_t { ok = 0, error = 1 };

struct Header {
  std::uint32_t code = 0;
  double sigma = 0.0;
  std::uint64_t length = 0;
};

/// Malformed frame on the wire.
class ProtocolError : public NumericError {
 public:
  using NumericError::NumericError;
};

std::array<unsigned char, kHeaderBytes> encode_header(const Header& h);
/// Throws ProtocolError on a wrong magic.
Header decode_header(std::span<const unsigned char, kHeaderBytes> bytes);
std::vector<unsigned char> encode_floats(std::span<const double> values);
std::vector<double> decode_floats(std::span<const unsigned char> bytes);

struct Meta {
  double data_rms = 0.05;
  double sample_rate = 16000.0;
  std::uint64_t max_len = 0;  // 0: unlimited
  bool vjp = false;
};
std::string meta_to_json(const Meta& m);
Meta meta_from_json(const std::string& text);

/// "tcp://host:port" or "stdio:<command line>" (the command is split on spaces).
struct Endpoint {
  enum class Kind { tcp, stdio };
  Kind kind = Kind::tcp;
  std::string host;
  std::uint16_t port = 0;
  std::vector<std::string> argv;

  static Endpoint parse(const std::string& text);
};

/// ScoreModel served by another process. Calls are serialized; transport
/// failures and timeouts throw NumericError, server-side errors too.
class BridgeClient final : public prior::ScoreModel {
 public:
  explicit BridgeClient(const Endpoint& endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  /// Adopts already connected descriptors (used with in-process servers).
  BridgeClient(int read_fd, int write_fd, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~BridgeClient() override;
  BridgeClient(const BridgeClient&) = delete;
  BridgeClient& operator=(const BridgeClient&) = delete;

  std::vector<double> score(std::span<const double> x, double sigma) const override;
  bool has_vjp() const override { return meta_.vjp; }
  std::vector<double> vjp_score(std::span<const double> x, double sigma,
                                std::span<const double> cotangent) const override;
  double data_rms() const override { return meta_.data_rms; }

  const Meta& meta() const { return meta_; }

 private:
  std::vector<unsigned char> call(Op op, double sigma, std::uint64_t length,
                                  std::span<const unsigned char> payload, std::uint64_t& reply_length) const;
  void fetch_meta();
  void close_all() noexcept;

  int read_fd_ = -1;
  int write_fd_ = -1;
  int child_pid_ = -1;
  std::chrono::milliseconds timeout_;
  Meta meta_;
  mutable std::mutex mutex_;
};

/// Answers framed requests read from `in_fd` with `model` until end of input.
/// Malformed frames get an error response and the loop continues.
void serve(const prior::ScoreModel& model, int in_fd, int out_fd, const Meta& meta);

}  // namespace dereverb::bridge
