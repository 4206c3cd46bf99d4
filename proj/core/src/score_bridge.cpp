#include "dereverb/score_bridge.hpp"

#include <bit>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <sstream>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

extern char** environ;

namespace dereverb::bridge {
namespace {

using Clock = std::chrono::steady_clock;

void put_le(unsigned char* p, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}
std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left > 0 ? static_cast<int>(left) : 0;
}

void wait_ready(int fd, short events, Clock::time_point deadline, const char* what) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int r = ::poll(&p, 1, remaining_ms(deadline));
    if (r > 0) return;
    if (r == 0) throw NumericError(std::string("score bridge: timed out while ") + what);
    if (errno != EINTR) throw NumericError(std::string("score bridge: poll failed: ") + std::strerror(errno));
  }
}

// Reads exactly n bytes; returns false on EOF before the first byte.
bool read_exact(int fd, unsigned char* buf, std::size_t n, Clock::time_point deadline, bool timed) {
  std::size_t got = 0;
  while (got < n) {
    if (timed) wait_ready(fd, POLLIN, deadline, "waiting for a reply");
    const ssize_t r = ::read(fd, buf + got, n - got);
    if (r == 0) {
      if (got == 0) return false;
      throw NumericError("score bridge: connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw NumericError(std::string("score bridge: read failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

// Writes with SIGPIPE blocked for this thread so a vanished peer surfaces as EPIPE.
void write_all(int fd, const unsigned char* buf, std::size_t n, Clock::time_point deadline, bool timed) {
  sigset_t block, old;
  sigemptyset(&block);
  sigaddset(&block, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &block, &old);
  std::size_t done = 0;
  int err = 0;
  while (done < n) {
    if (timed) {
      try {
        wait_ready(fd, POLLOUT, deadline, "sending a request");
      } catch (...) {
        pthread_sigmask(SIG_SETMASK, &old, nullptr);
        throw;
      }
    }
    const ssize_t r = ::write(fd, buf + done, n - done);
    if (r < 0) {
      if (errno == EINTR) continue;
      err = errno;
      break;
    }
    done += static_cast<std::size_t>(r);
  }
  if (err == EPIPE) {
    const timespec zero{0, 0};
    sigtimedwait(&block, nullptr, &zero);  // drop the pending SIGPIPE
  }
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  if (err) throw NumericError(std::string("score bridge: write failed: ") + std::strerror(err));
}

int connect_tcp(const std::string& host, std::uint16_t port, Clock::time_point deadline) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw NumericError("score bridge: cannot resolve '" + host + "': " + gai_strerror(rc));
  std::string last_error = "no address";
  for (addrinfo* a = res; a; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, a->ai_addr, a->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, remaining_ms(deadline));
      if (rc > 0) {
        int so = 0;
        socklen_t len = sizeof so;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &so, &len);
        rc = so == 0 ? 0 : -1;
        errno = so;
      } else {
        if (rc == 0) errno = ETIMEDOUT;
        rc = -1;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      ::freeaddrinfo(res);
      return fd;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw NumericError("score bridge: cannot connect to " + host + ":" + service + ": " + last_error);
}

}  // namespace

std::array<unsigned char, kHeaderBytes> encode_header(const Header& h) {
  std::array<unsigned char, kHeaderBytes> out{};
  std::copy(kMagic.begin(), kMagic.end(), out.begin());
  put_le(out.data() + 4, h.code, 4);
  put_le(out.data() + 8, std::bit_cast<std::uint64_t>(h.sigma), 8);
  put_le(out.data() + 16, h.length, 8);
  return out;
}

Header decode_header(std::span<const unsigned char, kHeaderBytes> bytes) {
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw ProtocolError("score bridge: bad frame magic");
  Header h;
  h.code = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  h.sigma = std::bit_cast<double>(get_le(bytes.data() + 8, 8));
  h.length = get_le(bytes.data() + 16, 8);
  return h;
}

std::vector<unsigned char> encode_floats(std::span<const double> values) {
  std::vector<unsigned char> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i)
    put_le(out.data() + 4 * i, std::bit_cast<std::uint32_t>(static_cast<float>(values[i])), 4);
  return out;
}

std::vector<double> decode_floats(std::span<const unsigned char> bytes) {
  if (bytes.size() % 4 != 0) throw ProtocolError("score bridge: payload is not a whole number of float32 values");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes.data() + 4 * i, 4)));
  return out;
}

std::string meta_to_json(const Meta& m) {
  return nlohmann::json{{"data_rms", m.data_rms}, {"sample_rate", m.sample_rate}, {"max_len", m.max_len}, {"vjp", m.vjp}}
      .dump();
}

Meta meta_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Meta m;
    m.data_rms = j.at("data_rms").get<double>();
    m.sample_rate = j.at("sample_rate").get<double>();
    m.max_len = j.at("max_len").get<std::uint64_t>();
    m.vjp = j.value("vjp", false);
    if (!(m.data_rms > 0.0)) throw ProtocolError("score bridge: meta data_rms must be positive");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("score bridge: invalid meta record: ") + e.what());
  }
}

Endpoint Endpoint::parse(const std::string& text) {
  Endpoint e;
  if (text.rfind("tcp://", 0) == 0) {
    const std::string rest = text.substr(6);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ConfigError("bridge endpoint '" + text + "': expected tcp://host:port");
    e.kind = Kind::tcp;
    e.host = rest.substr(0, colon);
    const std::string port = rest.substr(colon + 1);
    char* end = nullptr;
    const long p = std::strtol(port.c_str(), &end, 10);
    if (port.empty() || *end != '\0' || p <= 0 || p > 65535)
      throw ConfigError("bridge endpoint '" + text + "': invalid port");
    e.port = static_cast<std::uint16_t>(p);
    return e;
  }
  if (text.rfind("stdio:", 0) == 0) {
    e.kind = Kind::stdio;
    std::istringstream ss(text.substr(6));
    for (std::string arg; ss >> arg;) e.argv.push_back(arg);
    if (e.argv.empty()) throw ConfigError("bridge endpoint '" + text + "': missing command");
    return e;
  }
  throw ConfigError("bridge endpoint '" + text + "': expected tcp://host:port or stdio:<command>");
}

BridgeClient::BridgeClient(const Endpoint& endpoint, std::chrono::milliseconds timeout) : timeout_(timeout) {
  const auto deadline = Clock::now() + timeout_;
  if (endpoint.kind == Endpoint::Kind::tcp) {
    read_fd_ = connect_tcp(endpoint.host, endpoint.port, deadline);
    write_fd_ = ::dup(read_fd_);
  } else {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw NumericError("score bridge: pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw NumericError("score bridge: pipe failed");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]})
      posix_spawn_file_actions_addclose(&actions, fd);
    std::vector<char*> argv;
    for (const auto& a : endpoint.argv) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    pid_t pid = -1;
    const int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      throw NumericError("score bridge: cannot start '" + endpoint.argv[0] + "': " + std::strerror(rc));
    }
    child_pid_ = pid;
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }
  try {
    fetch_meta();
  } catch (...) {
    close_all();
    throw;
  }
}

BridgeClient::BridgeClient(int read_fd, int write_fd, std::chrono::milliseconds timeout)
    : read_fd_(read_fd), write_fd_(write_fd), timeout_(timeout) {
  try {
    fetch_meta();
  } catch (...) {
    close_all();
    throw;
  }
}

BridgeClient::~BridgeClient() { close_all(); }

void BridgeClient::close_all() noexcept {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
  read_fd_ = write_fd_ = -1;
  if (child_pid_ > 0) {
    int status = 0;
    if (::waitpid(child_pid_, &status, WNOHANG) == 0) {
      ::kill(child_pid_, SIGTERM);
      ::waitpid(child_pid_, &status, 0);
    }
    child_pid_ = -1;
  }
}

std::vector<unsigned char> BridgeClient::call(Op op, double sigma, std::uint64_t length,
                                              std::span<const unsigned char> payload,
                                              std::uint64_t& reply_length) const {
  std::lock_guard lock(mutex_);
  if (read_fd_ < 0) throw NumericError("score bridge: connection is closed");
  const auto deadline = Clock::now() + timeout_;
  const auto header = encode_header({static_cast<std::uint32_t>(op), sigma, length});
  std::vector<unsigned char> frame(header.begin(), header.end());
  frame.insert(frame.end(), payload.begin(), payload.end());
  write_all(write_fd_, frame.data(), frame.size(), deadline, true);

  std::array<unsigned char, kHeaderBytes> reply{};
  if (!read_exact(read_fd_, reply.data(), reply.size(), deadline, true))
    throw NumericError("score bridge: server closed the connection");
  const Header h = decode_header(reply);
  const std::uint64_t bytes = h.code == static_cast<std::uint32_t>(Status::ok) && op != Op::meta ? h.length * 4 : h.length;
  if (bytes > (std::uint64_t{1} << 34)) throw ProtocolError("score bridge: reply too large");
  std::vector<unsigned char> body(bytes);
  if (bytes > 0 && !read_exact(read_fd_, body.data(), body.size(), deadline, true))
    throw NumericError("score bridge: server closed the connection");
  if (h.code != static_cast<std::uint32_t>(Status::ok))
    throw NumericError("score bridge: server error: " + std::string(body.begin(), body.end()));
  reply_length = h.length;
  return body;
}

void BridgeClient::fetch_meta() {
  std::uint64_t n = 0;
  const auto body = call(Op::meta, 0.0, 0, {}, n);
  meta_ = meta_from_json(std::string(body.begin(), body.end()));
}

std::vector<double> BridgeClient::score(std::span<const double> x, double sigma) const {
  if (meta_.max_len && x.size() > meta_.max_len) throw ConfigError("score bridge: input longer than server max_len");
  std::uint64_t n = 0;
  const auto body = call(Op::score, sigma, x.size(), encode_floats(x), n);
  if (n != x.size()) throw ProtocolError("score bridge: reply length differs from request");
  return decode_floats(body);
}

std::vector<double> BridgeClient::vjp_score(std::span<const double> x, double sigma,
                                            std::span<const double> cotangent) const {
  if (!meta_.vjp) return ScoreModel::vjp_score(x, sigma, cotangent);
  if (cotangent.size() != x.size()) throw ConfigError("vjp_score: size mismatch");
  auto payload = encode_floats(x);
  const auto cot = encode_floats(cotangent);
  payload.insert(payload.end(), cot.begin(), cot.end());
  std::uint64_t n = 0;
  const auto body = call(Op::vjp, sigma, x.size(), payload, n);
  if (n != x.size()) throw ProtocolError("score bridge: reply length differs from request");
  return decode_floats(body);
}

void serve(const prior::ScoreModel& model, int in_fd, int out_fd, const Meta& meta) {
  const auto never = Clock::time_point::max();
  const auto send = [&](Status status, double sigma, std::uint64_t length, std::span<const unsigned char> body) {
    const auto h = encode_header({static_cast<std::uint32_t>(status), sigma, length});
    std::vector<unsigned char> frame(h.begin(), h.end());
    frame.insert(frame.end(), body.begin(), body.end());
    write_all(out_fd, frame.data(), frame.size(), never, false);
  };
  const auto send_error = [&](const std::string& message) {
    send(Status::error, 0.0, message.size(),
         std::span(reinterpret_cast<const unsigned char*>(message.data()), message.size()));
  };
  const std::uint64_t limit = meta.max_len ? meta.max_len : (std::uint64_t{1} << 28);

  for (;;) {
    std::array<unsigned char, kHeaderBytes> raw{};
    if (!read_exact(in_fd, raw.data(), raw.size(), never, false)) return;
    Header h;
    try {
      h = decode_header(raw);
    } catch (const ProtocolError& e) {
      send_error(e.what());
      continue;
    }
    const auto op = static_cast<Op>(h.code);
    if (op == Op::meta) {
      const std::string m = meta_to_json(meta);
      send(Status::ok, 0.0, m.size(), std::span(reinterpret_cast<const unsigned char*>(m.data()), m.size()));
      continue;
    }
    if (op != Op::score && op != Op::vjp) {
      send_error("unknown op " + std::to_string(h.code));
      continue;
    }
    if (h.length > limit) {
      send_error("length exceeds max_len");
      return;  // payload size is untrusted; drop the connection
    }
    const std::uint64_t count = op == Op::vjp ? 2 * h.length : h.length;
    std::vector<unsigned char> payload(count * 4);
    if (count > 0 && !read_exact(in_fd, payload.data(), payload.size(), never, false)) return;
    try {
      const auto values = decode_floats(payload);
      const std::span<const double> x(values.data(), h.length);
      std::vector<double> out;
      if (op == Op::score) {
        out = model.score(x, h.sigma);
      } else {
        if (!model.has_vjp()) throw ConfigError("vjp not supported");
        out = model.vjp_score(x, h.sigma, std::span<const double>(values.data() + h.length, h.length));
      }
      const auto body = encode_floats(out);
      send(Status::ok, h.sigma, out.size(), body);
    } catch (const std::exception& e) {
      send_error(e.what());
    }
  }
}

}  // namespace dereverb::bridge
