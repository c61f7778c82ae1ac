#include "offgrid/tcp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "offgrid/errors.hpp"

namespace offgrid {

namespace {

double mono_now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Reads exactly n bytes before `deadline`; 1 on success, 0 on timeout,
// -1 on EOF/error.
int read_exact(int fd, uint8_t* dst, std::size_t n, double deadline) {
  std::size_t got = 0;
  while (got < n) {
    double left = deadline - mono_now();
    if (left <= 0) return 0;
    pollfd pfd{fd, POLLIN, 0};
    int pr = ::poll(&pfd, 1, static_cast<int>(left * 1000) + 1);
    if (pr < 0) return -1;
    if (pr == 0) continue;
    ssize_t r = ::recv(fd, dst + got, n - got, 0);
    if (r <= 0) return -1;
    got += static_cast<std::size_t>(r);
  }
  return 1;
}

}  // namespace

TcpTransport::TcpTransport(int fd) : fd_(fd) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpTransport::~TcpTransport() { close(); }

void TcpTransport::send(std::vector<uint8_t> frame) {
  std::lock_guard lk(send_mu_);
  if (closed_) return;
  std::size_t sent = 0;
  while (sent < frame.size()) {
    ssize_t w = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (w <= 0) {
      closed_ = true;
      return;
    }
    sent += static_cast<std::size_t>(w);
  }
  sent_ += frame.size();
}

RecvStatus TcpTransport::recv(double timeout_s, std::vector<uint8_t>& out) {
  if (closed_) return RecvStatus::kClosed;
  double deadline = mono_now() + std::max(timeout_s, 0.0);
  uint8_t prefix[4];
  int r = read_exact(fd_, prefix, 4, deadline);
  if (r == 0) return RecvStatus::kTimeout;
  if (r < 0) {
    closed_ = true;
    return RecvStatus::kClosed;
  }
  uint32_t content = 0;
  for (int i = 0; i < 4; ++i) content = content << 8 | prefix[i];
  out.assign(4 + content, 0);
  std::memcpy(out.data(), prefix, 4);
  // The body of an announced frame follows immediately; allow the full
  // timeout again rather than splitting it.
  r = read_exact(fd_, out.data() + 4, content, mono_now() + std::max(timeout_s, 1.0));
  if (r <= 0) {
    closed_ = true;
    return RecvStatus::kClosed;
  }
  received_ += out.size();
  return RecvStatus::kOk;
}

void TcpTransport::close() {
  bool expected = false;
  if (closed_.compare_exchange_strong(expected, true)) {
    ::shutdown(fd_, SHUT_RDWR);
  }
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

TcpListener::TcpListener(uint16_t port) : fd_(-1), port_(0) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error("socket() failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(fd_, 4) < 0) {
    ::close(fd_);
    throw Error("bind/listen failed on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::unique_ptr<TcpTransport> TcpListener::accept(double timeout_s) {
  pollfd pfd{fd_, POLLIN, 0};
  int pr = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000) + 1);
  if (pr <= 0) return nullptr;
  int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) return nullptr;
  return std::make_unique<TcpTransport>(client);
}

std::unique_ptr<TcpTransport> tcp_connect(const std::string& host, uint16_t port,
                                          double timeout_s) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error("tcp_connect expects a dotted IPv4 address, got: " + host);
  }
  (void)timeout_s;
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd);
    throw Error("connect failed to " + host + ":" + std::to_string(port));
  }
  return std::make_unique<TcpTransport>(fd);
}

}  // namespace offgrid
