#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>

#include "offgrid/netsim.hpp"

namespace offgrid {

// Length-prefix framed transport over a connected TCP socket. Frame writes
// are serialized; reads reassemble exactly one frame per recv.
class TcpTransport : public FrameTransport {
 public:
  explicit TcpTransport(int fd);
  ~TcpTransport() override;

  void send(std::vector<uint8_t> frame) override;
  RecvStatus recv(double timeout_s, std::vector<uint8_t>& out) override;
  uint64_t bytes_sent() const override { return sent_; }
  uint64_t bytes_received() const override { return received_; }
  void close() override;

 private:
  int fd_;
  std::mutex send_mu_;
  std::atomic<uint64_t> sent_{0};
  std::atomic<uint64_t> received_{0};
  std::atomic<bool> closed_{false};
};

class TcpListener {
 public:
  // Port 0 binds an ephemeral port; bound_port() reports the actual one.
  explicit TcpListener(uint16_t port);
  ~TcpListener();

  uint16_t bound_port() const { return port_; }
  // nullptr on timeout.
  std::unique_ptr<TcpTransport> accept(double timeout_s);
  void close();

 private:
  int fd_;
  uint16_t port_;
};

std::unique_ptr<TcpTransport> tcp_connect(const std::string& host, uint16_t port,
                                          double timeout_s);

}  // namespace offgrid
