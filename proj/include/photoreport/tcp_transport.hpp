#pragma once

// Blocking line-oriented TCP client used to reach an external predictor.
// One connection per request keeps the peer stateless.

#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>

#include "photoreport/predictor.hpp"

namespace photoreport {

namespace detail {

class SocketHandle {
 public:
  explicit SocketHandle(int fd) noexcept : fd_(fd) {}
  SocketHandle(const SocketHandle&) = delete;
  SocketHandle& operator=(const SocketHandle&) = delete;
  ~SocketHandle() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const noexcept { return fd_; }

 private:
  int fd_;
};

}  // namespace detail

class TcpLineTransport {
 public:
  TcpLineTransport(std::string host, std::string port, std::chrono::milliseconds timeout = std::chrono::seconds(5))
      : host_(std::move(host)), port_(std::move(port)), timeout_(timeout) {}

  /// Parses "host:port".
  static TcpLineTransport from_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == address.size())
      throw std::invalid_argument("predictor address must be host:port, got '" + address + "'");
    return TcpLineTransport(address.substr(0, colon), address.substr(colon + 1));
  }

  std::string operator()(const std::string& request) const {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host_.c_str(), port_.c_str(), &hints, &res); rc != 0)
      throw TransportError(std::string("resolve failed: ") + ::gai_strerror(rc));

    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw TransportError("connect to " + host_ + ":" + port_ + " failed");
    detail::SocketHandle sock(fd);

    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout_.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout_.count() % 1000) * 1000);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);

    const std::string line = request + "\n";
    std::size_t sent = 0;
    while (sent < line.size()) {
      const auto n = ::send(fd, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) throw TransportError(std::string("send failed: ") + std::strerror(errno));
      sent += static_cast<std::size_t>(n);
    }

    std::string response;
    char buf[4096];
    for (;;) {
      const auto n = ::recv(fd, buf, sizeof buf, 0);
      if (n < 0) throw TransportError(std::string("recv failed: ") + std::strerror(errno));
      if (n == 0) break;
      response.append(buf, static_cast<std::size_t>(n));
      if (auto nl = response.find('\n'); nl != std::string::npos) {
        response.resize(nl);
        return response;
      }
    }
    if (response.empty()) throw TransportError("predictor closed the connection without a response");
    return response;
  }

 private:
  std::string host_;
  std::string port_;
  std::chrono::milliseconds timeout_;
};

}  // namespace photoreport
