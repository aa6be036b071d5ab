#include "kt/link/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "kt/error.hpp"

namespace kt::link {

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

int wait_fd(int fd, short events, Millis timeout) {
    pollfd p{fd, events, 0};
    for (;;) {
        const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) fail(Errc::io, sys_error("poll"));
        return r;
    }
}

addrinfo* resolve(const Endpoint& ep, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const auto port = std::to_string(ep.port);
    const int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &res);
    if (rc != 0) fail(Errc::io, "cannot resolve " + ep.str() + ": " + ::gai_strerror(rc));
    return res;
}

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) fail(Errc::invalid_argument, "endpoint '" + text + "' is not host:port");
    Endpoint ep;
    ep.host = text.substr(0, colon);
    if (ep.host.size() >= 2 && ep.host.front() == '[' && ep.host.back() == ']') ep.host = ep.host.substr(1, ep.host.size() - 2);
    const auto port = text.substr(colon + 1);
    if (port.empty() || port.size() > 5 || port.find_first_not_of("0123456789") != std::string::npos ||
        std::stoul(port) > 65535)
        fail(Errc::invalid_argument, "endpoint '" + text + "' has an invalid port");
    ep.port = static_cast<std::uint16_t>(std::stoul(port));
    if (ep.host.empty()) ep.host = "127.0.0.1";
    return ep;
}

TcpStream::~TcpStream() { close(); }

void TcpStream::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

std::unique_ptr<TcpStream> TcpStream::connect(const Endpoint& ep, Millis timeout) {
    addrinfo* res = resolve(ep, false);
    std::string last = "no addresses";
    for (addrinfo* a = res; a; a = a->ai_next) {
        const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
        if (fd < 0) continue;
        const int flags = ::fcntl(fd, F_GETFL);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, a->ai_addr, a->ai_addrlen);
        if (rc < 0 && errno == EINPROGRESS) {
            if (wait_fd(fd, POLLOUT, timeout) == 0) {
                ::close(fd);
                ::freeaddrinfo(res);
                fail(Errc::timeout, "connecting to " + ep.str() + " timed out");
            }
            int err = 0;
            socklen_t len = sizeof err;
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
            rc = err == 0 ? 0 : -1;
            errno = err;
        }
        if (rc == 0) {
            ::fcntl(fd, F_SETFL, flags);
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            ::freeaddrinfo(res);
            return std::make_unique<TcpStream>(fd);
        }
        last = std::strerror(errno);
        ::close(fd);
    }
    ::freeaddrinfo(res);
    fail(Errc::connection_closed, "cannot connect to " + ep.str() + ": " + last);
}

void TcpStream::write_all(std::span<const std::uint8_t> bytes) {
    if (fd_ < 0) fail(Errc::connection_closed, "write on a closed stream");
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const auto n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n < 0) fail(Errc::connection_closed, sys_error("send"));
        sent += static_cast<std::size_t>(n);
    }
}

std::size_t TcpStream::read_some(std::span<std::uint8_t> buf, Millis timeout) {
    if (fd_ < 0) fail(Errc::connection_closed, "read on a closed stream");
    if (wait_fd(fd_, POLLIN, timeout) == 0)
        fail(Errc::timeout, "no data within " + std::to_string(timeout.count()) + " ms");
    for (;;) {
        const auto n = ::recv(fd_, buf.data(), buf.size(), 0);
        if (n < 0 && errno == EINTR) continue;
        if (n < 0 && errno == ECONNRESET) return 0;
        if (n < 0) fail(Errc::connection_closed, sys_error("recv"));
        return static_cast<std::size_t>(n);
    }
}

TcpListener::TcpListener(const Endpoint& ep) {
    addrinfo* res = resolve(ep, true);
    std::string last = "no addresses";
    for (addrinfo* a = res; a && fd_ < 0; a = a->ai_next) {
        const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
            fd_ = fd;
        } else {
            last = std::strerror(errno);
            ::close(fd);
        }
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) fail(Errc::io, "cannot listen on " + ep.str() + ": " + last);
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                             : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

std::unique_ptr<TcpStream> TcpListener::accept(Millis timeout) {
    if (fd_ < 0) fail(Errc::io, "accept on a closed listener");
    if (wait_fd(fd_, POLLIN, timeout) == 0) return nullptr;
    const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
        if (errno == EINTR || errno == ECONNABORTED || errno == EAGAIN) return nullptr;
        fail(Errc::io, sys_error("accept"));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_unique<TcpStream>(fd);
}

void FrameChannel::send(FrameType type, std::span<const std::uint8_t> payload) {
    stream_.write_all(encode_frame(type, payload));
}

Frame FrameChannel::receive(Millis timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        auto decoded = decode_frame(buffer_);
        if (decoded.frame) {
            buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(decoded.consumed));
            return std::move(*decoded.frame);
        }
        const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) fail(Errc::timeout, "no complete frame within " + std::to_string(timeout.count()) + " ms");
        std::uint8_t chunk[4096];
        const auto n = stream_.read_some(chunk, left);
        if (n == 0)
            fail(Errc::connection_closed,
                 buffer_.empty() ? "peer closed the connection" : "peer closed the connection mid-frame");
        buffer_.insert(buffer_.end(), chunk, chunk + n);
    }
}

}  // namespace kt::link
