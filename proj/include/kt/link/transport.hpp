#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kt/link/frame.hpp"

namespace kt::link {

using Millis = std::chrono::milliseconds;

/// Ordered, reliable byte stream.
class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
    /// Returns 0 at end of stream; throws timeout when nothing arrives in time.
    virtual std::size_t read_some(std::span<std::uint8_t> buf, Millis timeout) = 0;
    virtual void close() = 0;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
};

/// "host:port"; the port may be 0 for an ephemeral listener.
Endpoint parse_endpoint(const std::string& text);

class TcpStream final : public ByteStream {
public:
    explicit TcpStream(int fd) : fd_(fd) {}
    ~TcpStream() override;
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;

    static std::unique_ptr<TcpStream> connect(const Endpoint& ep, Millis timeout);

    void write_all(std::span<const std::uint8_t> bytes) override;
    std::size_t read_some(std::span<std::uint8_t> buf, Millis timeout) override;
    void close() override;

private:
    int fd_ = -1;
};

class TcpListener {
public:
    explicit TcpListener(const Endpoint& ep);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const { return port_; }
    /// nullptr when no client connects within the timeout.
    std::unique_ptr<TcpStream> accept(Millis timeout);
    void close();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

/// Frame-level reader/writer over a byte stream.
class FrameChannel {
public:
    explicit FrameChannel(ByteStream& s) : stream_(s) {}

    void send(FrameType type, std::span<const std::uint8_t> payload = {});
    /// Throws timeout, connection_closed (peer closed, possibly mid-frame) or protocol.
    Frame receive(Millis timeout);
    void close() { stream_.close(); }

private:
    ByteStream& stream_;
    std::vector<std::uint8_t> buffer_;
};

}  // namespace kt::link
