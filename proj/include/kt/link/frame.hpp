#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kt::link {

enum class FrameType : std::uint8_t {
    hello = 0x01,
    hello_ack = 0x02,
    bye = 0x0F,
    label_req = 0x10,
    label_resp = 0x11,
    error = 0x7F,
};

inline constexpr std::size_t kHeaderBytes = 5;
inline constexpr std::size_t kMaxPayload = std::size_t{1} << 24;
inline constexpr std::uint16_t kProtocolVersion = 1;

enum class WireError : std::uint16_t {
    step_out_of_range = 1,
    digest_mismatch = 2,
    version_mismatch = 3,
    unexpected_frame = 4,
    malformed_frame = 5,
    internal = 6,
};

struct Frame {
    FrameType type = FrameType::bye;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Frame&, const Frame&) = default;
};

std::string frame_type_name(FrameType t);
bool is_frame_type(std::uint8_t byte);

/// u32 big-endian payload length | u8 type | payload.
std::vector<std::uint8_t> encode_frame(FrameType type, std::span<const std::uint8_t> payload = {});
std::vector<std::uint8_t> encode_frame(const Frame& f);

struct DecodeResult {
    std::optional<Frame> frame;  // empty: more bytes are needed
    std::size_t consumed = 0;
};

/// Decodes the first frame in `bytes`. Throws protocol on an unknown type or a
/// length above kMaxPayload, as soon as the header is available.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

struct Hello {
    std::uint16_t version = kProtocolVersion;
    std::uint64_t mapping_digest = 0;
    std::vector<std::string> teacher_classes;

    friend bool operator==(const Hello&, const Hello&) = default;
};

struct LabelResp {
    std::uint64_t step = 0;
    std::uint16_t teacher_class = 0;
};

struct ErrorPayload {
    std::uint16_t code = 0;
    std::string message;
};

std::vector<std::uint8_t> encode_hello(const Hello& h);
Hello decode_hello(std::span<const std::uint8_t> p);
std::vector<std::uint8_t> encode_label_req(std::uint64_t step);
std::uint64_t decode_label_req(std::span<const std::uint8_t> p);
std::vector<std::uint8_t> encode_label_resp(const LabelResp& r);
LabelResp decode_label_resp(std::span<const std::uint8_t> p);
std::vector<std::uint8_t> encode_error(const ErrorPayload& e);
ErrorPayload decode_error(std::span<const std::uint8_t> p);

}  // namespace kt::link
