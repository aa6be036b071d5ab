#include "kt/link/frame.hpp"

#include "kt/error.hpp"

namespace kt::link {

std::string frame_type_name(FrameType t) {
    switch (t) {
        case FrameType::hello: return "HELLO";
        case FrameType::hello_ack: return "HELLO_ACK";
        case FrameType::bye: return "BYE";
        case FrameType::label_req: return "LABEL_REQ";
        case FrameType::label_resp: return "LABEL_RESP";
        case FrameType::error: return "ERROR";
    }
    return "UNKNOWN";
}

bool is_frame_type(std::uint8_t b) {
    return b == 0x01 || b == 0x02 || b == 0x0F || b == 0x10 || b == 0x11 || b == 0x7F;
}

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out.push_back(v); }
    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v >> 8));
        u8(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) u8(static_cast<std::uint8_t>(v >> s));
    }
    void u64(std::uint64_t v) {
        for (int s = 56; s >= 0; s -= 8) u8(static_cast<std::uint8_t>(v >> s));
    }
    void str16(const std::string& s) {
        if (s.size() > 0xffff) fail(Errc::protocol, "string field longer than 65535 bytes");
        u16(static_cast<std::uint16_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> p, const char* what) : p_(p), what_(what) {}
    std::uint8_t u8() {
        need(1);
        return p_[pos_++];
    }
    std::uint16_t u16() {
        const auto hi = u8();
        return static_cast<std::uint16_t>((hi << 8) | u8());
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | u8();
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(p_.begin() + static_cast<std::ptrdiff_t>(pos_), p_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::string str16() { return bytes(u16()); }
    std::string rest() { return bytes(p_.size() - pos_); }
    void finish() const {
        if (pos_ != p_.size()) fail(Errc::protocol, std::string(what_) + " payload has trailing bytes");
    }

private:
    void need(std::size_t n) const {
        if (p_.size() - pos_ < n) fail(Errc::protocol, std::string(what_) + " payload is too short");
    }
    std::span<const std::uint8_t> p_;
    std::size_t pos_ = 0;
    const char* what_;
};

}  // namespace

std::vector<std::uint8_t> encode_frame(FrameType type, std::span<const std::uint8_t> payload) {
    if (payload.size() > kMaxPayload)
        fail(Errc::protocol, "payload of " + std::to_string(payload.size()) + " bytes exceeds the 2^24 limit");
    Writer w;
    w.out.reserve(kHeaderBytes + payload.size());
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.u8(static_cast<std::uint8_t>(type));
    w.out.insert(w.out.end(), payload.begin(), payload.end());
    return std::move(w.out);
}

std::vector<std::uint8_t> encode_frame(const Frame& f) { return encode_frame(f.type, f.payload); }

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes) return {};
    const std::uint32_t len = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                              (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
    if (len > kMaxPayload) fail(Errc::protocol, "frame length " + std::to_string(len) + " exceeds the 2^24 limit");
    if (!is_frame_type(bytes[4])) fail(Errc::protocol, "unknown frame type " + std::to_string(bytes[4]));
    if (bytes.size() < kHeaderBytes + len) return {};
    Frame f;
    f.type = static_cast<FrameType>(bytes[4]);
    f.payload.assign(bytes.begin() + kHeaderBytes, bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + len));
    return {std::move(f), kHeaderBytes + len};
}

std::vector<std::uint8_t> encode_hello(const Hello& h) {
    Writer w;
    w.u16(h.version);
    w.u64(h.mapping_digest);
    if (h.teacher_classes.size() > 0xffff) fail(Errc::protocol, "too many classes");
    w.u16(static_cast<std::uint16_t>(h.teacher_classes.size()));
    for (const auto& c : h.teacher_classes) w.str16(c);
    return std::move(w.out);
}

Hello decode_hello(std::span<const std::uint8_t> p) {
    Reader r(p, "HELLO");
    Hello h;
    h.version = r.u16();
    h.mapping_digest = r.u64();
    const auto n = r.u16();
    for (std::uint16_t i = 0; i < n; ++i) h.teacher_classes.push_back(r.str16());
    r.finish();
    return h;
}

std::vector<std::uint8_t> encode_label_req(std::uint64_t step) {
    Writer w;
    w.u64(step);
    return std::move(w.out);
}

std::uint64_t decode_label_req(std::span<const std::uint8_t> p) {
    Reader r(p, "LABEL_REQ");
    const auto step = r.u64();
    r.finish();
    return step;
}

std::vector<std::uint8_t> encode_label_resp(const LabelResp& resp) {
    Writer w;
    w.u64(resp.step);
    w.u16(resp.teacher_class);
    return std::move(w.out);
}

LabelResp decode_label_resp(std::span<const std::uint8_t> p) {
    Reader r(p, "LABEL_RESP");
    LabelResp resp;
    resp.step = r.u64();
    resp.teacher_class = r.u16();
    r.finish();
    return resp;
}

std::vector<std::uint8_t> encode_error(const ErrorPayload& e) {
    Writer w;
    w.u16(e.code);
    w.out.insert(w.out.end(), e.message.begin(), e.message.end());
    return std::move(w.out);
}

ErrorPayload decode_error(std::span<const std::uint8_t> p) {
    Reader r(p, "ERROR");
    ErrorPayload e;
    e.code = r.u16();
    e.message = r.rest();
    return e;
}

}  // namespace kt::link
