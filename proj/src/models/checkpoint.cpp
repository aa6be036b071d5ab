#include "kt/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kt/models/builders.hpp"

namespace kt::models {

namespace {

template <typename U>
void put_be(std::vector<std::uint8_t>& out, U v) {
    for (int i = sizeof(U) - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename U>
    U be(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v = static_cast<U>((v << 8) | bytes_[pos_++]);
        return v;
    }

    const std::uint8_t* take(std::size_t n, const char* what) {
        need(n, what);
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            fail(Errc::checkpoint_truncated, std::string("checkpoint ends inside ") + what);
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
    std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put_be<std::uint16_t>(out, kCheckpointVersion);
    const auto& desc = model.descriptor();
    put_be<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
    out.insert(out.end(), desc.begin(), desc.end());
    const auto flat = model.flat_parameters();
    put_be<std::uint64_t>(out, flat.size());
    for (float f : flat) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return out;
}

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::optional<std::string>& expected_descriptor) {
    Reader r(bytes);
    const auto* magic = r.take(4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) fail(Errc::checkpoint_magic, "not a KTCK checkpoint");
    const auto version = r.be<std::uint16_t>("version");
    if (version != kCheckpointVersion)
        fail(Errc::checkpoint_version, "unsupported checkpoint version " + std::to_string(version));
    const auto desc_len = r.be<std::uint32_t>("descriptor length");
    const auto* desc_bytes = r.take(desc_len, "descriptor");
    const std::string descriptor(reinterpret_cast<const char*>(desc_bytes), desc_len);
    if (expected_descriptor && *expected_descriptor != descriptor)
        fail(Errc::architecture_mismatch,
             "checkpoint holds '" + descriptor + "', expected '" + *expected_descriptor + "'");
    const auto count = r.be<std::uint64_t>("parameter count");
    Model model = build_from_descriptor<float>(descriptor);
    if (count != model.parameter_count())
        fail(Errc::architecture_mismatch, "checkpoint declares " + std::to_string(count) + " parameters but '" +
                                              descriptor + "' has " + std::to_string(model.parameter_count()));
    if (r.remaining() != count * 4)
        fail(Errc::checkpoint_truncated, "weight section is " + std::to_string(r.remaining()) + " bytes, expected " +
                                             std::to_string(count * 4));
    const auto* w = r.take(count * 4, "weights");
    std::vector<float> flat(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(w[i * 4 + b]) << (8 * b);
        flat[i] = std::bit_cast<float>(bits);
    }
    model.set_flat_parameters(flat);
    return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(model);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(Errc::io, "cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail(Errc::io, "failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, const std::optional<std::string>& expected_descriptor) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(Errc::io, "cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, expected_descriptor);
}

}  // namespace kt::models
