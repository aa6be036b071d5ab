#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kt {

enum class Errc {
    invalid_argument,
    // class mapping
    class_count_mismatch,
    non_bijective,
    unmapped_label,
    // data
    paired_stream,
    insufficient_examples,
    bad_magic,
    dimension_mismatch,
    truncated,
    unreadable_file,
    // checkpoint
    checkpoint_magic,
    checkpoint_version,
    checkpoint_truncated,
    architecture_mismatch,
    // edge link
    protocol,
    handshake_refused,
    timeout,
    connection_closed,
    // experiment
    config_validation,
    stage_order,
    io,
};

std::string_view errc_name(Errc code) noexcept;

/// Single exception type carrying a machine-readable code. Callers that need to
/// tell failure classes apart switch on code() rather than on the message.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(Errc::invalid_argument, what);
}

}  // namespace kt
