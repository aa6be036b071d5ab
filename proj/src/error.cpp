#include "kt/error.hpp"

namespace kt {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "invalid-argument";
        case Errc::class_count_mismatch: return "class-count-mismatch";
        case Errc::non_bijective: return "non-bijective";
        case Errc::unmapped_label: return "unmapped-label";
        case Errc::paired_stream: return "paired-stream";
        case Errc::insufficient_examples: return "insufficient-examples";
        case Errc::bad_magic: return "bad-magic";
        case Errc::dimension_mismatch: return "dimension-mismatch";
        case Errc::truncated: return "truncated";
        case Errc::unreadable_file: return "unreadable-file";
        case Errc::checkpoint_magic: return "checkpoint-magic";
        case Errc::checkpoint_version: return "checkpoint-version";
        case Errc::checkpoint_truncated: return "checkpoint-truncated";
        case Errc::architecture_mismatch: return "architecture-mismatch";
        case Errc::protocol: return "protocol";
        case Errc::handshake_refused: return "handshake-refused";
        case Errc::timeout: return "timeout";
        case Errc::connection_closed: return "connection-closed";
        case Errc::config_validation: return "config-validation";
        case Errc::stage_order: return "stage-order";
        case Errc::io: return "io";
    }
    return "unknown";
}

}  // namespace kt
