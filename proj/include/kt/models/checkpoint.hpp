#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kt/models/model.hpp"

namespace kt::models {

/// Checkpoint layout (header integers big-endian, weights little-endian f32):
///   "KTCK" | u16 version | u32 descriptor length | descriptor (UTF-8)
///   | u64 parameter count | parameter_count * f32
/// Dropout generators are restarted from their descriptor seed on load.
inline constexpr char kCheckpointMagic[4] = {'K', 'T', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                        const std::optional<std::string>& expected_descriptor = std::nullopt);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<std::string>& expected_descriptor = std::nullopt);

/// Size in bytes of the raw weight section for a model.
inline std::size_t checkpoint_payload_bytes(const Model& model) { return model.parameter_count() * sizeof(float); }

}  // namespace kt::models
