#pragma once

#include "damgan/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace damgan::checkpoint {

inline constexpr int kFormatVersion = 1;
inline constexpr char kMagic[8] = {'D', 'A', 'M', 'G', 'A', 'N', 'C', 'K'};

/// Malformed, truncated, or checksum-failing checkpoint file.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: 8-byte magic, little-endian u64 header length, JSON header
// (format version, configs, step, RNG state, tensor index, payload checksum),
// then the payload of little-endian float32 blocks named in the index.

std::string serialize(const train::TrainState& state);
train::TrainState deserialize(const std::string& bytes);

void save(const std::filesystem::path& file, const train::TrainState& state);
train::TrainState load(const std::filesystem::path& file);

nlohmann::json to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_json(const nlohmann::json& j);

std::uint64_t fnv1a64(const char* data, std::size_t size);

}  // namespace damgan::checkpoint
