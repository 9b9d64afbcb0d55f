#pragma once

#include <string>

#include "json.hpp"
#include "nexus/model.hpp"

namespace nexus {

// Model checkpoints are a self-describing JSON container: a format tag, the
// full config, and every named parameter tensor with its shape. Payloads are
// base64 of the raw little-endian f64 bytes, so save -> load roundtrips are
// bit-exact.
inline constexpr const char* kCheckpointFormat = "nexusqn.checkpoint.v1";

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(ModelParams& model);
ModelParams checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

namespace detail {
std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);
}  // namespace detail

}  // namespace nexus
