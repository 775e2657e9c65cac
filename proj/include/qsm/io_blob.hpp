#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace qsm::detail {

// Shared on-disk layout for volumes and checkpoints: one minified JSON
// header line, '\n', then the payload as little-endian 64-bit floats.
void write_json_payload(const std::string& path, const nlohmann::json& header,
                        const double* data, std::int64_t count);

// Reads the header and the entire remaining payload.
std::pair<nlohmann::json, std::vector<double>> read_json_payload(const std::string& path);

} // namespace qsm::detail
