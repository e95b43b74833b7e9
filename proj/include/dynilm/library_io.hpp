#pragma once

#include <filesystem>
#include <json.hpp>
#include <vector>

#include "dynilm/model.hpp"

namespace dynilm {

/// Device library entry:
///   {name, order, A (row-major n*n), b, c, d, instant_off,
///    max_input (number|null), max_output (number|null), dc_normalized}
nlohmann::json model_to_json(const DeviceModel& model);
/// Validates shape, finiteness, bounds, stability and the dc_normalized claim.
DeviceModel model_from_json(const nlohmann::json& entry);

nlohmann::json library_to_json(const std::vector<DeviceModel>& models);
std::vector<DeviceModel> library_from_json(const nlohmann::json& doc);

std::vector<DeviceModel> read_library(const std::filesystem::path& path);
void write_library(const std::filesystem::path& path, const std::vector<DeviceModel>& models);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace dynilm
