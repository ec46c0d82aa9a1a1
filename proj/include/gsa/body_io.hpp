#pragma once

#include <filesystem>

#include <json.hpp>

#include "gsa/body.hpp"

namespace gsa {

nlohmann::json body_to_json(const BodyModel& model);
BodyModel body_from_json(const nlohmann::json& j);

void save_body_model(const std::filesystem::path& path, const BodyModel& model);
BodyModel load_body_model(const std::filesystem::path& path);

}  // namespace gsa
