#pragma once

#include "json.hpp"
#include "malcom/nn/graph.hpp"

#include <string>
#include <vector>

namespace malcom {

using Json = nlohmann::json;

Json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const Json& j, int indent = 2);
std::vector<Json> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<Json>& rows);

Json mat_to_json(const nn::Mat& m);
nn::Mat mat_from_json(const Json& j);

Json param_to_json(const nn::Param& p);
// Shape-checked load into an existing parameter.
void param_from_json(nn::Param& p, const Json& j);

// Every on-disk artifact starts from this envelope: {"format": "malcom/<kind>",
// "version": v}. Readers call check_envelope before touching the payload.
Json artifact_envelope(const std::string& kind, int version);
void check_envelope(const Json& j, const std::string& kind, int version);

}  // namespace malcom
