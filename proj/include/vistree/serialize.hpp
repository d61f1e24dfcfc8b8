#pragma once

#include <string>
#include <variant>

#include "vistree/vsgbm.hpp"
#include "vistree/vst_training.hpp"

namespace vistree {

// Model files are JSON with sorted keys and shortest-round-trip doubles, so
// identical models serialize to identical bytes and load back bit-exact.
inline constexpr int kModelFormatVersion = 1;

using AnyModel = std::variant<VstModel, VsgbmModel>;

std::string to_json(const VstModel& model);
std::string to_json(const VsgbmModel& model);

// Throws DataError on malformed documents or unknown format_version.
AnyModel model_from_json(const std::string& text);

void save_model(const std::string& path, const VstModel& model);
void save_model(const std::string& path, const VsgbmModel& model);
AnyModel load_model(const std::string& path);

std::string model_kind(const AnyModel& model);

}  // namespace vistree
