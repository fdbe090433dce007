#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "bmui/neural/classifier.hpp"
#include "bmui/neural/regressor.hpp"

namespace bmui::neural {

inline constexpr std::string_view kModelFormat = "bmui-model/1";

// Free-form key/value pairs stored with a model (training seed, split, windowing).
using ModelMeta = std::map<std::string, std::string>;

/// Text file: format line, kind, hyperparameters, metadata, standardization
/// statistics, then one named weight block per tensor at 17 significant
/// digits, closed by an `end` line. Any mismatch on load -> corrupt_model.
void save_regressor(const Regressor& model, const std::filesystem::path& path, const ModelMeta& meta = {});
Regressor load_regressor(const std::filesystem::path& path, ModelMeta* meta = nullptr);

void save_classifier(const Classifier& model, const std::filesystem::path& path, const ModelMeta& meta = {});
Classifier load_classifier(const std::filesystem::path& path, ModelMeta* meta = nullptr);

// "regressor" or "classifier"; corrupt_model for anything else.
std::string model_kind(const std::filesystem::path& path);

}  // namespace bmui::neural
