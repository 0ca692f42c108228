#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "dkf/regression.hpp"

namespace dkf {

// Everything one filter needs: fitted dynamics plus its observation model.
struct ModelBundle {
  std::string filter;  // kalman, ekf, ukf, dkf-gp, dkf-gp-freq, dkf-nn
  LinearGaussianDynamics dynamics;
  std::optional<GenerativeFit> generative;
  std::optional<DkfVariantModel> discriminative;

  FilterKind filter_kind() const;
  FilterModels to_filter_models() const;
};

// JSON document tagged {"format": "dkf-model", "version": 1, "kind": ...}.
// Doubles are written in shortest round-trip form, so a loaded model predicts
// bit-identically to the saved one.
inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const ModelBundle& bundle);
ModelBundle deserialize_model(const std::string& text);

void save_model(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace dkf
