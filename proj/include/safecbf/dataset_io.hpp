#pragma once

#include <string>

#include "json.hpp"
#include "safecbf/gp_affine.hpp"

namespace safecbf {

nlohmann::json kernel_to_json(const KernelConfig& cfg);
KernelConfig kernel_from_json(const nlohmann::json& j);

/// {kernel: {...}, X: [[...]], U: [[...]], z: [...]}. The augmented inputs are
/// rebuilt on load.
nlohmann::json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace safecbf
