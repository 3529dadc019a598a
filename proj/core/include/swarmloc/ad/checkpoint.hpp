#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "swarmloc/ad/tensor.hpp"

namespace swarmloc::ad {

using ParamMap = std::map<std::string, Tensor>;

inline constexpr const char* kCheckpointFormat = "swarmloc-params/1";

/// JSON map name -> {shape, data}; values written with 17 significant digits
/// so that load(save(p)) is bit-exact.
void save_params(const ParamMap& params, const std::filesystem::path& path);
ParamMap load_params(const std::filesystem::path& path);

std::string params_to_json(const ParamMap& params);
ParamMap params_from_json(const std::string& text);

}  // namespace swarmloc::ad
