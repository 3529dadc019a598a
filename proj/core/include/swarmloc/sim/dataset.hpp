#pragma once

#include <string>
#include <vector>

#include "swarmloc/sim/frame.hpp"
#include "swarmloc/sim/scene.hpp"

namespace swarmloc::sim {

inline constexpr const char* kDatasetFormat = "swarmloc-dataset/1";

struct Dataset {
  SceneConfig config;
  std::vector<Tree> trees;
  std::vector<SwarmFrame> frames;

  int n_robots() const { return config.n_robots; }
  int n_frames() const { return static_cast<int>(frames.size()); }
};

/// generate_scene + sample_frames.
Dataset generate_dataset(const SceneConfig& config);

/// JSON Lines: a header line (format tag, config, trees) then one frame per
/// line. Floats use 17 significant digits, so read(write(x)) is bit-exact.
void write_dataset(const Dataset& data, const std::string& path);
void write_dataset(const Scene& scene, const std::vector<SwarmFrame>& frames,
                   const std::string& path);
std::string dataset_to_string(const Dataset& data);

/// Throws ParseError naming the offending line, or swarmloc::Error if the file
/// cannot be opened.
Dataset read_dataset(const std::string& path);
Dataset dataset_from_string(const std::string& text);

/// Single-line JSON object of every SceneConfig field.
std::string scene_config_to_json(const SceneConfig& c);

}  // namespace swarmloc::sim
