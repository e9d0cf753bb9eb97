#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsialign/cube.hpp"
#include "hsialign/degrade.hpp"
#include "hsialign/descriptor.hpp"
#include "hsialign/retrieval.hpp"
#include "hsialign/transport.hpp"
#include "hsialign/warp.hpp"
#include "json.hpp"

namespace hsialign {

/// Random-texture proxies used when no proxy files are given.
struct TextureSource {
  int count = 2;
  int height = 32;
  int width = 32;
  int bands = 31;
  TextureConfig texture;
};

/// One synthetic guide: proxy RGB moved by translation/rotation (rotation
/// about the image center) and photometrically jittered.
struct GuideSpec {
  double dy = 0.0;
  double dx = 0.0;
  double rotation_deg = 0.0;
  double gain = 0.0;
  double offset = 0.0;

  Affine affine(int height, int width) const;
};

struct PipelineConfig {
  std::vector<std::string> proxies;              // HSIC files
  std::vector<std::vector<std::string>> guides;  // PNG files per proxy
  TextureSource texture;
  std::vector<GuideSpec> synthetic_guides{
      {1.0, 0.0, 0.0, 0.02, 0.01}, {0.0, -1.0, 0.0, 0.02, 0.01}, {0.0, 0.0, 2.0, 0.02, 0.01}};
  int guides_per_proxy = 3;  // M
  DescriptorConfig descriptor;
  RetrievalConfig retrieval;
  WarpConfig warp;
  DegradationSpec degradation;
  double ratio = 3.0;  // generated : proxy pairs
  int theory_trials = 200;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out = "out";

  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
/// Missing keys keep defaults; unknown keys throw InvalidInput. When the
/// degradation block carries no seed, one is derived from the global seed.
PipelineConfig config_from_json(const nlohmann::json& j);

/// Sets the dotted key (e.g. "warp.iters") in a config document. The value
/// is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& dotted, const std::string& value);

/// Proxy cubes from files, or random textures seeded from the config.
std::vector<HyperCube> load_proxies(const PipelineConfig& cfg);

/// Guide j of proxy i: a PNG when given, otherwise synthetic guide spec
/// j (mod the list size) with a seed derived from (seed, i, j).
SyntheticGuide make_guide(const PipelineConfig& cfg, const HyperCube& proxy, int proxy_index,
                          int guide_index);
int guides_for(const PipelineConfig& cfg, int proxy_index);

struct SynthesisResult {
  HyperCube cube;
  SparseWarp warp;
  CandidateSet candidates;
  OptimResult optim;
  OperatorReport report;
  std::size_t clamped = 0;
  std::uint64_t probe_seed = 0;
};

/// descriptors -> retrieval -> optimize -> freeze -> transfer -> verify.
/// Guide and proxy must share the spatial size.
SynthesisResult synthesize(const HyperCube& proxy, const RgbImage& guide,
                           const PipelineConfig& cfg, std::uint64_t probe_seed = 1);

/// Subcommands. Each writes under cfg.out and returns the process exit code
/// (0 only when every check passed).
int cmd_synth(const PipelineConfig& cfg);
int cmd_pairs(const PipelineConfig& cfg);
int cmd_degrade(const PipelineConfig& cfg);
int cmd_metrics(const PipelineConfig& cfg, const std::vector<std::string>& references,
                const std::vector<std::string>& tests);
int cmd_theory(const PipelineConfig& cfg);
int cmd_guide(const PipelineConfig& cfg);

}  // namespace hsialign
