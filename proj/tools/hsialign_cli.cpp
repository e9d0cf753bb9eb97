// hsialign: synth | pairs | degrade | metrics | theory | guide

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "hsialign/error.hpp"
#include "hsialign/pipeline.hpp"

using namespace hsialign;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON config file");
  sub->add_option("--seed", f.seed, "global seed");
  sub->add_option("--jobs", f.jobs, "pairs processed concurrently");
  sub->add_option("--out", f.out, "output directory");
  sub->allow_extras();
}

// Leftover "--a.b value" / "--a.b=value" tokens become config overrides.
void apply_extras(json& doc, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() < 3)
      throw InvalidInput("unexpected argument '" + tok + "'");
    std::string key = tok.substr(2), value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw InvalidInput("override '" + tok + "' needs a value");
      value = extras[++i];
    }
    if (key.find('.') == std::string::npos)
      throw InvalidInput("unknown option '--" + key + "'");
    apply_override(doc, key, value);
  }
}

PipelineConfig resolve(const CommonFlags& f, const std::vector<std::string>& extras) {
  json doc = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw InvalidInput("cannot open config '" + f.config + "'");
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw InvalidInput("config '" + f.config + "': " + e.what());
    }
  }
  apply_extras(doc, extras);
  if (f.seed) doc["seed"] = *f.seed;
  if (f.jobs) doc["jobs"] = *f.jobs;
  if (f.out) doc["out"] = *f.out;
  PipelineConfig cfg = config_from_json(doc);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral synthesis by sparse stochastic warps"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::vector<std::string> refs, tests;

  auto* synth = app.add_subcommand("synth", "synthesize cubes, operators and traces");
  auto* pairs = app.add_subcommand("pairs", "synthesize, then export the training pair set");
  auto* degrade = app.add_subcommand("degrade", "apply the task degradation to the proxies");
  auto* metrics = app.add_subcommand("metrics", "PSNR / SSIM / SAM between cube files");
  auto* theory = app.add_subcommand("theory", "randomized checks of the transport lemmas");
  auto* guide = app.add_subcommand("guide", "write synthetic guides and correspondence maps");
  for (auto* sub : {synth, pairs, degrade, metrics, theory, guide}) add_common(sub, flags);
  metrics->add_option("--ref", refs, "reference HSIC files")->required();
  metrics->add_option("--test", tests, "test HSIC files, one per reference")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* sub = app.get_subcommands().front();
    const PipelineConfig cfg = resolve(flags, sub->remaining());
    if (sub == synth) return cmd_synth(cfg);
    if (sub == pairs) return cmd_pairs(cfg);
    if (sub == degrade) return cmd_degrade(cfg);
    if (sub == metrics) return cmd_metrics(cfg, refs, tests);
    if (sub == theory) return cmd_theory(cfg);
    return cmd_guide(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hsialign: %s\n", e.what());
    return 2;
  }
}
