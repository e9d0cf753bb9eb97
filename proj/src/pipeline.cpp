#include "hsialign/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <iostream>
#include <mutex>
#include <thread>

#include "hsialign/error.hpp"
#include "hsialign/io.hpp"
#include "hsialign/metrics.hpp"
#include "hsialign/rng.hpp"
#include "hsialign/theory.hpp"

namespace hsialign {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex log_mutex;

void log_line(const std::string& s) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << s << '\n';
}

std::string pair_stem(int i, int j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%02d_g%02d", i, j);
  return buf;
}

std::string index_stem(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02d", prefix, i);
  return buf;
}

// Reads the listed keys of an object; anything else is an error.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidInput(where_ + " must be a JSON object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, v] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw InvalidInput("unknown config key '" + where_ + "." + key + "'");
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidInput("config key '" + where_ + "." + key + "': " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

// Runs fn(0..count-1) on up to `jobs` threads; each index exactly once.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Config as recorded in manifests; the job count never changes any output
// so it is left out.
json manifest_config(const PipelineConfig& cfg) {
  json j = to_json(cfg);
  j.erase("jobs");
  return j;
}

}  // namespace

Affine GuideSpec::affine(int height, int width) const {
  Affine a = Affine::rotation(rotation_deg, 0.5 * (height - 1), 0.5 * (width - 1));
  a.t[0] += dy;
  a.t[1] += dx;
  return a;
}

void PipelineConfig::validate() const {
  descriptor.validate();
  retrieval.validate();
  warp.validate();
  degradation.validate();
  if (guides_per_proxy < 1) throw InvalidInput("guides_per_proxy must be >= 1");
  if (!(ratio >= 0.0)) throw InvalidInput("ratio must be >= 0");
  if (jobs < 1) throw InvalidInput("jobs must be >= 1");
  if (theory_trials < 1) throw InvalidInput("theory.trials must be >= 1");
  if (out.empty()) throw InvalidInput("out must be non-empty");
  if (proxies.empty()) {
    if (texture.count < 1 || texture.height < 1 || texture.width < 1 || texture.bands < 3)
      throw InvalidInput("texture source needs count, height, width >= 1 and bands >= 3");
    if (!guides.empty()) throw InvalidInput("guide files given without proxy files");
  }
  for (const auto& p : proxies)
    if (!fs::exists(p)) throw InvalidInput("proxy file not found: " + p);
  if (!guides.empty() && guides.size() != proxies.size())
    throw InvalidInput("inputs.guides must list one array per proxy");
  for (const auto& list : guides) {
    if (list.empty()) throw InvalidInput("every proxy needs at least one guide file");
    for (const auto& g : list)
      if (!fs::exists(g)) throw InvalidInput("guide file not found: " + g);
  }
  if (guides.empty() && synthetic_guides.empty())
    throw InvalidInput("synthetic_guides must be non-empty when no guide files are given");
}

json to_json(const PipelineConfig& c) {
  json guides = json::array();
  for (const auto& g : c.synthetic_guides)
    guides.push_back({{"dy", g.dy},
                      {"dx", g.dx},
                      {"rotation_deg", g.rotation_deg},
                      {"gain", g.gain},
                      {"offset", g.offset}});
  const auto& w = c.warp.weights;
  return {
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"out", c.out},
      {"guides_per_proxy", c.guides_per_proxy},
      {"ratio", c.ratio},
      {"inputs", {{"proxies", c.proxies}, {"guides", c.guides}}},
      {"texture",
       {{"count", c.texture.count},
        {"height", c.texture.height},
        {"width", c.texture.width},
        {"bands", c.texture.bands},
        {"endmembers", c.texture.texture.endmembers},
        {"correlation", c.texture.texture.correlation},
        {"sharpness", c.texture.texture.sharpness}}},
      {"synthetic_guides", guides},
      {"descriptor",
       {{"patch_side", c.descriptor.patch_side},
        {"chroma_weight", c.descriptor.chroma_weight},
        {"gradient_weight", c.descriptor.gradient_weight},
        {"eps", c.descriptor.eps}}},
      {"retrieval",
       {{"seeds", c.retrieval.seeds}, {"radius", c.retrieval.radius}, {"k", c.retrieval.candidates}}},
      {"warp",
       {{"stencil", c.warp.stencil},
        {"temperature", c.warp.temperature},
        {"center_logit", c.warp.center_logit},
        {"iters", c.warp.optim.iterations},
        {"step", c.warp.optim.step},
        {"beta1", c.warp.optim.beta1},
        {"beta2", c.warp.optim.beta2},
        {"stabilizer", c.warp.optim.stabilizer},
        {"weights",
         {{"fidelity", w.fidelity},
          {"patch", w.patch},
          {"mutual_info", w.mutual_info},
          {"ssim", w.ssim},
          {"gradient", w.gradient},
          {"smooth", w.smooth},
          {"distance", w.distance}}}}},
      {"degradation", to_json(c.degradation)},
      {"theory", {{"trials", c.theory_trials}}},
  };
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  bool degradation_seeded = false;
  {
    ObjectReader r(j, "config");
    r.get("seed", c.seed);
    r.get("jobs", c.jobs);
    r.get("out", c.out);
    r.get("guides_per_proxy", c.guides_per_proxy);
    r.get("ratio", c.ratio);
    if (const json* in = r.child("inputs")) {
      ObjectReader ri(*in, "inputs");
      ri.get("proxies", c.proxies);
      ri.get("guides", c.guides);
    }
    if (const json* t = r.child("texture")) {
      ObjectReader rt(*t, "texture");
      rt.get("count", c.texture.count);
      rt.get("height", c.texture.height);
      rt.get("width", c.texture.width);
      rt.get("bands", c.texture.bands);
      rt.get("endmembers", c.texture.texture.endmembers);
      rt.get("correlation", c.texture.texture.correlation);
      rt.get("sharpness", c.texture.texture.sharpness);
    }
    if (const json* g = r.child("synthetic_guides")) {
      if (!g->is_array()) throw InvalidInput("synthetic_guides must be an array");
      c.synthetic_guides.clear();
      for (const auto& e : *g) {
        GuideSpec s;
        ObjectReader rg(e, "synthetic_guides[]");
        rg.get("dy", s.dy);
        rg.get("dx", s.dx);
        rg.get("rotation_deg", s.rotation_deg);
        rg.get("gain", s.gain);
        rg.get("offset", s.offset);
        c.synthetic_guides.push_back(s);
      }
    }
    if (const json* d = r.child("descriptor")) {
      ObjectReader rd(*d, "descriptor");
      rd.get("patch_side", c.descriptor.patch_side);
      rd.get("chroma_weight", c.descriptor.chroma_weight);
      rd.get("gradient_weight", c.descriptor.gradient_weight);
      rd.get("eps", c.descriptor.eps);
    }
    if (const json* t = r.child("retrieval")) {
      ObjectReader rr(*t, "retrieval");
      rr.get("seeds", c.retrieval.seeds);
      rr.get("radius", c.retrieval.radius);
      rr.get("k", c.retrieval.candidates);
    }
    if (const json* t = r.child("warp")) {
      ObjectReader rw(*t, "warp");
      rw.get("stencil", c.warp.stencil);
      rw.get("temperature", c.warp.temperature);
      rw.get("center_logit", c.warp.center_logit);
      rw.get("iters", c.warp.optim.iterations);
      rw.get("step", c.warp.optim.step);
      rw.get("beta1", c.warp.optim.beta1);
      rw.get("beta2", c.warp.optim.beta2);
      rw.get("stabilizer", c.warp.optim.stabilizer);
      if (const json* wt = rw.child("weights")) {
        auto& w = c.warp.weights;
        ObjectReader rl(*wt, "warp.weights");
        rl.get("fidelity", w.fidelity);
        rl.get("patch", w.patch);
        rl.get("mutual_info", w.mutual_info);
        rl.get("ssim", w.ssim);
        rl.get("gradient", w.gradient);
        rl.get("smooth", w.smooth);
        rl.get("distance", w.distance);
      }
    }
    if (const json* d = r.child("degradation")) {
      c.degradation = degradation_from_json(*d);
      degradation_seeded = d->contains("seed");
    }
    if (const json* t = r.child("theory")) {
      ObjectReader rt(*t, "theory");
      rt.get("trials", c.theory_trials);
    }
  }
  if (!degradation_seeded) c.degradation.seed = derive_seed(c.seed, "degradation");
  return c;
}

void apply_override(json& doc, const std::string& dotted, const std::string& value) {
  if (dotted.empty()) throw InvalidInput("empty override key");
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? dotted.npos : dot - start);
    if (key.empty()) throw InvalidInput("malformed override key '" + dotted + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw InvalidInput("override '" + dotted + "' descends into a scalar");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::vector<HyperCube> load_proxies(const PipelineConfig& cfg) {
  std::vector<HyperCube> out;
  if (!cfg.proxies.empty()) {
    for (const auto& p : cfg.proxies) out.push_back(load_cube(p));
    return out;
  }
  for (int i = 0; i < cfg.texture.count; ++i)
    out.push_back(make_random_texture_cube(cfg.texture.height, cfg.texture.width,
                                           cfg.texture.bands,
                                           derive_seed(cfg.seed, "proxy", i),
                                           cfg.texture.texture));
  return out;
}

int guides_for(const PipelineConfig& cfg, int proxy_index) {
  if (!cfg.guides.empty()) return static_cast<int>(cfg.guides.at(proxy_index).size());
  return cfg.guides_per_proxy;
}

SyntheticGuide make_guide(const PipelineConfig& cfg, const HyperCube& proxy, int proxy_index,
                          int guide_index) {
  if (!cfg.guides.empty()) {
    SyntheticGuide g;
    g.image = load_rgb(cfg.guides.at(proxy_index).at(guide_index));
    return g;
  }
  const GuideSpec& spec = cfg.synthetic_guides[guide_index % cfg.synthetic_guides.size()];
  const std::uint64_t seed =
      derive_seed(cfg.seed, "guide",
                  static_cast<std::uint64_t>(proxy_index) * 1024 + static_cast<std::uint64_t>(guide_index));
  return make_synthetic_guide(project_rgb(proxy), spec.affine(proxy.height(), proxy.width()),
                              {spec.gain, spec.offset}, seed);
}

SynthesisResult synthesize(const HyperCube& proxy, const RgbImage& guide,
                           const PipelineConfig& cfg, std::uint64_t probe_seed) {
  if (guide.height() != proxy.height() || guide.width() != proxy.width())
    throw DimensionMismatch("guide and proxy must share the spatial size");
  const RgbImage proxy_rgb = project_rgb(proxy);
  const DescriptorField gd = build_descriptors(guide, cfg.descriptor);
  const DescriptorField pd = build_descriptors(proxy_rgb, cfg.descriptor);
  CandidateSet cands = retrieve_candidates(gd, pd, cfg.retrieval);
  const WarpObjective objective(cands, proxy_rgb, guide, cfg.warp.weights, cfg.warp.stencil,
                                cfg.warp.temperature);
  SynthesisResult r;
  r.optim = optimize(objective, objective.initial_params(cfg.warp.center_logit), cfg.warp.optim);
  r.warp = freeze(r.optim.params, cands);
  r.candidates = std::move(cands);
  TransferResult t = transfer(r.warp.composite, proxy);
  r.cube = std::move(t.cube);
  r.clamped = t.clamped;
  r.probe_seed = probe_seed;
  r.report = verify_operator(r.warp.composite, r.warp.height, r.warp.width,
                             r.warp.support_bound(), probe_seed);
  return r;
}

namespace {

struct SynthRun {
  json manifest;
  std::vector<std::vector<HyperCube>> cubes;  // successful outputs per proxy, guide order
  bool ok = true;
};

SynthRun run_synth(const PipelineConfig& cfg, const std::vector<HyperCube>& proxies,
                   const fs::path& dir) {
  fs::create_directories(dir);
  struct Job {
    int proxy, guide;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < static_cast<int>(proxies.size()); ++i)
    for (int j = 0; j < guides_for(cfg, i); ++j) jobs.push_back({i, j});
  std::vector<json> entries(jobs.size());
  std::vector<HyperCube> outputs(jobs.size());
  std::vector<char> good(jobs.size(), 0);

  parallel_for(static_cast<int>(jobs.size()), cfg.jobs, [&](int n) {
    const Job job = jobs[n];
    const std::string stem = pair_stem(job.proxy, job.guide);
    json e = {{"proxy", job.proxy}, {"guide", job.guide}};
    try {
      const SyntheticGuide g = make_guide(cfg, proxies[job.proxy], job.proxy, job.guide);
      const std::uint64_t probe = derive_seed(cfg.seed, "probe", static_cast<std::uint64_t>(n));
      SynthesisResult r = synthesize(proxies[job.proxy], g.image, cfg, probe);
      save_cube(r.cube, dir / (stem + ".hsic"));
      save_warp(r.warp, dir / (stem + ".swrp"));
      write_text(dir / (stem + "_trace.csv"), trace_csv(r.optim.trace));
      save_rgb(g.image, dir / (stem + "_guide.png"), 16);
      e["cube"] = stem + ".hsic";
      e["operator"] = stem + ".swrp";
      e["trace"] = stem + "_trace.csv";
      e["guide_png"] = stem + "_guide.png";
      e["loss_initial"] = r.optim.trace.front().total;
      e["loss_final"] = r.optim.trace.back().total;
      e["clamped"] = r.clamped;
      e["probe_seed"] = r.probe_seed;
      e["verify_operator"] = to_json(r.report);
      e["status"] = r.report.ok() ? "ok" : "invariant_failed";
      good[n] = r.report.ok();
      outputs[n] = std::move(r.cube);
      log_line("[synth] " + stem + ": " + r.report.summary());
    } catch (const std::exception& ex) {
      e["status"] = "error";
      e["error"] = ex.what();
      log_line("[synth] " + stem + ": error: " + ex.what());
    }
    entries[n] = std::move(e);
  });

  SynthRun run;
  run.cubes.resize(proxies.size());
  json list = json::array();
  for (std::size_t n = 0; n < jobs.size(); ++n) {
    list.push_back(entries[n]);
    if (good[n])
      run.cubes[jobs[n].proxy].push_back(std::move(outputs[n]));
    else
      run.ok = false;
  }
  run.manifest = {{"config", manifest_config(cfg)}, {"pairs", list}, {"ok", run.ok}};
  write_json(dir / "manifest.json", run.manifest);
  return run;
}

}  // namespace

int cmd_synth(const PipelineConfig& cfg) {
  const auto proxies = load_proxies(cfg);
  return run_synth(cfg, proxies, fs::path(cfg.out) / "synth").ok ? 0 : 1;
}

int cmd_pairs(const PipelineConfig& cfg) {
  const auto proxies = load_proxies(cfg);
  SynthRun run = run_synth(cfg, proxies, fs::path(cfg.out) / "synth");
  const fs::path dir = fs::path(cfg.out) / "pairs";
  fs::create_directories(dir);
  PairSet set = build_pairs(proxies, run.cubes, cfg.degradation, cfg.ratio);
  json m = set.manifest();
  json files = json::array();
  for (std::size_t k = 0; k < set.pairs.size(); ++k) {
    const std::string stem = index_stem("pair", static_cast<int>(k));
    save_cube(set.pairs[k].degraded, dir / (stem + "_degraded.hsic"));
    save_cube(set.pairs[k].clean, dir / (stem + "_clean.hsic"));
    files.push_back({{"degraded", stem + "_degraded.hsic"}, {"clean", stem + "_clean.hsic"}});
  }
  m["files"] = files;
  m["synthesis_ok"] = run.ok;
  write_json(dir / "manifest.json", m);
  log_line("[pairs] " + std::to_string(set.pairs.size()) + " pairs (" +
           std::to_string(set.count(Provenance::kProxy)) + " proxy, " +
           std::to_string(set.count(Provenance::kGenerated)) + " generated)");
  return run.ok ? 0 : 1;
}

int cmd_degrade(const PipelineConfig& cfg) {
  const auto proxies = load_proxies(cfg);
  const fs::path dir = fs::path(cfg.out) / "degrade";
  fs::create_directories(dir);
  json list = json::array();
  bool ok = true;
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    const std::string stem = index_stem("p", static_cast<int>(i));
    DegradationSpec spec = cfg.degradation;
    spec.seed = derive_seed(cfg.degradation.seed, "degrade", i);
    json e = {{"proxy", i}, {"spec", to_json(spec)}};
    try {
      const HyperCube d = apply_degradation(proxies[i], spec);
      save_cube(d, dir / (stem + "_degraded.hsic"));
      e["cube"] = stem + "_degraded.hsic";
      e["shape"] = {d.height(), d.width(), d.bands()};
      e["status"] = "ok";
    } catch (const std::exception& ex) {
      ok = false;
      e["status"] = "error";
      e["error"] = ex.what();
      log_line("[degrade] " + stem + ": error: " + ex.what());
    }
    list.push_back(e);
  }
  write_json(dir / "manifest.json", {{"config", manifest_config(cfg)}, {"cubes", list}, {"ok", ok}});
  return ok ? 0 : 1;
}

int cmd_metrics(const PipelineConfig& cfg, const std::vector<std::string>& references,
                const std::vector<std::string>& tests) {
  if (references.size() != tests.size() || references.empty())
    throw InvalidInput("metrics needs matching, non-empty --ref and --test lists");
  fs::create_directories(cfg.out);
  json rows = json::array();
  bool ok = true;
  std::printf("%-32s %-32s %10s %8s %8s\n", "reference", "test", "psnr_db", "ssim", "sam_deg");
  for (std::size_t k = 0; k < references.size(); ++k) {
    json row = {{"reference", references[k]}, {"test", tests[k]}};
    try {
      const MetricReport m = evaluate_metrics(load_cube(references[k]), load_cube(tests[k]));
      row.update(to_json(m));
      std::printf("%-32s %-32s %10.4f %8.5f %8.4f\n", references[k].c_str(), tests[k].c_str(),
                  m.psnr, m.ssim, m.sam);
    } catch (const std::exception& ex) {
      ok = false;
      row["error"] = ex.what();
      log_line("[metrics] " + references[k] + " vs " + tests[k] + ": error: " + ex.what());
    }
    rows.push_back(row);
  }
  write_json(fs::path(cfg.out) / "metrics.json", {{"rows", rows}, {"ok", ok}});
  return ok ? 0 : 1;
}

int cmd_theory(const PipelineConfig& cfg) {
  TheorySuiteConfig suite;
  suite.trials = cfg.theory_trials;
  const TheorySuiteResult res = run_theory_suite(suite, derive_seed(cfg.seed, "theory"));
  constexpr double kTol = 1e-9;
  const bool cov = res.coverage_min_slack >= -kTol;
  const bool pert = res.perturbation_min_slack >= -kTol;
  std::printf("%-24s %8s %14s  %s\n", "lemma", "trials", "min_slack", "result");
  std::printf("%-24s %8d %14.6e  %s\n", "mixture_coverage", res.coverage_trials,
              res.coverage_min_slack, cov ? "PASS" : "FAIL");
  std::printf("%-24s %8d %14.6e  %s\n", "pair_perturbation", res.perturbation_trials,
              res.perturbation_min_slack, pert ? "PASS" : "FAIL");
  json reports = json::array();
  for (const auto& r : res.reports) reports.push_back(to_json(r));
  fs::create_directories(cfg.out);
  write_json(fs::path(cfg.out) / "theory.json",
             {{"trials", suite.trials},
              {"alphas", suite.alphas},
              {"tolerance", kTol},
              {"mixture_coverage", {{"trials", res.coverage_trials}, {"min_slack", res.coverage_min_slack}, {"holds", cov}}},
              {"pair_perturbation", {{"trials", res.perturbation_trials}, {"min_slack", res.perturbation_min_slack}, {"holds", pert}}},
              {"examples", reports},
              {"ok", cov && pert}});
  return cov && pert ? 0 : 1;
}

int cmd_guide(const PipelineConfig& cfg) {
  if (!cfg.guides.empty()) throw InvalidInput("guide generates synthetic guides; drop inputs.guides");
  const auto proxies = load_proxies(cfg);
  const fs::path dir = fs::path(cfg.out) / "guide";
  fs::create_directories(dir);
  json list = json::array();
  for (int i = 0; i < static_cast<int>(proxies.size()); ++i) {
    save_rgb(project_rgb(proxies[i]), dir / (index_stem("p", i) + "_proxy.png"), 16);
    for (int j = 0; j < guides_for(cfg, i); ++j) {
      const std::string stem = pair_stem(i, j);
      const SyntheticGuide g = make_guide(cfg, proxies[i], i, j);
      save_rgb(g.image, dir / (stem + "_guide.png"), 16);
      std::string csv = "y,x,source_y,source_x,in_bounds\n";
      std::size_t inside = 0;
      char buf[96];
      for (int y = 0; y < g.image.height(); ++y)
        for (int x = 0; x < g.image.width(); ++x) {
          const std::size_t u = static_cast<std::size_t>(y) * g.image.width() + x;
          std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%d\n", y, x, g.source[u][0],
                        g.source[u][1], static_cast<int>(g.in_bounds[u]));
          csv += buf;
          inside += g.in_bounds[u];
        }
      write_text(dir / (stem + "_map.csv"), csv);
      list.push_back({{"proxy", i},
                      {"guide", j},
                      {"image", stem + "_guide.png"},
                      {"map", stem + "_map.csv"},
                      {"in_bounds", inside}});
    }
  }
  write_json(dir / "manifest.json", {{"config", manifest_config(cfg)}, {"guides", list}});
  return 0;
}

}  // namespace hsialign
