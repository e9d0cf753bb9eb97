#include "hsialign/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

#include "hsialign/error.hpp"
#include "hsialign/rng.hpp"

namespace hsialign {

namespace {

constexpr std::array<std::pair<DegradationKind, const char*>, 6> kKindNames = {{
    {DegradationKind::kGaussianNonIid, "gaussian_noniid"},
    {DegradationKind::kComplex, "complex"},
    {DegradationKind::kSrBicubic, "sr_bicubic"},
    {DegradationKind::kBlur, "blur"},
    {DegradationKind::kBandMiss, "band_miss"},
    {DegradationKind::kInpaintMask, "inpaint_mask"},
}};

std::vector<double> to_double(const HyperCube& cube) {
  return {cube.data().begin(), cube.data().end()};
}

HyperCube to_cube(int h, int w, const std::vector<double>& wl, const std::vector<double>& v) {
  std::vector<float> data(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) data[i] = static_cast<float>(v[i]);
  return {h, w, wl, std::move(data)};
}

void check_ratio(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput(std::string(what) + " must lie in [0,1]");
}

void check_range(double lo, double hi, const char* what) {
  check_ratio(lo, what);
  check_ratio(hi, what);
  if (lo > hi) throw InvalidInput(std::string(what) + " range is inverted");
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx.begin(), idx.end());
  return idx;
}

void add_gaussian(std::vector<double>& v, const HyperCube& cube, const DegradationSpec& s,
                  Rng& rng) {
  const std::size_t n = cube.pixels();
  for (int b = 0; b < cube.bands(); ++b) {
    const double sigma = rng.uniform(s.sigma_min, s.sigma_max) / 255.0;
    for (std::size_t i = 0; i < n; ++i) v[b * n + i] += sigma * rng.normal();
  }
}

std::size_t column_count(double fraction, int width) {
  return static_cast<std::size_t>(
      std::clamp<long long>(std::llround(fraction * width), 1, width));
}

void add_complex(std::vector<double>& v, const HyperCube& cube, const DegradationSpec& s,
                 Rng& rng) {
  const int bands = cube.bands(), h = cube.height(), w = cube.width();
  const std::size_t n = cube.pixels();
  const auto order = permutation(bands, rng);
  const int third = bands / 3;
  for (int i = 0; i < third; ++i) {  // impulse
    const std::size_t b = order[i];
    const double ratio = rng.uniform(s.impulse_min, s.impulse_max);
    for (std::size_t p = 0; p < n; ++p) {
      if (rng.uniform() < ratio) v[b * n + p] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
  }
  for (int i = third; i < 2 * third; ++i) {  // stripes
    const std::size_t b = order[i];
    const std::size_t count = column_count(rng.uniform(s.stripe_min, s.stripe_max), w);
    const auto cols = permutation(w, rng);
    for (std::size_t c = 0; c < count; ++c) {
      const double off = rng.uniform(-s.stripe_amplitude, s.stripe_amplitude);
      for (int y = 0; y < h; ++y) v[b * n + static_cast<std::size_t>(y) * w + cols[c]] += off;
    }
  }
  for (int i = 2 * third; i < 3 * third; ++i) {  // deadlines
    const std::size_t b = order[i];
    const std::size_t count = column_count(rng.uniform(s.deadline_min, s.deadline_max), w);
    const auto cols = permutation(w, rng);
    for (std::size_t c = 0; c < count; ++c) {
      for (int y = 0; y < h; ++y) v[b * n + static_cast<std::size_t>(y) * w + cols[c]] = 0.0;
    }
  }
}

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::vector<std::vector<std::pair<int, double>>> rows;
};

// Output sample i of a length-`in` signal reduced by `scale` integrates the
// cubic kernel stretched by `scale` (anti-aliasing); taps outside the
// signal are clamped to the edge and all weights renormalized.
Taps resample_taps(int in, int scale) {
  const int out = static_cast<int>((in + scale - 1) / scale);
  Taps t;
  t.rows.resize(out);
  const double support = 2.0 * scale;
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    std::vector<double> acc(in, 0.0);
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double wgt = cubic((j - center) / scale);
      if (wgt == 0.0) continue;
      acc[std::clamp(j, 0, in - 1)] += wgt;
      sum += wgt;
    }
    for (int j = 0; j < in; ++j) {
      if (acc[j] != 0.0) t.rows[i].emplace_back(j, acc[j] / sum);
    }
  }
  return t;
}

int wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

}  // namespace

const char* to_string(DegradationKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

DegradationKind degradation_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
  }
  throw InvalidInput("unknown degradation kind '" + name + "'");
}

void DegradationSpec::validate() const {
  if (!(sigma_min >= 0.0 && sigma_min <= sigma_max) || !std::isfinite(sigma_max)) {
    throw InvalidInput("noise sigma range must satisfy 0 <= min <= max");
  }
  check_range(impulse_min, impulse_max, "impulse ratio");
  check_range(stripe_min, stripe_max, "stripe ratio");
  check_range(deadline_min, deadline_max, "deadline ratio");
  if (!(stripe_amplitude >= 0.0) || !std::isfinite(stripe_amplitude)) {
    throw InvalidInput("stripe amplitude must be >= 0");
  }
  if (scale != 2 && scale != 4 && scale != 8) throw InvalidInput("scale must be 2, 4 or 8");
  if (blur_radius < 1) throw InvalidInput("blur radius must be >= 1");
  if (!(blur_sigma > 0.0) || !std::isfinite(blur_sigma)) {
    throw InvalidInput("blur sigma must be > 0");
  }
  check_ratio(band_miss_ratio, "band-miss ratio");
  check_ratio(mask_ratio, "mask ratio");
}

nlohmann::json to_json(const DegradationSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"sigma_min", s.sigma_min},
          {"sigma_max", s.sigma_max},
          {"impulse_min", s.impulse_min},
          {"impulse_max", s.impulse_max},
          {"stripe_min", s.stripe_min},
          {"stripe_max", s.stripe_max},
          {"stripe_amplitude", s.stripe_amplitude},
          {"deadline_min", s.deadline_min},
          {"deadline_max", s.deadline_max},
          {"scale", s.scale},
          {"blur_radius", s.blur_radius},
          {"gaussian_blur", s.gaussian_blur},
          {"blur_sigma", s.blur_sigma},
          {"band_miss_ratio", s.band_miss_ratio},
          {"mask_ratio", s.mask_ratio},
          {"seed", s.seed}};
}

DegradationSpec degradation_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("degradation spec must be a JSON object");
  DegradationSpec s;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "kind") s.kind = degradation_kind_from_string(val.get<std::string>());
      else if (key == "sigma_min") s.sigma_min = val.get<double>();
      else if (key == "sigma_max") s.sigma_max = val.get<double>();
      else if (key == "impulse_min") s.impulse_min = val.get<double>();
      else if (key == "impulse_max") s.impulse_max = val.get<double>();
      else if (key == "stripe_min") s.stripe_min = val.get<double>();
      else if (key == "stripe_max") s.stripe_max = val.get<double>();
      else if (key == "stripe_amplitude") s.stripe_amplitude = val.get<double>();
      else if (key == "deadline_min") s.deadline_min = val.get<double>();
      else if (key == "deadline_max") s.deadline_max = val.get<double>();
      else if (key == "scale") s.scale = val.get<int>();
      else if (key == "blur_radius") s.blur_radius = val.get<int>();
      else if (key == "gaussian_blur") s.gaussian_blur = val.get<bool>();
      else if (key == "blur_sigma") s.blur_sigma = val.get<double>();
      else if (key == "band_miss_ratio") s.band_miss_ratio = val.get<double>();
      else if (key == "mask_ratio") s.mask_ratio = val.get<double>();
      else if (key == "seed") s.seed = val.get<std::uint64_t>();
      else throw InvalidInput("unknown degradation key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("degradation key '" + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

long long robust_ceil(double x) {
  const long long r = std::llround(x);
  if (std::abs(x - static_cast<double>(r)) <= 1e-9) return r;
  return static_cast<long long>(std::ceil(x));
}

HyperCube bicubic_downsample(const HyperCube& cube, int scale) {
  if (scale < 1) throw InvalidInput("scale must be >= 1");
  const int h = cube.height(), w = cube.width();
  const Taps ty = resample_taps(h, scale), tx = resample_taps(w, scale);
  const int oh = static_cast<int>(ty.rows.size()), ow = static_cast<int>(tx.rows.size());
  const std::size_t on = static_cast<std::size_t>(oh) * ow;
  std::vector<double> out(on * cube.bands());
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int b = 0; b < cube.bands(); ++b) {
    auto src = cube.plane(b);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (const auto& [j, wgt] : tx.rows[x]) acc += wgt * src[static_cast<std::size_t>(y) * w + j];
        tmp[static_cast<std::size_t>(y) * ow + x] = acc;
      }
    }
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (const auto& [j, wgt] : ty.rows[y]) acc += wgt * tmp[static_cast<std::size_t>(j) * ow + x];
        out[b * on + static_cast<std::size_t>(y) * ow + x] = acc;
      }
    }
  }
  return to_cube(oh, ow, cube.wavelengths(), out);
}

HyperCube disk_blur(const HyperCube& cube, int radius) {
  if (radius < 1) throw InvalidInput("blur radius must be >= 1");
  std::vector<std::pair<int, int>> taps;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dy * dy + dx * dx <= radius * radius) taps.emplace_back(dy, dx);
    }
  }
  const double wgt = 1.0 / static_cast<double>(taps.size());
  const int h = cube.height(), w = cube.width();
  const std::size_t n = cube.pixels();
  std::vector<double> out(cube.size());
  for (int b = 0; b < cube.bands(); ++b) {
    auto src = cube.plane(b);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const auto& [dy, dx] : taps) {
          acc += src[static_cast<std::size_t>(wrap(y + dy, h)) * w + wrap(x + dx, w)];
        }
        out[b * n + static_cast<std::size_t>(y) * w + x] = acc * wgt;
      }
    }
  }
  return to_cube(h, w, cube.wavelengths(), out);
}

HyperCube gaussian_blur(const HyperCube& cube, double sigma, int radius) {
  if (!(sigma > 0.0) || radius < 1) throw InvalidInput("invalid Gaussian blur parameters");
  std::vector<double> k(2 * radius + 1);
  double z = 0.0;
  for (int o = -radius; o <= radius; ++o) z += k[o + radius] = std::exp(-0.5 * o * o / (sigma * sigma));
  for (double& v : k) v /= z;
  const int h = cube.height(), w = cube.width();
  const std::size_t n = cube.pixels();
  std::vector<double> out(cube.size()), tmp(n);
  for (int b = 0; b < cube.bands(); ++b) {
    auto src = cube.plane(b);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int o = -radius; o <= radius; ++o) {
          acc += k[o + radius] * src[static_cast<std::size_t>(y) * w + wrap(x + o, w)];
        }
        tmp[static_cast<std::size_t>(y) * w + x] = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int o = -radius; o <= radius; ++o) {
          acc += k[o + radius] * tmp[static_cast<std::size_t>(wrap(y + o, h)) * w + x];
        }
        out[b * n + static_cast<std::size_t>(y) * w + x] = acc;
      }
    }
  }
  return to_cube(h, w, cube.wavelengths(), out);
}

HyperCube apply_degradation(const HyperCube& cube, const DegradationSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, to_string(spec.kind)));
  switch (spec.kind) {
    case DegradationKind::kGaussianNonIid: {
      auto v = to_double(cube);
      add_gaussian(v, cube, spec, rng);
      return to_cube(cube.height(), cube.width(), cube.wavelengths(), v);
    }
    case DegradationKind::kComplex: {
      auto v = to_double(cube);
      add_gaussian(v, cube, spec, rng);
      add_complex(v, cube, spec, rng);
      return to_cube(cube.height(), cube.width(), cube.wavelengths(), v);
    }
    case DegradationKind::kSrBicubic:
      return bicubic_downsample(cube, spec.scale);
    case DegradationKind::kBlur:
      return spec.gaussian_blur ? gaussian_blur(cube, spec.blur_sigma, spec.blur_radius)
                                : disk_blur(cube, spec.blur_radius);
    case DegradationKind::kBandMiss: {
      auto v = to_double(cube);
      const std::size_t count = static_cast<std::size_t>(
          std::min<long long>(robust_ceil(spec.band_miss_ratio * cube.bands()), cube.bands()));
      const auto order = permutation(cube.bands(), rng);
      const std::size_t n = cube.pixels();
      for (std::size_t i = 0; i < count; ++i) {
        std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(order[i] * n), n, 0.0);
      }
      return to_cube(cube.height(), cube.width(), cube.wavelengths(), v);
    }
    case DegradationKind::kInpaintMask: {
      auto v = to_double(cube);
      const std::size_t n = cube.pixels();
      const std::size_t count = static_cast<std::size_t>(
          std::min<long long>(robust_ceil(spec.mask_ratio * static_cast<double>(n)),
                              static_cast<long long>(n)));
      const auto order = permutation(n, rng);
      for (std::size_t i = 0; i < count; ++i) {
        for (int b = 0; b < cube.bands(); ++b) v[b * n + order[i]] = 0.0;
      }
      return to_cube(cube.height(), cube.width(), cube.wavelengths(), v);
    }
  }
  throw InvalidInput("unknown degradation kind");
}

std::size_t PairSet::count(Provenance p) const {
  return static_cast<std::size_t>(std::count_if(
      pairs.begin(), pairs.end(), [p](const TrainingPair& t) { return t.provenance == p; }));
}

nlohmann::json PairSet::manifest() const {
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    list.push_back({{"index", i},
                    {"provenance", p.provenance == Provenance::kProxy ? "proxy" : "generated"},
                    {"proxy_index", p.proxy_index},
                    {"guide_index", p.guide_index},
                    {"seed", p.spec.seed},
                    {"clean_shape", {p.clean.height(), p.clean.width(), p.clean.bands()}},
                    {"degraded_shape",
                     {p.degraded.height(), p.degraded.width(), p.degraded.bands()}}});
  }
  return {{"degradation", to_json(spec)},
          {"ratio", ratio},
          {"proxy_pairs", count(Provenance::kProxy)},
          {"generated_pairs", count(Provenance::kGenerated)},
          {"pairs", list}};
}

PairSet build_pairs(const std::vector<HyperCube>& proxies,
                    const std::vector<std::vector<HyperCube>>& synthesized,
                    const DegradationSpec& spec, double ratio) {
  spec.validate();
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw InvalidInput("mix ratio must be >= 0");
  if (proxies.empty()) throw InvalidInput("at least one proxy is required");
  if (synthesized.size() != proxies.size()) {
    throw DimensionMismatch("synthesized lists must align with proxies");
  }
  const std::size_t np = proxies.size();
  const auto generated = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(np)));
  std::size_t available = 0;
  for (const auto& s : synthesized) available += s.size();
  PairSet set;
  set.spec = spec;
  set.ratio = ratio;
  std::size_t index = 0;
  auto add = [&](const HyperCube& clean, Provenance prov, int i, int j) {
    TrainingPair p;
    p.spec = spec;
    p.spec.seed = derive_seed(spec.seed, "pair", index++);
    p.clean = clean;
    p.degraded = apply_degradation(clean, p.spec);
    p.provenance = prov;
    p.proxy_index = i;
    p.guide_index = j;
    set.pairs.push_back(std::move(p));
  };
  for (std::size_t i = 0; i < np; ++i) add(proxies[i], Provenance::kProxy, static_cast<int>(i), -1);
  for (std::size_t t = 0; t < generated; ++t) {
    const std::size_t i = t % np, j = t / np;
    if (j >= synthesized[i].size()) {
      throw InvalidInput("ratio " + std::to_string(ratio) + " needs " + std::to_string(generated) +
                         " synthesized samples spread over the proxies; only " +
                         std::to_string(available) + " available");
    }
    add(synthesized[i][j], Provenance::kGenerated, static_cast<int>(i), static_cast<int>(j));
  }
  return set;
}

Affine Affine::translation(double dy, double dx) {
  Affine a;
  a.t = {dy, dx};
  return a;
}

Affine Affine::rotation(double degrees, double cy, double cx) {
  const double r = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(r), s = std::sin(r);
  Affine a;
  a.m = {c, -s, s, c};
  // Fixes (cy, cx): t = center - M center.
  a.t = {cy - (c * cy - s * cx), cx - (s * cy + c * cx)};
  return a;
}

std::array<double, 2> Affine::inverse_map(double y, double x) const {
  const double det = determinant();
  const double ry = y - t[0], rx = x - t[1];
  return {(m[3] * ry - m[1] * rx) / det, (-m[2] * ry + m[0] * rx) / det};
}

SyntheticGuide make_synthetic_guide(const RgbImage& proxy, const Affine& affine,
                                    const PhotometricJitter& jitter, std::uint64_t seed) {
  const double det = affine.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) throw InvalidInput("affine map is singular");
  if (!(jitter.gain >= 0.0 && jitter.gain < 1.0) || !(jitter.offset >= 0.0 && jitter.offset <= 1.0)) {
    throw InvalidInput("photometric jitter out of range");
  }
  Rng rng(derive_seed(seed, "guide/jitter"));
  std::array<double, 3> gain{}, offset{};
  for (int c = 0; c < 3; ++c) {
    gain[c] = 1.0 + rng.uniform(-jitter.gain, jitter.gain);
    offset[c] = rng.uniform(-jitter.offset, jitter.offset);
  }
  const int h = proxy.height(), w = proxy.width();
  const std::size_t n = proxy.pixels();
  SyntheticGuide g;
  g.source.resize(n);
  g.in_bounds.resize(n);
  std::vector<double> data(3 * n);
  constexpr double kEdge = 1e-9;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t u = static_cast<std::size_t>(y) * w + x;
      const auto s = affine.inverse_map(y, x);
      g.source[u] = s;
      g.in_bounds[u] = s[0] >= -kEdge && s[0] <= h - 1 + kEdge && s[1] >= -kEdge &&
                       s[1] <= w - 1 + kEdge;
      const double sy = std::clamp(s[0], 0.0, h - 1.0), sx = std::clamp(s[1], 0.0, w - 1.0);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = sy - y0, fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - fy) * ((1 - fx) * proxy.at(c, y0, x0) + fx * proxy.at(c, y0, x1)) +
                         fy * ((1 - fx) * proxy.at(c, y1, x0) + fx * proxy.at(c, y1, x1));
        data[c * n + u] = gain[c] * v + offset[c];
      }
    }
  }
  g.image = RgbImage(h, w, std::move(data));
  return g;
}

HyperCube make_random_texture_cube(int height, int width, int bands, std::uint64_t seed,
                                   const TextureConfig& cfg) {
  if (height < 1 || width < 1 || bands < 1) throw InvalidInput("texture dimensions must be >= 1");
  if (cfg.endmembers < 1 || !(cfg.correlation >= 0.0) || !std::isfinite(cfg.sharpness)) {
    throw InvalidInput("invalid texture configuration");
  }
  Rng rng(derive_seed(seed, "texture"));
  const auto wl = uniform_wavelengths(bands, 400.0, 700.0);
  const int ne = cfg.endmembers;
  const std::size_t n = static_cast<std::size_t>(height) * width;

  // Smooth spectra: a baseline plus two Gaussian absorption/reflection bumps.
  std::vector<std::vector<double>> spectra(ne, std::vector<double>(bands));
  for (auto& s : spectra) {
    const double base = rng.uniform(0.05, 0.35);
    double c[2], wd[2], a[2];
    for (int k = 0; k < 2; ++k) {
      c[k] = rng.uniform(380.0, 720.0);
      wd[k] = rng.uniform(25.0, 120.0);
      a[k] = rng.uniform(-0.1, 0.55);
    }
    for (int b = 0; b < bands; ++b) {
      double v = base;
      for (int k = 0; k < 2; ++k) v += a[k] * std::exp(-0.5 * std::pow((wl[b] - c[k]) / wd[k], 2));
      s[b] = std::clamp(v, 0.02, 0.95);
    }
  }

  // Correlated abundance noise: white noise, separable Gaussian blur with
  // replicate boundary, standardized per map.
  const int radius = static_cast<int>(std::ceil(3.0 * cfg.correlation));
  std::vector<double> kernel(2 * radius + 1, 1.0);
  if (cfg.correlation > 0.0) {
    for (int o = -radius; o <= radius; ++o) {
      kernel[o + radius] = std::exp(-0.5 * o * o / (cfg.correlation * cfg.correlation));
    }
  }
  std::vector<std::vector<double>> maps(ne, std::vector<double>(n));
  std::vector<double> tmp(n);
  for (auto& m : maps) {
    for (double& v : m) v = rng.uniform();
    for (int pass = 0; pass < 2; ++pass) {
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          double acc = 0.0, z = 0.0;
          for (int o = -radius; o <= radius; ++o) {
            const int yy = pass == 0 ? y : std::clamp(y + o, 0, height - 1);
            const int xx = pass == 0 ? std::clamp(x + o, 0, width - 1) : x;
            acc += kernel[o + radius] * m[static_cast<std::size_t>(yy) * width + xx];
            z += kernel[o + radius];
          }
          tmp[static_cast<std::size_t>(y) * width + x] = acc / z;
        }
      }
      m.swap(tmp);
    }
    double mean = 0.0, var = 0.0;
    for (double v : m) mean += v;
    mean /= static_cast<double>(n);
    for (double v : m) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (double& v : m) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  }

  std::vector<float> data(n * bands);
  std::vector<double> ab(ne);
  for (std::size_t p = 0; p < n; ++p) {
    double mx = -1e300;
    for (int k = 0; k < ne; ++k) mx = std::max(mx, cfg.sharpness * maps[k][p]);
    double z = 0.0;
    for (int k = 0; k < ne; ++k) z += ab[k] = std::exp(cfg.sharpness * maps[k][p] - mx);
    for (int b = 0; b < bands; ++b) {
      double v = 0.0;
      for (int k = 0; k < ne; ++k) v += ab[k] / z * spectra[k][b];
      data[b * n + p] = static_cast<float>(v);
    }
  }
  return {height, width, wl, std::move(data)};
}

}  // namespace hsialign
