#include "hsialign/transport.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "bytes.hpp"
#include "hsialign/error.hpp"
#include "hsialign/io.hpp"
#include "hsialign/rng.hpp"

namespace hsialign {

SparseRows::SparseRows(std::size_t n, std::vector<std::size_t> offsets,
                       std::vector<std::uint32_t> columns, std::vector<double> weights)
    : n_(n), offsets_(std::move(offsets)), columns_(std::move(columns)),
      weights_(std::move(weights)) {
  if (offsets_.size() != n_ + 1 || offsets_.front() != 0 ||
      offsets_.back() != columns_.size() || columns_.size() != weights_.size()) {
    throw InvalidInput("inconsistent compressed-row arrays");
  }
  for (std::size_t r = 0; r < n_; ++r) {
    if (offsets_[r + 1] < offsets_[r]) throw InvalidInput("row offsets must be non-decreasing");
    for (std::size_t i = offsets_[r]; i < offsets_[r + 1]; ++i) {
      if (columns_[i] >= n_) throw InvalidInput("column index out of range");
      if (i > offsets_[r] && columns_[i] <= columns_[i - 1]) {
        throw InvalidInput("columns must be strictly increasing within a row");
      }
      if (!std::isfinite(weights_[i])) throw InvalidInput("operator weights must be finite");
    }
  }
}

SparseRows SparseRows::from_triplets(
    std::size_t n, const std::vector<std::vector<std::pair<std::uint32_t, double>>>& rows) {
  if (rows.size() != n) throw DimensionMismatch("row count differs from operator size");
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> cols;
  std::vector<double> wts;
  std::vector<std::pair<std::uint32_t, double>> row;
  for (const auto& src : rows) {
    row = src;
    std::stable_sort(row.begin(), row.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < row.size();) {
      std::size_t j = i;
      double acc = 0.0;
      for (; j < row.size() && row[j].first == row[i].first; ++j) acc += row[j].second;
      if (acc != 0.0) {
        cols.push_back(row[i].first);
        wts.push_back(acc);
      }
      i = j;
    }
    offsets.push_back(cols.size());
  }
  return SparseRows(n, std::move(offsets), std::move(cols), std::move(wts));
}

SparseRows SparseRows::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1);
  std::vector<std::uint32_t> cols(n);
  for (std::size_t i = 0; i <= n; ++i) offsets[i] = i;
  for (std::size_t i = 0; i < n; ++i) cols[i] = static_cast<std::uint32_t>(i);
  return SparseRows(n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0));
}

std::size_t SparseRows::max_support() const {
  std::size_t m = 0;
  for (std::size_t r = 0; r < n_; ++r) m = std::max(m, support(r));
  return m;
}

void SparseRows::apply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != n_ || y.size() != n_) throw DimensionMismatch("operand length differs from n");
  for (std::size_t r = 0; r < n_; ++r) {
    double acc = 0.0;
    for (std::size_t i = offsets_[r]; i < offsets_[r + 1]; ++i) acc += weights_[i] * x[columns_[i]];
    y[r] = acc;
  }
}

void SparseRows::apply_transpose(std::span<const double> x, std::span<double> y) const {
  if (x.size() != n_ || y.size() != n_) throw DimensionMismatch("operand length differs from n");
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t r = 0; r < n_; ++r) {
    for (std::size_t i = offsets_[r]; i < offsets_[r + 1]; ++i) y[columns_[i]] += weights_[i] * x[r];
  }
}

Field SparseRows::apply(const Field& field) const {
  if (field.pixels() != n_) throw DimensionMismatch("field lattice differs from operator size");
  Field out(field.height(), field.width(), field.channels());
  for (int c = 0; c < field.channels(); ++c) apply(field.plane(c), out.plane(c));
  return out;
}

SparseRows freeze_aggregation(std::span<const double> weights, const CandidateSet& cands) {
  const std::size_t n = cands.pixels();
  const int k = cands.per_pixel;
  if (weights.size() != n * k) throw DimensionMismatch("weights do not match candidates");
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
  for (std::size_t u = 0; u < n; ++u) {
    rows[u].reserve(k);
    for (int j = 0; j < k; ++j) {
      const PixelCoord& v = cands.at(u, j);
      rows[u].emplace_back(static_cast<std::uint32_t>(v.y * cands.width + v.x), weights[u * k + j]);
    }
  }
  return SparseRows::from_triplets(n, rows);
}

SparseRows freeze_interpolation(std::span<const double> weights, int stencil, int height,
                                int width) {
  const int s2 = stencil * stencil, half = stencil / 2;
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (weights.size() != n * s2) throw DimensionMismatch("kernel weights do not match the lattice");
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t u = static_cast<std::size_t>(y) * width + x;
      rows[u].reserve(s2);
      for (int e = 0; e < s2; ++e) {
        const PixelCoord q = clamp_to_lattice(y + e / stencil - half, x + e % stencil - half,
                                              height, width);
        rows[u].emplace_back(static_cast<std::uint32_t>(q.y * width + q.x), weights[u * s2 + e]);
      }
    }
  }
  return SparseRows::from_triplets(n, rows);
}

SparseRows compose(const SparseRows& left, const SparseRows& right) {
  const std::size_t n = left.size();
  if (right.size() != n) throw DimensionMismatch("composed operators differ in size");
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> cols;
  std::vector<double> wts;
  std::vector<double> acc(n, 0.0);
  std::vector<char> seen(n, 0);
  std::vector<std::uint32_t> touched;
  for (std::size_t r = 0; r < n; ++r) {
    touched.clear();
    auto lc = left.columns(r);
    auto lw = left.weights(r);
    for (std::size_t i = 0; i < lc.size(); ++i) {
      auto rc = right.columns(lc[i]);
      auto rw = right.weights(lc[i]);
      for (std::size_t j = 0; j < rc.size(); ++j) {
        if (!seen[rc[j]]) {
          seen[rc[j]] = 1;
          touched.push_back(rc[j]);
        }
        acc[rc[j]] += lw[i] * rw[j];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::uint32_t c : touched) {
      if (acc[c] != 0.0) {
        cols.push_back(c);
        wts.push_back(acc[c]);
      }
      acc[c] = 0.0;
      seen[c] = 0;
    }
    offsets.push_back(cols.size());
  }
  return SparseRows(n, std::move(offsets), std::move(cols), std::move(wts));
}

SparseWarp freeze(const WarpParams& params, const CandidateSet& cands) {
  const std::size_t n = cands.pixels();
  if (params.pixels != static_cast<int>(n) || params.candidates != cands.per_pixel) {
    throw DimensionMismatch("warp parameters do not match the candidate set");
  }
  const int s2 = params.stencil * params.stencil;
  SparseWarp w;
  w.height = cands.height;
  w.width = cands.width;
  w.candidates = cands.per_pixel;
  w.stencil = params.stencil;
  w.aggregation = freeze_aggregation(
      soft_weights(params.aggregation, cands.per_pixel, params.temperature), cands);
  w.interpolation = freeze_interpolation(soft_weights(params.interpolation, s2, 1.0),
                                         params.stencil, cands.height, cands.width);
  w.composite = compose(w.interpolation, w.aggregation);
  return w;
}

namespace {

TransferResult finish(const HyperCube& like, const std::vector<double>& values) {
  std::vector<float> data(values.size());
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i];
    if (v < 0.0 || v > 1.0) {
      ++clamped;
      v = std::clamp(v, 0.0, 1.0);
    }
    data[i] = static_cast<float>(v);
  }
  return {HyperCube(like.height(), like.width(), like.wavelengths(), std::move(data)), clamped};
}

void require_lattice(const SparseRows& op, const HyperCube& cube) {
  if (op.size() != cube.pixels()) throw DimensionMismatch("cube lattice differs from the warp");
}

}  // namespace

TransferResult transfer(const SparseRows& aggregation, const SparseRows& interpolation,
                        const HyperCube& cube) {
  require_lattice(aggregation, cube);
  require_lattice(interpolation, cube);
  const std::size_t n = cube.pixels();
  std::vector<double> x(n), bar(n), out(cube.size());
  for (int b = 0; b < cube.bands(); ++b) {
    std::copy(cube.plane(b).begin(), cube.plane(b).end(), x.begin());
    aggregation.apply(x, bar);
    interpolation.apply(bar, std::span<double>(out.data() + b * n, n));
  }
  return finish(cube, out);
}

TransferResult transfer(const SparseRows& op, const HyperCube& cube) {
  require_lattice(op, cube);
  const std::size_t n = cube.pixels();
  std::vector<double> x(n), out(cube.size());
  for (int b = 0; b < cube.bands(); ++b) {
    std::copy(cube.plane(b).begin(), cube.plane(b).end(), x.begin());
    op.apply(x, std::span<double>(out.data() + b * n, n));
  }
  return finish(cube, out);
}

ContainmentReport check_containment(const SparseRows& op, const HyperCube& source,
                                    const HyperCube& output, double tolerance) {
  require_lattice(op, source);
  if (!source.same_shape(output)) throw DimensionMismatch("output shape differs from source");
  ContainmentReport rep;
  for (std::size_t r = 0; r < op.size(); ++r) {
    auto cols = op.columns(r);
    bool bad = false;
    for (int b = 0; b < source.bands(); ++b) {
      ++rep.checked;
      if (cols.empty()) {
        bad = true;
        ++rep.violations;
        continue;
      }
      auto plane = source.plane(b);
      double lo = plane[cols[0]], hi = lo;
      for (std::uint32_t c : cols) {
        lo = std::min(lo, static_cast<double>(plane[c]));
        hi = std::max(hi, static_cast<double>(plane[c]));
      }
      const double v = output.plane(b)[r];
      const double excess = std::max(lo - v, v - hi);
      if (excess > tolerance) {
        bad = true;
        ++rep.violations;
        rep.worst_excess = std::max(rep.worst_excess, excess);
      }
    }
    if (bad && rep.rows.size() < 32) rep.rows.push_back(r);
  }
  return rep;
}

std::string OperatorReport::summary() const {
  auto list = [](const std::vector<std::size_t>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < rows.size(); ++i) os << (i ? "," : "") << rows[i];
    return os.str();
  };
  std::ostringstream os;
  os << "nonnegative=" << (nonnegative ? "yes" : "no")
     << " stochastic=" << (stochastic ? "yes" : "no")
     << " support=" << max_support << (support_ok ? "" : "(over bound)")
     << " contained=" << (contained ? "yes" : "no");
  if (!negative_rows.empty()) os << " negative_rows=[" << list(negative_rows) << "]";
  if (!row_sum_rows.empty()) os << " row_sum_rows=[" << list(row_sum_rows) << "]";
  if (!support_rows.empty()) os << " support_rows=[" << list(support_rows) << "]";
  if (!containment.rows.empty()) os << " containment_rows=[" << list(containment.rows) << "]";
  return os.str();
}

nlohmann::json to_json(const OperatorReport& r) {
  return {{"ok", r.ok()},
          {"nonnegative", r.nonnegative},
          {"stochastic", r.stochastic},
          {"support_ok", r.support_ok},
          {"contained", r.contained},
          {"max_support", r.max_support},
          {"max_row_sum_error", r.max_row_sum_error},
          {"negative_rows", r.negative_rows},
          {"row_sum_rows", r.row_sum_rows},
          {"support_rows", r.support_rows},
          {"containment_violations", r.containment.violations},
          {"containment_rows", r.containment.rows}};
}

OperatorReport verify_operator(const SparseRows& op, int height, int width,
                               std::size_t support_bound, std::uint64_t probe_seed,
                               int probe_bands) {
  if (static_cast<std::size_t>(height) * width != op.size()) {
    throw DimensionMismatch("lattice size differs from operator size");
  }
  OperatorReport rep;
  constexpr std::size_t kListed = 32;
  for (std::size_t r = 0; r < op.size(); ++r) {
    double sum = 0.0;
    bool neg = false;
    for (double w : op.weights(r)) {
      if (w < 0.0) neg = true;
      sum += w;
    }
    if (neg) {
      rep.nonnegative = false;
      if (rep.negative_rows.size() < kListed) rep.negative_rows.push_back(r);
    }
    const double err = std::abs(sum - 1.0);
    rep.max_row_sum_error = std::max(rep.max_row_sum_error, err);
    if (!(err <= kRowSumTolerance)) {
      rep.stochastic = false;
      if (rep.row_sum_rows.size() < kListed) rep.row_sum_rows.push_back(r);
    }
    rep.max_support = std::max(rep.max_support, op.support(r));
    if (op.support(r) > support_bound) {
      rep.support_ok = false;
      if (rep.support_rows.size() < kListed) rep.support_rows.push_back(r);
    }
  }

  Rng rng(probe_seed);
  std::vector<float> probe(op.size() * probe_bands);
  for (float& v : probe) v = static_cast<float>(rng.uniform());
  const HyperCube cube(height, width, uniform_wavelengths(probe_bands, 400.0, 700.0),
                       std::move(probe));
  // Unclamped double output so an over-weighted row is visible.
  const std::size_t n = op.size();
  std::vector<double> x(n), y(n);
  std::vector<float> out(cube.size());
  bool finite_range = true;
  for (int b = 0; b < probe_bands; ++b) {
    std::copy(cube.plane(b).begin(), cube.plane(b).end(), x.begin());
    op.apply(x, y);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(y[i] >= 0.0 && y[i] <= 1.0)) finite_range = false;
      out[b * n + i] = static_cast<float>(std::clamp(y[i], 0.0, 1.0));
    }
  }
  if (!finite_range) {
    // Values outside [0,1] cannot be stored in a cube; compare in double.
    rep.containment = {};
    for (std::size_t r = 0; r < n; ++r) {
      bool bad = false;
      for (int b = 0; b < probe_bands; ++b) {
        ++rep.containment.checked;
        auto cols = op.columns(r);
        double lo = 1.0, hi = 0.0, v = 0.0;
        for (std::size_t i = 0; i < cols.size(); ++i) {
          const double s = cube.plane(b)[cols[i]];
          lo = std::min(lo, s);
          hi = std::max(hi, s);
          v += op.weights(r)[i] * s;
        }
        const double excess = cols.empty() ? 1.0 : std::max(lo - v, v - hi);
        if (excess > 1e-12) {
          bad = true;
          ++rep.containment.violations;
          rep.containment.worst_excess = std::max(rep.containment.worst_excess, excess);
        }
      }
      if (bad && rep.containment.rows.size() < kListed) rep.containment.rows.push_back(r);
    }
  } else {
    const HyperCube output(height, width, cube.wavelengths(), std::move(out));
    rep.containment = check_containment(op, cube, output);
  }
  rep.contained = rep.containment.violations == 0;
  return rep;
}

KappaResult overlap_kappa(const SparseRows& op, double tolerance, int max_iterations) {
  const std::size_t n = op.size();
  if (n == 0) throw InvalidInput("empty operator");
  std::vector<double> v(n), tv(n), w(n);
  // Ones is a good start for a row-stochastic T (T 1 = 1); the small
  // perturbation keeps it from being orthogonal to the top eigenvector.
  double norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = 1.0 + 1e-3 * std::sin(static_cast<double>(i) + 1.0);
    norm += v[i] * v[i];
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;

  KappaResult res;
  for (int it = 1; it <= max_iterations; ++it) {
    op.apply(v, tv);
    op.apply_transpose(tv, w);
    double lambda = 0.0;
    for (std::size_t i = 0; i < n; ++i) lambda += v[i] * w[i];
    double r2 = 0.0, wn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = w[i] - lambda * v[i];
      r2 += d * d;
      wn += w[i] * w[i];
    }
    res.residual = std::sqrt(r2);
    res.iterations = it;
    res.kappa = lambda;
    if (res.residual <= tolerance * lambda) {
      res.vector = v;
      return res;
    }
    wn = std::sqrt(wn);
    if (!(wn > 0.0)) throw ConvergenceError("power iteration collapsed to zero", res.residual);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
  }
  throw ConvergenceError("power iteration did not converge in " +
                             std::to_string(max_iterations) + " iterations",
                         res.residual);
}

// SWRP: "SWRP", u64 n, u32 K, u32 s, n x u32 row counts, nnz x u32 columns,
// nnz x f64 weights; all little-endian.
std::vector<std::uint8_t> encode_warp(const SparseWarp& warp) {
  const SparseRows& t = warp.composite;
  detail::ByteWriter out;
  out.put_bytes("SWRP", 4);
  out.put_u64(t.size());
  out.put_u32(static_cast<std::uint32_t>(warp.candidates));
  out.put_u32(static_cast<std::uint32_t>(warp.stencil));
  for (std::size_t r = 0; r < t.size(); ++r) out.put_u32(static_cast<std::uint32_t>(t.support(r)));
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (std::uint32_t c : t.columns(r)) out.put_u32(c);
  }
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (double w : t.weights(r)) out.put_f64(w);
  }
  return std::move(out.bytes());
}

StoredWarp decode_warp(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in(bytes);
  char magic[4];
  in.get_bytes(magic, 4, "operator magic");
  if (std::string(magic, 4) != "SWRP") throw ParseError(ParseErrorKind::kBadMagic, "not an SWRP file");
  const std::uint64_t n = in.get_u64("operator size");
  StoredWarp sw;
  sw.candidates = in.get_u32("candidate count");
  sw.stencil = in.get_u32("stencil side");
  if (n > in.remaining() / 4) throw ParseError(ParseErrorKind::kTruncated, "row counts");
  std::vector<std::size_t> offsets{0};
  offsets.reserve(n + 1);
  for (std::uint64_t r = 0; r < n; ++r) offsets.push_back(offsets.back() + in.get_u32("row counts"));
  const std::size_t nnz = offsets.back();
  if (nnz > in.remaining() / 12) throw ParseError(ParseErrorKind::kTruncated, "operator entries");
  std::vector<std::uint32_t> cols(nnz);
  std::vector<double> wts(nnz);
  for (auto& c : cols) c = in.get_u32("columns");
  for (auto& w : wts) w = in.get_f64("weights");
  if (in.remaining() != 0) throw ParseError(ParseErrorKind::kTrailingData, "bytes after operator");
  try {
    sw.op = SparseRows(n, std::move(offsets), std::move(cols), std::move(wts));
  } catch (const InvalidInput& e) {
    throw ParseError(ParseErrorKind::kBadHeader, e.what());
  }
  return sw;
}

void save_warp(const SparseWarp& warp, const std::filesystem::path& path) {
  write_file(path, encode_warp(warp));
}

StoredWarp load_warp(const std::filesystem::path& path) { return decode_warp(read_file(path)); }

}  // namespace hsialign
