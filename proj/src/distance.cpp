#include "sigmetric/distance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "sigmetric/parallel.hpp"

namespace sigmetric {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_leads(const SignalRecord& a, const SignalRecord& b) {
  if (a.leads != b.leads)
    throw DimensionError("distance: lead counts differ (" +
                         std::to_string(a.leads) + " vs " +
                         std::to_string(b.leads) + ")");
}

// Unsquared L2 across leads at time indices (i, j).
double local_cost(const SignalRecord& a, const SignalRecord& b, int i, int j) {
  double s = 0.0;
  for (int l = 0; l < a.leads; ++l) {
    const double d = static_cast<double>(a.at(l, i)) - b.at(l, j);
    s += d * d;
  }
  return std::sqrt(s);
}
}  // namespace

std::string distance_kind_to_string(DistanceKind k) {
  return k == DistanceKind::euclidean ? "euclidean" : "dtw";
}

DistanceKind distance_kind_from_string(const std::string& s) {
  if (s == "euclidean") return DistanceKind::euclidean;
  if (s == "dtw") return DistanceKind::dtw;
  throw ParseError("unknown distance kind '" + s + "' (expected euclidean|dtw)");
}

double euclidean_distance(const SignalRecord& a, const SignalRecord& b) {
  check_same_leads(a, b);
  if (a.samples != b.samples)
    throw DimensionError("euclidean distance requires equal lengths (" +
                         std::to_string(a.samples) + " vs " +
                         std::to_string(b.samples) + ")");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double dtw_distance(const SignalRecord& a, const SignalRecord& b,
                    std::optional<int> band_radius) {
  check_same_leads(a, b);
  const int ta = a.samples;
  const int tb = b.samples;
  if (ta <= 0 || tb <= 0) throw DimensionError("dtw on an empty record");
  if (band_radius.has_value()) {
    if (*band_radius < 0) throw ConfigError("band_radius must be >= 0");
    if (*band_radius < std::abs(ta - tb))
      throw ConfigError("band_radius " + std::to_string(*band_radius) +
                        " < length difference " + std::to_string(std::abs(ta - tb)) +
                        "; no alignment path exists");
  }

  // Two-row rolling table over the (ta+1) x (tb+1) DP grid.
  std::vector<double> prev(static_cast<std::size_t>(tb) + 1, kInf);
  std::vector<double> curr(static_cast<std::size_t>(tb) + 1, kInf);
  prev[0] = 0.0;
  for (int i = 1; i <= ta; ++i) {
    std::fill(curr.begin(), curr.end(), kInf);
    int j_lo = 1;
    int j_hi = tb;
    if (band_radius.has_value()) {
      j_lo = std::max(1, i - *band_radius);
      j_hi = std::min(tb, i + *band_radius);
    }
    for (int j = j_lo; j <= j_hi; ++j) {
      const double best =
          std::min(prev[j], std::min(curr[j - 1], prev[j - 1]));
      if (best == kInf) continue;
      curr[j] = local_cost(a, b, i - 1, j - 1) + best;
    }
    std::swap(prev, curr);
  }
  const double result = prev[tb];
  if (result == kInf)
    throw InternalError("dtw: no path reached the terminal cell");
  return result;
}

SignalRecord znormalize_record(const SignalRecord& r) {
  SignalRecord out = r;
  for (int l = 0; l < r.leads; ++l) {
    float* lead = out.data.data() + static_cast<std::size_t>(l) * r.samples;
    double mean = 0.0;
    for (int t = 0; t < r.samples; ++t) mean += lead[t];
    mean /= r.samples;
    double var = 0.0;
    for (int t = 0; t < r.samples; ++t) {
      const double d = lead[t] - mean;
      var += d * d;
    }
    var /= r.samples;
    const double denom = std::sqrt(var) + 1e-12;
    for (int t = 0; t < r.samples; ++t)
      lead[t] = static_cast<float>((lead[t] - mean) / denom);
  }
  return out;
}

double record_distance(const DistanceMeasure& measure, const SignalRecord& a,
                       const SignalRecord& b) {
  if (measure.znormalize) {
    const SignalRecord za = znormalize_record(a);
    const SignalRecord zb = znormalize_record(b);
    return measure.kind == DistanceKind::euclidean
               ? euclidean_distance(za, zb)
               : dtw_distance(za, zb, measure.band_radius);
  }
  return measure.kind == DistanceKind::euclidean
             ? euclidean_distance(a, b)
             : dtw_distance(a, b, measure.band_radius);
}

PairwiseDistanceMatrix pairwise_matrix(std::span<const SignalRecord> records,
                                       const DistanceMeasure& measure,
                                       bool verify_symmetry) {
  PairwiseDistanceMatrix m;
  m.n = static_cast<int>(records.size());
  m.measure = measure;
  m.record_ids.reserve(records.size());
  for (const auto& r : records) m.record_ids.push_back(r.record_id);
  m.values.assign(static_cast<std::size_t>(m.n) * m.n, 0.0);

  std::vector<SignalRecord> normalized;
  std::span<const SignalRecord> view = records;
  if (measure.znormalize) {
    normalized.reserve(records.size());
    for (const auto& r : records) normalized.push_back(znormalize_record(r));
    view = normalized;
  }
  DistanceMeasure raw = measure;
  raw.znormalize = false;

  // Enumerate the upper triangle once; parallelize over rows (disjoint
  // outputs, so the result never depends on the worker count).
  parallel_for(m.n, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      for (int j = static_cast<int>(i) + 1; j < m.n; ++j) {
        const double d = record_distance(raw, view[i], view[j]);
        m.at(static_cast<int>(i), j) = d;
        m.at(j, static_cast<int>(i)) = d;
      }
    }
  });

  if (verify_symmetry) {
    for (int i = 0; i < m.n; ++i) {
      for (int j = i + 1; j < m.n; ++j) {
        const double swapped = record_distance(raw, view[j], view[i]);
        if (std::abs(swapped - m.at(i, j)) > 1e-9)
          throw DataError("distance asymmetry for records '" +
                          m.record_ids[i] + "' and '" + m.record_ids[j] +
                          "': " + std::to_string(m.at(i, j)) + " vs " +
                          std::to_string(swapped));
      }
    }
  }
  return m;
}

void dump_matrix(const PairwiseDistanceMatrix& matrix,
                 const std::filesystem::path& prefix) {
  nlohmann::json meta;
  meta["n"] = matrix.n;
  meta["record_ids"] = matrix.record_ids;
  meta["distance"] = distance_kind_to_string(matrix.measure.kind);
  meta["znormalize"] = matrix.measure.znormalize;
  if (matrix.measure.band_radius.has_value())
    meta["band_radius"] = *matrix.measure.band_radius;
  else
    meta["band_radius"] = nullptr;

  std::filesystem::path bin_path = prefix;
  bin_path += ".bin";
  std::filesystem::path json_path = prefix;
  json_path += ".json";
  if (prefix.has_parent_path())
    std::filesystem::create_directories(prefix.parent_path());

  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot open " + bin_path.string());
  std::vector<unsigned char> buf(matrix.values.size() * 4);
  for (std::size_t i = 0; i < matrix.values.size(); ++i) {
    const std::uint32_t u =
        std::bit_cast<std::uint32_t>(static_cast<float>(matrix.values[i]));
    buf[4 * i + 0] = static_cast<unsigned char>(u & 0xFF);
    buf[4 * i + 1] = static_cast<unsigned char>((u >> 8) & 0xFF);
    buf[4 * i + 2] = static_cast<unsigned char>((u >> 16) & 0xFF);
    buf[4 * i + 3] = static_cast<unsigned char>((u >> 24) & 0xFF);
  }
  bin.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  bin.close();
  if (!bin) throw DataError("write failed for " + bin_path.string());

  std::ofstream jf(json_path, std::ios::trunc);
  if (!jf) throw DataError("cannot open " + json_path.string());
  jf << meta.dump(2) << "\n";
  jf.close();
  if (!jf) throw DataError("write failed for " + json_path.string());
}

PairwiseDistanceMatrix load_matrix(const std::filesystem::path& prefix) {
  std::filesystem::path bin_path = prefix;
  bin_path += ".bin";
  std::filesystem::path json_path = prefix;
  json_path += ".json";

  std::ifstream jf(json_path);
  if (!jf) throw DataError("cannot open " + json_path.string());
  nlohmann::json meta;
  try {
    jf >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(json_path.string() + ": " + e.what());
  }

  PairwiseDistanceMatrix m;
  try {
    m.n = meta.at("n").get<int>();
    m.record_ids = meta.at("record_ids").get<std::vector<std::string>>();
    m.measure.kind = distance_kind_from_string(meta.at("distance").get<std::string>());
    m.measure.znormalize = meta.at("znormalize").get<bool>();
    if (!meta.at("band_radius").is_null())
      m.measure.band_radius = meta.at("band_radius").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(json_path.string() + ": " + e.what());
  }
  if (m.n < 0 || m.record_ids.size() != static_cast<std::size_t>(m.n))
    throw ParseError(json_path.string() + ": record_ids length != n");

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot open " + bin_path.string());
  const std::size_t count = static_cast<std::size_t>(m.n) * m.n;
  std::vector<unsigned char> buf(count * 4);
  bin.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!bin || bin.gcount() != static_cast<std::streamsize>(buf.size()))
    throw DataError(bin_path.string() + ": truncated matrix blob");
  m.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t u = static_cast<std::uint32_t>(buf[4 * i + 0]) |
                            (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                            (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                            (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
    m.values[i] = static_cast<double>(std::bit_cast<float>(u));
  }
  return m;
}

void quantize_matrix_f32(PairwiseDistanceMatrix& matrix) {
  for (double& v : matrix.values)
    v = static_cast<double>(static_cast<float>(v));
}

}  // namespace sigmetric
