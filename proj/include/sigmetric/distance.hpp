#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sigmetric/dataset.hpp"

namespace sigmetric {

enum class DistanceKind { euclidean, dtw };

std::string distance_kind_to_string(DistanceKind k);
DistanceKind distance_kind_from_string(const std::string& s);

struct DistanceMeasure {
  DistanceKind kind = DistanceKind::euclidean;
  // Sakoe-Chiba band half-width for DTW; empty means unconstrained.
  std::optional<int> band_radius;
  // Per-lead z-normalization applied before the distance.
  bool znormalize = false;
};

// Flattened Euclidean distance across all leads and samples.  Requires equal
// shapes.
double euclidean_distance(const SignalRecord& a, const SignalRecord& b);

// Dependent multivariate DTW: local cost is the unsquared L2 norm across all
// leads at a pair of time indices; the alignment is shared by every lead.
// Recurrence uses the three steps (i-1,j), (i,j-1), (i-1,j-1).  With a band,
// cells with |i-j| > band_radius are unreachable; the band must satisfy
// band_radius >= |Ta - Tb| so a path exists.
double dtw_distance(const SignalRecord& a, const SignalRecord& b,
                    std::optional<int> band_radius = std::nullopt);

// Applies the measure (including optional z-normalization) to one pair.
double record_distance(const DistanceMeasure& measure, const SignalRecord& a,
                       const SignalRecord& b);

SignalRecord znormalize_record(const SignalRecord& r);

struct PairwiseDistanceMatrix {
  int n = 0;
  DistanceMeasure measure;
  std::vector<std::string> record_ids;
  std::vector<double> values;  // row-major n x n

  double at(int i, int j) const {
    return values[static_cast<std::size_t>(i) * n + j];
  }
  double& at(int i, int j) {
    return values[static_cast<std::size_t>(i) * n + j];
  }
};

// Computes the full symmetric matrix; each unordered pair is evaluated once
// and mirrored.  With verify_symmetry, both orientations are computed and
// compared (|d_ij - d_ji| <= 1e-9); disagreement raises DataError.
PairwiseDistanceMatrix pairwise_matrix(std::span<const SignalRecord> records,
                                       const DistanceMeasure& measure,
                                       bool verify_symmetry = false);

// Binary matrix cache: <prefix>.bin holds n*n little-endian float32 values
// (row-major); <prefix>.json names the records in row order plus the measure.
void dump_matrix(const PairwiseDistanceMatrix& matrix,
                 const std::filesystem::path& prefix);
PairwiseDistanceMatrix load_matrix(const std::filesystem::path& prefix);

// Quantizes every entry through float32.  Mining consumes quantized values in
// all paths, so cached and freshly computed matrices mine identically.
void quantize_matrix_f32(PairwiseDistanceMatrix& matrix);

}  // namespace sigmetric
