#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sigmetric/distance.hpp"
#include "sigmetric/matrix.hpp"

namespace sigmetric {

struct Triple {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
};

struct TripletIndexBatch {
  std::vector<Triple> triples;
  void validate(int batch_size) const;
};

enum class MinerKind { random, continuous_label, semihard, softhard, distance_ranked };

std::string miner_kind_to_string(MinerKind k);
MinerKind miner_kind_from_string(const std::string& s);

struct MinerSpec {
  MinerKind kind = MinerKind::random;
  DistanceMeasure measure;  // distance_ranked only
  std::uint64_t seed = 0;
  // Optional semihard upper bound: also require d²_an < d²_ap + margin.
  std::optional<double> semihard_margin;
};

// starved == true means the batch yielded no triples and the caller should
// resample the batch; it is never combined with a non-empty triple list.
struct MiningResult {
  TripletIndexBatch batch;
  bool starved = false;
};

// One triple per eligible anchor; positive uniform among same-label others,
// negative uniform among different-label samples.
MiningResult mine_random(const std::vector<int>& binary_labels,
                         std::uint64_t seed);

// Positive = argmin_{i != a} |y_i - y_a| (ties -> lowest index); negative
// uniform from the argmax set.  Anchors whose argmax set coincides with the
// argmin set (all differences equal) are skipped.
MiningResult mine_continuous_label(const std::vector<double>& values,
                                   std::uint64_t seed);

// Positive uniform among same-label; negative uniform among different-label
// samples with d²_ap < d²_an (and d²_an < d²_ap + margin when configured).
MiningResult mine_semihard(const RowMatrix& embeddings,
                           const std::vector<int>& binary_labels,
                           std::uint64_t seed,
                           std::optional<double> margin = std::nullopt);

// Positive uniform among same-label; eligible negatives satisfy both
// d²_an < max_p d²_ap and d²_an > min_{n'} d²_an' (strict).
MiningResult mine_softhard(const RowMatrix& embeddings,
                           const std::vector<int>& binary_labels,
                           std::uint64_t seed);

// Positive = argmin_{i != a} dist[a][i] (ties -> lowest index); negative
// uniform among the remaining indices.  Requires n >= 3.
MiningResult mine_distance_ranked(const PairwiseDistanceMatrix& dist,
                                  std::uint64_t seed);

// Dispatch on spec.kind.  Label-based kinds read binary_labels or values;
// embedding-based kinds read embeddings; distance_ranked reads dist.
MiningResult mine(const MinerSpec& spec, const RowMatrix* embeddings,
                  const std::vector<int>* binary_labels,
                  const std::vector<double>* values,
                  const PairwiseDistanceMatrix* dist, std::uint64_t step);

}  // namespace sigmetric
