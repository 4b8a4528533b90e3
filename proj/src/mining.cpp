#include "sigmetric/mining.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sigmetric/rng.hpp"

namespace sigmetric {

void TripletIndexBatch::validate(int batch_size) const {
  for (const Triple& t : triples) {
    if (t.anchor < 0 || t.anchor >= batch_size || t.positive < 0 ||
        t.positive >= batch_size || t.negative < 0 || t.negative >= batch_size)
      throw InternalError("triple index out of range");
    if (t.anchor == t.positive || t.anchor == t.negative ||
        t.positive == t.negative)
      throw InternalError("degenerate triple (repeated index)");
  }
}

std::string miner_kind_to_string(MinerKind k) {
  switch (k) {
    case MinerKind::random: return "random";
    case MinerKind::continuous_label: return "continuous_label";
    case MinerKind::semihard: return "semihard";
    case MinerKind::softhard: return "softhard";
    case MinerKind::distance_ranked: return "distance_ranked";
  }
  throw InternalError("unreachable miner kind");
}

MinerKind miner_kind_from_string(const std::string& s) {
  if (s == "random") return MinerKind::random;
  if (s == "continuous_label") return MinerKind::continuous_label;
  if (s == "semihard") return MinerKind::semihard;
  if (s == "softhard") return MinerKind::softhard;
  if (s == "distance_ranked") return MinerKind::distance_ranked;
  throw ParseError("unknown miner '" + s + "'");
}

namespace {

// Each anchor draws from its own derived stream, so results are independent
// of anchor evaluation order.
Rng anchor_rng(std::uint64_t seed, int anchor) {
  return Rng(derive_seed(seed, "anchor", static_cast<std::uint64_t>(anchor)));
}

MiningResult finish(TripletIndexBatch batch, int batch_size) {
  batch.validate(batch_size);
  MiningResult out;
  out.starved = batch.triples.empty();
  out.batch = std::move(batch);
  return out;
}

}  // namespace

MiningResult mine_random(const std::vector<int>& binary_labels,
                         std::uint64_t seed) {
  const int n = static_cast<int>(binary_labels.size());
  TripletIndexBatch batch;
  for (int a = 0; a < n; ++a) {
    std::vector<int> positives;
    std::vector<int> negatives;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      (binary_labels[i] == binary_labels[a] ? positives : negatives).push_back(i);
    }
    if (positives.empty() || negatives.empty()) continue;
    Rng rng = anchor_rng(seed, a);
    const int p = positives[rng.next_below(positives.size())];
    const int neg = negatives[rng.next_below(negatives.size())];
    batch.triples.push_back({a, p, neg});
  }
  return finish(std::move(batch), n);
}

MiningResult mine_continuous_label(const std::vector<double>& values,
                                   std::uint64_t seed) {
  const int n = static_cast<int>(values.size());
  if (n < 3) throw DataError("continuous-label mining needs a batch of >= 3");
  TripletIndexBatch batch;
  for (int a = 0; a < n; ++a) {
    double min_diff = std::numeric_limits<double>::infinity();
    double max_diff = -std::numeric_limits<double>::infinity();
    int positive = -1;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      const double diff = std::abs(values[i] - values[a]);
      if (diff < min_diff) {
        min_diff = diff;
        positive = i;
      }
      if (diff > max_diff) max_diff = diff;
    }
    // All differences equal: the argmax set is the argmin set, so any
    // negative would tie the positive rule.  Skip the anchor.
    if (max_diff == min_diff) continue;
    std::vector<int> argmax;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      if (std::abs(values[i] - values[a]) == max_diff) argmax.push_back(i);
    }
    Rng rng = anchor_rng(seed, a);
    const int neg = argmax[rng.next_below(argmax.size())];
    batch.triples.push_back({a, positive, neg});
  }
  return finish(std::move(batch), n);
}

MiningResult mine_semihard(const RowMatrix& embeddings,
                           const std::vector<int>& binary_labels,
                           std::uint64_t seed, std::optional<double> margin) {
  const int n = embeddings.rows;
  if (static_cast<int>(binary_labels.size()) != n)
    throw DimensionError("semihard mining: label count != embedding rows");
  TripletIndexBatch batch;
  for (int a = 0; a < n; ++a) {
    std::vector<int> positives;
    std::vector<int> negatives;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      (binary_labels[i] == binary_labels[a] ? positives : negatives).push_back(i);
    }
    if (positives.empty() || negatives.empty()) continue;
    Rng rng = anchor_rng(seed, a);
    const int p = positives[rng.next_below(positives.size())];
    const double d_ap = squared_row_distance(embeddings, a, p);
    std::vector<int> eligible;
    for (int neg : negatives) {
      const double d_an = squared_row_distance(embeddings, a, neg);
      if (d_an > d_ap && (!margin || d_an < d_ap + *margin))
        eligible.push_back(neg);
    }
    if (eligible.empty()) continue;
    batch.triples.push_back({a, p, eligible[rng.next_below(eligible.size())]});
  }
  return finish(std::move(batch), n);
}

MiningResult mine_softhard(const RowMatrix& embeddings,
                           const std::vector<int>& binary_labels,
                           std::uint64_t seed) {
  const int n = embeddings.rows;
  if (static_cast<int>(binary_labels.size()) != n)
    throw DimensionError("softhard mining: label count != embedding rows");
  TripletIndexBatch batch;
  for (int a = 0; a < n; ++a) {
    std::vector<int> positives;
    std::vector<int> negatives;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      (binary_labels[i] == binary_labels[a] ? positives : negatives).push_back(i);
    }
    if (positives.empty() || negatives.empty()) continue;
    double max_pos = 0.0;
    for (int p : positives)
      max_pos = std::max(max_pos, squared_row_distance(embeddings, a, p));
    double min_neg = squared_row_distance(embeddings, a, negatives.front());
    for (int neg : negatives)
      min_neg = std::min(min_neg, squared_row_distance(embeddings, a, neg));
    std::vector<int> eligible;
    for (int neg : negatives) {
      const double d_an = squared_row_distance(embeddings, a, neg);
      if (d_an < max_pos && d_an > min_neg) eligible.push_back(neg);
    }
    if (eligible.empty()) continue;
    Rng rng = anchor_rng(seed, a);
    const int p = positives[rng.next_below(positives.size())];
    batch.triples.push_back({a, p, eligible[rng.next_below(eligible.size())]});
  }
  return finish(std::move(batch), n);
}

MiningResult mine_distance_ranked(const PairwiseDistanceMatrix& dist,
                                  std::uint64_t seed) {
  const int n = dist.n;
  if (n < 3)
    throw ConfigError("distance-ranked mining needs a batch of >= 3, got " +
                      std::to_string(n));
  TripletIndexBatch batch;
  for (int a = 0; a < n; ++a) {
    int positive = -1;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      const double d = dist.at(a, i);
      if (positive == -1 || d < best) {
        best = d;
        positive = i;
      }
    }
    Rng rng = anchor_rng(seed, a);
    // Uniform over the n-2 indices that are neither the anchor nor the positive.
    std::size_t draw = rng.next_below(static_cast<std::size_t>(n) - 2);
    int neg = -1;
    for (int i = 0; i < n; ++i) {
      if (i == a || i == positive) continue;
      if (draw == 0) {
        neg = i;
        break;
      }
      --draw;
    }
    batch.triples.push_back({a, positive, neg});
  }
  return finish(std::move(batch), n);
}

MiningResult mine(const MinerSpec& spec, const RowMatrix* embeddings,
                  const std::vector<int>* binary_labels,
                  const std::vector<double>* values,
                  const PairwiseDistanceMatrix* dist, std::uint64_t step) {
  const std::uint64_t seed = derive_seed(spec.seed, "mine_step", step);
  switch (spec.kind) {
    case MinerKind::random:
      if (!binary_labels)
        throw ConfigError("random miner requires binary labels");
      return mine_random(*binary_labels, seed);
    case MinerKind::continuous_label:
      if (!values)
        throw ConfigError("continuous-label miner requires regression targets");
      return mine_continuous_label(*values, seed);
    case MinerKind::semihard:
      if (!embeddings || !binary_labels)
        throw ConfigError("semihard miner requires embeddings and labels");
      return mine_semihard(*embeddings, *binary_labels, seed,
                           spec.semihard_margin);
    case MinerKind::softhard:
      if (!embeddings || !binary_labels)
        throw ConfigError("softhard miner requires embeddings and labels");
      return mine_softhard(*embeddings, *binary_labels, seed);
    case MinerKind::distance_ranked:
      if (!dist)
        throw ConfigError("distance-ranked miner requires a distance matrix");
      return mine_distance_ranked(*dist, seed);
  }
  throw InternalError("unreachable miner kind");
}

}  // namespace sigmetric
