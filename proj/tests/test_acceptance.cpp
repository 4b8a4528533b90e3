#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigmetric/cli.hpp"
#include "sigmetric/dataset.hpp"
#include "sigmetric/dataset_io.hpp"
#include "sigmetric/distance.hpp"
#include "sigmetric/evaluate.hpp"
#include "sigmetric/metrics.hpp"
#include "sigmetric/mining.hpp"
#include "sigmetric/model_io.hpp"
#include "sigmetric/objectives.hpp"
#include "sigmetric/rng.hpp"
#include "sigmetric/tape.hpp"
#include "sigmetric/train.hpp"

using namespace sigmetric;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Accumulates sub-checks for one acceptance criterion and prints a single
// machine-readable verdict line.  Failures keep the first few messages so a
// red run explains itself.
struct Criterion {
  std::string id;
  std::string name;
  bool ok = true;
  std::vector<std::string> messages;

  Criterion(std::string i, std::string n) : id(std::move(i)), name(std::move(n)) {}

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    if (messages.size() < 8) messages.push_back(what);
  }

  void finish() {
    std::printf("criterion %s %s: %s\n", id.c_str(), name.c_str(),
                ok ? "PASS" : "FAIL");
    std::fflush(stdout);
    std::string detail;
    for (const std::string& m : messages) detail += "\n  " + m;
    CHECK_MESSAGE(ok, "criterion " << id << " (" << name << ")" << detail);
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

SignalRecord make_record(const std::string& id, int leads,
                         const std::vector<float>& data, int rate = 10) {
  SignalRecord r;
  r.record_id = id;
  r.patient_id = "p_" + id;
  r.leads = leads;
  r.samples = static_cast<int>(data.size()) / leads;
  r.sample_rate_hz = rate;
  r.data = data;
  return r;
}

SignalRecord random_record(Rng& rng, int leads, int samples) {
  std::vector<float> data(static_cast<std::size_t>(leads) * samples);
  for (float& v : data) v = static_cast<float>(rng.next_normal());
  return make_record("r", leads, data);
}

// Full-table DP oracle for the alignment distance: local cost is the
// unsquared L2 norm across leads, steps (i-1,j), (i,j-1), (i-1,j-1).
double dtw_full_table(const SignalRecord& a, const SignalRecord& b) {
  const int ta = a.samples;
  const int tb = b.samples;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> dp(
      static_cast<std::size_t>(ta) + 1,
      std::vector<double>(static_cast<std::size_t>(tb) + 1, inf));
  dp[0][0] = 0.0;
  for (int i = 1; i <= ta; ++i)
    for (int j = 1; j <= tb; ++j) {
      const double best =
          std::min(dp[i - 1][j], std::min(dp[i][j - 1], dp[i - 1][j - 1]));
      if (best == inf) continue;
      double cost = 0.0;
      for (int l = 0; l < a.leads; ++l) {
        const double d = static_cast<double>(a.at(l, i - 1)) - b.at(l, j - 1);
        cost += d * d;
      }
      dp[i][j] = std::sqrt(cost) + best;
    }
  return dp[ta][tb];
}

// --- finite-difference harness over tape graphs -----------------------------

using DNode = Tape<double>::Node;
using Builder = std::function<DNode*(Tape<double>&, std::vector<DNode*>&)>;

std::vector<double> output_weights(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(n);
  for (double& v : w) v = rng.next_normal();
  return w;
}

double weighted_output(const Builder& build,
                       const std::vector<Tensor<double>>& inputs,
                       std::uint64_t weight_seed) {
  Tape<double> tape;
  std::vector<DNode*> nodes;
  for (const Tensor<double>& t : inputs) nodes.push_back(tape.input(t));
  DNode* out = build(tape, nodes);
  const std::vector<double> w = output_weights(out->value.numel(), weight_seed);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * out->value.values[i];
  return s;
}

double guarded_rel_error(double analytic, double fd) {
  return std::abs(analytic - fd) /
         std::max({1.0, std::abs(analytic), std::abs(fd)});
}

// Max guarded relative error between tape gradients and central finite
// differences of f = sum(w .* output) over every input coordinate.
double fd_max_rel_error(const Builder& build, std::vector<Tensor<double>> inputs,
                        std::uint64_t weight_seed, double eps = 1e-5) {
  Tape<double> tape;
  std::vector<DNode*> nodes;
  for (const Tensor<double>& t : inputs) nodes.push_back(tape.input(t));
  DNode* out = build(tape, nodes);
  const std::vector<double> w = output_weights(out->value.numel(), weight_seed);
  for (std::size_t i = 0; i < w.size(); ++i) out->grad.values[i] = w[i];
  tape.run_backward();

  double worst = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    for (std::size_t i = 0; i < inputs[which].values.size(); ++i) {
      std::vector<Tensor<double>> plus = inputs, minus = inputs;
      plus[which].values[i] += eps;
      minus[which].values[i] -= eps;
      const double fd = (weighted_output(build, plus, weight_seed) -
                         weighted_output(build, minus, weight_seed)) /
                        (2.0 * eps);
      worst = std::max(worst, guarded_rel_error(nodes[which]->grad.values[i], fd));
    }
  }
  return worst;
}

Tensor<double> random_tensor(Rng& rng, std::vector<int> shape) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.values) v = rng.next_normal();
  return t;
}

// Max guarded relative error between a loss's embedding gradient and central
// finite differences of the scalar loss.
double loss_fd_max_rel_error(
    const std::function<double(const Tensor<double>&)>& loss_value,
    const Tensor<double>& emb, const Tensor<double>& analytic_grad,
    double eps = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < emb.values.size(); ++i) {
    Tensor<double> plus = emb, minus = emb;
    plus.values[i] += eps;
    minus.values[i] -= eps;
    const double fd = (loss_value(plus) - loss_value(minus)) / (2.0 * eps);
    worst = std::max(worst, guarded_rel_error(analytic_grad.values[i], fd));
  }
  return worst;
}

TripletIndexBatch random_triples(Rng& rng, int n, int count) {
  TripletIndexBatch batch;
  while (static_cast<int>(batch.triples.size()) < count) {
    const int a = static_cast<int>(rng.next_below(static_cast<std::size_t>(n)));
    const int p = static_cast<int>(rng.next_below(static_cast<std::size_t>(n)));
    const int g = static_cast<int>(rng.next_below(static_cast<std::size_t>(n)));
    if (a == p || a == g || p == g) continue;
    batch.triples.push_back({a, p, g});
  }
  return batch;
}

// --- exact metric oracles ----------------------------------------------------

// Pairwise enumeration: (#{s_pos > s_neg} + 0.5 * ties) / (n_pos * n_neg).
double auc_exhaustive(const std::vector<double>& s, const std::vector<int>& l) {
  double num = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[i] != 1 || l[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j])
        num += 1.0;
      else if (s[i] == s[j])
        num += 0.5;
    }
  return num / pairs;
}

// Threshold walk over descending distinct scores accumulating
// (R_n - R_{n-1}) * P_n, with ties grouped at one threshold.
double apr_exhaustive(const std::vector<double>& s, const std::vector<int>& l) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  std::size_t n_pos = 0;
  for (int v : l) n_pos += static_cast<std::size_t>(v);
  double ap = 0.0;
  double recall_prev = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) {
        ++seen;
        tp += static_cast<std::size_t>(l[i]);
      }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
  }
  return ap;
}

// Brute-force k nearest rows (self excluded), squared Euclidean, distance
// ties broken by lower index.
std::vector<int> brute_k_nearest(const RowMatrix& emb, int anchor, int k) {
  std::vector<std::pair<double, int>> d;
  for (int j = 0; j < emb.rows; ++j) {
    if (j == anchor) continue;
    d.emplace_back(squared_row_distance(emb, anchor, j), j);
  }
  std::sort(d.begin(), d.end());
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(d[static_cast<std::size_t>(i)].second);
  return out;
}

double brute_recall_at_k(const RowMatrix& emb, const std::vector<int>& labels,
                         int k) {
  int hits = 0;
  for (int a = 0; a < emb.rows; ++a)
    for (int j : brute_k_nearest(emb, a, k))
      if (labels[j] == labels[a]) {
        ++hits;
        break;
      }
  return static_cast<double>(hits) / static_cast<double>(emb.rows);
}

double brute_same_group_proportion(const RowMatrix& emb,
                                   const std::vector<int>& flags, int k,
                                   int target) {
  double sum = 0.0;
  int anchors = 0;
  for (int a = 0; a < emb.rows; ++a) {
    if (flags[a] != target) continue;
    int same = 0;
    for (int j : brute_k_nearest(emb, a, k))
      if (flags[j] == target) ++same;
    sum += static_cast<double>(same) / static_cast<double>(k);
    ++anchors;
  }
  return sum / static_cast<double>(anchors);
}

// --- CLI workspace -----------------------------------------------------------

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() /
           ("sigmetric_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

std::optional<std::string> slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in.good()) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> bytes for every regular file under root, minus excluded
// file names.
std::map<std::string, std::string> dir_snapshot(
    const fs::path& root, const std::set<std::string>& exclude = {}) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (exclude.count(e.path().filename().string())) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    out[rel] = slurp(e.path()).value_or("");
  }
  return out;
}

void expect_same_tree(Criterion& c, const fs::path& a, const fs::path& b,
                      const std::set<std::string>& exclude,
                      const std::string& what) {
  const auto sa = dir_snapshot(a, exclude);
  const auto sb = dir_snapshot(b, exclude);
  c.expect(!sa.empty(), what + ": first run produced no files");
  std::set<std::string> names;
  for (const auto& [k, v] : sa) names.insert(k);
  for (const auto& [k, v] : sb) names.insert(k);
  for (const std::string& n : names) {
    const auto ia = sa.find(n);
    const auto ib = sb.find(n);
    if (ia == sa.end() || ib == sb.end()) {
      c.expect(false, what + ": file " + n + " missing from one run");
      continue;
    }
    c.expect(ia->second == ib->second, what + ": file " + n + " differs");
  }
}

}  // namespace

// -----------------------------------------------------------------------------

TEST_CASE("warping distance equals the full-table oracle") {
  Criterion c("01", "warping distance matches full-table dp oracle");
  const auto t0 = Clock::now();
  try {
    // Hand case: [0,1,2] aligned to [0,2] costs exactly 1.
    const SignalRecord a3 = make_record("a", 1, {0.0f, 1.0f, 2.0f});
    const SignalRecord b2 = make_record("b", 1, {0.0f, 2.0f});
    c.expect(dtw_distance(a3, b2) == 1.0, "hand case [0,1,2] vs [0,2] != 1");

    Rng rng(4101);
    for (int pair = 0; pair < 500; ++pair) {
      const int leads = 1 + static_cast<int>(rng.next_below(4));
      const int ta = 1 + static_cast<int>(rng.next_below(32));
      const int tb = 1 + static_cast<int>(rng.next_below(32));
      Rng ra(derive_seed(11, "pair_a", static_cast<std::uint64_t>(pair)));
      Rng rb(derive_seed(11, "pair_b", static_cast<std::uint64_t>(pair)));
      const SignalRecord a = random_record(ra, leads, ta);
      const SignalRecord b = random_record(rb, leads, tb);
      const double fast = dtw_distance(a, b);
      const double slow = dtw_full_table(a, b);
      c.expect(fast == slow, "pair " + std::to_string(pair) + ": rolling " +
                                 std::to_string(fast) + " != full table " +
                                 std::to_string(slow));
    }
    c.expect(seconds_since(t0) < 5.0, "runtime exceeded 5 s");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("warping band widening is consistent and converges to the unbanded distance") {
  Criterion c("02", "warping band consistency");
  try {
    Rng rng(4202);
    for (int pair = 0; pair < 100; ++pair) {
      const int leads = 1 + static_cast<int>(rng.next_below(3));
      const int ta = 2 + static_cast<int>(rng.next_below(24));
      const int tb = 2 + static_cast<int>(rng.next_below(24));
      Rng ra(derive_seed(22, "pair_a", static_cast<std::uint64_t>(pair)));
      Rng rb(derive_seed(22, "pair_b", static_cast<std::uint64_t>(pair)));
      const SignalRecord a = random_record(ra, leads, ta);
      const SignalRecord b = random_record(rb, leads, tb);

      const double unbanded = dtw_distance(a, b);
      const int max_len = std::max(ta, tb);
      c.expect(dtw_distance(a, b, max_len) == unbanded,
               "pair " + std::to_string(pair) +
                   ": band >= max length is not bitwise equal to full");

      double prev = std::numeric_limits<double>::infinity();
      for (int r = std::abs(ta - tb); r <= max_len; ++r) {
        const double banded = dtw_distance(a, b, r);
        c.expect(banded <= prev, "pair " + std::to_string(pair) + ": radius " +
                                     std::to_string(r) +
                                     " increased the distance");
        prev = banded;
      }
      c.expect(prev == unbanded,
               "pair " + std::to_string(pair) +
                   ": widest band did not converge to the unbanded value");
    }
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("every differentiable op and loss passes central finite differences") {
  Criterion c("03", "gradient finite-difference suite");
  const auto t0 = Clock::now();
  const double tol = 1e-3;  // guarded relative error bound
  const int instances = 50;
  try {
    // One entry per primitive op; shapes vary with the instance counter.
    struct OpCase {
      std::string name;
      std::function<double(Rng&, int)> run;  // returns max rel error
    };
    std::vector<OpCase> ops;

    ops.push_back({"conv1d", [](Rng& rng, int inst) {
      const int batch = 1 + static_cast<int>(rng.next_below(3));
      const int cin = 1 + static_cast<int>(rng.next_below(3));
      const int cout = 1 + static_cast<int>(rng.next_below(3));
      const int t = 3 + static_cast<int>(rng.next_below(6));
      const int k = 1 + 2 * static_cast<int>(rng.next_below(3));
      const int stride = 1 + inst % 2;
      Builder build = [stride](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.conv1d(in[0], in[1], in[2], stride);
      };
      return fd_max_rel_error(build,
                              {random_tensor(rng, {batch, cin, t}),
                               random_tensor(rng, {cout, cin, k}),
                               random_tensor(rng, {cout})},
                              derive_seed(31, "w", inst));
    }});

    ops.push_back({"affine", [](Rng& rng, int inst) {
      const int batch = 1 + static_cast<int>(rng.next_below(4));
      const int din = 1 + static_cast<int>(rng.next_below(5));
      const int dout = 1 + static_cast<int>(rng.next_below(5));
      Builder build = [](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.affine(in[0], in[1], in[2]);
      };
      return fd_max_rel_error(build,
                              {random_tensor(rng, {batch, din}),
                               random_tensor(rng, {din, dout}),
                               random_tensor(rng, {dout})},
                              derive_seed(32, "w", inst));
    }});

    ops.push_back({"batchnorm", [](Rng& rng, int inst) {
      const int batch = 2 + static_cast<int>(rng.next_below(3));
      const int ch = 1 + static_cast<int>(rng.next_below(3));
      const bool rank3 = inst % 3 != 2;
      const int t = rank3 ? 2 + static_cast<int>(rng.next_below(4)) : 1;
      const Mode mode = inst % 2 == 0 ? Mode::train : Mode::eval;
      Builder build = [mode, ch](Tape<double>& tape, std::vector<DNode*>& in) {
        Param<double> mean("m", Tensor<double>({ch}));
        Param<double> var("v", Tensor<double>({ch}));
        for (int i = 0; i < ch; ++i) {
          mean.value.values[static_cast<std::size_t>(i)] = 0.3 * (i + 1);
          var.value.values[static_cast<std::size_t>(i)] = 1.0 + 0.2 * i;
        }
        return tape.batchnorm(in[0], in[1], in[2], mean, var, mode);
      };
      std::vector<int> shape =
          rank3 ? std::vector<int>{batch, ch, t} : std::vector<int>{batch, ch};
      return fd_max_rel_error(build,
                              {random_tensor(rng, shape),
                               random_tensor(rng, {ch}),
                               random_tensor(rng, {ch})},
                              derive_seed(33, "w", inst));
    }});

    ops.push_back({"relu", [](Rng& rng, int inst) {
      const int n = 2 + static_cast<int>(rng.next_below(10));
      Tensor<double> x = random_tensor(rng, {n});
      // Keep coordinates away from the kink so central differences are valid.
      for (double& v : x.values)
        if (std::abs(v) < 0.05) v += v >= 0 ? 0.1 : -0.1;
      Builder build = [](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.relu(in[0]);
      };
      return fd_max_rel_error(build, {x}, derive_seed(34, "w", inst));
    }});

    ops.push_back({"add", [](Rng& rng, int inst) {
      const int n = 1 + static_cast<int>(rng.next_below(8));
      Builder build = [](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.add(in[0], in[1]);
      };
      return fd_max_rel_error(build,
                              {random_tensor(rng, {n}), random_tensor(rng, {n})},
                              derive_seed(35, "w", inst));
    }});

    ops.push_back({"avg_pool_stride", [](Rng& rng, int inst) {
      const int batch = 1 + static_cast<int>(rng.next_below(2));
      const int ch = 1 + static_cast<int>(rng.next_below(3));
      const int t = 3 + static_cast<int>(rng.next_below(8));
      const int stride = 2 + inst % 2;
      Builder build = [stride](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.avg_pool_stride(in[0], stride);
      };
      return fd_max_rel_error(build, {random_tensor(rng, {batch, ch, t})},
                              derive_seed(36, "w", inst));
    }});

    ops.push_back({"channel_pad", [](Rng& rng, int inst) {
      const int batch = 1 + static_cast<int>(rng.next_below(2));
      const int ch = 1 + static_cast<int>(rng.next_below(3));
      const int t = 2 + static_cast<int>(rng.next_below(5));
      const int new_ch = ch + 1 + inst % 2;
      Builder build = [new_ch](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.channel_pad(in[0], new_ch);
      };
      return fd_max_rel_error(build, {random_tensor(rng, {batch, ch, t})},
                              derive_seed(37, "w", inst));
    }});

    ops.push_back({"global_avg_pool", [](Rng& rng, int inst) {
      const int batch = 1 + static_cast<int>(rng.next_below(3));
      const int ch = 1 + static_cast<int>(rng.next_below(3));
      const int t = 1 + static_cast<int>(rng.next_below(7));
      Builder build = [](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.global_avg_pool(in[0]);
      };
      return fd_max_rel_error(build, {random_tensor(rng, {batch, ch, t})},
                              derive_seed(38, "w", inst));
    }});

    ops.push_back({"dropout", [](Rng& rng, int inst) {
      const int n = 4 + static_cast<int>(rng.next_below(8));
      const std::uint64_t mask_seed = derive_seed(39, "mask", inst);
      // The mask is a pure function of (seed, step), so finite differences see
      // a fixed linear map.
      Builder build = [mask_seed](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.dropout(in[0], 0.3, Mode::train, mask_seed, 7);
      };
      return fd_max_rel_error(build, {random_tensor(rng, {n})},
                              derive_seed(39, "w", inst));
    }});

    ops.push_back({"sigmoid", [](Rng& rng, int inst) {
      const int n = 1 + static_cast<int>(rng.next_below(9));
      Builder build = [](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.sigmoid(in[0]);
      };
      return fd_max_rel_error(build, {random_tensor(rng, {n})},
                              derive_seed(40, "w", inst));
    }});

    ops.push_back({"sum", [](Rng& rng, int inst) {
      const int n = 1 + static_cast<int>(rng.next_below(9));
      Builder build = [](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.sum(in[0]);
      };
      return fd_max_rel_error(build, {random_tensor(rng, {n})},
                              derive_seed(41, "w", inst));
    }});

    ops.push_back({"mean", [](Rng& rng, int inst) {
      const int n = 1 + static_cast<int>(rng.next_below(9));
      Builder build = [](Tape<double>& tape, std::vector<DNode*>& in) {
        return tape.mean(in[0]);
      };
      return fd_max_rel_error(build, {random_tensor(rng, {n})},
                              derive_seed(42, "w", inst));
    }});

    for (const OpCase& op : ops) {
      double worst = 0.0;
      Rng rng(derive_seed(43, op.name, 0));
      for (int inst = 0; inst < instances; ++inst)
        worst = std::max(worst, op.run(rng, inst));
      c.expect(worst < tol,
               "op " + op.name + ": worst relative error " + std::to_string(worst));
    }

    // Losses: gradient with respect to the embedding rows (and the learnable
    // boundary for the margin loss).
    struct LossCase {
      std::string name;
      std::function<double(Rng&, int)> run;
    };
    std::vector<LossCase> losses;

    auto fresh_batch = [](Rng& rng, Tensor<double>& emb, TripletIndexBatch& tb) {
      const int n = 5 + static_cast<int>(rng.next_below(5));
      emb = random_tensor(rng, {n, 3 + static_cast<int>(rng.next_below(3))});
      tb = random_triples(rng, n, 3 + static_cast<int>(rng.next_below(5)));
    };

    losses.push_back({"triplet_hinge", [&fresh_batch](Rng& rng, int) {
      Tensor<double> emb;
      TripletIndexBatch tb;
      const double gamma = 0.2;
      // Redraw batches that sit within finite-difference reach of the hinge.
      for (int attempt = 0; attempt < 50; ++attempt) {
        fresh_batch(rng, emb, tb);
        bool clear = true;
        for (const Triple& t : tb.triples) {
          const double d_ap = detail::row_distance(emb, t.anchor, t.positive);
          const double d_an = detail::row_distance(emb, t.anchor, t.negative);
          if (std::abs(d_ap - d_an + gamma) < 1e-4) clear = false;
        }
        if (clear) break;
      }
      auto out = triplet_loss(emb, tb, TripletVariant::hinge, gamma);
      return loss_fd_max_rel_error(
          [&](const Tensor<double>& e) {
            return static_cast<double>(
                triplet_loss(e, tb, TripletVariant::hinge, gamma).value);
          },
          emb, out.emb_grad);
    }});

    losses.push_back({"triplet_raw", [&fresh_batch](Rng& rng, int) {
      Tensor<double> emb;
      TripletIndexBatch tb;
      fresh_batch(rng, emb, tb);
      auto out = triplet_loss(emb, tb, TripletVariant::raw, 0.2);
      return loss_fd_max_rel_error(
          [&](const Tensor<double>& e) {
            return static_cast<double>(
                triplet_loss(e, tb, TripletVariant::raw, 0.2).value);
          },
          emb, out.emb_grad);
    }});

    losses.push_back({"margin", [&fresh_batch](Rng& rng, int inst) {
      Tensor<double> emb;
      TripletIndexBatch tb;
      const bool literal = inst % 2 == 1;
      const double gamma = 0.2;
      LearnableBoundary boundary;
      boundary.beta = 1.1;
      std::vector<LabeledPair> pairs;
      for (int attempt = 0; attempt < 50; ++attempt) {
        fresh_batch(rng, emb, tb);
        pairs = pairs_from_triples(tb);
        bool clear = true;
        for (const LabeledPair& p : pairs) {
          const double d = detail::row_distance(emb, p.i, p.j);
          const double h = gamma + (p.same ? 1.0 : -1.0) * (d - boundary.beta);
          if (!literal && std::abs(h) < 1e-4) clear = false;
        }
        if (clear) break;
      }
      auto out = margin_loss(emb, pairs, boundary, gamma, literal);
      double worst = loss_fd_max_rel_error(
          [&](const Tensor<double>& e) {
            return static_cast<double>(
                margin_loss(e, pairs, boundary, gamma, literal).value);
          },
          emb, out.emb_grad);
      // Boundary derivative by central differences on beta.
      const double eps = 1e-6;
      LearnableBoundary up = boundary, dn = boundary;
      up.beta += eps;
      dn.beta -= eps;
      const double fd_beta =
          (static_cast<double>(margin_loss(emb, pairs, up, gamma, literal).value) -
           static_cast<double>(margin_loss(emb, pairs, dn, gamma, literal).value)) /
          (2.0 * eps);
      worst = std::max(worst, guarded_rel_error(out.beta_grad, fd_beta));
      return worst;
    }});

    losses.push_back({"angular", [&fresh_batch](Rng& rng, int) {
      Tensor<double> emb;
      TripletIndexBatch tb;
      fresh_batch(rng, emb, tb);
      auto out = angular_loss(emb, tb, kObjectivePi / 4.0, 2.0, 0.005);
      return loss_fd_max_rel_error(
          [&](const Tensor<double>& e) {
            return static_cast<double>(
                angular_loss(e, tb, kObjectivePi / 4.0, 2.0, 0.005).value);
          },
          emb, out.emb_grad);
    }});

    losses.push_back({"npair", [&fresh_batch](Rng& rng, int) {
      Tensor<double> emb;
      TripletIndexBatch tb;
      fresh_batch(rng, emb, tb);
      auto out = npair_loss(emb, tb, 0.005);
      return loss_fd_max_rel_error(
          [&](const Tensor<double>& e) {
            return static_cast<double>(npair_loss(e, tb, 0.005).value);
          },
          emb, out.emb_grad);
    }});

    losses.push_back({"cross_entropy", [](Rng& rng, int) {
      const int n = 3 + static_cast<int>(rng.next_below(8));
      std::vector<double> probs(static_cast<std::size_t>(n));
      std::vector<int> labels(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        probs[static_cast<std::size_t>(i)] = 0.06 + 0.88 * rng.next_unit();
        labels[static_cast<std::size_t>(i)] =
            static_cast<int>(rng.next_below(2));
      }
      auto out = cross_entropy(probs, labels);
      double worst = 0.0;
      const double eps = 1e-6;
      for (int i = 0; i < n; ++i) {
        std::vector<double> up = probs, dn = probs;
        up[static_cast<std::size_t>(i)] += eps;
        dn[static_cast<std::size_t>(i)] -= eps;
        const double fd = (static_cast<double>(cross_entropy(up, labels).value) -
                           static_cast<double>(cross_entropy(dn, labels).value)) /
                          (2.0 * eps);
        worst = std::max(
            worst, guarded_rel_error(out.grad[static_cast<std::size_t>(i)], fd));
      }
      return worst;
    }});

    losses.push_back({"rmse", [](Rng& rng, int) {
      const int n = 2 + static_cast<int>(rng.next_below(8));
      std::vector<double> preds(static_cast<std::size_t>(n));
      std::vector<double> targets(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        preds[static_cast<std::size_t>(i)] = rng.next_normal();
        targets[static_cast<std::size_t>(i)] = rng.next_normal();
      }
      auto out = rmse_loss(preds, targets);
      double worst = 0.0;
      const double eps = 1e-6;
      for (int i = 0; i < n; ++i) {
        std::vector<double> up = preds, dn = preds;
        up[static_cast<std::size_t>(i)] += eps;
        dn[static_cast<std::size_t>(i)] -= eps;
        const double fd =
            (static_cast<double>(rmse_loss(up, targets).value) -
             static_cast<double>(rmse_loss(dn, targets).value)) /
            (2.0 * eps);
        worst = std::max(
            worst, guarded_rel_error(out.grad[static_cast<std::size_t>(i)], fd));
      }
      return worst;
    }});

    for (const LossCase& loss : losses) {
      double worst = 0.0;
      Rng rng(derive_seed(44, loss.name, 0));
      for (int inst = 0; inst < instances; ++inst)
        worst = std::max(worst, loss.run(rng, inst));
      c.expect(worst < tol, "loss " + loss.name + ": worst relative error " +
                                std::to_string(worst));
    }

    c.expect(seconds_since(t0) < 60.0, "runtime exceeded 60 s");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("miners satisfy their selection rules on random batches") {
  Criterion c("04", "miner property suite");
  try {
    const int batches = 1000;
    long triples_random = 0, triples_cont = 0, triples_semi = 0,
         triples_soft = 0, triples_ranked = 0;

    for (int b = 0; b < batches; ++b) {
      Rng rng(derive_seed(54, "batch", static_cast<std::uint64_t>(b)));
      const int n = 4 + static_cast<int>(rng.next_below(21));
      RowMatrix emb(n, 4);
      for (double& v : emb.values) v = rng.next_normal();
      std::vector<int> labels(static_cast<std::size_t>(n));
      for (int& l : labels) l = static_cast<int>(rng.next_below(2));
      std::vector<double> values(static_cast<std::size_t>(n));
      for (double& v : values) v = rng.next_normal();
      const std::uint64_t seed = derive_seed(54, "mine", b);

      auto check_degenerate = [&](const Triple& t, const char* miner) {
        c.expect(t.anchor != t.positive && t.anchor != t.negative &&
                     t.positive != t.negative,
                 std::string(miner) + ": degenerate triple in batch " +
                     std::to_string(b));
      };

      {
        MiningResult r = mine_random(labels, seed);
        triples_random += static_cast<long>(r.batch.triples.size());
        for (const Triple& t : r.batch.triples) {
          check_degenerate(t, "random");
          c.expect(labels[static_cast<std::size_t>(t.positive)] ==
                       labels[static_cast<std::size_t>(t.anchor)],
                   "random: positive label mismatch");
          c.expect(labels[static_cast<std::size_t>(t.negative)] !=
                       labels[static_cast<std::size_t>(t.anchor)],
                   "random: negative label match");
        }
      }

      {
        MiningResult r = mine_continuous_label(values, seed);
        triples_cont += static_cast<long>(r.batch.triples.size());
        for (const Triple& t : r.batch.triples) {
          check_degenerate(t, "continuous");
          // Exhaustive argmin / argmax of |y_i - y_a|, ties to lowest index.
          int argmin = -1;
          double best = 0.0, worst = -1.0;
          for (int i = 0; i < n; ++i) {
            if (i == t.anchor) continue;
            const double d = std::abs(values[static_cast<std::size_t>(i)] -
                                      values[static_cast<std::size_t>(t.anchor)]);
            if (argmin == -1 || d < best) {
              best = d;
              argmin = i;
            }
            worst = std::max(worst, d);
          }
          c.expect(t.positive == argmin,
                   "continuous: positive is not the exhaustive argmin");
          const double dn = std::abs(values[static_cast<std::size_t>(t.negative)] -
                                     values[static_cast<std::size_t>(t.anchor)]);
          c.expect(dn == worst, "continuous: negative not in the argmax set");
        }
      }

      {
        const std::optional<double> margin =
            b % 2 == 1 ? std::optional<double>(1.0) : std::nullopt;
        MiningResult r = mine_semihard(emb, labels, seed, margin);
        triples_semi += static_cast<long>(r.batch.triples.size());
        for (const Triple& t : r.batch.triples) {
          check_degenerate(t, "semihard");
          c.expect(labels[static_cast<std::size_t>(t.positive)] ==
                       labels[static_cast<std::size_t>(t.anchor)],
                   "semihard: positive label mismatch");
          c.expect(labels[static_cast<std::size_t>(t.negative)] !=
                       labels[static_cast<std::size_t>(t.anchor)],
                   "semihard: negative label match");
          const double d_ap = squared_row_distance(emb, t.anchor, t.positive);
          const double d_an = squared_row_distance(emb, t.anchor, t.negative);
          c.expect(d_ap < d_an, "semihard: d2_ap >= d2_an");
          if (margin)
            c.expect(d_an < d_ap + *margin, "semihard: margin bound violated");
        }
      }

      {
        MiningResult r = mine_softhard(emb, labels, seed);
        triples_soft += static_cast<long>(r.batch.triples.size());
        for (const Triple& t : r.batch.triples) {
          check_degenerate(t, "softhard");
          double max_pos = 0.0;
          double min_neg = std::numeric_limits<double>::infinity();
          for (int i = 0; i < n; ++i) {
            if (i == t.anchor) continue;
            const double d = squared_row_distance(emb, t.anchor, i);
            if (labels[static_cast<std::size_t>(i)] ==
                labels[static_cast<std::size_t>(t.anchor)])
              max_pos = std::max(max_pos, d);
            else
              min_neg = std::min(min_neg, d);
          }
          const double d_an = squared_row_distance(emb, t.anchor, t.negative);
          c.expect(d_an < max_pos, "softhard: d2_an >= max positive distance");
          c.expect(d_an > min_neg, "softhard: d2_an <= min negative distance");
        }
      }

      {
        PairwiseDistanceMatrix dist;
        dist.n = n;
        dist.values.assign(static_cast<std::size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) {
          dist.record_ids.push_back("r" + std::to_string(i));
          for (int j = i + 1; j < n; ++j) {
            const double d = std::abs(rng.next_normal()) + 0.01;
            dist.at(i, j) = d;
            dist.at(j, i) = d;
          }
        }
        MiningResult r = mine_distance_ranked(dist, seed);
        triples_ranked += static_cast<long>(r.batch.triples.size());
        for (const Triple& t : r.batch.triples) {
          check_degenerate(t, "distance_ranked");
          int argmin = -1;
          double best = 0.0;
          for (int i = 0; i < n; ++i) {
            if (i == t.anchor) continue;
            const double d = dist.at(t.anchor, i);
            if (argmin == -1 || d < best) {
              best = d;
              argmin = i;
            }
          }
          c.expect(t.positive == argmin,
                   "distance_ranked: positive is not the row argmin");
        }
      }
    }

    c.expect(triples_random > 1000, "random miner produced too few triples");
    c.expect(triples_cont > 1000, "continuous miner produced too few triples");
    c.expect(triples_semi > 1000, "semihard miner produced too few triples");
    c.expect(triples_soft > 1000, "softhard miner produced too few triples");
    c.expect(triples_ranked > 1000, "ranked miner produced too few triples");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("ranking metrics equal exhaustive oracles and the rank test hand value") {
  Criterion c("05", "metric oracle suite");
  try {
    Rng rng(4505);
    int auc_checked = 0, apr_checked = 0;
    for (int inst = 0; inst < 1000; ++inst) {
      const int n = 2 + static_cast<int>(rng.next_below(19));
      std::vector<double> s(static_cast<std::size_t>(n));
      std::vector<int> l(static_cast<std::size_t>(n));
      // Alternate a coarse grid (forces ties) with continuous scores.
      const bool grid = inst % 2 == 0;
      bool has0 = false, has1 = false;
      for (int i = 0; i < n; ++i) {
        s[static_cast<std::size_t>(i)] =
            grid ? static_cast<double>(rng.next_below(8)) / 8.0
                 : rng.next_normal();
        l[static_cast<std::size_t>(i)] = static_cast<int>(rng.next_below(2));
        (l[static_cast<std::size_t>(i)] ? has1 : has0) = true;
      }
      if (has0 && has1) {
        c.expect(auc(s, l) == auc_exhaustive(s, l),
                 "auc mismatch on instance " + std::to_string(inst));
        ++auc_checked;
      }
      if (has1) {
        c.expect(average_precision(s, l) == apr_exhaustive(s, l),
                 "apr mismatch on instance " + std::to_string(inst));
        ++apr_checked;
      }
    }
    c.expect(auc_checked > 800, "too few two-class auc instances");
    c.expect(apr_checked > 900, "too few apr instances");

    for (int inst = 0; inst < 200; ++inst) {
      const int n = 6 + static_cast<int>(rng.next_below(15));
      RowMatrix emb(n, 3);
      for (double& v : emb.values) v = rng.next_normal();
      std::vector<int> labels(static_cast<std::size_t>(n));
      std::vector<int> flags(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.next_below(3));
        flags[static_cast<std::size_t>(i)] = static_cast<int>(rng.next_below(2));
      }
      flags[0] = 1;  // target group is never empty
      for (int k : {1, 2, 3, 5}) {
        if (k >= n) continue;
        c.expect(recall_at_k(emb, labels, k) == brute_recall_at_k(emb, labels, k),
                 "recall@" + std::to_string(k) + " mismatch on instance " +
                     std::to_string(inst));
        c.expect(knn_same_group_proportion(emb, flags, k, 1) ==
                     brute_same_group_proportion(emb, flags, k, 1),
                 "same-group proportion mismatch at k=" + std::to_string(k));
      }
    }

    // Two clean groups of three: H = 27/7 (printed elsewhere as 3.857).
    const KruskalWallisResult kw =
        kruskal_wallis({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    c.expect(std::abs(kw.h - 27.0 / 7.0) <= 1e-9,
             "rank-test H " + std::to_string(kw.h) + " != 27/7");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("subgroup gap arithmetic reproduces the reference values") {
  Criterion c("06", "subgroup gap arithmetic replays");
  try {
    // Gender gap over per-group AUC values 81.3 (male) and 73.2 (female).
    const std::vector<Gender> genders = {Gender::male, Gender::female};
    const GenderGapResult gg = subgroup_gap_gender(
        [](const std::vector<int>& idx) {
          return idx == std::vector<int>{0} ? 81.3 : 73.2;
        },
        genders);
    c.expect(std::abs(gg.gap - 8.1) < 1e-12,
             "gender gap " + std::to_string(gg.gap) + " != 8.1");

    // Age-average gap over per-bin AUC values (77.4, 77.3, 77.8, 77.4):
    // mean pairwise absolute difference = 0.25, within 0.05 of the
    // one-decimal rounded 0.3.
    const std::vector<double> ages = {20.0, 40.0, 60.0, 80.0};
    const std::vector<double> bin_values = {77.4, 77.3, 77.8, 77.4};
    const AgeGapResult ag = subgroup_gap_age(
        [&](const std::vector<int>& idx) {
          return bin_values[static_cast<std::size_t>(
              age_bin_index(ages[static_cast<std::size_t>(idx.front())]))];
        },
        ages);
    c.expect(std::abs(ag.average_gap - 0.25) <= 1e-9,
             "age average gap " + std::to_string(ag.average_gap) + " != 0.25");
    c.expect(std::abs(ag.average_gap - 0.3) <= 0.05,
             "age average gap is not within 0.05 of 0.3");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("zero-weight metric term degenerates to the task-only run bitwise") {
  Criterion c("07", "zero-alpha degeneration");
  const auto t0 = Clock::now();
  try {
    SyntheticCohortConfig cc;
    cc.n_patients = 60;
    cc.records_per_patient_min = 1;
    cc.records_per_patient_max = 2;
    cc.leads = 2;
    cc.window_seconds = 2.0;
    cc.sample_rate_hz = 25;
    cc.seed = 11;
    const SyntheticCohort cohort = generate_synthetic_cohort(cc);
    SplitSpec sp;
    sp.seed = 2;
    const SplitResult splits = split_by_patient(cohort.labeled, sp);

    TrainConfig joint;
    joint.encoder.embedding_dim = 4;
    joint.encoder.n_residual_blocks = 1;
    joint.encoder.channels_per_block = {3};
    joint.encoder.kernel_size = 3;
    joint.head.hidden_dim = 4;
    joint.head.dropout_rate = 0.1;
    joint.batch_size = 8;
    joint.epochs = 5;
    joint.lr = 1e-3;
    joint.seed = 21;
    joint.miner.kind = MinerKind::random;
    joint.objective.metric_loss = MetricLossKind::triplet_hinge;
    joint.objective.alpha_scale = 0.0;

    TrainConfig task_only = joint;
    task_only.objective.metric_loss = MetricLossKind::none;
    task_only.objective.alpha_scale = 1.0;

    const TrainOutcome a = train_supervised_joint(splits, joint);
    const TrainOutcome b = train_supervised_joint(splits, task_only);

    c.expect(a.history.epochs.size() == 5 && b.history.epochs.size() == 5,
             "unexpected epoch count");
    for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
      c.expect(a.history.epochs[e].loss_task == b.history.epochs[e].loss_task,
               "task loss differs at epoch " + std::to_string(e + 1));
      c.expect(a.history.epochs[e].val_metric == b.history.epochs[e].val_metric,
               "validation metric differs at epoch " + std::to_string(e + 1));
      c.expect(a.history.epochs[e].loss_metric == 0.0,
               "zero-alpha run logged a nonzero metric loss");
    }

    const auto& pa = a.model.params;
    const auto& pb = b.model.params;
    c.expect(pa.size() == pb.size(), "parameter tables differ in size");
    for (std::size_t i = 0; i < std::min(pa.size(), pb.size()); ++i) {
      c.expect(pa[i].name == pb[i].name, "parameter name order differs");
      c.expect(pa[i].value.values == pb[i].value.values,
               "parameter " + pa[i].name + " differs bitwise");
    }
    c.expect(seconds_since(t0) < 120.0, "runtime exceeded 2 min");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("joint training reaches the desk-scale targets on the default cohort") {
  Criterion c("08", "desk-scale supervised learning");
  const auto t0 = Clock::now();
  try {
    const SyntheticCohortConfig cc;  // default cohort: ~2000 labeled windows
    const SyntheticCohort cohort = generate_synthetic_cohort(cc);

    // The planted link must be recoverable in principle: the noiseless link
    // value ranks the realized labels with AUC >= 0.95.
    {
      std::vector<double> scores;
      std::vector<int> labels;
      for (std::size_t i = 0; i < cohort.labeled.records.size(); ++i) {
        const PatientLatents& lat =
            cohort.latents_for(cohort.labeled.records[i].patient_id);
        scores.push_back(mpcwp_link_value(lat.severity, cc.label_link));
        labels.push_back(cohort.labeled.labels[i].elevated);
      }
      const double oracle = auc(scores, labels);
      c.expect(oracle >= 0.95, "latent-oracle auc " + std::to_string(oracle) +
                                   " is below 0.95");
    }

    SplitSpec sp;
    sp.seed = 1;
    const SplitResult splits = split_by_patient(cohort.labeled, sp);

    TrainConfig cfg;
    cfg.encoder.embedding_dim = 16;
    cfg.encoder.n_residual_blocks = 2;
    cfg.encoder.channels_per_block = {8, 16};
    cfg.encoder.kernel_size = 5;
    cfg.head.hidden_dim = 16;
    cfg.head.dropout_rate = 0.1;
    cfg.batch_size = 64;
    cfg.epochs = 10;  // within the 20-epoch budget
    cfg.lr = 1e-3;
    cfg.seed = 1;
    cfg.miner.kind = MinerKind::random;
    cfg.objective.metric_loss = MetricLossKind::triplet_hinge;
    cfg.objective.alpha_scale = 1.0;

    const TrainOutcome cls = train_supervised_joint(splits, cfg);
    c.expect(cls.best_val_metric >= 0.90,
             "best validation auc " + std::to_string(cls.best_val_metric) +
                 " is below 0.90");

    TrainConfig reg = cfg;
    reg.head.task = TaskKind::regression;
    reg.objective.task_loss = TaskLossKind::rmse;
    const TrainOutcome ro = train_supervised_joint(splits, reg);
    const double rmse_budget = cc.label_noise_std * 1.5;
    c.expect(ro.best_val_metric < rmse_budget,
             "best validation rmse " + std::to_string(ro.best_val_metric) +
                 " is not below " + std::to_string(rmse_budget));

    c.expect(seconds_since(t0) < 600.0, "runtime exceeded 10 min");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("warping-distance pretraining helps the low-label regime") {
  Criterion c("09", "pretraining utility");
  try {
    SyntheticCohortConfig cc;
    cc.n_patients = 500;
    cc.records_per_patient_min = 2;
    cc.records_per_patient_max = 2;
    cc.leads = 3;
    cc.window_seconds = 4.0;
    cc.sample_rate_hz = 50;
    cc.unlabeled_fraction = 0.6;
    cc.seed = 2;
    const SyntheticCohort cohort = generate_synthetic_cohort(cc);

    SplitSpec sp;  // 10%-label regime on the labeled pool
    sp.train_fraction = 0.1;
    sp.valid_fraction = 0.5;
    sp.test_fraction = 0.4;
    sp.seed = 3;
    const SplitResult splits = split_by_patient(cohort.labeled, sp);

    std::vector<double> diffs;
    int losses_down = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      TrainConfig pre;
      pre.encoder.embedding_dim = 8;
      pre.encoder.n_residual_blocks = 2;
      pre.encoder.channels_per_block = {4, 8};
      pre.encoder.kernel_size = 5;
      pre.head.hidden_dim = 8;
      pre.head.dropout_rate = 0.1;
      pre.batch_size = 24;
      pre.epochs = 20;
      pre.lr = 1e-3;
      pre.seed = seed;
      pre.miner.kind = MinerKind::distance_ranked;
      pre.miner.measure.kind = DistanceKind::dtw;
      pre.miner.measure.band_radius = 10;
      pre.objective.task_loss = TaskLossKind::none;
      pre.objective.metric_loss = MetricLossKind::triplet_hinge;
      pre.distance_reshuffle_epochs = 5;

      const TrainOutcome p = pretrain_selfsup(cohort.unlabeled, pre);
      c.expect(p.history.epochs.size() >= 10, "pretraining logged < 10 epochs");
      if (p.history.epochs.at(9).loss_metric <
          p.history.epochs.front().loss_metric)
        ++losses_down;

      TrainConfig ft = pre;
      ft.miner = MinerSpec{};
      ft.objective = ObjectiveSpec{};
      ft.objective.metric_loss = MetricLossKind::none;
      ft.epochs = 15;
      ft.lr = 5e-4;
      const TrainOutcome with_pre = finetune(&p.model, splits, ft);
      const TrainOutcome random_init = finetune(nullptr, splits, ft);
      diffs.push_back(with_pre.best_val_metric - random_init.best_val_metric);
    }

    std::sort(diffs.begin(), diffs.end());
    c.expect(diffs[2] >= 0.0,
             "median paired auc difference " + std::to_string(diffs[2]) +
                 " is negative");
    c.expect(losses_down >= 4,
             "pretraining loss decreased epoch 1 -> 10 in only " +
                 std::to_string(losses_down) + "/5 seeds");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("every command is byte-for-byte reproducible under its resolved config") {
  Criterion c("10", "cli reproducibility");
  try {
    const fs::path root = ws().root / "c10";
    fs::create_directories(root);
    const fs::path config = root / "config.json";
    std::ofstream(config) << R"({
      "cohort": {"n_patients": 30, "records_per_patient_min": 1,
                 "records_per_patient_max": 2, "leads": 1,
                 "window_seconds": 1.0, "sample_rate_hz": 16,
                 "unlabeled_fraction": 0.25, "seed": 5},
      "split": {"seed": 1},
      "train": {"encoder": {"embedding_dim": 4, "n_residual_blocks": 1,
                            "channels_per_block": [3], "kernel_size": 3},
                "head": {"hidden_dim": 4, "dropout_rate": 0.0},
                "batch_size": 6, "epochs": 2, "lr": 0.001, "seed": 7},
      "evaluate": {"bootstrap_replicates": 30, "seed": 2}
    })";
    const fs::path pre_config = root / "pretrain.json";
    std::ofstream(pre_config) << R"({
      "train": {"encoder": {"embedding_dim": 4, "n_residual_blocks": 1,
                            "channels_per_block": [3], "kernel_size": 3},
                "head": {"hidden_dim": 4, "dropout_rate": 0.0},
                "miner": {"kind": "distance_ranked",
                          "measure": {"kind": "euclidean"}},
                "objective": {"task_loss": "none",
                              "metric_loss": "triplet_hinge"},
                "batch_size": 6, "epochs": 2, "distance_reshuffle_epochs": 1,
                "lr": 0.001, "seed": 7}
    })";
    const std::string cfg = config.string();
    const std::string pre_cfg = pre_config.string();

    auto twice = [&](const std::string& what,
                     const std::function<std::vector<std::string>(
                         const std::string&)>& argv,
                     std::set<std::string> exclude) {
      const fs::path a = root / (what + "_a");
      const fs::path b = root / (what + "_b");
      const CliResult ra = cli(argv(a.string()));
      const CliResult rb = cli(argv(b.string()));
      c.expect(ra.code == 0, what + " first run exited " +
                                 std::to_string(ra.code) + ": " + ra.err);
      c.expect(rb.code == 0, what + " second run exited " +
                                 std::to_string(rb.code) + ": " + rb.err);
      // run.json embeds the caller-chosen paths (the A/B out dirs differ by
      // construction); everything else in it, including the fully resolved
      // config, must match structurally.
      exclude.insert("run.json");
      expect_same_tree(c, a, b, exclude, what);
      const auto ja = slurp(a / "run.json");
      const auto jb = slurp(b / "run.json");
      c.expect(ja.has_value() && jb.has_value(), what + ": run.json missing");
      if (ja && jb) {
        json pa = json::parse(*ja);
        json pb = json::parse(*jb);
        pa.erase("paths");
        pb.erase("paths");
        c.expect(pa == pb,
                 what + ": resolved run configs differ beyond the paths");
      }
      return a;
    };

    const fs::path data =
        twice("generate",
              [&](const std::string& out) {
                return std::vector<std::string>{"generate", "--config", cfg,
                                                "--out", out};
              },
              {});

    // Wall-clock epoch timings in history.csv are the one intentionally
    // non-reproducible artifact; checkpoints, run configs and reports must
    // match bitwise.
    const fs::path train_dir =
        twice("train",
              [&](const std::string& out) {
                return std::vector<std::string>{"train", "--config", cfg,
                                                "--data", data.string(),
                                                "--out", out};
              },
              {"history.csv"});

    const fs::path pre_dir =
        twice("pretrain",
              [&](const std::string& out) {
                return std::vector<std::string>{"pretrain", "--config", pre_cfg,
                                                "--data", data.string(),
                                                "--out", out};
              },
              {"history.csv"});

    twice("finetune",
          [&](const std::string& out) {
            return std::vector<std::string>{
                "finetune", "--config", cfg, "--data", data.string(),
                "--checkpoint", (pre_dir / "checkpoint.bin").string(),
                "--metric-loss", "none", "--out", out};
          },
          {"history.csv"});

    twice("evaluate",
          [&](const std::string& out) {
            return std::vector<std::string>{
                "evaluate", "--config", cfg, "--data", data.string(),
                "--checkpoint", (train_dir / "checkpoint.bin").string(),
                "--out", out};
          },
          {});

    twice("sweep",
          [&](const std::string& out) {
            return std::vector<std::string>{"sweep", "--config", cfg,
                                            "--data", data.string(), "--grid",
                                            "0,0.5", "--out", out};
          },
          {"history.csv"});
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}

TEST_CASE("subgroup report equals a literal recomputation on a confounded cohort") {
  Criterion c("11", "fairness audit replay");
  try {
    const fs::path root = ws().root / "c11";
    fs::create_directories(root);
    const fs::path config = root / "config.json";
    std::ofstream(config) << R"({
      "cohort": {"n_patients": 150, "records_per_patient_min": 2,
                 "records_per_patient_max": 2, "leads": 2,
                 "window_seconds": 2.0, "sample_rate_hz": 25,
                 "group_confound_strength": 1.0, "seed": 6},
      "split": {"train_fraction": 0.6, "valid_fraction": 0.2,
                "test_fraction": 0.2, "seed": 1},
      "train": {"encoder": {"embedding_dim": 8, "n_residual_blocks": 1,
                            "channels_per_block": [6], "kernel_size": 3},
                "head": {"hidden_dim": 8, "dropout_rate": 0.1},
                "objective": {"metric_loss": "none"},
                "batch_size": 16, "epochs": 3, "lr": 0.001, "seed": 9},
      "evaluate": {"bootstrap_replicates": 150, "seed": 4}
    })";
    const std::string cfg = config.string();
    const fs::path data = root / "data";
    const fs::path train_dir = root / "train";
    const fs::path eval_dir = root / "eval";

    CliResult r = cli({"generate", "--config", cfg, "--out", data.string()});
    c.expect(r.code == 0, "generate exited " + std::to_string(r.code) + ": " + r.err);
    r = cli({"train", "--config", cfg, "--data", data.string(), "--out",
             train_dir.string()});
    c.expect(r.code == 0, "train exited " + std::to_string(r.code) + ": " + r.err);
    r = cli({"evaluate", "--config", cfg, "--data", data.string(),
             "--checkpoint", (train_dir / "checkpoint.bin").string(),
             "--subgroups", "--out", eval_dir.string()});
    c.expect(r.code == 0, "evaluate exited " + std::to_string(r.code) + ": " + r.err);
    c.expect(r.out.find("held-out test split") != std::string::npos,
             "evaluate did not use the recorded patient split");

    const auto report_text = slurp(eval_dir / "report.json");
    c.expect(report_text.has_value(), "report.json missing");
    if (!report_text) {
      c.finish();
      return;
    }
    const json report = json::parse(*report_text);

    // Literal recomputation: same split, same checkpoint, same forward pass.
    const DatasetBundle bundle = import_dataset(data / "labeled");
    const LabeledDataset all = bundle.to_labeled(18.0);
    SplitSpec sp;
    sp.seed = 1;
    const LabeledDataset test = split_by_patient(all, sp).test;
    c.expect(report.at("n_records").get<int>() ==
                 static_cast<int>(test.records.size()),
             "report record count does not match the re-derived test split");

    LoadedCheckpoint loaded = load_checkpoint(train_dir / "checkpoint.bin");
    const std::vector<double> preds =
        predict_records(loaded.model, std::span(test.records), 64);
    const RowMatrix emb =
        embed_records(loaded.model, std::span(test.records), 64);

    std::vector<int> labels;
    std::vector<Gender> genders;
    std::vector<double> ages;
    for (std::size_t i = 0; i < test.records.size(); ++i) {
      labels.push_back(binarize_label(test.labels[i].mpcwp_mmhg, 18.0));
      genders.push_back(test.records[i].demographics.gender);
      ages.push_back(test.records[i].demographics.age_years);
    }

    auto subset_metric = [&](const std::string& metric,
                             const std::function<bool(std::size_t)>& keep) {
      std::vector<double> s;
      std::vector<int> l;
      for (std::size_t i = 0; i < preds.size(); ++i)
        if (keep(i)) {
          s.push_back(preds[i]);
          l.push_back(labels[i]);
        }
      return metric == "auc" ? auc(s, l) : average_precision(s, l);
    };

    const double tol = 1e-9;
    int ranked_blocks = 0;
    for (const json& block : report.at("metrics")) {
      const std::string metric = block.at("metric").get<std::string>();
      if (metric == "recall_at_1") {
        c.expect(block.at("subgroups").empty(),
                 "retrieval metric should not be stratified");
        c.expect(block.at("gaps").empty(),
                 "retrieval metric should not carry gaps");
        continue;
      }
      ++ranked_blocks;
      c.expect(std::abs(block.at("estimate").get<double>() -
                        subset_metric(metric, [](std::size_t) { return true; })) <=
                   tol,
               metric + ": full-set estimate differs from recomputation");

      std::map<std::string, double> sub;
      for (const json& e : block.at("subgroups"))
        sub[e.at("name").get<std::string>()] = e.at("estimate").get<double>();

      c.expect(sub.count("male") == 1 && sub.count("female") == 1,
               metric + ": missing gender subgroup entries");
      const double male = subset_metric(metric, [&](std::size_t i) {
        return genders[i] == Gender::male;
      });
      const double female = subset_metric(metric, [&](std::size_t i) {
        return genders[i] == Gender::female;
      });
      if (sub.count("male"))
        c.expect(std::abs(sub["male"] - male) <= tol,
                 metric + ": male estimate differs from literal subset");
      if (sub.count("female"))
        c.expect(std::abs(sub["female"] - female) <= tol,
                 metric + ": female estimate differs from literal subset");

      const json& gaps = block.at("gaps");
      c.expect(std::abs(gaps.at("gender_gap").get<double>() - (male - female)) <=
                   tol,
               metric + ": gender gap differs from male - female");
      c.expect(std::abs(gaps.at("gender_gap_abs").get<double>() -
                        std::abs(male - female)) <= tol,
               metric + ": absolute gender gap differs");

      // Age-average gap: mean pairwise |difference| over the bins the report
      // actually stratified (bins can drop out when a subset is single-class).
      std::vector<double> bin_est;
      for (int b = 0; b < kAgeBinCount; ++b) {
        const std::string name = kAgeBinLabels[static_cast<std::size_t>(b)];
        if (!sub.count(name)) continue;
        const double est = subset_metric(metric, [&](std::size_t i) {
          return age_bin_index(ages[i]) == b;
        });
        c.expect(std::abs(sub[name] - est) <= tol,
                 metric + ": age bin " + name + " differs from literal subset");
        bin_est.push_back(sub[name]);
      }
      c.expect(bin_est.size() >= 2, metric + ": fewer than two age bins");
      double pair_sum = 0.0;
      int pair_count = 0;
      for (std::size_t i = 0; i < bin_est.size(); ++i)
        for (std::size_t j = i + 1; j < bin_est.size(); ++j) {
          pair_sum += std::abs(bin_est[i] - bin_est[j]);
          ++pair_count;
        }
      c.expect(std::abs(gaps.at("age_average_gap").get<double>() -
                        pair_sum / pair_count) <= tol,
               metric + ": age average gap differs from pairwise mean");
    }
    c.expect(ranked_blocks == 2, "expected auc and apr blocks");

    // Embedding segregation: minority-gender anchors, exact brute force.
    int males = 0;
    for (Gender g : genders) males += g == Gender::male ? 1 : 0;
    const int females = static_cast<int>(genders.size()) - males;
    const Gender minority = males < females ? Gender::male : Gender::female;
    c.expect(report.at("knn_target_group").get<std::string>() ==
                 gender_to_string(minority),
             "knn target group is not the minority gender");
    std::vector<int> flags;
    for (Gender g : genders) flags.push_back(g == minority ? 1 : 0);
    for (int k : {2, 3, 5}) {
      const std::string key = "k" + std::to_string(k);
      c.expect(report.at("knn_same_gender").contains(key),
               "knn proportion " + key + " missing");
      if (!report.at("knn_same_gender").contains(key)) continue;
      const double got = report.at("knn_same_gender").at(key).get<double>();
      const double want = brute_same_group_proportion(emb, flags, k, 1);
      c.expect(got == want, key + ": knn proportion " + std::to_string(got) +
                                " != brute force " + std::to_string(want));
    }
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  c.finish();
}
