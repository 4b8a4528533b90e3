#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sigmetric/dataset.hpp"
#include "sigmetric/metrics.hpp"
#include "sigmetric/model.hpp"

namespace sigmetric {

struct EvalConfig {
  int bootstrap_replicates = 1000;
  std::uint64_t seed = 0;
  bool subgroups = false;
  std::vector<int> knn_k = {2, 3, 5};
  double threshold_mmhg = 18.0;
  int batch_size = 64;

  void validate() const {
    if (bootstrap_replicates < 1)
      throw ConfigError("bootstrap_replicates must be >= 1");
    if (batch_size < 1) throw ConfigError("evaluate batch_size must be >= 1");
    for (int k : knn_k)
      if (k < 1) throw ConfigError("knn_k entries must be >= 1");
  }
};

struct SubgroupEntry {
  std::string name;
  int n = 0;
  double estimate = 0.0;
  double boot_mean = 0.0;
  double boot_std = 0.0;
};

struct MetricBlock {
  std::string metric;  // "auc", "apr", "rmse", "recall_at_1"
  double estimate = 0.0;
  double boot_mean = 0.0;
  double boot_std = 0.0;
  int n_replicates = 0;
  int redraws = 0;
  std::vector<SubgroupEntry> subgroups;
  // "gender_gap" (male - female), "gender_gap_abs", "age_average_gap".
  std::map<std::string, double> gaps;
  // Kruskal-Wallis over the subgroup bootstrap replicate distributions,
  // keyed "gender" / "age".
  std::map<std::string, KruskalWallisResult> kruskal_wallis;
};

struct EvaluationReport {
  TaskKind task = TaskKind::classification;
  int n_records = 0;
  std::uint64_t seed = 0;
  int bootstrap_replicates = 0;
  bool subgroups = false;
  std::vector<MetricBlock> metrics;
  // Embedding-space same-gender proportion around minority-gender anchors,
  // keyed "k2"/"k3"/"k5"; empty unless subgroups are enabled.
  std::map<std::string, double> knn_same_gender;
  std::string knn_target_group;
  std::vector<std::string> warnings;
};

// Runs the full protocol on a labeled evaluation set: task metrics (AUC and
// APR for classification, RMSE for regression), embedding Recall@1, and with
// cfg.subgroups the per-gender / per-age-bin breakdowns, gaps, Kruskal-Wallis
// tests and minority-gender kNN proportions.  Every metric gets a
// record-level bootstrap (mean, std over replicates).
EvaluationReport evaluate_model(Model<float>& model, const LabeledDataset& data,
                                const EvalConfig& cfg);

void write_report_json(const EvaluationReport& report,
                       const std::filesystem::path& file);
// Flat rows: metric,subgroup,estimate,boot_mean,boot_std ("all" for the full
// set; gap and knn rows leave the boot fields empty).
void write_report_csv(const EvaluationReport& report,
                      const std::filesystem::path& file);

}  // namespace sigmetric
