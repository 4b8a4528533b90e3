#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sigmetric/dataset.hpp"
#include "sigmetric/mining.hpp"
#include "sigmetric/model.hpp"
#include "sigmetric/objectives.hpp"

namespace sigmetric {

struct TrainConfig {
  MinerSpec miner;
  ObjectiveSpec objective;
  EncoderConfig encoder;
  HeadConfig head;
  int batch_size = 64;
  int epochs = 20;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  // Pretraining distance-matrix cache directory (load if present, else
  // compute and store).
  std::optional<std::filesystem::path> distance_cache;
  // Pretraining batch compositions are held fixed for this many epochs so
  // cached distance matrices stay valid, then reshuffled.
  int distance_reshuffle_epochs = 5;
  // Miner-starvation policy: redraw the batch up to this many times per step.
  int resample_attempts = 10;
  bool freeze_encoder = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // When set, mined triples are dumped as step_<n>.csv files in this directory.
  std::optional<std::filesystem::path> triplet_dump;

  void validate() const {
    if (batch_size < 3) throw ConfigError("batch_size must be >= 3");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (distance_reshuffle_epochs < 1)
      throw ConfigError("distance_reshuffle_epochs must be >= 1");
    if (resample_attempts < 0)
      throw ConfigError("resample_attempts must be >= 0");
    encoder.validate();
    head.validate();
    objective.validate();
  }
};

struct EpochStats {
  int epoch = 0;
  double loss_task = 0.0;
  double loss_metric = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

// CSV columns: epoch,loss_task,loss_metric,val_metric,seconds.
void write_history_csv(const TrainHistory& history,
                       const std::filesystem::path& file);
TrainHistory read_history_csv(const std::filesystem::path& file);

struct TrainOutcome {
  Model<float> model;  // best-validation parameters
  TrainHistory history;
  double best_val_metric = 0.0;
  int best_epoch = 0;
};

// Copies parameter values (and batch-norm running stats) from src into dst
// for every dst parameter whose name starts with prefix; the parameter must
// exist in src with an identical shape (DimensionError otherwise).
void copy_parameters(const Model<float>& src, Model<float>& dst,
                     const std::string& prefix);

// Supervised joint training: L_task + alpha * L_metric with a label-based
// miner on each batch.  Validation runs per epoch (AUC for classification,
// RMSE in mmHg for regression); the best-validation parameters are retained.
// With alpha == 0 or metric_loss == none the metric path (mining included) is
// bypassed entirely, so the run is bitwise identical to a plain supervised
// baseline.  warm_start, when given, seeds all parameters and the step count
// from an existing model (architectures must match).
TrainOutcome train_supervised_joint(const SplitResult& splits,
                                    const TrainConfig& cfg,
                                    const Model<float>* warm_start = nullptr);

// Self-supervised pretraining with the distance-ranked miner on unlabeled
// records: requires task_loss == none and miner == distance_ranked.  Batch
// compositions stay fixed for distance_reshuffle_epochs at a time; the
// pairwise matrices (quantized through float32) are reused across those
// epochs and optionally cached on disk.  The returned model is encoder-only;
// history's val_metric column repeats the epoch's mean metric loss (there is
// no labeled validation set).
TrainOutcome pretrain_selfsup(const UnlabeledDataset& unlabeled,
                              const TrainConfig& cfg,
                              const Model<float>* warm_start = nullptr);

// Downstream finetuning: fresh head, task loss only (metric_loss must be
// none).  With a pretrained model its encoder parameters (and running stats)
// are copied in and its encoder architecture is adopted; pass nullptr for the
// random-initialization baseline.  freeze_encoder turns it into a linear
// probe of the head.
TrainOutcome finetune(const Model<float>* pretrained,
                      const SplitResult& splits, const TrainConfig& cfg);

struct SweepRow {
  double alpha = 0.0;
  std::optional<double> auc;
  std::optional<double> apr;
  std::optional<double> rmse;
  bool best_classification = false;
  bool best_regression = false;
  std::string error;  // non-empty when a cell's training failed
};

struct SweepTable {
  std::vector<SweepRow> rows;
};

// Per alpha: one classification training (reports best-validation AUC and the
// APR of that checkpoint) and one regression training (best-validation RMSE),
// all with the shared base seed.  Training errors are recorded per cell and
// the sweep continues.
SweepTable sweep_alpha(const std::vector<double>& grid,
                       const SplitResult& splits, const TrainConfig& base);

// CSV columns: alpha,auc,apr,rmse,best_classification,best_regression,error.
void write_sweep_csv(const SweepTable& table, const std::filesystem::path& file);

// Formats a double with round-trip precision (shortest %.17g form that
// parses back exactly); shared by all CSV writers.
std::string format_double(double v);

}  // namespace sigmetric
