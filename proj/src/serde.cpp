#include "sigmetric/serde.hpp"

#include <fstream>
#include <initializer_list>
#include <optional>

namespace sigmetric {

namespace {

using nlohmann::json;

void require_object(const json& j, const char* context) {
  if (!j.is_object())
    throw ConfigError(std::string(context) + " must be a JSON object");
}

void reject_unknown_keys(const json& j, const char* context,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(std::string("unknown key '") + item.key() + "' in " +
                        context);
  }
}

template <class T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void read_enum(const json& j, const char* key, std::string& out) {
  if (j.contains(key)) {
    if (!j.at(key).is_string())
      throw ConfigError(std::string("key '") + key + "' must be a string");
    out = j.at(key).get<std::string>();
  }
}

void read_optional_double(const json& j, const char* key,
                          std::optional<double>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null())
    out.reset();
  else
    out = j.at(key).get<double>();
}

void read_optional_int(const json& j, const char* key,
                       std::optional<int>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null())
    out.reset();
  else
    out = j.at(key).get<int>();
}

void read_optional_path(const json& j, const char* key,
                        std::optional<std::filesystem::path>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null())
    out.reset();
  else
    out = std::filesystem::path(j.at(key).get<std::string>());
}

json optional_path_json(const std::optional<std::filesystem::path>& p) {
  if (!p) return nullptr;
  return p->string();
}

}  // namespace

void to_json(json& j, const SyntheticCohortConfig& c) {
  j = json{{"n_patients", c.n_patients},
           {"records_per_patient_min", c.records_per_patient_min},
           {"records_per_patient_max", c.records_per_patient_max},
           {"leads", c.leads},
           {"window_seconds", c.window_seconds},
           {"sample_rate_hz", c.sample_rate_hz},
           {"noise_std", c.noise_std},
           {"label_link", label_link_to_string(c.label_link)},
           {"group_confound_strength", c.group_confound_strength},
           {"confound_hr_offset_hz", c.confound_hr_offset_hz},
           {"label_noise_std", c.label_noise_std},
           {"unlabeled_fraction", c.unlabeled_fraction},
           {"seed", c.seed}};
}

void from_json(const json& j, SyntheticCohortConfig& c) {
  require_object(j, "cohort config");
  reject_unknown_keys(j, "cohort config",
                      {"n_patients", "records_per_patient_min",
                       "records_per_patient_max", "leads", "window_seconds",
                       "sample_rate_hz", "noise_std", "label_link",
                       "group_confound_strength", "confound_hr_offset_hz",
                       "label_noise_std", "unlabeled_fraction", "seed"});
  read_key(j, "n_patients", c.n_patients);
  read_key(j, "records_per_patient_min", c.records_per_patient_min);
  read_key(j, "records_per_patient_max", c.records_per_patient_max);
  read_key(j, "leads", c.leads);
  read_key(j, "window_seconds", c.window_seconds);
  read_key(j, "sample_rate_hz", c.sample_rate_hz);
  read_key(j, "noise_std", c.noise_std);
  std::string link;
  read_enum(j, "label_link", link);
  if (!link.empty()) c.label_link = label_link_from_string(link);
  read_key(j, "group_confound_strength", c.group_confound_strength);
  read_key(j, "confound_hr_offset_hz", c.confound_hr_offset_hz);
  read_key(j, "label_noise_std", c.label_noise_std);
  read_key(j, "unlabeled_fraction", c.unlabeled_fraction);
  read_key(j, "seed", c.seed);
}

void to_json(json& j, const SplitSpec& c) {
  j = json{{"train_fraction", c.train_fraction},
           {"valid_fraction", c.valid_fraction},
           {"test_fraction", c.test_fraction},
           {"seed", c.seed}};
}

void from_json(const json& j, SplitSpec& c) {
  require_object(j, "split config");
  reject_unknown_keys(
      j, "split config",
      {"train_fraction", "valid_fraction", "test_fraction", "seed"});
  read_key(j, "train_fraction", c.train_fraction);
  read_key(j, "valid_fraction", c.valid_fraction);
  read_key(j, "test_fraction", c.test_fraction);
  read_key(j, "seed", c.seed);
}

void to_json(json& j, const DistanceMeasure& c) {
  j = json{{"kind", distance_kind_to_string(c.kind)},
           {"band_radius", c.band_radius ? json(*c.band_radius) : json(nullptr)},
           {"znormalize", c.znormalize}};
}

void from_json(const json& j, DistanceMeasure& c) {
  require_object(j, "distance config");
  reject_unknown_keys(j, "distance config", {"kind", "band_radius", "znormalize"});
  std::string kind;
  read_enum(j, "kind", kind);
  if (!kind.empty()) c.kind = distance_kind_from_string(kind);
  read_optional_int(j, "band_radius", c.band_radius);
  read_key(j, "znormalize", c.znormalize);
}

void to_json(json& j, const MinerSpec& c) {
  j = json{{"kind", miner_kind_to_string(c.kind)},
           {"measure", c.measure},
           {"seed", c.seed},
           {"semihard_margin",
            c.semihard_margin ? json(*c.semihard_margin) : json(nullptr)}};
}

void from_json(const json& j, MinerSpec& c) {
  require_object(j, "miner config");
  reject_unknown_keys(j, "miner config",
                      {"kind", "measure", "seed", "semihard_margin"});
  std::string kind;
  read_enum(j, "kind", kind);
  if (!kind.empty()) c.kind = miner_kind_from_string(kind);
  if (j.contains("measure")) j.at("measure").get_to(c.measure);
  read_key(j, "seed", c.seed);
  read_optional_double(j, "semihard_margin", c.semihard_margin);
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"embedding_dim", c.embedding_dim},
           {"n_residual_blocks", c.n_residual_blocks},
           {"channels_per_block", c.channels_per_block},
           {"kernel_size", c.kernel_size},
           {"use_batchnorm", c.use_batchnorm},
           {"seed", c.seed}};
}

void from_json(const json& j, EncoderConfig& c) {
  require_object(j, "encoder config");
  reject_unknown_keys(j, "encoder config",
                      {"embedding_dim", "n_residual_blocks",
                       "channels_per_block", "kernel_size", "use_batchnorm",
                       "seed"});
  read_key(j, "embedding_dim", c.embedding_dim);
  read_key(j, "n_residual_blocks", c.n_residual_blocks);
  read_key(j, "channels_per_block", c.channels_per_block);
  // Convenience: adjust the block count when only the widths were given.
  if (j.contains("channels_per_block") && !j.contains("n_residual_blocks"))
    c.n_residual_blocks = static_cast<int>(c.channels_per_block.size());
  read_key(j, "kernel_size", c.kernel_size);
  read_key(j, "use_batchnorm", c.use_batchnorm);
  read_key(j, "seed", c.seed);
}

void to_json(json& j, const HeadConfig& c) {
  j = json{{"hidden_dim", c.hidden_dim},
           {"dropout_rate", c.dropout_rate},
           {"task", task_kind_to_string(c.task)}};
}

void from_json(const json& j, HeadConfig& c) {
  require_object(j, "head config");
  reject_unknown_keys(j, "head config", {"hidden_dim", "dropout_rate", "task"});
  read_key(j, "hidden_dim", c.hidden_dim);
  read_key(j, "dropout_rate", c.dropout_rate);
  std::string task;
  read_enum(j, "task", task);
  if (!task.empty()) c.task = task_kind_from_string(task);
}

void to_json(json& j, const ObjectiveSpec& c) {
  j = json{{"metric_loss", metric_loss_to_string(c.metric_loss)},
           {"task_loss", task_loss_to_string(c.task_loss)},
           {"alpha_scale", c.alpha_scale},
           {"triplet_margin", c.triplet_margin},
           {"margin_beta_init", c.margin_beta_init},
           {"margin_beta_lr", c.margin_beta_lr},
           {"margin_gamma", c.margin_gamma},
           {"margin_literal_formula", c.margin_literal_formula},
           {"angular_margin", c.angular_margin},
           {"angular_lambda", c.angular_lambda},
           {"npair_nu", c.npair_nu},
           {"normalize_embeddings", c.normalize_embeddings}};
}

void from_json(const json& j, ObjectiveSpec& c) {
  require_object(j, "objective config");
  reject_unknown_keys(j, "objective config",
                      {"metric_loss", "task_loss", "alpha_scale",
                       "triplet_margin", "margin_beta_init", "margin_beta_lr",
                       "margin_gamma", "margin_literal_formula",
                       "angular_margin", "angular_lambda", "npair_nu",
                       "normalize_embeddings"});
  std::string metric;
  read_enum(j, "metric_loss", metric);
  if (!metric.empty()) c.metric_loss = metric_loss_from_string(metric);
  std::string task;
  read_enum(j, "task_loss", task);
  if (!task.empty()) c.task_loss = task_loss_from_string(task);
  read_key(j, "alpha_scale", c.alpha_scale);
  read_key(j, "triplet_margin", c.triplet_margin);
  read_key(j, "margin_beta_init", c.margin_beta_init);
  read_key(j, "margin_beta_lr", c.margin_beta_lr);
  read_key(j, "margin_gamma", c.margin_gamma);
  read_key(j, "margin_literal_formula", c.margin_literal_formula);
  read_key(j, "angular_margin", c.angular_margin);
  read_key(j, "angular_lambda", c.angular_lambda);
  read_key(j, "npair_nu", c.npair_nu);
  read_key(j, "normalize_embeddings", c.normalize_embeddings);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"miner", c.miner},
           {"objective", c.objective},
           {"encoder", c.encoder},
           {"head", c.head},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"lr", c.lr},
           {"seed", c.seed},
           {"distance_cache", optional_path_json(c.distance_cache)},
           {"distance_reshuffle_epochs", c.distance_reshuffle_epochs},
           {"resample_attempts", c.resample_attempts},
           {"freeze_encoder", c.freeze_encoder},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"adam_eps", c.adam_eps},
           {"triplet_dump", optional_path_json(c.triplet_dump)}};
}

void from_json(const json& j, TrainConfig& c) {
  require_object(j, "train config");
  reject_unknown_keys(j, "train config",
                      {"miner", "objective", "encoder", "head", "batch_size",
                       "epochs", "lr", "seed", "distance_cache",
                       "distance_reshuffle_epochs", "resample_attempts",
                       "freeze_encoder", "adam_beta1", "adam_beta2",
                       "adam_eps", "triplet_dump"});
  if (j.contains("miner")) j.at("miner").get_to(c.miner);
  if (j.contains("objective")) j.at("objective").get_to(c.objective);
  if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
  if (j.contains("head")) j.at("head").get_to(c.head);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "epochs", c.epochs);
  read_key(j, "lr", c.lr);
  read_key(j, "seed", c.seed);
  read_optional_path(j, "distance_cache", c.distance_cache);
  read_key(j, "distance_reshuffle_epochs", c.distance_reshuffle_epochs);
  read_key(j, "resample_attempts", c.resample_attempts);
  read_key(j, "freeze_encoder", c.freeze_encoder);
  read_key(j, "adam_beta1", c.adam_beta1);
  read_key(j, "adam_beta2", c.adam_beta2);
  read_key(j, "adam_eps", c.adam_eps);
  read_optional_path(j, "triplet_dump", c.triplet_dump);
}

void to_json(json& j, const EvalConfig& c) {
  j = json{{"bootstrap_replicates", c.bootstrap_replicates},
           {"seed", c.seed},
           {"subgroups", c.subgroups},
           {"knn_k", c.knn_k},
           {"threshold_mmhg", c.threshold_mmhg},
           {"batch_size", c.batch_size}};
}

void from_json(const json& j, EvalConfig& c) {
  require_object(j, "evaluate config");
  reject_unknown_keys(j, "evaluate config",
                      {"bootstrap_replicates", "seed", "subgroups", "knn_k",
                       "threshold_mmhg", "batch_size"});
  read_key(j, "bootstrap_replicates", c.bootstrap_replicates);
  read_key(j, "seed", c.seed);
  read_key(j, "subgroups", c.subgroups);
  read_key(j, "knn_k", c.knn_k);
  read_key(j, "threshold_mmhg", c.threshold_mmhg);
  read_key(j, "batch_size", c.batch_size);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"cohort", c.cohort},
           {"split", c.split},
           {"train", c.train},
           {"evaluate", c.evaluate},
           {"sweep", json{{"grid", c.sweep_grid}}}};
}

void from_json(const json& j, RunConfig& c) {
  require_object(j, "run config");
  reject_unknown_keys(j, "run config",
                      {"cohort", "split", "train", "evaluate", "sweep"});
  if (j.contains("cohort")) j.at("cohort").get_to(c.cohort);
  if (j.contains("split")) j.at("split").get_to(c.split);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("evaluate")) j.at("evaluate").get_to(c.evaluate);
  if (j.contains("sweep")) {
    require_object(j.at("sweep"), "sweep config");
    reject_unknown_keys(j.at("sweep"), "sweep config", {"grid"});
    if (j.at("sweep").contains("grid"))
      j.at("sweep").at("grid").get_to(c.sweep_grid);
  }
}

void load_config_file(const std::filesystem::path& file, RunConfig& into) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file: " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + file.string() + ": " + e.what());
  }
  try {
    j.get_to(into);
  } catch (const ParseError& e) {
    throw ConfigError("bad config value in " + file.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError("bad config value in " + file.string() + ": " + e.what());
  }
}

void apply_override(RunConfig& config, const std::string& dotted_key,
                    const std::string& value) {
  json root = config;
  json* node = &root;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    std::size_t dot = dotted_key.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(dotted_key.substr(start));
      break;
    }
    parts.push_back(dotted_key.substr(start, dot - start));
    start = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i]))
      throw ConfigError("unknown config key: " + dotted_key);
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->is_object() || !node->contains(leaf))
    throw ConfigError("unknown config key: " + dotted_key);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare string, e.g. a miner name
  }
  (*node)[leaf] = parsed;
  try {
    root.get_to(config);
  } catch (const ParseError& e) {
    throw ConfigError("bad value for " + dotted_key + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError("bad value for " + dotted_key + ": " + e.what());
  }
}

}  // namespace sigmetric
