#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "sigmetric/dataset.hpp"

namespace sigmetric {

// On-disk dataset layout: a directory holding
//   manifest.json  - shape, sample rate, per-record metadata + blob offsets
//   signals.bin    - little-endian float32, row-major lead x time, one block
//                    per record at the offset named in the manifest
// Records with a null mpcwp in the manifest are unlabeled.

struct DatasetBundle {
  std::vector<SignalRecord> records;
  std::vector<std::optional<double>> mpcwp;  // parallel to records

  bool fully_labeled() const;
  bool fully_unlabeled() const;
  LabeledDataset to_labeled(
      double threshold_mmhg = kDefaultElevationThresholdMmhg) const;
  UnlabeledDataset to_unlabeled() const;
};

void export_dataset(const LabeledDataset& data,
                    const std::filesystem::path& dir);
void export_dataset(const UnlabeledDataset& data,
                    const std::filesystem::path& dir);

DatasetBundle import_dataset(const std::filesystem::path& dir);

// Labels CSV: header "record_id,patient_id,gender,age_years,mpcwp_mmhg".
struct LabelCsvRow {
  std::string record_id;
  std::string patient_id;
  Gender gender;
  double age_years;
  double mpcwp_mmhg;
};

std::vector<LabelCsvRow> import_labels_csv(const std::filesystem::path& file);

// Joins CSV labels onto records by record_id; every record must be matched,
// and rows must agree with record metadata.
LabeledDataset attach_labels(std::vector<SignalRecord> records,
                             const std::vector<LabelCsvRow>& rows,
                             double threshold_mmhg = kDefaultElevationThresholdMmhg);

// Order-sensitive hash of record ids, patient ids and shapes; stored in
// checkpoints so downstream commands can tell they are looking at the same
// dataset the model was trained on.
std::uint64_t dataset_fingerprint(const std::vector<SignalRecord>& records);

}  // namespace sigmetric
