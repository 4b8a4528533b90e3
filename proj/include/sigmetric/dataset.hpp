#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sigmetric/errors.hpp"

namespace sigmetric {

enum class Gender { male, female };

std::string gender_to_string(Gender g);
Gender gender_from_string(const std::string& s);

struct Demographics {
  Gender gender = Gender::male;
  double age_years = 0.0;
};

// Age bins used by subgroup metrics: [18,35), [35,50), [50,75), [75,inf).
inline constexpr int kAgeBinCount = 4;
extern const std::array<const char*, kAgeBinCount> kAgeBinLabels;

// Returns the bin index for an age, or -1 if the age falls below 18.
int age_bin_index(double age_years);

// A fixed-length multichannel signal window.  Samples are stored row-major:
// data[lead * samples + t].
struct SignalRecord {
  std::string record_id;
  std::string patient_id;
  int leads = 0;
  int samples = 0;
  int sample_rate_hz = 0;
  Demographics demographics;
  std::vector<float> data;

  float at(int lead, int t) const {
    return data[static_cast<std::size_t>(lead) * samples + t];
  }
  std::span<const float> lead(int l) const {
    return {data.data() + static_cast<std::size_t>(l) * samples,
            static_cast<std::size_t>(samples)};
  }
  void validate() const;
};

// Default clinical threshold for the elevated-pressure binary label (mmHg).
inline constexpr double kDefaultElevationThresholdMmhg = 18.0;

int binarize_label(double mpcwp_mmhg,
                   double threshold_mmhg = kDefaultElevationThresholdMmhg);

struct HemoLabel {
  double mpcwp_mmhg = 0.0;
  int elevated = 0;  // 1 iff mpcwp_mmhg > threshold
};

HemoLabel make_hemo_label(double mpcwp_mmhg,
                          double threshold_mmhg = kDefaultElevationThresholdMmhg);

struct LabeledDataset {
  std::vector<SignalRecord> records;
  std::vector<HemoLabel> labels;  // parallel to records
  void validate() const;
};

struct UnlabeledDataset {
  std::vector<SignalRecord> records;
  void validate() const;
};

struct SplitSpec {
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SplitResult {
  LabeledDataset train;
  LabeledDataset valid;
  LabeledDataset test;
};

// Partitions by patient: every record of a patient lands in exactly one of
// train/valid/test.  Fractions apply to patient counts (largest-remainder
// rounding); the patient order is shuffled deterministically from the seed.
SplitResult split_by_patient(const LabeledDataset& data, const SplitSpec& spec);

// Drops unlabeled records whose patient also appears in the labeled set, so
// pretraining can never see a patient that later shows up downstream.
UnlabeledDataset remove_patient_overlap(const UnlabeledDataset& unlabeled,
                                        const LabeledDataset& labeled);

// Splits a long recording into consecutive non-overlapping fixed-length
// windows; a trailing partial window is dropped.  Window k of record R gets
// record_id "<R.record_id>#<k>" and inherits patient and demographics.
std::vector<SignalRecord> segment_record(const SignalRecord& raw,
                                         double window_seconds);

// True iff any lead holds a run of at least min_run identical consecutive
// samples (a flatline, e.g. a disconnected electrode).
bool flatline_filter(const SignalRecord& record, int min_run);

// ---------------------------------------------------------------------------
// Synthetic cohort generation
// ---------------------------------------------------------------------------

enum class LabelLink { linear, saturating };

std::string label_link_to_string(LabelLink link);
LabelLink label_link_from_string(const std::string& s);

struct SyntheticCohortConfig {
  int n_patients = 1000;
  int records_per_patient_min = 2;
  int records_per_patient_max = 2;
  int leads = 12;
  double window_seconds = 10.0;
  int sample_rate_hz = 100;
  double noise_std = 0.05;
  LabelLink label_link = LabelLink::linear;
  // 0 disables demographic confounding; 1 applies the full offsets below.
  double group_confound_strength = 0.0;
  // Mean heart-rate offset (Hz) added for female patients, scaled by
  // group_confound_strength.
  double confound_hr_offset_hz = 0.1;
  // Std of patient-level noise added to the true pressure before labeling.
  double label_noise_std = 1.8;
  // Fraction of patients emitted without labels (rounded to a count).
  double unlabeled_fraction = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Per-patient latent state.  severity is the single label-driving factor;
// the waveform parameters leak it into the traces.
struct PatientLatents {
  double severity = 0.0;        // z ~ N(0,1)
  double heart_rate_hz = 1.2;   // carries a small severity component
  double amp_scale = 1.0;       // idiosyncratic overall QRS gain
  double qrs_width_s = 0.025;
  double t_amp = 0.3;           // main severity channel
  double p_amp = 0.12;
  double baseline_phase = 0.0;
  double mpcwp_mmhg = 16.0;     // link(severity) + label noise
  Demographics demographics;
};

// Noise-free link value before patient label noise is added.
double mpcwp_link_value(double severity, LabelLink link);

// Draws the latents for one patient; pure function of (config, patient_index).
PatientLatents draw_patient_latents(const SyntheticCohortConfig& config,
                                    std::uint64_t patient_index);

// Renders one trace window from latents; pure function of its arguments.
SignalRecord synthesize_record(const SyntheticCohortConfig& config,
                               const PatientLatents& latents,
                               const std::string& record_id,
                               const std::string& patient_id,
                               std::uint64_t noise_seed, double phase_offset);

struct SyntheticCohort {
  LabeledDataset labeled;
  UnlabeledDataset unlabeled;
  // Latents for every patient, indexed by patient number (the numeric part of
  // the patient id).  Kept so oracle baselines can score from the latents.
  std::vector<PatientLatents> latents;

  const PatientLatents& latents_for(const std::string& patient_id) const;
};

std::string synthetic_patient_id(std::uint64_t patient_index);

// Deterministic: byte-identical output for equal configs.
SyntheticCohort generate_synthetic_cohort(const SyntheticCohortConfig& config);

}  // namespace sigmetric
