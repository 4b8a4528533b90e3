#include "sigmetric/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "sigmetric/rng.hpp"

namespace sigmetric {

const std::array<const char*, kAgeBinCount> kAgeBinLabels = {
    "age_18_35", "age_35_50", "age_50_75", "age_75_plus"};

std::string gender_to_string(Gender g) {
  return g == Gender::male ? "male" : "female";
}

Gender gender_from_string(const std::string& s) {
  if (s == "male") return Gender::male;
  if (s == "female") return Gender::female;
  throw ParseError("unknown gender '" + s + "' (expected male|female)");
}

int age_bin_index(double age_years) {
  if (age_years < 18.0) return -1;
  if (age_years < 35.0) return 0;
  if (age_years < 50.0) return 1;
  if (age_years < 75.0) return 2;
  return 3;
}

void SignalRecord::validate() const {
  if (leads <= 0 || samples <= 0)
    throw DimensionError("record '" + record_id + "': non-positive shape " +
                         std::to_string(leads) + "x" + std::to_string(samples));
  if (sample_rate_hz <= 0)
    throw DataError("record '" + record_id + "': non-positive sample rate");
  if (data.size() != static_cast<std::size_t>(leads) * samples)
    throw DimensionError("record '" + record_id + "': data size " +
                         std::to_string(data.size()) + " != leads*samples");
  for (float v : data)
    if (!std::isfinite(v))
      throw DataError("record '" + record_id + "': non-finite sample");
}

int binarize_label(double mpcwp_mmhg, double threshold_mmhg) {
  return mpcwp_mmhg > threshold_mmhg ? 1 : 0;
}

HemoLabel make_hemo_label(double mpcwp_mmhg, double threshold_mmhg) {
  if (!std::isfinite(mpcwp_mmhg))
    throw DataError("non-finite mpcwp value");
  return HemoLabel{mpcwp_mmhg, binarize_label(mpcwp_mmhg, threshold_mmhg)};
}

void LabeledDataset::validate() const {
  if (records.size() != labels.size())
    throw DimensionError("labeled dataset: " + std::to_string(records.size()) +
                         " records vs " + std::to_string(labels.size()) +
                         " labels");
  for (const auto& r : records) r.validate();
  if (records.empty()) return;
  const int d = records.front().leads;
  const int t = records.front().samples;
  for (const auto& r : records)
    if (r.leads != d || r.samples != t)
      throw DimensionError("labeled dataset: record '" + r.record_id +
                           "' shape differs from the first record");
}

void UnlabeledDataset::validate() const {
  for (const auto& r : records) r.validate();
  if (records.empty()) return;
  const int d = records.front().leads;
  const int t = records.front().samples;
  for (const auto& r : records)
    if (r.leads != d || r.samples != t)
      throw DimensionError("unlabeled dataset: record '" + r.record_id +
                           "' shape differs from the first record");
}

namespace {

std::vector<std::string> patient_order(const std::vector<SignalRecord>& records) {
  std::vector<std::string> order;
  std::unordered_set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.patient_id).second) order.push_back(r.patient_id);
  return order;
}

}  // namespace

SplitResult split_by_patient(const LabeledDataset& data, const SplitSpec& spec) {
  data.validate();
  const double sum =
      spec.train_fraction + spec.valid_fraction + spec.test_fraction;
  if (spec.train_fraction < 0 || spec.valid_fraction < 0 ||
      spec.test_fraction < 0 || std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");

  std::vector<std::string> patients = patient_order(data.records);
  Rng rng(derive_seed(spec.seed, "patient_split"));
  rng.shuffle(patients);

  const std::size_t n = patients.size();
  // Largest-remainder rounding so counts always sum to n.
  const double exact_train = spec.train_fraction * static_cast<double>(n);
  const double exact_valid = spec.valid_fraction * static_cast<double>(n);
  std::size_t n_train = static_cast<std::size_t>(exact_train);
  std::size_t n_valid = static_cast<std::size_t>(exact_valid);
  double rem_train = exact_train - static_cast<double>(n_train);
  double rem_valid = exact_valid - static_cast<double>(n_valid);
  std::size_t assigned = n_train + n_valid +
                         static_cast<std::size_t>(spec.test_fraction * n);
  while (assigned < n) {
    if (rem_train >= rem_valid && spec.train_fraction > 0) {
      ++n_train;
      rem_train = -1.0;
    } else if (spec.valid_fraction > 0) {
      ++n_valid;
      rem_valid = -1.0;
    } else {
      ++n_train;
    }
    ++assigned;
  }

  std::unordered_map<std::string, int> bucket;  // 0 train, 1 valid, 2 test
  for (std::size_t i = 0; i < n; ++i)
    bucket[patients[i]] = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);

  SplitResult out;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const int b = bucket.at(data.records[i].patient_id);
    LabeledDataset& dst = b == 0 ? out.train : (b == 1 ? out.valid : out.test);
    dst.records.push_back(data.records[i]);
    dst.labels.push_back(data.labels[i]);
  }
  return out;
}

UnlabeledDataset remove_patient_overlap(const UnlabeledDataset& unlabeled,
                                        const LabeledDataset& labeled) {
  std::unordered_set<std::string> blocked;
  for (const auto& r : labeled.records) blocked.insert(r.patient_id);
  UnlabeledDataset out;
  for (const auto& r : unlabeled.records)
    if (!blocked.count(r.patient_id)) out.records.push_back(r);
  return out;
}

std::vector<SignalRecord> segment_record(const SignalRecord& raw,
                                         double window_seconds) {
  raw.validate();
  if (window_seconds <= 0) throw ConfigError("window_seconds must be positive");
  const int win = static_cast<int>(window_seconds * raw.sample_rate_hz + 0.5);
  if (win <= 0)
    throw ConfigError("window shorter than one sample at this rate");
  std::vector<SignalRecord> out;
  const int n_windows = raw.samples / win;
  for (int k = 0; k < n_windows; ++k) {
    SignalRecord w;
    w.record_id = raw.record_id + "#" + std::to_string(k);
    w.patient_id = raw.patient_id;
    w.leads = raw.leads;
    w.samples = win;
    w.sample_rate_hz = raw.sample_rate_hz;
    w.demographics = raw.demographics;
    w.data.resize(static_cast<std::size_t>(raw.leads) * win);
    for (int l = 0; l < raw.leads; ++l) {
      const float* src = raw.data.data() +
                         static_cast<std::size_t>(l) * raw.samples + k * win;
      std::copy(src, src + win,
                w.data.begin() + static_cast<std::size_t>(l) * win);
    }
    out.push_back(std::move(w));
  }
  return out;
}

bool flatline_filter(const SignalRecord& record, int min_run) {
  if (min_run <= 1) throw ConfigError("flatline min_run must be > 1");
  for (int l = 0; l < record.leads; ++l) {
    auto lead = record.lead(l);
    int run = 1;
    for (int t = 1; t < record.samples; ++t) {
      if (lead[t] == lead[t - 1]) {
        if (++run >= min_run) return true;
      } else {
        run = 1;
      }
    }
    if (record.samples == 1 && min_run <= 1) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Synthetic cohort
// ---------------------------------------------------------------------------

void SyntheticCohortConfig::validate() const {
  if (n_patients <= 0) throw ConfigError("n_patients must be positive");
  if (records_per_patient_min < 1 ||
      records_per_patient_max < records_per_patient_min)
    throw ConfigError("records_per_patient range invalid");
  if (leads <= 0) throw ConfigError("leads must be positive");
  if (window_seconds <= 0) throw ConfigError("window_seconds must be positive");
  if (sample_rate_hz <= 0) throw ConfigError("sample_rate_hz must be positive");
  if (noise_std < 0) throw ConfigError("noise_std must be non-negative");
  if (group_confound_strength < 0)
    throw ConfigError("group_confound_strength must be non-negative");
  if (label_noise_std < 0)
    throw ConfigError("label_noise_std must be non-negative");
  if (unlabeled_fraction < 0 || unlabeled_fraction > 1)
    throw ConfigError("unlabeled_fraction must lie in [0, 1]");
}

std::string label_link_to_string(LabelLink link) {
  return link == LabelLink::linear ? "linear" : "saturating";
}

LabelLink label_link_from_string(const std::string& s) {
  if (s == "linear") return LabelLink::linear;
  if (s == "saturating") return LabelLink::saturating;
  throw ParseError("unknown label_link '" + s + "' (expected linear|saturating)");
}

double mpcwp_link_value(double severity, LabelLink link) {
  // Centered near the clinical threshold so both classes are well populated.
  if (link == LabelLink::linear) return 16.0 + 6.0 * severity;
  return 16.0 + 12.0 * std::tanh(0.8 * severity);
}

namespace {
constexpr double kPi = 3.14159265358979323846;

double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// Fixed per-lead projection gains; a crude stand-in for electrode geometry.
double lead_gain(int lead) {
  // Golden-angle spacing keeps gains spread out and bounded away from zero.
  const double g = std::sin(2.39996322972865332 * (lead + 1) + 0.7);
  return (g >= 0 ? 0.35 : -0.35) + 0.65 * g;
}
}  // namespace

std::string synthetic_patient_id(std::uint64_t patient_index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%06llu",
                static_cast<unsigned long long>(patient_index));
  return buf;
}

PatientLatents draw_patient_latents(const SyntheticCohortConfig& config,
                                    std::uint64_t patient_index) {
  Rng rng(derive_seed(config.seed, "patient_latents", patient_index));
  PatientLatents p;
  p.demographics.gender = rng.next_unit() < 0.5 ? Gender::male : Gender::female;
  p.demographics.age_years = clamp(58.0 + 16.0 * rng.next_normal(), 18.0, 95.0);

  p.severity = rng.next_normal();
  const double hr_idio = rng.next_normal();
  const double amp_idio = rng.next_normal();
  const double qrs_idio = rng.next_normal();
  const double t_idio = rng.next_normal();
  const double p_idio = rng.next_normal();
  const double label_noise = rng.next_normal();
  p.baseline_phase = rng.next_unit() * 2.0 * kPi;

  double confound_hr = 0.0;
  double confound_t = 0.0;
  if (config.group_confound_strength > 0) {
    if (p.demographics.gender == Gender::female)
      confound_hr += config.group_confound_strength * config.confound_hr_offset_hz;
    // Older patients get mildly damped T amplitude when confounding is on.
    const double age_c = clamp((p.demographics.age_years - 55.0) / 35.0, -1.0, 1.0);
    confound_t -= config.group_confound_strength * 0.03 * age_c;
  }

  p.heart_rate_hz =
      clamp(1.15 + 0.18 * hr_idio + 0.06 * p.severity + confound_hr, 0.7, 2.5);
  p.amp_scale = std::exp(0.12 * amp_idio);
  p.qrs_width_s = clamp(0.025 + 0.003 * p.severity + 0.002 * qrs_idio, 0.015, 0.04);
  p.t_amp = clamp(0.28 + 0.12 * p.severity + 0.02 * t_idio + confound_t, 0.02, 0.9);
  p.p_amp = clamp(0.12 + 0.02 * p_idio, 0.02, 0.3);
  p.mpcwp_mmhg = mpcwp_link_value(p.severity, config.label_link) +
                 config.label_noise_std * label_noise;
  return p;
}

SignalRecord synthesize_record(const SyntheticCohortConfig& config,
                               const PatientLatents& latents,
                               const std::string& record_id,
                               const std::string& patient_id,
                               std::uint64_t noise_seed, double phase_offset) {
  config.validate();
  SignalRecord rec;
  rec.record_id = record_id;
  rec.patient_id = patient_id;
  rec.leads = config.leads;
  rec.sample_rate_hz = config.sample_rate_hz;
  rec.samples = static_cast<int>(config.window_seconds * config.sample_rate_hz + 0.5);
  rec.demographics = latents.demographics;
  rec.data.resize(static_cast<std::size_t>(rec.leads) * rec.samples);

  // Three periodic bumps per beat at fixed beat phases; widths are converted
  // from seconds to phase units via the heart rate.
  struct Bump {
    double mu, sigma_phase, amp;
  };
  const double hr = latents.heart_rate_hz;
  const Bump bumps[3] = {
      {0.18, 0.025 * hr, latents.p_amp * latents.amp_scale},
      {0.40, latents.qrs_width_s * hr, 1.0 * latents.amp_scale},
      {0.68, 0.08 * hr, latents.t_amp},
  };

  Rng noise(derive_seed(noise_seed, "record_noise"));
  const double dt = 1.0 / config.sample_rate_hz;
  for (int l = 0; l < rec.leads; ++l) {
    const double gain = lead_gain(l);
    float* out = rec.data.data() + static_cast<std::size_t>(l) * rec.samples;
    for (int t = 0; t < rec.samples; ++t) {
      const double time_s = t * dt + phase_offset;
      const double beat = time_s * hr;
      const double phase = beat - std::floor(beat);
      double v = 0.0;
      for (const Bump& b : bumps) {
        // Wrapped phase distance keeps the tails finite everywhere in the
        // beat, so quiet stretches never collapse to exact zero.
        double dp = std::abs(phase - b.mu);
        if (dp > 0.5) dp = 1.0 - dp;
        v += b.amp * std::exp(-0.5 * (dp / b.sigma_phase) * (dp / b.sigma_phase));
      }
      v *= gain;
      // Slow baseline wander, shared shape across leads.
      v += 0.03 * std::sin(2.0 * kPi * 0.33 * time_s + latents.baseline_phase);
      if (config.noise_std > 0) v += config.noise_std * noise.next_normal();
      out[t] = static_cast<float>(v);
    }
  }
  return rec;
}

const PatientLatents& SyntheticCohort::latents_for(
    const std::string& patient_id) const {
  if (patient_id.size() < 2 || patient_id[0] != 'P')
    throw DataError("not a synthetic patient id: '" + patient_id + "'");
  const std::size_t idx = std::stoull(patient_id.substr(1));
  if (idx >= latents.size())
    throw DataError("patient index out of range: '" + patient_id + "'");
  return latents[idx];
}

SyntheticCohort generate_synthetic_cohort(const SyntheticCohortConfig& config) {
  config.validate();
  SyntheticCohort cohort;
  cohort.latents.reserve(static_cast<std::size_t>(config.n_patients));

  const int n_unlabeled = static_cast<int>(
      config.unlabeled_fraction * config.n_patients + 0.5);
  const int n_labeled = config.n_patients - n_unlabeled;

  const int flatline_run = std::max(2, config.sample_rate_hz / 2);
  for (int pi = 0; pi < config.n_patients; ++pi) {
    const PatientLatents latents = draw_patient_latents(config, pi);
    cohort.latents.push_back(latents);
    const std::string patient_id = synthetic_patient_id(pi);

    Rng rec_rng(derive_seed(config.seed, "patient_records", pi));
    const int span = config.records_per_patient_max -
                     config.records_per_patient_min + 1;
    const int n_records = config.records_per_patient_min +
                          static_cast<int>(rec_rng.next_below(span));
    for (int ri = 0; ri < n_records; ++ri) {
      const std::string record_id = patient_id + "-R" + std::to_string(ri);
      // Each record starts at a different point in the cardiac cycle.
      const double phase_offset = rec_rng.next_unit() * 4.0;
      const std::uint64_t noise_seed =
          derive_seed(config.seed, "record_noise_stream",
                      static_cast<std::uint64_t>(pi) * 1000003ULL + ri);
      SignalRecord rec = synthesize_record(config, latents, record_id,
                                           patient_id, noise_seed, phase_offset);
      if (flatline_filter(rec, flatline_run)) continue;
      if (pi < n_labeled) {
        cohort.labeled.records.push_back(std::move(rec));
        cohort.labeled.labels.push_back(make_hemo_label(latents.mpcwp_mmhg));
      } else {
        cohort.unlabeled.records.push_back(std::move(rec));
      }
    }
  }
  cohort.labeled.validate();
  cohort.unlabeled.validate();
  return cohort;
}

}  // namespace sigmetric
