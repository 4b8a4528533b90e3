#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "sigmetric/dataset.hpp"
#include "sigmetric/dataset_io.hpp"
#include "sigmetric/errors.hpp"
#include "sigmetric/rng.hpp"

using namespace sigmetric;
namespace fs = std::filesystem;

namespace {

SignalRecord flat_record(const std::string& rid, const std::string& pid,
                         int leads, int samples, float fill) {
  SignalRecord r;
  r.record_id = rid;
  r.patient_id = pid;
  r.leads = leads;
  r.samples = samples;
  r.sample_rate_hz = 10;
  r.data.assign(static_cast<std::size_t>(leads) * samples, fill);
  return r;
}

SignalRecord ramp_record(const std::string& rid, const std::string& pid,
                         int leads, int samples) {
  SignalRecord r = flat_record(rid, pid, leads, samples, 0.0f);
  for (std::size_t i = 0; i < r.data.size(); ++i)
    r.data[i] = static_cast<float>(i) * 0.25f;
  return r;
}

LabeledDataset small_cohort(int n_patients, int records_each) {
  LabeledDataset data;
  for (int p = 0; p < n_patients; ++p) {
    const std::string pid = synthetic_patient_id(static_cast<std::uint64_t>(p));
    for (int r = 0; r < records_each; ++r) {
      SignalRecord rec = ramp_record(pid + "-R" + std::to_string(r), pid, 2, 8);
      rec.demographics.gender = p % 2 == 0 ? Gender::male : Gender::female;
      rec.demographics.age_years = 30.0 + p;
      data.records.push_back(std::move(rec));
      data.labels.push_back(make_hemo_label(14.0 + p));
    }
  }
  return data;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sigmetric_dataset_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("age bins cover [18,35), [35,50), [50,75), [75,inf)") {
  CHECK(age_bin_index(17.9) == -1);
  CHECK(age_bin_index(18.0) == 0);
  CHECK(age_bin_index(34.99) == 0);
  CHECK(age_bin_index(35.0) == 1);
  CHECK(age_bin_index(49.9) == 1);
  CHECK(age_bin_index(50.0) == 2);
  CHECK(age_bin_index(74.9) == 2);
  CHECK(age_bin_index(75.0) == 3);
  CHECK(age_bin_index(120.0) == 3);
  CHECK(std::string(kAgeBinLabels[0]) == "age_18_35");
  CHECK(std::string(kAgeBinLabels[3]) == "age_75_plus");
}

TEST_CASE("pressure labels binarize strictly above the threshold") {
  CHECK(binarize_label(18.0) == 0);  // boundary stays negative
  CHECK(binarize_label(18.0001) == 1);
  CHECK(binarize_label(17.0) == 0);
  CHECK(binarize_label(25.0) == 1);
  CHECK(binarize_label(19.0, 20.0) == 0);
  HemoLabel l = make_hemo_label(21.5);
  CHECK(l.mpcwp_mmhg == 21.5);
  CHECK(l.elevated == 1);
  CHECK_THROWS_AS(make_hemo_label(std::nan("")), DataError);
}

TEST_CASE("gender names round-trip and reject unknowns") {
  CHECK(gender_from_string(gender_to_string(Gender::male)) == Gender::male);
  CHECK(gender_from_string(gender_to_string(Gender::female)) == Gender::female);
  CHECK_THROWS_AS(gender_from_string("other"), ParseError);
}

TEST_CASE("record validation rejects inconsistent shapes and non-finite data") {
  SignalRecord ok = ramp_record("r", "p", 2, 4);
  CHECK_NOTHROW(ok.validate());
  SignalRecord short_data = ok;
  short_data.data.pop_back();
  CHECK_THROWS_AS(short_data.validate(), DimensionError);
  SignalRecord nan_data = ok;
  nan_data.data[3] = std::nanf("");
  CHECK_THROWS_AS(nan_data.validate(), DataError);
  SignalRecord no_rate = ok;
  no_rate.sample_rate_hz = 0;
  CHECK_THROWS_AS(no_rate.validate(), DataError);
}

TEST_CASE("mpcwp link: linear is affine in severity, saturating is bounded") {
  CHECK(mpcwp_link_value(0.0, LabelLink::linear) == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(mpcwp_link_value(1.0, LabelLink::linear) == doctest::Approx(22.0).epsilon(1e-12));
  CHECK(mpcwp_link_value(-2.0, LabelLink::linear) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(mpcwp_link_value(0.0, LabelLink::saturating) == doctest::Approx(16.0).epsilon(1e-12));
  // tanh saturates: huge severities stay within 16 +/- 12.
  CHECK(mpcwp_link_value(50.0, LabelLink::saturating) < 28.0 + 1e-9);
  CHECK(mpcwp_link_value(-50.0, LabelLink::saturating) > 4.0 - 1e-9);
  CHECK(mpcwp_link_value(1.0, LabelLink::saturating) ==
        doctest::Approx(16.0 + 12.0 * std::tanh(0.8)).epsilon(1e-12));
  CHECK(label_link_from_string(label_link_to_string(LabelLink::saturating)) ==
        LabelLink::saturating);
  CHECK_THROWS_AS(label_link_from_string("step"), ParseError);
}

TEST_CASE("synthetic cohorts are deterministic and follow the id scheme") {
  SyntheticCohortConfig cfg;
  cfg.n_patients = 12;
  cfg.records_per_patient_min = 1;
  cfg.records_per_patient_max = 3;
  cfg.leads = 3;
  cfg.window_seconds = 2.0;
  cfg.sample_rate_hz = 50;
  cfg.unlabeled_fraction = 0.25;
  cfg.seed = 99;

  SyntheticCohort a = generate_synthetic_cohort(cfg);
  SyntheticCohort b = generate_synthetic_cohort(cfg);
  REQUIRE(a.labeled.records.size() == b.labeled.records.size());
  REQUIRE(a.unlabeled.records.size() == b.unlabeled.records.size());
  for (std::size_t i = 0; i < a.labeled.records.size(); ++i) {
    CHECK(a.labeled.records[i].record_id == b.labeled.records[i].record_id);
    CHECK(a.labeled.records[i].data == b.labeled.records[i].data);
    CHECK(a.labeled.labels[i].mpcwp_mmhg == b.labeled.labels[i].mpcwp_mmhg);
  }

  // 12 patients at unlabeled fraction 0.25: the last 3 are unlabeled.
  std::set<std::string> labeled_patients, unlabeled_patients;
  for (const auto& r : a.labeled.records) labeled_patients.insert(r.patient_id);
  for (const auto& r : a.unlabeled.records) unlabeled_patients.insert(r.patient_id);
  CHECK(labeled_patients.size() == 9);
  CHECK(unlabeled_patients.size() == 3);
  for (const auto& p : labeled_patients) CHECK(unlabeled_patients.count(p) == 0);

  CHECK(a.latents.size() == 12);
  for (const auto& r : a.labeled.records) {
    CHECK(r.leads == 3);
    CHECK(r.samples == 100);  // 2 s at 50 Hz
    CHECK(r.sample_rate_hz == 50);
    // "P%06d-R%d" record ids on "P%06d" patients.
    CHECK(r.patient_id.size() == 7);
    CHECK(r.patient_id[0] == 'P');
    CHECK(r.record_id.rfind(r.patient_id + "-R", 0) == 0);
    CHECK_NOTHROW(r.validate());
    // Demographics come straight from the patient latents.
    const PatientLatents& lat = a.latents_for(r.patient_id);
    CHECK(lat.demographics.age_years == r.demographics.age_years);
  }
  // Labels derive from the patient's latent pressure.
  for (std::size_t i = 0; i < a.labeled.records.size(); ++i) {
    const PatientLatents& lat = a.latents_for(a.labeled.records[i].patient_id);
    CHECK(a.labeled.labels[i].mpcwp_mmhg == lat.mpcwp_mmhg);
    CHECK(a.labeled.labels[i].elevated == binarize_label(lat.mpcwp_mmhg));
  }
  CHECK(synthetic_patient_id(7) == "P000007");
  CHECK_THROWS_AS(a.latents_for("Q000001"), DataError);
  CHECK_THROWS_AS(a.latents_for("P000099"), DataError);

  // Different seeds change the signal content.
  SyntheticCohortConfig other = cfg;
  other.seed = 100;
  SyntheticCohort c = generate_synthetic_cohort(other);
  bool any_diff = c.labeled.records.size() != a.labeled.records.size();
  if (!any_diff) any_diff = c.labeled.records[0].data != a.labeled.records[0].data;
  CHECK(any_diff);
}

TEST_CASE("cohort prevalence lands near one half for the linear link") {
  SyntheticCohortConfig cfg;
  cfg.n_patients = 300;
  cfg.records_per_patient_min = cfg.records_per_patient_max = 1;
  cfg.leads = 1;
  cfg.window_seconds = 0.5;
  cfg.sample_rate_hz = 20;
  cfg.seed = 5;
  SyntheticCohort cohort = generate_synthetic_cohort(cfg);
  double positives = 0;
  for (const auto& l : cohort.labeled.labels) positives += l.elevated;
  const double prevalence = positives / static_cast<double>(cohort.labeled.labels.size());
  // Severity is N(0,1) and the linear link crosses 18 mmHg at z = 1/3: the
  // expected prevalence is 1 - Phi(0.32...) ~ 0.37.
  CHECK(prevalence > 0.2);
  CHECK(prevalence < 0.55);
}

TEST_CASE("gender confounding shifts female heart rates by the configured offset") {
  SyntheticCohortConfig off;
  off.seed = 11;
  SyntheticCohortConfig on = off;
  on.group_confound_strength = 1.0;
  on.confound_hr_offset_hz = 0.1;
  int females_checked = 0;
  for (std::uint64_t pi = 0; pi < 40; ++pi) {
    PatientLatents base = draw_patient_latents(off, pi);
    PatientLatents shifted = draw_patient_latents(on, pi);
    CHECK(base.demographics.gender == shifted.demographics.gender);
    if (base.demographics.gender == Gender::female) {
      if (base.heart_rate_hz > 0.7 && shifted.heart_rate_hz < 2.5) {
        CHECK(shifted.heart_rate_hz - base.heart_rate_hz == doctest::Approx(0.1).epsilon(1e-9));
        ++females_checked;
      }
    } else {
      CHECK(shifted.heart_rate_hz == base.heart_rate_hz);
    }
    // Pressure labels are independent of the confound.
    CHECK(base.mpcwp_mmhg == shifted.mpcwp_mmhg);
  }
  CHECK(females_checked > 5);
}

TEST_CASE("patient splits keep patients together and honour the fractions") {
  LabeledDataset data = small_cohort(10, 2);
  SplitSpec spec;
  spec.seed = 3;
  SplitResult split = split_by_patient(data, spec);

  auto patients_of = [](const LabeledDataset& d) {
    std::set<std::string> out;
    for (const auto& r : d.records) out.insert(r.patient_id);
    return out;
  };
  std::set<std::string> train = patients_of(split.train);
  std::set<std::string> valid = patients_of(split.valid);
  std::set<std::string> test = patients_of(split.test);
  CHECK(train.size() == 6);
  CHECK(valid.size() == 2);
  CHECK(test.size() == 2);
  for (const auto& p : train) {
    CHECK(valid.count(p) == 0);
    CHECK(test.count(p) == 0);
  }
  for (const auto& p : valid) CHECK(test.count(p) == 0);
  CHECK(split.train.records.size() + split.valid.records.size() +
            split.test.records.size() ==
        data.records.size());

  // Labels stay parallel: every record keeps its own label.
  for (std::size_t i = 0; i < split.train.records.size(); ++i) {
    const std::string& pid = split.train.records[i].patient_id;
    const int patient_number = std::stoi(pid.substr(1));
    CHECK(split.train.labels[i].mpcwp_mmhg ==
          doctest::Approx(14.0 + patient_number).epsilon(1e-12));
  }

  // Deterministic per seed; a different seed shuffles patients differently.
  SplitResult again = split_by_patient(data, spec);
  REQUIRE(again.train.records.size() == split.train.records.size());
  for (std::size_t i = 0; i < again.train.records.size(); ++i)
    CHECK(again.train.records[i].record_id == split.train.records[i].record_id);
  bool any_diff = false;
  for (std::uint64_t s = 0; s < 20 && !any_diff; ++s) {
    SplitSpec other = spec;
    other.seed = 1000 + s;
    SplitResult alt = split_by_patient(data, other);
    if (patients_of(alt.train) != train) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("patient splits use largest-remainder rounding") {
  LabeledDataset data = small_cohort(7, 1);
  SplitSpec spec;
  spec.train_fraction = 0.5;
  spec.valid_fraction = 0.25;
  spec.test_fraction = 0.25;
  SplitResult split = split_by_patient(data, spec);
  // 7 patients at 0.5/0.25/0.25: floors 3/1/1 leave two patients over; the
  // leftover pass hands one to valid (larger remainder) and then one to train.
  CHECK(split.train.records.size() == 4);
  CHECK(split.valid.records.size() == 2);
  CHECK(split.test.records.size() == 1);
  // An exact split has no leftovers at all.
  LabeledDataset eight = small_cohort(8, 1);
  SplitResult even = split_by_patient(eight, spec);
  CHECK(even.train.records.size() == 4);
  CHECK(even.valid.records.size() == 2);
  CHECK(even.test.records.size() == 2);

  SplitSpec bad;
  bad.train_fraction = 0.5;
  bad.valid_fraction = 0.5;
  bad.test_fraction = 0.5;
  CHECK_THROWS_AS(split_by_patient(data, bad), ConfigError);
  bad.train_fraction = -0.1;
  bad.valid_fraction = 0.6;
  bad.test_fraction = 0.5;
  CHECK_THROWS_AS(split_by_patient(data, bad), ConfigError);
}

TEST_CASE("patient overlap removal drops shared patients from the unlabeled pool") {
  UnlabeledDataset unlabeled;
  unlabeled.records.push_back(ramp_record("a-R0", "A", 1, 4));
  unlabeled.records.push_back(ramp_record("b-R0", "B", 1, 4));
  unlabeled.records.push_back(ramp_record("b-R1", "B", 1, 4));
  unlabeled.records.push_back(ramp_record("c-R0", "C", 1, 4));
  LabeledDataset labeled;
  labeled.records.push_back(ramp_record("b-R9", "B", 1, 4));
  labeled.labels.push_back(make_hemo_label(20.0));

  UnlabeledDataset cleaned = remove_patient_overlap(unlabeled, labeled);
  REQUIRE(cleaned.records.size() == 2);
  CHECK(cleaned.records[0].record_id == "a-R0");
  CHECK(cleaned.records[1].record_id == "c-R0");
}

TEST_CASE("segmentation cuts non-overlapping windows and drops the tail") {
  SignalRecord raw = ramp_record("rec1", "P1", 2, 100);
  raw.sample_rate_hz = 10;
  raw.demographics.gender = Gender::female;
  raw.demographics.age_years = 44.0;

  std::vector<SignalRecord> windows = segment_record(raw, 3.0);
  REQUIRE(windows.size() == 3);  // 100 samples / 30 per window, tail dropped
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const SignalRecord& w = windows[k];
    CHECK(w.record_id == "rec1#" + std::to_string(k));
    CHECK(w.patient_id == "P1");
    CHECK(w.samples == 30);
    CHECK(w.leads == 2);
    CHECK(w.sample_rate_hz == 10);
    CHECK(w.demographics.gender == Gender::female);
    CHECK(w.demographics.age_years == 44.0);
    for (int lead = 0; lead < 2; ++lead)
      for (int t = 0; t < 30; ++t)
        CHECK(w.at(lead, t) == raw.at(lead, static_cast<int>(k) * 30 + t));
  }

  // A window longer than the record yields nothing.
  CHECK(segment_record(raw, 60.0).empty());
  CHECK_THROWS_AS(segment_record(raw, 0.0), ConfigError);
  CHECK_THROWS_AS(segment_record(raw, 0.01), ConfigError);  // under one sample
}

TEST_CASE("flatline filter detects runs of identical samples") {
  SignalRecord varied = ramp_record("v", "p", 2, 20);
  CHECK_FALSE(flatline_filter(varied, 5));

  SignalRecord stuck = ramp_record("s", "p", 2, 20);
  for (int t = 8; t < 13; ++t) stuck.data[static_cast<std::size_t>(20) + t] = 3.25f;
  CHECK(flatline_filter(stuck, 5));   // 5-sample run in lead 1
  CHECK_FALSE(flatline_filter(stuck, 6));

  // Run at the very end of a lead still counts.
  SignalRecord tail = ramp_record("t", "p", 1, 10);
  for (int t = 7; t < 10; ++t) tail.data[static_cast<std::size_t>(t)] = -1.0f;
  CHECK(flatline_filter(tail, 3));

  CHECK_THROWS_AS(flatline_filter(varied, 1), ConfigError);
}

TEST_CASE("labeled datasets export and import byte-identically") {
  SyntheticCohortConfig cfg;
  cfg.n_patients = 6;
  cfg.records_per_patient_min = cfg.records_per_patient_max = 2;
  cfg.leads = 2;
  cfg.window_seconds = 1.0;
  cfg.sample_rate_hz = 40;
  cfg.seed = 21;
  SyntheticCohort cohort = generate_synthetic_cohort(cfg);

  TempDir tmp;
  export_dataset(cohort.labeled, tmp.path / "labeled");
  DatasetBundle bundle = import_dataset(tmp.path / "labeled");
  CHECK(bundle.fully_labeled());
  CHECK_FALSE(bundle.fully_unlabeled());
  REQUIRE(bundle.records.size() == cohort.labeled.records.size());
  for (std::size_t i = 0; i < bundle.records.size(); ++i) {
    const SignalRecord& got = bundle.records[i];
    const SignalRecord& want = cohort.labeled.records[i];
    CHECK(got.record_id == want.record_id);
    CHECK(got.patient_id == want.patient_id);
    CHECK(got.leads == want.leads);
    CHECK(got.samples == want.samples);
    CHECK(got.sample_rate_hz == want.sample_rate_hz);
    CHECK(got.demographics.gender == want.demographics.gender);
    CHECK(got.demographics.age_years == want.demographics.age_years);
    CHECK(got.data == want.data);  // float32 payload is bit-exact
    REQUIRE(bundle.mpcwp[i].has_value());
    CHECK(*bundle.mpcwp[i] == cohort.labeled.labels[i].mpcwp_mmhg);
  }
  LabeledDataset back = bundle.to_labeled();
  for (std::size_t i = 0; i < back.labels.size(); ++i) {
    CHECK(back.labels[i].mpcwp_mmhg == cohort.labeled.labels[i].mpcwp_mmhg);
    CHECK(back.labels[i].elevated == cohort.labeled.labels[i].elevated);
  }
  // Dropping labels is always allowed.
  CHECK(bundle.to_unlabeled().records.size() == bundle.records.size());

  // Unlabeled round-trip.
  UnlabeledDataset unl;
  unl.records = cohort.labeled.records;
  export_dataset(unl, tmp.path / "unlabeled");
  DatasetBundle ub = import_dataset(tmp.path / "unlabeled");
  CHECK(ub.fully_unlabeled());
  CHECK_THROWS_AS(ub.to_labeled(), DataError);
  CHECK(ub.to_unlabeled().records.size() == unl.records.size());

  CHECK_THROWS_AS(import_dataset(tmp.path / "missing"), DataError);
  // A corrupt manifest is a parse error.
  fs::create_directories(tmp.path / "corrupt");
  std::ofstream(tmp.path / "corrupt" / "manifest.json") << "{not json";
  CHECK_THROWS_AS(import_dataset(tmp.path / "corrupt"), ParseError);
}

TEST_CASE("label CSV import joins onto records by id") {
  TempDir tmp;
  const fs::path csv = tmp.path / "labels.csv";
  std::ofstream(csv) << "record_id,patient_id,gender,age_years,mpcwp_mmhg\n"
                        "r0,P1,male,61,21.5\n"
                        "r1,P2,female,48,12.0\n";
  std::vector<LabelCsvRow> rows = import_labels_csv(csv);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].record_id == "r0");
  CHECK(rows[0].gender == Gender::male);
  CHECK(rows[0].age_years == 61.0);
  CHECK(rows[0].mpcwp_mmhg == 21.5);
  CHECK(rows[1].gender == Gender::female);

  std::vector<SignalRecord> records;
  records.push_back(ramp_record("r0", "P1", 1, 4));
  records.back().demographics.gender = Gender::male;
  records.back().demographics.age_years = 61.0;
  records.push_back(ramp_record("r1", "P2", 1, 4));
  records.back().demographics.gender = Gender::female;
  records.back().demographics.age_years = 48.0;

  LabeledDataset joined = attach_labels(records, rows);
  REQUIRE(joined.labels.size() == 2);
  CHECK(joined.labels[0].mpcwp_mmhg == 21.5);
  CHECK(joined.labels[0].elevated == 1);
  CHECK(joined.labels[1].mpcwp_mmhg == 12.0);
  CHECK(joined.labels[1].elevated == 0);

  // A record without a label row fails the join.
  std::vector<SignalRecord> extra = records;
  extra.push_back(ramp_record("r2", "P3", 1, 4));
  CHECK_THROWS_AS(attach_labels(extra, rows), DataError);
  // Disagreeing metadata fails too.
  std::vector<SignalRecord> wrong = records;
  wrong[0].patient_id = "P9";
  CHECK_THROWS_AS(attach_labels(wrong, rows), DataError);

  std::ofstream(tmp.path / "bad.csv") << "record_id,patient_id\nr0,P1\n";
  CHECK_THROWS_AS(import_labels_csv(tmp.path / "bad.csv"), ParseError);
  CHECK_THROWS_AS(import_labels_csv(tmp.path / "absent.csv"), DataError);
}

TEST_CASE("dataset fingerprints track identity, order, and shape") {
  LabeledDataset data = small_cohort(4, 2);
  const std::uint64_t fp = dataset_fingerprint(data.records);
  CHECK(fp == dataset_fingerprint(data.records));  // stable

  std::vector<SignalRecord> renamed = data.records;
  renamed[0].record_id = "other";
  CHECK(dataset_fingerprint(renamed) != fp);

  std::vector<SignalRecord> reordered = data.records;
  std::swap(reordered[0], reordered[1]);
  CHECK(dataset_fingerprint(reordered) != fp);

  std::vector<SignalRecord> reshaped = data.records;
  reshaped[0].samples = 4;
  reshaped[0].data.resize(static_cast<std::size_t>(reshaped[0].leads) * 4);
  CHECK(dataset_fingerprint(reshaped) != fp);

  // The fingerprint hashes identity and shape, not the waveform payload.
  std::vector<SignalRecord> edited = data.records;
  edited[0].data[0] += 1.0f;
  CHECK(dataset_fingerprint(edited) == fp);
}
