#include "sigmetric/dataset_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sigmetric/rng.hpp"

namespace sigmetric {

namespace {

using nlohmann::json;

void write_f32_le(std::ofstream& out, const float* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values),
              static_cast<std::streamsize>(count * sizeof(float)));
  } else {
    std::vector<unsigned char> buf(count * 4);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
      buf[4 * i + 0] = static_cast<unsigned char>(u & 0xFF);
      buf[4 * i + 1] = static_cast<unsigned char>((u >> 8) & 0xFF);
      buf[4 * i + 2] = static_cast<unsigned char>((u >> 16) & 0xFF);
      buf[4 * i + 3] = static_cast<unsigned char>((u >> 24) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
  }
}

void read_f32_le(std::ifstream& in, float* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(values),
            static_cast<std::streamsize>(count * sizeof(float)));
  } else {
    std::vector<unsigned char> buf(count * 4);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t u = static_cast<std::uint32_t>(buf[4 * i + 0]) |
                              (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                              (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                              (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
      values[i] = std::bit_cast<float>(u);
    }
  }
}

void export_impl(const std::vector<SignalRecord>& records,
                 const std::vector<std::optional<double>>& mpcwp,
                 const std::filesystem::path& dir) {
  if (records.empty()) throw DataError("refusing to export an empty dataset");
  std::filesystem::create_directories(dir);

  const int leads = records.front().leads;
  const int samples = records.front().samples;
  const int rate = records.front().sample_rate_hz;
  const std::size_t block = static_cast<std::size_t>(leads) * samples * 4;

  json manifest;
  manifest["version"] = 1;
  manifest["leads"] = leads;
  manifest["samples"] = samples;
  manifest["sample_rate_hz"] = rate;
  json recs = json::array();

  std::ofstream bin(dir / "signals.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot open " + (dir / "signals.bin").string());
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SignalRecord& r = records[i];
    r.validate();
    if (r.leads != leads || r.samples != samples || r.sample_rate_hz != rate)
      throw DimensionError("export: record '" + r.record_id +
                           "' shape or rate differs from the first record");
    json jr;
    jr["record_id"] = r.record_id;
    jr["patient_id"] = r.patient_id;
    jr["gender"] = gender_to_string(r.demographics.gender);
    jr["age_years"] = r.demographics.age_years;
    if (mpcwp[i].has_value())
      jr["mpcwp_mmhg"] = *mpcwp[i];
    else
      jr["mpcwp_mmhg"] = nullptr;
    jr["lead_data_offset"] = offset;
    recs.push_back(std::move(jr));
    write_f32_le(bin, r.data.data(), r.data.size());
    offset += block;
  }
  bin.close();
  if (!bin) throw DataError("write failed for " + (dir / "signals.bin").string());
  manifest["records"] = std::move(recs);

  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  if (!mf) throw DataError("cannot open " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << "\n";
  mf.close();
  if (!mf) throw DataError("write failed for " + (dir / "manifest.json").string());
}

}  // namespace

bool DatasetBundle::fully_labeled() const {
  for (const auto& m : mpcwp)
    if (!m.has_value()) return false;
  return true;
}

bool DatasetBundle::fully_unlabeled() const {
  for (const auto& m : mpcwp)
    if (m.has_value()) return false;
  return true;
}

LabeledDataset DatasetBundle::to_labeled(double threshold_mmhg) const {
  LabeledDataset out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!mpcwp[i].has_value())
      throw DataError("record '" + records[i].record_id +
                      "' has no label; dataset is not fully labeled");
    out.records.push_back(records[i]);
    out.labels.push_back(make_hemo_label(*mpcwp[i], threshold_mmhg));
  }
  out.validate();
  return out;
}

UnlabeledDataset DatasetBundle::to_unlabeled() const {
  UnlabeledDataset out;
  out.records = records;
  out.validate();
  return out;
}

void export_dataset(const LabeledDataset& data,
                    const std::filesystem::path& dir) {
  data.validate();
  std::vector<std::optional<double>> mpcwp;
  mpcwp.reserve(data.labels.size());
  for (const auto& l : data.labels) mpcwp.emplace_back(l.mpcwp_mmhg);
  export_impl(data.records, mpcwp, dir);
}

void export_dataset(const UnlabeledDataset& data,
                    const std::filesystem::path& dir) {
  data.validate();
  std::vector<std::optional<double>> mpcwp(data.records.size(), std::nullopt);
  export_impl(data.records, mpcwp, dir);
}

DatasetBundle import_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }

  DatasetBundle bundle;
  try {
    const int version = manifest.at("version").get<int>();
    if (version != 1)
      throw ParseError("unsupported manifest version " + std::to_string(version));
    const int leads = manifest.at("leads").get<int>();
    const int samples = manifest.at("samples").get<int>();
    const int rate = manifest.at("sample_rate_hz").get<int>();
    if (leads <= 0 || samples <= 0 || rate <= 0)
      throw DimensionError("manifest declares a non-positive shape or rate");

    std::ifstream bin(dir / "signals.bin", std::ios::binary);
    if (!bin) throw DataError("cannot open " + (dir / "signals.bin").string());
    bin.seekg(0, std::ios::end);
    const std::uint64_t bin_size = static_cast<std::uint64_t>(bin.tellg());
    const std::size_t block = static_cast<std::size_t>(leads) * samples;

    for (const json& jr : manifest.at("records")) {
      SignalRecord rec;
      rec.record_id = jr.at("record_id").get<std::string>();
      rec.patient_id = jr.at("patient_id").get<std::string>();
      rec.leads = leads;
      rec.samples = samples;
      rec.sample_rate_hz = rate;
      rec.demographics.gender =
          gender_from_string(jr.at("gender").get<std::string>());
      rec.demographics.age_years = jr.at("age_years").get<double>();
      const std::uint64_t offset = jr.at("lead_data_offset").get<std::uint64_t>();
      if (offset + block * 4 > bin_size)
        throw DataError("record '" + rec.record_id +
                        "' runs past the end of signals.bin");
      bin.seekg(static_cast<std::streamoff>(offset));
      rec.data.resize(block);
      read_f32_le(bin, rec.data.data(), block);
      if (!bin)
        throw DataError("read failed for record '" + rec.record_id + "'");
      rec.validate();
      bundle.records.push_back(std::move(rec));
      const json& m = jr.at("mpcwp_mmhg");
      if (m.is_null())
        bundle.mpcwp.emplace_back(std::nullopt);
      else
        bundle.mpcwp.emplace_back(m.get<double>());
    }
  } catch (const json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  return bundle;
}

std::vector<LabelCsvRow> import_labels_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(file.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expected = "record_id,patient_id,gender,age_years,mpcwp_mmhg";
  if (line != expected)
    throw ParseError(file.string() + ":1: bad header '" + line +
                     "', expected '" + expected + "'");
  std::vector<LabelCsvRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5)
      throw ParseError(file.string() + ":" + std::to_string(line_no) +
                       ": expected 5 fields, got " + std::to_string(fields.size()));
    LabelCsvRow row;
    row.record_id = fields[0];
    row.patient_id = fields[1];
    try {
      row.gender = gender_from_string(fields[2]);
      row.age_years = std::stod(fields[3]);
      row.mpcwp_mmhg = std::stod(fields[4]);
    } catch (const std::exception& e) {
      throw ParseError(file.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

LabeledDataset attach_labels(std::vector<SignalRecord> records,
                             const std::vector<LabelCsvRow>& rows,
                             double threshold_mmhg) {
  std::unordered_map<std::string, const LabelCsvRow*> by_id;
  for (const auto& row : rows) {
    if (!by_id.emplace(row.record_id, &row).second)
      throw DataError("duplicate label row for record '" + row.record_id + "'");
  }
  LabeledDataset out;
  for (auto& rec : records) {
    auto it = by_id.find(rec.record_id);
    if (it == by_id.end())
      throw DataError("no label row for record '" + rec.record_id + "'");
    const LabelCsvRow& row = *it->second;
    if (row.patient_id != rec.patient_id)
      throw DataError("record '" + rec.record_id + "': patient_id mismatch ('" +
                      row.patient_id + "' vs '" + rec.patient_id + "')");
    rec.demographics.gender = row.gender;
    rec.demographics.age_years = row.age_years;
    out.labels.push_back(make_hemo_label(row.mpcwp_mmhg, threshold_mmhg));
    out.records.push_back(std::move(rec));
  }
  out.validate();
  return out;
}

std::uint64_t dataset_fingerprint(const std::vector<SignalRecord>& records) {
  std::uint64_t h = 0x811C9DC5A5B3C001ULL;
  for (const auto& r : records) {
    h = mix64(h ^ hash_string(r.record_id));
    h = mix64(h ^ hash_string(r.patient_id));
    h = mix64(h ^ (static_cast<std::uint64_t>(r.leads) << 32 |
                   static_cast<std::uint64_t>(r.samples)));
  }
  return mix64(h ^ records.size());
}

}  // namespace sigmetric
