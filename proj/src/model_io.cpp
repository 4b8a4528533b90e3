#include "sigmetric/model_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sigmetric/serde.hpp"

namespace sigmetric {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'G', 'M', 'T', 'C', 'K', 'P', '1'};

void write_u64_le(std::ofstream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i)
    buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

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

}  // namespace

void save_checkpoint(const Model<float>& model,
                     const std::filesystem::path& file,
                     const json& provenance) {
  json tensors = json::array();
  for (const auto& p : model.params)
    tensors.push_back(json{{"name", p.name},
                           {"shape", p.value.shape},
                           {"trainable", p.trainable}});
  json head = nullptr;
  if (model.head_cfg) head = *model.head_cfg;
  const json header = {{"format_version", 1},
                       {"encoder", model.encoder_cfg},
                       {"head", head},
                       {"input_leads", model.input_leads},
                       {"step_count", model.step_count},
                       {"target_mean", model.target_mean},
                       {"target_std", model.target_std},
                       {"tensors", tensors},
                       {"provenance", provenance}};
  const std::string header_bytes = header.dump();

  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + file.string());
  out.write(kMagic, 8);
  write_u64_le(out, header_bytes.size());
  out.write(header_bytes.data(),
            static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& p : model.params)
    write_f32_le(out, p.value.values.data(), p.value.values.size());
  if (!out) throw DataError("checkpoint write failed: " + file.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + file.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("not a checkpoint file: " + file.string());
  const std::uint64_t header_len = read_u64_le(in);
  if (!in || header_len == 0 || header_len > (1ull << 30))
    throw ParseError("corrupt checkpoint header length: " + file.string());
  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw ParseError("truncated checkpoint header: " + file.string());

  json header;
  try {
    header = json::parse(header_bytes);
  } catch (const json::exception& e) {
    throw ParseError("malformed checkpoint header: " + std::string(e.what()));
  }

  LoadedCheckpoint loaded;
  try {
    if (header.at("format_version").get<int>() != 1)
      throw ParseError("unsupported checkpoint format version");
    EncoderConfig enc = header.at("encoder").get<EncoderConfig>();
    std::optional<HeadConfig> head;
    if (!header.at("head").is_null())
      head = header.at("head").get<HeadConfig>();
    const int input_leads = header.at("input_leads").get<int>();

    loaded.model = init_model<float>(enc, head, input_leads);
    loaded.model.step_count = header.at("step_count").get<std::int64_t>();
    loaded.model.target_mean = header.at("target_mean").get<double>();
    loaded.model.target_std = header.at("target_std").get<double>();
    loaded.provenance = header.at("provenance");

    const json& tensors = header.at("tensors");
    if (!tensors.is_array() || tensors.size() != loaded.model.params.size())
      throw ParseError("checkpoint tensor table does not match the model");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& p = loaded.model.params[i];
      const json& t = tensors[i];
      if (t.at("name").get<std::string>() != p.name)
        throw ParseError("checkpoint tensor order mismatch at '" + p.name + "'");
      if (t.at("shape").get<std::vector<int>>() != p.value.shape)
        throw ParseError("checkpoint shape mismatch for '" + p.name + "'");
      p.trainable = t.at("trainable").get<bool>();
      read_f32_le(in, p.value.values.data(), p.value.values.size());
      if (!in) throw ParseError("truncated checkpoint blob at '" + p.name + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError("bad checkpoint header field: " + std::string(e.what()));
  }
  loaded.model.mode = Mode::eval;
  return loaded;
}

}  // namespace sigmetric
