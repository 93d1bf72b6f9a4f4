#include "schn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "schn/errors.hpp"

namespace schn {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'H', 'N', 'C', 'K', 'P', 'T'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

const NamedTensor* CheckpointContents::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const CheckpointContents& contents) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["model"] = contents.config;
  header["extra"] = contents.extra;
  auto table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : contents.tensors) {
    if (numel(t.shape) != t.values.size()) {
      throw ConfigError("checkpoint tensor " + t.name + " has inconsistent shape");
    }
    table.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size();
  }
  header["tensors"] = std::move(table);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : contents.tensors) {
    for (float v : t.values) put_f32(out, v);
  }
  return out;
}

CheckpointContents decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError("not a SCHN checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw FormatError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupted checkpoint header: ") + e.what());
  }
  CheckpointContents out;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint format version " + std::to_string(version) +
                        " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    out.config = header.at("model").get<SCHConfig>();
    out.extra = header.value("extra", nlohmann::json());
    const std::uint8_t* payload = bytes.data() + 16 + header_len;
    const std::uint64_t payload_floats = (bytes.size() - 16 - header_len) / 4;
    std::uint64_t expected = 0;
    for (const auto& entry : header.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (offset != expected || count != numel(t.shape)) {
        throw FormatError("checkpoint tensor table is inconsistent at " + t.name);
      }
      if (offset + count > payload_floats) throw FormatError("truncated checkpoint payload at " + t.name);
      t.values.resize(count);
      for (std::uint64_t i = 0; i < count; ++i) t.values[i] = get_f32(payload + (offset + i) * 4);
      expected += count;
      out.tensors.push_back(std::move(t));
    }
    if (expected * 4 != bytes.size() - 16 - header_len) {
      throw FormatError("checkpoint payload size does not match its header");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupted checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("corrupted checkpoint header: ") + e.what());
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointContents& contents) {
  const auto bytes = encode_checkpoint(contents);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

CheckpointContents model_contents(const SchnModel<float>& model) {
  CheckpointContents out;
  out.config = model.config();
  for (const auto& [name, t] : model.named_parameters()) {
    out.tensors.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  }
  return out;
}

SchnModel<float> model_from_contents(const CheckpointContents& contents) {
  SchnModel<float> model(contents.config);
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : contents.tensors) by_name[t.name] = &t;
  auto params = model.named_parameters();
  for (const auto& [name, param] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing parameter " + name);
    if (it->second->shape != param.shape()) {
      throw FormatError("checkpoint parameter " + name + " has shape " + to_string(it->second->shape) +
                        ", model expects " + to_string(param.shape()));
    }
  }
  for (auto& [name, param] : params) {
    const auto& src = by_name.at(name)->values;
    std::copy(src.begin(), src.end(), param.mutable_data().begin());
  }
  return model;
}

}  // namespace schn
