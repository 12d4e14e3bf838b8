#include "tokmerge/model_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <utility>

#include <json.hpp>

namespace tokmerge {

namespace {

using nlohmann::json;

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

uint64_t rotl64(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

void store_f32_le(uint8_t* p, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  p[0] = static_cast<uint8_t>(u & 0xff);
  p[1] = static_cast<uint8_t>((u >> 8) & 0xff);
  p[2] = static_cast<uint8_t>((u >> 16) & 0xff);
  p[3] = static_cast<uint8_t>((u >> 24) & 0xff);
}

float load_f32_le(const uint8_t* p) {
  const uint32_t u = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                     (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl64(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl64(s_[3], 45);
  return result;
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 shifted into (0, 1] so the log stays finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = next_double();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = radius * std::sin(theta);
  has_spare_ = true;
  return radius * std::cos(theta);
}

double Rng::next_truncated_normal(double stddev) {
  double z = next_normal();
  while (std::fabs(z) > 2.0) z = next_normal();
  return z * stddev;
}

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  float* d = t.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) d[i] = static_cast<float>(rng.next_normal());
  return t;
}

ModelWeights generate_weights(const ModelConfig& config, uint64_t seed) {
  ModelWeights w = make_weight_skeleton(config);
  Rng rng(seed);
  for_each_tensor(w, [&rng](const std::string& name, Tensor& t) {
    const bool is_weight = name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
    if (!is_weight) return;  // biases stay zero, norm gains stay one
    if (name.find("conv.weight") != std::string::npos ||
        name.find("dw.weight") != std::string::npos) {
      // fan-in-scaled init for convolutions
      int64_t fan_in = t.dim(0) * t.dim(1);
      if (t.ndim() == 4) fan_in *= t.dim(2);
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (int64_t i = 0; i < t.numel(); ++i) {
        t.at(i) = static_cast<float>(rng.next_normal() * stddev);
      }
    } else {
      for (int64_t i = 0; i < t.numel(); ++i) {
        t.at(i) = static_cast<float>(rng.next_truncated_normal(0.02));
      }
    }
  });
  return w;
}

void WeightManifest::validate() const {
  if (format_version != 1) {
    throw FormatError("unsupported weight format version " + std::to_string(format_version));
  }
  std::set<std::string> names;
  uint64_t total = 0;
  uint64_t prev_end = 0;
  for (size_t i = 0; i < tensors.size(); ++i) {
    const ManifestEntry& e = tensors[i];
    if (!names.insert(e.name).second) {
      throw FormatError("duplicate tensor name in manifest: " + e.name);
    }
    uint64_t count = 1;
    for (int64_t d : e.shape) {
      if (d < 1) throw FormatError("bad shape in manifest for " + e.name);
      count *= static_cast<uint64_t>(d);
    }
    const uint64_t bytes = count * 4;
    if (i > 0 && e.offset <= tensors[i - 1].offset) {
      throw FormatError("manifest offsets not strictly increasing at " + e.name);
    }
    if (e.offset < prev_end) {
      throw FormatError("overlapping manifest offsets at " + e.name);
    }
    prev_end = e.offset + bytes;
    if (prev_end > blob_bytes) {
      throw FormatError("tensor " + e.name + " extends past the declared blob length");
    }
    total += bytes;
  }
  if (total != blob_bytes) {
    throw FormatError("manifest tensor sizes sum to " + std::to_string(total) +
                      " bytes but blob length is " + std::to_string(blob_bytes));
  }
}

void save_weights(const ModelWeights& weights, const std::string& prefix) {
  json manifest;
  manifest["format_version"] = 1;
  manifest["tensors"] = json::array();

  std::vector<uint8_t> blob;
  for_each_tensor(weights, [&](const std::string& name, const Tensor& t) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = blob.size();
    manifest["tensors"].push_back(entry);
    const size_t at = blob.size();
    blob.resize(at + static_cast<size_t>(t.numel()) * 4);
    for (int64_t i = 0; i < t.numel(); ++i) {
      store_f32_le(blob.data() + at + static_cast<size_t>(i) * 4, t.at(i));
    }
  });
  manifest["blob_bytes"] = blob.size();

  {
    std::ofstream f(prefix + ".manifest.json");
    if (!f) throw FormatError("cannot write " + prefix + ".manifest.json");
    f << manifest.dump(2) << "\n";
  }
  {
    std::ofstream f(prefix + ".weights.bin", std::ios::binary);
    if (!f) throw FormatError("cannot write " + prefix + ".weights.bin");
    f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  }
}

WeightManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + path + ": " + e.what());
  }
  WeightManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.blob_bytes = j.at("blob_bytes").get<uint64_t>();
    for (const auto& entry : j.at("tensors")) {
      ManifestEntry e;
      e.name = entry.at("name").get<std::string>();
      e.shape = entry.at("shape").get<std::vector<int64_t>>();
      e.offset = entry.at("offset").get<uint64_t>();
      m.tensors.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path + " missing fields: " + e.what());
  }
  m.validate();
  return m;
}

ModelWeights load_weights(const std::string& manifest_path, const std::string& blob_path,
                          const ModelConfig& config) {
  const WeightManifest manifest = read_manifest(manifest_path);

  std::ifstream f(blob_path, std::ios::binary);
  if (!f) throw FormatError("cannot open blob " + blob_path);
  std::vector<uint8_t> blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  // Index the manifest by name and check the blob covers every tensor.
  struct Located {
    const ManifestEntry* entry;
    bool used = false;
  };
  std::vector<std::pair<std::string, Located>> index;
  index.reserve(manifest.tensors.size());
  for (const ManifestEntry& e : manifest.tensors) {
    const uint64_t end = e.offset + [&] {
      uint64_t c = 4;
      for (int64_t d : e.shape) c *= static_cast<uint64_t>(d);
      return c;
    }();
    if (end > blob.size()) {
      throw FormatError("blob truncated: tensor " + e.name + " needs bytes up to " +
                        std::to_string(end) + " but the blob has " + std::to_string(blob.size()));
    }
    index.emplace_back(e.name, Located{&e});
  }
  if (blob.size() != manifest.blob_bytes) {
    throw FormatError("blob length " + std::to_string(blob.size()) +
                      " differs from manifest blob_bytes " + std::to_string(manifest.blob_bytes));
  }

  auto find = [&index](const std::string& name) -> Located* {
    for (auto& kv : index) {
      if (kv.first == name) return &kv.second;
    }
    return nullptr;
  };

  ModelWeights w = make_weight_skeleton(config);
  for_each_tensor(w, [&](const std::string& name, Tensor& t) {
    Located* loc = find(name);
    if (loc == nullptr) {
      throw LoadError("manifest is missing tensor " + name + " required by the config");
    }
    if (loc->entry->shape != t.shape()) {
      throw LoadError("tensor " + name + " has manifest shape incompatible with the config");
    }
    loc->used = true;
    const uint8_t* src = blob.data() + loc->entry->offset;
    for (int64_t i = 0; i < t.numel(); ++i) {
      t.at(i) = load_f32_le(src + static_cast<size_t>(i) * 4);
    }
  });
  for (const auto& kv : index) {
    if (!kv.second.used) {
      throw LoadError("manifest tensor " + kv.first + " has no place in the config");
    }
  }
  return w;
}

void save_model_config(const ModelConfig& config, const std::string& path) {
  json j;
  j["stages"] = json::array();
  for (const StageSpec& s : config.stages) {
    j["stages"].push_back({{"channels", s.channels},
                           {"depth", s.depth},
                           {"heads", s.heads},
                           {"sr_ratio", s.sr_ratio},
                           {"r_q", s.r_q},
                           {"r_kv", s.r_kv}});
  }
  j["variant"] = variant_name(config.variant);
  j["num_classes"] = config.num_classes;
  j["decode_channels"] = config.decode_channels;
  j["proportional_attention"] = config.proportional_attention;
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write config " + path);
  f << j.dump(2) << "\n";
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open config " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError("malformed config " + path + ": " + e.what());
  }
  ModelConfig c;
  try {
    const auto& stages = j.at("stages");
    if (stages.size() != 4) throw FormatError("config must list exactly 4 stages");
    for (size_t i = 0; i < 4; ++i) {
      StageSpec& s = c.stages[i];
      s.channels = stages[i].at("channels").get<int>();
      s.depth = stages[i].at("depth").get<int>();
      s.heads = stages[i].at("heads").get<int>();
      s.sr_ratio = stages[i].at("sr_ratio").get<int>();
      s.r_q = stages[i].at("r_q").get<double>();
      s.r_kv = stages[i].at("r_kv").get<double>();
    }
    c.variant = variant_from_name(j.at("variant").get<std::string>());
    c.num_classes = j.at("num_classes").get<int>();
    c.decode_channels = j.at("decode_channels").get<int>();
    c.proportional_attention = j.value("proportional_attention", false);
  } catch (const json::exception& e) {
    throw FormatError("config " + path + " missing fields: " + e.what());
  }
  c.validate();
  return c;
}

}  // namespace tokmerge
