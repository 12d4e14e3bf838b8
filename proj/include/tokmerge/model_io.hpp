#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokmerge/encoder.hpp"
#include "tokmerge/tensor.hpp"

namespace tokmerge {

// xoshiro256++ seeded through SplitMix64. Fixed by specification so that the
// same seed yields the same bytes everywhere, independent of the platform's
// library PRNG.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1), 53-bit resolution.
  double next_double();
  // Standard normal via the Box-Muller transform (pairs cached).
  double next_normal();
  // Normal(0, std^2) with |z| <= 2 std (resampled).
  double next_truncated_normal(double stddev);

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Standard-normal tensor; same seed, same bits.
Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed);

// Seeded weights: truncated-normal (std 0.02) projections, fan-in-scaled
// convolutions, unit layer-norm gains, zero biases.
ModelWeights generate_weights(const ModelConfig& config, uint64_t seed);

// One tensor entry of a weight manifest (byte offsets into the blob).
struct ManifestEntry {
  std::string name;
  std::vector<int64_t> shape;
  uint64_t offset = 0;
};

struct WeightManifest {
  int format_version = 1;
  std::vector<ManifestEntry> tensors;
  uint64_t blob_bytes = 0;

  // Offsets strictly increasing and non-overlapping, sizes summing to
  // blob_bytes, names unique. Throws FormatError otherwise.
  void validate() const;
};

// Writes <prefix>.manifest.json and <prefix>.weights.bin (raw little-endian
// float32 payload).
void save_weights(const ModelWeights& weights, const std::string& prefix);

// Round-trips bitwise. Throws FormatError for malformed files and LoadError
// when the manifest disagrees with the config's shapes.
ModelWeights load_weights(const std::string& manifest_path, const std::string& blob_path,
                          const ModelConfig& config);

WeightManifest read_manifest(const std::string& path);

// Model configs as JSON, mirroring the ModelConfig fields.
void save_model_config(const ModelConfig& config, const std::string& path);
ModelConfig load_model_config(const std::string& path);

}  // namespace tokmerge
