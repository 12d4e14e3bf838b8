#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tokmerge/encoder.hpp"

namespace tokmerge {

// Benchmark variants are the attention variants plus two harness-level
// entries: "original" (the unmodified SRA baseline every speedup is measured
// against) and "downsample" (bilinear the input to H/2 x W/2, then run the
// original model). "hq" and "fast" abbreviate segformerpp with that preset.
struct BenchOptions {
  std::string variant = "original";
  int height = 512;
  int width = 512;
  uint64_t seed = 0;
  int warmup_runs = 3;
  int timed_runs = 10;
  RatePreset preset = RatePreset::kHq;
  double tome_rate = 0.5;  // used by the tome_sd variant only
  int threads = 1;
};

struct Phase {
  std::string label;
  double begin_s = 0.0;
  double end_s = 0.0;
};

struct BenchmarkRecord {
  std::string variant;
  int height = 0;
  int width = 0;
  int warmup_runs = 0;
  int timed_runs = 0;
  uint64_t seed = 0;
  double median_seconds = 0.0;
  double t_orig_seconds = 0.0;
  double speedup = 1.0;  // t_orig / t_mod; exactly 1.0 for the baseline itself
  std::vector<double> run_seconds;
  std::vector<Phase> phases;  // setup and timing windows, non-overlapping
};

// Builds the seeded toy model and input, then times `timed_runs` forward
// passes (median reported). Setup and input generation happen outside the
// timed window. For any variant other than "original" the baseline is
// measured in the same invocation and the speedup computed from it.
// Configuration errors are thrown before any timing starts.
BenchmarkRecord run_bench(const BenchOptions& options);

struct SweepOptions {
  std::vector<std::string> variants = {"hq", "fast", "neighbor2d", "downsample"};
  std::vector<std::pair<int, int>> resolutions = {{512, 512}, {1024, 1024}};
  uint64_t seed = 0;
  int warmup_runs = 3;
  int timed_runs = 10;
  double tome_rate = 0.5;
  int threads = 1;
};

// Cartesian product of variants x resolutions, one CSV row per cell, columns
// variant,height,width,median_s,speedup (RFC 4180 quoting). The baseline is
// measured once per resolution and shared by that resolution's rows.
std::string run_sweep_csv(const SweepOptions& options);

// Also returns the records behind the CSV, in row order.
std::string run_sweep_csv(const SweepOptions& options, std::vector<BenchmarkRecord>* records);

std::string benchmark_record_json(const BenchmarkRecord& record);
std::string csv_quote(const std::string& field);

// Model config behind a benchmark variant name. "downsample" maps to the
// original config; the input halving happens in the harness.
ModelConfig config_for_variant(const std::string& variant, RatePreset preset, double tome_rate);

}  // namespace tokmerge
