#include "tokmerge/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "tokmerge/model_io.hpp"
#include "tokmerge/ops.hpp"

namespace tokmerge {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct ThreadGuard {
  int prev;
  explicit ThreadGuard(int n) : prev(num_threads()) { set_num_threads(n); }
  ~ThreadGuard() { set_num_threads(prev); }
};

struct VariantSetup {
  ModelConfig config;
  bool downsample_input = false;
};

VariantSetup setup_for_variant(const std::string& variant, RatePreset preset, double tome_rate) {
  VariantSetup s;
  if (variant == "original" || variant == "sra") {
    s.config = toy_model_config(AttentionVariant::kSra);
  } else if (variant == "vanilla") {
    s.config = toy_model_config(AttentionVariant::kVanilla);
  } else if (variant == "neighbor2d") {
    s.config = toy_model_config(AttentionVariant::kNeighbor2d);
  } else if (variant == "tome_sd") {
    s.config = toy_model_config(AttentionVariant::kTomeSd);
    for (StageSpec& st : s.config.stages) {
      st.r_q = tome_rate;
      st.r_kv = tome_rate;
    }
  } else if (variant == "segformerpp") {
    s.config = toy_model_config(AttentionVariant::kSegformerpp);
    apply_rate_preset(s.config, preset);
  } else if (variant == "hq") {
    s.config = toy_model_config(AttentionVariant::kSegformerpp);
    apply_rate_preset(s.config, RatePreset::kHq);
  } else if (variant == "fast") {
    s.config = toy_model_config(AttentionVariant::kSegformerpp);
    apply_rate_preset(s.config, RatePreset::kFast);
  } else if (variant == "downsample") {
    s.config = toy_model_config(AttentionVariant::kSra);
    s.downsample_input = true;
  } else {
    throw ConfigError("unknown benchmark variant: " + variant);
  }
  s.config.validate();
  return s;
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct TimedRuns {
  double median = 0.0;
  std::vector<double> runs;
};

TimedRuns time_forwards(const VariantSetup& setup, const ModelWeights& weights,
                        const Tensor& input, int warmup_runs, int timed_runs,
                        std::vector<Phase>* phases, const std::string& phase_prefix) {
  auto forward = [&] {
    if (setup.downsample_input) {
      const Tensor half = bilinear_resize(input, input.dim(0) / 2, input.dim(1) / 2);
      (void)model_forward(half, setup.config, weights);
    } else {
      (void)model_forward(input, setup.config, weights);
    }
  };

  Phase warm{phase_prefix + "warmup", now_seconds(), 0.0};
  for (int i = 0; i < warmup_runs; ++i) forward();
  warm.end_s = now_seconds();
  phases->push_back(warm);

  TimedRuns out;
  Phase timed{phase_prefix + "timed", now_seconds(), 0.0};
  out.runs.reserve(static_cast<size_t>(timed_runs));
  for (int i = 0; i < timed_runs; ++i) {
    const double t0 = now_seconds();
    forward();
    out.runs.push_back(now_seconds() - t0);
  }
  timed.end_s = now_seconds();
  phases->push_back(timed);
  out.median = median_of(out.runs);
  return out;
}

void validate_options(const std::string& variant, int height, int width, int warmup_runs,
                      int timed_runs, int threads, bool downsample_input) {
  if (timed_runs < 3) throw ParameterError("timed runs must be >= 3");
  if (warmup_runs < 0) throw ParameterError("warmup runs must be >= 0");
  if (threads < 1) throw ParameterError("threads must be >= 1");
  if (height < 64 || width < 64 || height % 64 != 0 || width % 64 != 0) {
    throw ConfigError("bench resolution must be a positive multiple of 64, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  if (downsample_input && (height % 128 != 0 || width % 128 != 0)) {
    throw ConfigError("the downsample variant needs dims divisible by 128 so the halved "
                      "input stays divisible by 64");
  }
  (void)variant;
}

}  // namespace

BenchmarkRecord run_bench(const BenchOptions& options) {
  const VariantSetup setup = setup_for_variant(options.variant, options.preset, options.tome_rate);
  validate_options(options.variant, options.height, options.width, options.warmup_runs,
                   options.timed_runs, options.threads, setup.downsample_input);

  BenchmarkRecord rec;
  rec.variant = options.variant;
  rec.height = options.height;
  rec.width = options.width;
  rec.warmup_runs = options.warmup_runs;
  rec.timed_runs = options.timed_runs;
  rec.seed = options.seed;

  ThreadGuard threads(options.threads);

  Phase gen_w{"generate-weights", now_seconds(), 0.0};
  const ModelWeights weights = generate_weights(setup.config, options.seed);
  gen_w.end_s = now_seconds();
  rec.phases.push_back(gen_w);

  Phase gen_i{"generate-input", now_seconds(), 0.0};
  const Tensor input = random_tensor({options.height, options.width, 3}, options.seed + 1);
  gen_i.end_s = now_seconds();
  rec.phases.push_back(gen_i);

  const TimedRuns timed = time_forwards(setup, weights, input, options.warmup_runs,
                                        options.timed_runs, &rec.phases, "");
  rec.median_seconds = timed.median;
  rec.run_seconds = timed.runs;

  if (options.variant == "original") {
    rec.t_orig_seconds = timed.median;
    rec.speedup = 1.0;
  } else {
    // Same process, same weights, same input: the pairing the speedup needs.
    const VariantSetup baseline = setup_for_variant("original", options.preset, options.tome_rate);
    const TimedRuns base = time_forwards(baseline, weights, input, options.warmup_runs,
                                         options.timed_runs, &rec.phases, "baseline-");
    rec.t_orig_seconds = base.median;
    rec.speedup = base.median / timed.median;
  }
  return rec;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string run_sweep_csv(const SweepOptions& options) {
  return run_sweep_csv(options, nullptr);
}

std::string run_sweep_csv(const SweepOptions& options, std::vector<BenchmarkRecord>* records) {
  if (options.variants.empty()) throw ConfigError("sweep needs at least one variant");
  if (options.resolutions.empty()) throw ConfigError("sweep needs at least one resolution");
  // Validate the whole grid before any timing.
  for (const auto& v : options.variants) {
    const VariantSetup setup = setup_for_variant(v, RatePreset::kHq, options.tome_rate);
    for (const auto& res : options.resolutions) {
      validate_options(v, res.first, res.second, options.warmup_runs, options.timed_runs,
                       options.threads, setup.downsample_input);
    }
  }

  ThreadGuard threads(options.threads);
  const VariantSetup original = setup_for_variant("original", RatePreset::kHq, options.tome_rate);
  const ModelWeights weights = generate_weights(original.config, options.seed);

  std::string csv = "variant,height,width,median_s,speedup\n";
  char line[160];
  for (const auto& res : options.resolutions) {
    const Tensor input = random_tensor({res.first, res.second, 3}, options.seed + 1);
    std::vector<Phase> phases;

    // One baseline measurement per resolution, shared by every row of it.
    const TimedRuns base =
        time_forwards(original, weights, input, options.warmup_runs, options.timed_runs, &phases,
                      "baseline-");
    for (const auto& v : options.variants) {
      BenchmarkRecord rec;
      rec.variant = v;
      rec.height = res.first;
      rec.width = res.second;
      rec.warmup_runs = options.warmup_runs;
      rec.timed_runs = options.timed_runs;
      rec.seed = options.seed;
      rec.t_orig_seconds = base.median;
      if (v == "original") {
        rec.median_seconds = base.median;
        rec.run_seconds = base.runs;
        rec.speedup = 1.0;
      } else {
        const VariantSetup setup = setup_for_variant(v, RatePreset::kHq, options.tome_rate);
        const TimedRuns timed = time_forwards(setup, weights, input, options.warmup_runs,
                                              options.timed_runs, &rec.phases, "");
        rec.median_seconds = timed.median;
        rec.run_seconds = timed.runs;
        rec.speedup = base.median / timed.median;
      }
      std::snprintf(line, sizeof(line), "%s,%d,%d,%.6f,%.4f\n", csv_quote(rec.variant).c_str(),
                    rec.height, rec.width, rec.median_seconds, rec.speedup);
      csv += line;
      if (records != nullptr) records->push_back(std::move(rec));
    }
  }
  return csv;
}

ModelConfig config_for_variant(const std::string& variant, RatePreset preset, double tome_rate) {
  return setup_for_variant(variant, preset, tome_rate).config;
}

std::string benchmark_record_json(const BenchmarkRecord& record) {
  nlohmann::json j;
  j["variant"] = record.variant;
  j["height"] = record.height;
  j["width"] = record.width;
  j["warmup_runs"] = record.warmup_runs;
  j["timed_runs"] = record.timed_runs;
  j["seed"] = record.seed;
  j["median_seconds"] = record.median_seconds;
  j["t_orig_seconds"] = record.t_orig_seconds;
  j["speedup"] = record.speedup;
  j["run_seconds"] = record.run_seconds;
  j["phases"] = nlohmann::json::array();
  for (const Phase& p : record.phases) {
    j["phases"].push_back({{"label", p.label}, {"begin_s", p.begin_s}, {"end_s", p.end_s}});
  }
  return j.dump(2);
}

}  // namespace tokmerge
