#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tokmerge/bench.hpp"
#include "tokmerge/cost_model.hpp"
#include "tokmerge/model_io.hpp"

namespace {

using namespace tokmerge;

RatePreset preset_from_string(const std::string& s) {
  if (s == "hq") return RatePreset::kHq;
  if (s == "fast") return RatePreset::kFast;
  throw ConfigError("unknown preset: " + s);
}

std::pair<int, int> parse_resolution(const std::string& s) {
  const size_t x = s.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= s.size()) {
    throw ConfigError("resolution must look like 1024x1024, got " + s);
  }
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw ConfigError("resolution must look like 1024x1024, got " + s);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path);
  f << text;
}

void print_record(const BenchmarkRecord& rec) {
  std::printf("variant=%s %dx%d warmup=%d reps=%d seed=%llu\n", rec.variant.c_str(), rec.height,
              rec.width, rec.warmup_runs, rec.timed_runs,
              static_cast<unsigned long long>(rec.seed));
  std::printf("median latency  %.6f s\n", rec.median_seconds);
  std::printf("baseline        %.6f s\n", rec.t_orig_seconds);
  std::printf("speedup         %.4f\n", rec.speedup);
}

int run(int argc, char** argv) {
  CLI::App app{"token-merging attention benchmark and cost model"};
  app.require_subcommand(1);

  // bench
  BenchOptions bo;
  std::string bench_preset = "hq";
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "time one variant and report its speedup");
  bench->add_option("--variant", bo.variant,
                    "original|vanilla|sra|tome_sd|neighbor2d|segformerpp|hq|fast|downsample")
      ->capture_default_str();
  bench->add_option("--height", bo.height)->capture_default_str();
  bench->add_option("--width", bo.width)->capture_default_str();
  bench->add_option("--seed", bo.seed)->capture_default_str();
  bench->add_option("--warmup", bo.warmup_runs)->capture_default_str();
  bench->add_option("--reps", bo.timed_runs)->capture_default_str();
  bench->add_option("--preset", bench_preset, "rates for segformerpp: hq|fast")
      ->check(CLI::IsMember({"hq", "fast"}))
      ->capture_default_str();
  bench->add_option("--rate", bo.tome_rate, "merge rate for tome_sd")->capture_default_str();
  bench->add_option("--threads", bo.threads)->capture_default_str();
  bench->add_option("--out", bench_out, "write the full record as JSON");

  // sweep
  SweepOptions so;
  std::vector<std::string> sweep_res = {"512x512", "1024x1024"};
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "variants x resolutions CSV report");
  sweep->add_option("--variants", so.variants, "variant names")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--resolutions", sweep_res, "HxW list")->delimiter(',')->capture_default_str();
  sweep->add_option("--seed", so.seed)->capture_default_str();
  sweep->add_option("--warmup", so.warmup_runs)->capture_default_str();
  sweep->add_option("--reps", so.timed_runs)->capture_default_str();
  sweep->add_option("--rate", so.tome_rate, "merge rate for tome_sd")->capture_default_str();
  sweep->add_option("--threads", so.threads)->capture_default_str();
  sweep->add_option("--out", sweep_out, "CSV path (default stdout)");

  // cost
  std::string cost_variant = "segformerpp";
  std::string cost_preset = "hq";
  int cost_h = 1024, cost_w = 1024;
  double cost_rate = 0.5;
  std::string cost_config;
  bool cost_json = false;
  auto* cost = app.add_subcommand("cost", "analytical MAC estimates and reduction factors");
  cost->add_option("--variant", cost_variant)->capture_default_str();
  cost->add_option("--preset", cost_preset)->check(CLI::IsMember({"hq", "fast"}))
      ->capture_default_str();
  cost->add_option("--height", cost_h)->capture_default_str();
  cost->add_option("--width", cost_w)->capture_default_str();
  cost->add_option("--rate", cost_rate, "merge rate for tome_sd")->capture_default_str();
  cost->add_option("--config", cost_config, "model config JSON (overrides --variant/--preset)");
  cost->add_flag("--json", cost_json, "emit the report as JSON");

  // gen-weights
  uint64_t gen_seed = 0;
  std::string gen_prefix = "toy";
  std::string gen_variant = "original";
  std::string gen_preset = "hq";
  double gen_rate = 0.5;
  auto* gen = app.add_subcommand("gen-weights", "write seeded toy-model weights + config");
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--out", gen_prefix, "output prefix")->capture_default_str();
  gen->add_option("--variant", gen_variant)->capture_default_str();
  gen->add_option("--preset", gen_preset)->check(CLI::IsMember({"hq", "fast"}))
      ->capture_default_str();
  gen->add_option("--rate", gen_rate, "merge rate for tome_sd")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (bench->parsed()) {
    bo.preset = preset_from_string(bench_preset);
    const BenchmarkRecord rec = run_bench(bo);
    print_record(rec);
    if (!bench_out.empty()) write_text(bench_out, benchmark_record_json(rec) + "\n");
    return 0;
  }

  if (sweep->parsed()) {
    so.resolutions.clear();
    for (const auto& r : sweep_res) so.resolutions.push_back(parse_resolution(r));
    const std::string csv = run_sweep_csv(so);
    if (sweep_out.empty()) {
      std::fputs(csv.c_str(), stdout);
    } else {
      write_text(sweep_out, csv);
      std::printf("wrote %s\n", sweep_out.c_str());
    }
    return 0;
  }

  if (cost->parsed()) {
    ModelConfig config;
    int h = cost_h, w = cost_w;
    if (!cost_config.empty()) {
      config = load_model_config(cost_config);
    } else if (cost_variant == "downsample") {
      config = config_for_variant("original", preset_from_string(cost_preset), cost_rate);
      h /= 2;
      w /= 2;
    } else {
      config = config_for_variant(cost_variant, preset_from_string(cost_preset), cost_rate);
    }
    const CostReport report = model_cost(config, h, w);
    if (cost_json) {
      std::printf("{\"variant\":\"%s\",\"height\":%d,\"width\":%d,"
                  "\"attention_macs\":%.17g,\"scoring_macs\":%.17g,\"linear_macs\":%.17g,"
                  "\"dominant_reduction\":%.17g,\"reduction_factor\":%.17g}\n",
                  variant_name(report.variant), report.height, report.width,
                  report.attention_macs, report.scoring_macs, report.linear_macs,
                  report.dominant_reduction, report.reduction_factor);
    } else {
      std::fputs(format_cost_report(report).c_str(), stdout);
    }
    return 0;
  }

  if (gen->parsed()) {
    const ModelConfig config =
        config_for_variant(gen_variant, preset_from_string(gen_preset), gen_rate);
    const ModelWeights weights = generate_weights(config, gen_seed);
    save_weights(weights, gen_prefix);
    save_model_config(config, gen_prefix + ".config.json");
    std::printf("wrote %s.manifest.json, %s.weights.bin, %s.config.json\n", gen_prefix.c_str(),
                gen_prefix.c_str(), gen_prefix.c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const tokmerge::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
