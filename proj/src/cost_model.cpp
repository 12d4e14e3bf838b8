#include "tokmerge/cost_model.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "tokmerge/token_merge.hpp"

namespace tokmerge {

namespace {

void check_positive(double n, double d) {
  if (n < 1.0 || d < 1.0) throw ParameterError("token count and dim must be >= 1");
}

void check_sr(int r) {
  if (r < 1) throw ParameterError("sr_ratio must be >= 1");
}

}  // namespace

double tome_sd_factor_from_lambda(double lambda) {
  if (lambda < 1.0) throw ParameterError("lambda must be >= 1");
  return 1.0 / (1.0 / (lambda * lambda) + 0.25);
}

double segformerpp_factor_from_lambdas(int sr_ratio, double lambda_q, double lambda_kv) {
  check_sr(sr_ratio);
  if (lambda_q < 1.0 || lambda_kv < 1.0) throw ParameterError("lambda must be >= 1");
  const double r2 = static_cast<double>(sr_ratio) * sr_ratio;
  const double r4 = r2 * r2;
  return 1.0 / (1.0 / (lambda_kv * lambda_q * r2) + 0.25 * (1.0 + r4) / r4);
}

AttentionCost cost_vanilla(double n_tokens, double dim) {
  check_positive(n_tokens, dim);
  AttentionCost c;
  c.attention_macs = 2.0 * n_tokens * n_tokens * dim;
  c.scoring_macs = 0.0;
  c.dominant_reduction = 1.0;
  c.reduction_factor = 1.0;
  return c;
}

AttentionCost cost_sra(double n_tokens, double dim, int sr_ratio) {
  check_positive(n_tokens, dim);
  check_sr(sr_ratio);
  const double r2 = static_cast<double>(sr_ratio) * sr_ratio;
  AttentionCost c;
  c.attention_macs = 2.0 * n_tokens * n_tokens * dim / r2;
  c.scoring_macs = 0.0;
  c.dominant_reduction = r2;
  c.reduction_factor = r2;
  return c;
}

AttentionCost cost_tome_sd(double n_tokens, double dim, double rate) {
  check_positive(n_tokens, dim);
  const double lambda = lambda_from_rate(rate);
  AttentionCost c;
  c.attention_macs = 2.0 * n_tokens * n_tokens * dim / (lambda * lambda);
  c.scoring_macs = 0.25 * n_tokens * n_tokens * dim;
  c.dominant_reduction = lambda * lambda;
  c.reduction_factor = tome_sd_factor_from_lambda(lambda);
  return c;
}

AttentionCost cost_segformerpp(double n_tokens, double dim, int sr_ratio, double r_q,
                               double r_kv) {
  check_positive(n_tokens, dim);
  check_sr(sr_ratio);
  const double lambda_q = lambda_from_rate(r_q);
  const double lambda_kv = lambda_from_rate(r_kv);
  const double r2 = static_cast<double>(sr_ratio) * sr_ratio;
  const double r4 = r2 * r2;
  AttentionCost c;
  c.attention_macs = 2.0 * n_tokens * n_tokens * dim / (lambda_q * lambda_kv * r2);
  c.scoring_macs = 0.25 * n_tokens * n_tokens * dim * (1.0 + 1.0 / r4);
  c.dominant_reduction = lambda_q * lambda_kv * r2;
  c.reduction_factor = segformerpp_factor_from_lambdas(sr_ratio, lambda_q, lambda_kv);
  return c;
}

AttentionCost cost_neighbor2d(double n_tokens, double dim, int sr_ratio) {
  check_positive(n_tokens, dim);
  check_sr(sr_ratio);
  const double r2 = static_cast<double>(sr_ratio) * sr_ratio;
  AttentionCost c;
  c.attention_macs = 2.0 * (n_tokens / 4.0) * (n_tokens / r2) * dim;
  c.scoring_macs = 0.0;  // pooling is linear in N
  c.dominant_reduction = 4.0 * r2;
  c.reduction_factor = 4.0 * r2;
  return c;
}

CostReport model_cost(const ModelConfig& config, int height, int width) {
  config.validate();
  if (height < 64 || width < 64 || height % 64 != 0 || width % 64 != 0) {
    throw ParameterError("height and width must be positive multiples of 64");
  }

  CostReport report;
  report.variant = config.variant;
  report.height = height;
  report.width = width;
  report.note =
      "factors cover attention matmuls plus similarity scoring; softmax, merge/unmerge "
      "bookkeeping and linear-cost terms (projections, convolutions, FFN) are excluded";

  double vanilla_norm_sum = 0.0;   // sum of depth * N^2 * D (paper normalization)
  double variant_norm_sum = 0.0;   // same, divided by each stage's factor
  int prev_channels = 3;
  for (int i = 0; i < 4; ++i) {
    const StageSpec& s = config.stages[static_cast<size_t>(i)];
    const double n = (static_cast<double>(height) / (1 << (i + 2))) *
                     (static_cast<double>(width) / (1 << (i + 2)));
    const double d = static_cast<double>(s.channels);

    AttentionCost per_block;
    switch (config.variant) {
      case AttentionVariant::kVanilla: per_block = cost_vanilla(n, d); break;
      case AttentionVariant::kSra: per_block = cost_sra(n, d, s.sr_ratio); break;
      case AttentionVariant::kTomeSd: per_block = cost_tome_sd(n, d, s.r_q); break;
      case AttentionVariant::kNeighbor2d: per_block = cost_neighbor2d(n, d, s.sr_ratio); break;
      case AttentionVariant::kSegformerpp:
        per_block = cost_segformerpp(n, d, s.sr_ratio, s.r_q, s.r_kv);
        break;
    }

    // Linear-cost terms, reported but never part of the factors. Merge-rate
    // savings on the K/V projections are ignored (upper bound).
    const bool reduces_kv = config.variant == AttentionVariant::kSra ||
                            config.variant == AttentionVariant::kNeighbor2d ||
                            config.variant == AttentionVariant::kSegformerpp;
    const double n_kv = reduces_kv ? n / (static_cast<double>(s.sr_ratio) * s.sr_ratio) : n;
    double linear = 2.0 * n * d * d + 2.0 * n_kv * d * d;  // q,o and k,v projections
    if (reduces_kv && s.sr_ratio > 1) linear += n * d * d;  // stride-R conv
    linear += 8.0 * n * d * d + 36.0 * n * d;               // MixFFN
    linear *= s.depth;
    if (i == 0) {
      linear += n * d * 49.0 * 3.0;  // 7x7 patch embed
    } else {
      linear += n * d * 9.0 * prev_channels;  // 3x3 downsample
    }

    StageCost& sc = report.stages[static_cast<size_t>(i)];
    sc.n_tokens = n;
    sc.dim = s.channels;
    sc.depth = s.depth;
    sc.attention_macs = per_block.attention_macs * s.depth;
    sc.scoring_macs = per_block.scoring_macs * s.depth;
    sc.linear_macs = linear;
    sc.vanilla_attention_macs = 2.0 * n * n * d * s.depth;
    sc.dominant_reduction = per_block.dominant_reduction;
    sc.reduction_factor = per_block.reduction_factor;

    report.attention_macs += sc.attention_macs;
    report.scoring_macs += sc.scoring_macs;
    report.linear_macs += sc.linear_macs;
    report.vanilla_attention_macs += sc.vanilla_attention_macs;
    vanilla_norm_sum += s.depth * n * n * d;
    variant_norm_sum += s.depth * n * n * d / per_block.reduction_factor;
    prev_channels = s.channels;
  }
  report.dominant_reduction = report.vanilla_attention_macs / report.attention_macs;
  report.reduction_factor = vanilla_norm_sum / variant_norm_sum;
  return report;
}

std::string format_cost_report(const CostReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "cost report: variant=%s %dx%d\n",
                variant_name(report.variant), report.height, report.width);
  out += line;
  out += "stage        N     D depth     attn MACs  scoring MACs   linear MACs   dom.red"
         "    factor\n";
  for (int i = 0; i < 4; ++i) {
    const StageCost& sc = report.stages[static_cast<size_t>(i)];
    std::snprintf(line, sizeof(line), "%5d %8.0f %5d %5d %13.4g %13.4g %13.4g %9.4g %9.4g\n",
                  i + 1, sc.n_tokens, sc.dim, sc.depth, sc.attention_macs, sc.scoring_macs,
                  sc.linear_macs, sc.dominant_reduction, sc.reduction_factor);
    out += line;
  }
  std::snprintf(line, sizeof(line),
                "totals: attention=%.4g scoring=%.4g linear=%.4g (vanilla attention=%.4g)\n",
                report.attention_macs, report.scoring_macs, report.linear_macs,
                report.vanilla_attention_macs);
  out += line;
  std::snprintf(line, sizeof(line),
                "whole-model dominant reduction %.4f, reduction factor vs vanilla %.4f\n",
                report.dominant_reduction, report.reduction_factor);
  out += line;
  out += "note: " + report.note + "\n";
  return out;
}

}  // namespace tokmerge
