#pragma once

#include <array>
#include <string>

#include "tokmerge/encoder.hpp"

namespace tokmerge {

// Closed-form cost of one attention call on N tokens of dimension D.
//
// attention_macs counts both attention matmuls (2 * Nq * Nkv * D) with
// floor-free real-valued token counts; scoring_macs is the worst-case
// similarity-scoring overhead (|A|*|B|*D with |A| = |B| = N/2).
// dominant_reduction is the vanilla/variant ratio of attention matmuls
// alone; reduction_factor additionally charges the scoring overhead, using
// the normalization where vanilla attention costs 1 * N^2 * D (so a factor
// below 1 means the variant is slower than vanilla at that size).
struct AttentionCost {
  double attention_macs = 0.0;
  double scoring_macs = 0.0;
  double dominant_reduction = 1.0;
  double reduction_factor = 1.0;
};

AttentionCost cost_vanilla(double n_tokens, double dim);
AttentionCost cost_sra(double n_tokens, double dim, int sr_ratio);
AttentionCost cost_tome_sd(double n_tokens, double dim, double rate);
AttentionCost cost_segformerpp(double n_tokens, double dim, int sr_ratio, double r_q, double r_kv);
AttentionCost cost_neighbor2d(double n_tokens, double dim, int sr_ratio);

// Reduction factors as functions of the lambda reduction factors directly:
//   tome_sd:      1 / (lambda^-2 + 0.25)
//   segformerpp:  1 / (1/(lambda_kv * lambda_q * R^2) + 0.25 * (1 + R^4)/R^4)
double tome_sd_factor_from_lambda(double lambda);
double segformerpp_factor_from_lambdas(int sr_ratio, double lambda_q, double lambda_kv);

struct StageCost {
  double n_tokens = 0.0;
  int dim = 0;
  int depth = 0;
  double attention_macs = 0.0;  // summed over the stage's blocks
  double scoring_macs = 0.0;
  double linear_macs = 0.0;     // projections, convs, FFN (not in the factors)
  double vanilla_attention_macs = 0.0;
  double dominant_reduction = 1.0;
  double reduction_factor = 1.0;
};

struct CostReport {
  AttentionVariant variant = AttentionVariant::kVanilla;
  int height = 0;
  int width = 0;
  std::array<StageCost, 4> stages;
  double attention_macs = 0.0;
  double scoring_macs = 0.0;
  double linear_macs = 0.0;
  double vanilla_attention_macs = 0.0;
  double dominant_reduction = 1.0;  // whole model, attention matmuls only
  double reduction_factor = 1.0;    // whole model, includes scoring overhead
  std::string note;
};

// Evaluates the per-stage attention costs of the config's variant over the
// pyramid token counts N_i = (H/2^{i+1}) * (W/2^{i+1}) and reports the
// whole-model reduction factor against the all-vanilla baseline.
CostReport model_cost(const ModelConfig& config, int height, int width);

// Human-readable per-stage breakdown table.
std::string format_cost_report(const CostReport& report);

}  // namespace tokmerge
