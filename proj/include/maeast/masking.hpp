#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maeast/tokenizer.hpp"

namespace maeast::masking {

enum class Strategy { PatchRandom, PatchChunked, FrameRandom, FrameChunked };

/// Partition of token indices {0..N-1} into masked and unmasked sets, both
/// sorted ascending.
struct MaskPlan {
  std::vector<Index> masked;
  std::vector<Index> unmasked;
  double p_target = 0.0;
  Strategy strategy = Strategy::PatchRandom;
  std::vector<std::string> warnings;

  Index size() const { return static_cast<Index>(masked.size() + unmasked.size()); }
  double masked_fraction() const {
    return static_cast<double>(masked.size()) / static_cast<double>(size());
  }
};

/// Span masking parameters: each index starts a span of `span_length` with
/// probability `start_probability`, chosen so the expected covered fraction
/// (ignoring sequence-end effects) equals p_target.
struct SpanMaskCalibration {
  Index span_length = 10;
  double start_probability = 0.0;
  double p_target = 0.0;
};

/// Shuffles indices and keeps the first N - round(p*N) unmasked.
MaskPlan mask_random(Index n, double p, std::uint64_t seed, Strategy tag = Strategy::PatchRandom);

/// C x C squares (C uniform in {3,4,5}, fixed per plan) at uniform anchors on
/// the n_time x n_rows grid, clipped at the edges, until at least round(p*N)
/// tokens are covered; random masked tokens are then released down to
/// exactly round(p*N). Grids narrower than 3 fall back to mask_random and
/// record a warning.
MaskPlan mask_patch_chunked(Index n_time, Index n_rows, double p, std::uint64_t seed);

/// P = 1 - (1 - p)^(1/M).
SpanMaskCalibration calibrate_span_p(double p_target, Index span_length = 10);

/// Independent span starts with probability P; each span covers
/// [start, start + M) clipped to the sequence. All-masked or none-masked
/// draws are redrawn, up to 100 attempts.
MaskPlan mask_frame_chunked(Index n, const SpanMaskCalibration& cal, std::uint64_t seed);

/// The same partition for every clip; clips must share a token count.
std::vector<MaskPlan> broadcast_mask(const MaskPlan& plan, std::span<const tokens::TokenBatch> batch);

/// Mean number of masked 4-neighbours (time +/- 1, row +/- 1 on the
/// n_time x n_rows grid) per masked token.
double clustering_statistic(const MaskPlan& plan, Index n_time, Index n_rows);

/// Draws one plan for a clip of the given geometry under `strategy`.
MaskPlan sample_plan(Strategy strategy, Index n_time, Index n_rows, double p, std::uint64_t seed,
                     Index span_length = 10);

struct MaskStats {
  Strategy strategy = Strategy::PatchRandom;
  Index n = 0;
  double p = 0.0;
  Index trials = 0;
  double mean_fraction = 0.0;
  double std_fraction = 0.0;
  double clustering_stat = 0.0;
};

/// Monte Carlo summary over `trials` independently seeded plans.
MaskStats mask_stats(Strategy strategy, Index n, double p, Index trials, std::uint64_t seed, Index n_rows);

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy s);

}  // namespace maeast::masking
