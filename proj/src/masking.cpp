#include "maeast/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace maeast::masking {

namespace {

void validate_ratio(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("mask ratio must lie in (0, 1)");
}

Index exact_count(Index n, double p) {
  validate_ratio(p);
  if (n < 2) throw std::invalid_argument("masking needs at least 2 tokens");
  const Index k = round_count(p, n);
  if (k < 1 || k > n - 1)
    throw std::invalid_argument("mask ratio " + std::to_string(p) + " leaves an empty side at N=" + std::to_string(n));
  return k;
}

MaskPlan from_flags(const std::vector<char>& flags, double p, Strategy s) {
  MaskPlan plan;
  plan.p_target = p;
  plan.strategy = s;
  for (Index i = 0; i < static_cast<Index>(flags.size()); ++i) (flags[i] ? plan.masked : plan.unmasked).push_back(i);
  return plan;
}

}  // namespace

MaskPlan mask_random(Index n, double p, std::uint64_t seed, Strategy tag) {
  const Index k = exact_count(n, p);
  std::mt19937_64 rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  MaskPlan plan;
  plan.p_target = p;
  plan.strategy = tag;
  plan.unmasked.assign(order.begin(), order.begin() + (n - k));
  plan.masked.assign(order.begin() + (n - k), order.end());
  std::sort(plan.unmasked.begin(), plan.unmasked.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  return plan;
}

MaskPlan mask_patch_chunked(Index n_time, Index n_rows, double p, std::uint64_t seed) {
  const Index n = n_time * n_rows;
  const Index target = exact_count(n, p);
  if (n_rows < 3 || n_time < 3) {
    MaskPlan plan = mask_random(n, p, seed, Strategy::PatchRandom);
    plan.warnings.push_back("grid " + std::to_string(n_time) + "x" + std::to_string(n_rows) +
                            " too small for 3x3 chunks; fell back to random masking");
    return plan;
  }
  std::mt19937_64 rng(seed);
  const Index chunk = std::uniform_int_distribution<Index>(3, 5)(rng);
  std::uniform_int_distribution<Index> pick_t(0, n_time - 1), pick_c(0, n_rows - 1);
  std::vector<char> flags(static_cast<std::size_t>(n), 0);
  Index covered = 0;
  while (covered < target) {
    const Index t0 = pick_t(rng), c0 = pick_c(rng);
    for (Index t = t0; t < std::min(t0 + chunk, n_time); ++t)
      for (Index c = c0; c < std::min(c0 + chunk, n_rows); ++c) {
        char& f = flags[static_cast<std::size_t>(t * n_rows + c)];
        if (!f) {
          f = 1;
          ++covered;
        }
      }
  }
  if (covered > target) {
    std::vector<Index> masked;
    for (Index i = 0; i < n; ++i)
      if (flags[i]) masked.push_back(i);
    std::shuffle(masked.begin(), masked.end(), rng);
    for (Index j = 0; j < covered - target; ++j) flags[masked[j]] = 0;
  }
  return from_flags(flags, p, Strategy::PatchChunked);
}

SpanMaskCalibration calibrate_span_p(double p_target, Index span_length) {
  validate_ratio(p_target);
  if (span_length < 1) throw std::invalid_argument("span length must be >= 1");
  SpanMaskCalibration cal;
  cal.span_length = span_length;
  cal.p_target = p_target;
  cal.start_probability = 1.0 - std::pow(1.0 - p_target, 1.0 / static_cast<double>(span_length));
  return cal;
}

MaskPlan mask_frame_chunked(Index n, const SpanMaskCalibration& cal, std::uint64_t seed) {
  if (n <= cal.span_length) throw std::invalid_argument("frame-chunked masking needs N > span length");
  if (cal.start_probability < 0.0 || cal.start_probability > 1.0)
    throw std::invalid_argument("span start probability must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution starts(cal.start_probability);
  std::vector<char> flags(static_cast<std::size_t>(n));
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::fill(flags.begin(), flags.end(), 0);
    Index covered = 0;
    for (Index i = 0; i < n; ++i) {
      if (!starts(rng)) continue;
      for (Index j = i; j < std::min(i + cal.span_length, n); ++j) {
        if (!flags[j]) {
          flags[j] = 1;
          ++covered;
        }
      }
    }
    if (covered > 0 && covered < n) return from_flags(flags, cal.p_target, Strategy::FrameChunked);
  }
  throw std::runtime_error("frame-chunked masking: 100 consecutive degenerate draws (all or nothing masked)");
}

std::vector<MaskPlan> broadcast_mask(const MaskPlan& plan, std::span<const tokens::TokenBatch> batch) {
  std::vector<MaskPlan> out;
  out.reserve(batch.size());
  for (const auto& tb : batch) {
    if (tb.n_tokens() != plan.size())
      throw std::invalid_argument("broadcast_mask: clip '" + tb.clip_id + "' has " + std::to_string(tb.n_tokens()) +
                                  " tokens, plan covers " + std::to_string(plan.size()));
    out.push_back(plan);
  }
  return out;
}

double clustering_statistic(const MaskPlan& plan, Index n_time, Index n_rows) {
  if (n_time * n_rows != plan.size()) throw std::invalid_argument("clustering_statistic: grid does not match plan");
  if (plan.masked.empty()) return 0.0;
  std::vector<char> flags(static_cast<std::size_t>(plan.size()), 0);
  for (Index i : plan.masked) flags[i] = 1;
  Index neighbours = 0;
  for (Index i : plan.masked) {
    const Index t = i / n_rows, c = i % n_rows;
    if (t > 0 && flags[i - n_rows]) ++neighbours;
    if (t + 1 < n_time && flags[i + n_rows]) ++neighbours;
    if (c > 0 && flags[i - 1]) ++neighbours;
    if (c + 1 < n_rows && flags[i + 1]) ++neighbours;
  }
  return static_cast<double>(neighbours) / static_cast<double>(plan.masked.size());
}

MaskPlan sample_plan(Strategy strategy, Index n_time, Index n_rows, double p, std::uint64_t seed, Index span_length) {
  const Index n = n_time * n_rows;
  switch (strategy) {
    case Strategy::PatchRandom:
    case Strategy::FrameRandom:
      return mask_random(n, p, seed, strategy);
    case Strategy::PatchChunked:
      return mask_patch_chunked(n_time, n_rows, p, seed);
    case Strategy::FrameChunked:
      return mask_frame_chunked(n, calibrate_span_p(p, span_length), seed);
  }
  throw std::logic_error("unhandled masking strategy");
}

MaskStats mask_stats(Strategy strategy, Index n, double p, Index trials, std::uint64_t seed, Index n_rows) {
  if (trials < 1) throw std::invalid_argument("mask_stats: trials must be >= 1");
  if (n_rows < 1 || n % n_rows != 0) throw std::invalid_argument("mask_stats: N must be a multiple of the row count");
  const Index n_time = n / n_rows;
  MaskStats st;
  st.strategy = strategy;
  st.n = n;
  st.p = p;
  st.trials = trials;
  double sum = 0.0, sum_sq = 0.0, cluster = 0.0;
  for (Index k = 0; k < trials; ++k) {
    const MaskPlan plan = sample_plan(strategy, n_time, n_rows, p, mix_seed(seed, static_cast<std::uint64_t>(k)));
    const double f = plan.masked_fraction();
    sum += f;
    sum_sq += f * f;
    cluster += clustering_statistic(plan, n_time, n_rows);
  }
  const double t = static_cast<double>(trials);
  st.mean_fraction = sum / t;
  st.std_fraction = std::sqrt(std::max(0.0, sum_sq / t - st.mean_fraction * st.mean_fraction));
  st.clustering_stat = cluster / t;
  return st;
}

Strategy parse_strategy(const std::string& name) {
  if (name == "patch-random") return Strategy::PatchRandom;
  if (name == "patch-chunked") return Strategy::PatchChunked;
  if (name == "frame-random") return Strategy::FrameRandom;
  if (name == "frame-chunked") return Strategy::FrameChunked;
  throw std::invalid_argument("unknown masking strategy '" + name +
                              "' (expected patch-random, patch-chunked, frame-random or frame-chunked)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::PatchRandom: return "patch-random";
    case Strategy::PatchChunked: return "patch-chunked";
    case Strategy::FrameRandom: return "frame-random";
    case Strategy::FrameChunked: return "frame-chunked";
  }
  return "unknown";
}

}  // namespace maeast::masking
