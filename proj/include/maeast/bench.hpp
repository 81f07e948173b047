#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "maeast/config.hpp"
#include "maeast/model.hpp"

namespace maeast::bench {

struct BenchConfig {
  Index d = 256;
  Index heads = 4;
  Index enc_layers = 12;  // MaeAst split; the baseline runs enc_layers + dec_layers
  Index dec_layers = 2;
  Index n_tokens = 496;
  Index n_rows = 8;
  double mask_ratio = 0.75;
  Index batch_clips = 32;
  Index micro_batch = 8;  // clips per forward/backward; gradients accumulate over the batch
  Index n_batches = 2;    // timed batches
  Index warmup_batches = 3;
  Index epoch_batches = 0;  // batches per pseudo-epoch; 0 means n_batches
  int threads = 0;          // must be pinned (>= 1)
  std::uint64_t seed = 0;

  void validate() const;
  model::ModelConfig mae_model() const;
  model::ModelConfig baseline_model() const;
};

struct VariantResult {
  model::ModelConfig config;
  std::vector<double> batch_seconds;  // timed batches only
  double median_batch_seconds = 0.0;
  double sec_per_epoch = 0.0;
  std::size_t peak_bytes = 0;
};

struct BenchReport {
  BenchConfig config;
  VariantResult mae;
  VariantResult baseline;
  double speedup = 0.0;
  double flops_ratio = 0.0;
  int thread_count = 0;
  std::string precision = "float32";
};

/// Times forward + backward of the joint loss for one variant over synthetic
/// token batches.
VariantResult time_variant(const model::ModelConfig& mcfg, const BenchConfig& cfg);

/// Both variants of the pair at cfg.mask_ratio.
BenchReport run_bench(const BenchConfig& cfg);

/// One baseline measurement shared by MaeAst runs at every ratio; the
/// baseline never drops tokens so its cost does not depend on p.
std::vector<BenchReport> run_bench_sweep(const BenchConfig& cfg, const std::vector<double>& ratios);

/// Baseline peak bytes over MaeAst peak bytes.
double memory_ratio(const BenchReport& r);

nlohmann::json to_json(const BenchReport& r);
std::string csv_header();
std::string csv_row(const BenchReport& r);

BenchConfig bench_config_from(const RunConfig& rc);

}  // namespace maeast::bench
