#include "maeast/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

#include "maeast/blas.hpp"
#include "maeast/objectives.hpp"

namespace maeast::bench {

using model::MaeAstModel;
using tokens::TokenBatch;

void BenchConfig::validate() const {
  if (threads < 1) throw ConfigError("threads", "benchmark thread count must be pinned (threads >= 1)");
  if (d <= 0 || d % 2 != 0) throw ConfigError("d", "d must be positive and even");
  if (heads <= 0 || d % heads != 0) throw ConfigError("heads", "heads must divide d");
  if (enc_layers < 0) throw ConfigError("enc_layers", "enc_layers must be >= 0");
  if (dec_layers < 1) throw ConfigError("dec_layers", "dec_layers must be >= 1");
  if (n_rows < 1 || n_tokens < 2 || n_tokens % n_rows != 0)
    throw ConfigError("n_tokens", "n_tokens must be a multiple of n_rows and >= 2");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio", "mask_ratio must lie in [0, 1)");
  if (batch_clips < 1) throw ConfigError("batch_clips", "batch_clips must be >= 1");
  if (micro_batch < 1) throw ConfigError("micro_batch", "micro_batch must be >= 1");
  if (n_batches < 1) throw ConfigError("n_batches", "n_batches must be >= 1");
  if (warmup_batches < 0) throw ConfigError("warmup_batches", "warmup_batches must be >= 0");
  if (epoch_batches < 0) throw ConfigError("epoch_batches", "epoch_batches must be >= 0");
}

model::ModelConfig BenchConfig::mae_model() const {
  model::ModelConfig m;
  m.d = d;
  m.heads = heads;
  m.enc_layers = enc_layers;
  m.dec_layers = dec_layers;
  m.variant = model::Variant::MaeAst;
  return m;
}

model::ModelConfig BenchConfig::baseline_model() const {
  model::ModelConfig m = mae_model();
  m.enc_layers = 0;
  m.dec_layers = enc_layers + dec_layers;
  m.variant = model::Variant::WithMaskTokens;
  return m;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<TokenBatch> synthetic_clips(const BenchConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.5f);
  std::vector<TokenBatch> clips(static_cast<std::size_t>(cfg.batch_clips));
  for (auto& c : clips) {
    c.n_time_steps = cfg.n_tokens / cfg.n_rows;
    c.n_channel_rows = cfg.n_rows;
    c.tokens.resize(static_cast<std::size_t>(cfg.n_tokens * tokens::kTokenDim));
    for (auto& v : c.tokens) v = noise(rng);
  }
  return clips;
}

std::vector<masking::MaskPlan> synthetic_masks(const BenchConfig& cfg, double p, std::uint64_t seed) {
  std::vector<masking::MaskPlan> plans;
  for (Index b = 0; b < cfg.batch_clips; ++b) {
    if (p == 0.0) {
      // Degenerate self-comparison: a single masked token keeps the heads fed.
      masking::MaskPlan plan;
      plan.masked = {0};
      for (Index i = 1; i < cfg.n_tokens; ++i) plan.unmasked.push_back(i);
      plans.push_back(std::move(plan));
    } else {
      plans.push_back(masking::mask_random(cfg.n_tokens, p, mix_seed(seed, static_cast<std::uint64_t>(b))));
    }
  }
  return plans;
}

}  // namespace

VariantResult time_variant(const model::ModelConfig& mcfg, const BenchConfig& cfg) {
  cfg.validate();
  nn::set_thread_count(cfg.threads);
  VariantResult res;
  res.config = mcfg;
  MaeAstModel<float> model(mcfg, cfg.seed);
  objectives::LossConfig loss_cfg;
  // The peak covers parameters, gradients and one micro-batch of activations.
  nn::MemoryTracker::reset_peak();
  const Index total = cfg.warmup_batches + cfg.n_batches;
  for (Index b = 0; b < total; ++b) {
    const auto clips = synthetic_clips(cfg, mix_seed(cfg.seed, 0x636c6970ULL, static_cast<std::uint64_t>(b)));
    const auto plans = synthetic_masks(cfg, cfg.mask_ratio, mix_seed(cfg.seed, 0x6d61736bULL, b));
    const auto t0 = std::chrono::steady_clock::now();
    model.parameters().zero_grad();
    for (Index m0 = 0; m0 < cfg.batch_clips; m0 += cfg.micro_batch) {
      const std::size_t n = static_cast<std::size_t>(std::min(cfg.micro_batch, cfg.batch_clips - m0));
      const std::span<const TokenBatch> cs(clips.data() + m0, n);
      const std::span<const masking::MaskPlan> ps(plans.data() + m0, n);
      const auto out = model.pretrain_forward(cs, ps);
      // A single masked token has no InfoNCE negatives; reconstruction only.
      if (out.segments.length(0) < 2)
        nn::backward(objectives::recon_loss(out.recon_pred, out.targets, out.segments));
      else
        nn::backward(objectives::joint_loss(out, loss_cfg).total);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (b >= cfg.warmup_batches) res.batch_seconds.push_back(secs);
  }
  res.peak_bytes = nn::MemoryTracker::peak_bytes();
  res.median_batch_seconds = median(res.batch_seconds);
  res.sec_per_epoch = res.median_batch_seconds * static_cast<double>(cfg.epoch_batches ? cfg.epoch_batches : cfg.n_batches);
  return res;
}

namespace {

BenchReport assemble(const BenchConfig& cfg, VariantResult mae, const VariantResult& base) {
  BenchReport r;
  r.config = cfg;
  r.mae = std::move(mae);
  r.baseline = base;
  r.speedup = r.baseline.sec_per_epoch / r.mae.sec_per_epoch;
  r.flops_ratio = model::flops_estimate(cfg.baseline_model(), cfg.n_tokens, cfg.mask_ratio).total() /
                  model::flops_estimate(cfg.mae_model(), cfg.n_tokens, cfg.mask_ratio).total();
  r.thread_count = cfg.threads;
  return r;
}

}  // namespace

BenchReport run_bench(const BenchConfig& cfg) {
  cfg.validate();
  auto base = time_variant(cfg.baseline_model(), cfg);
  auto mae = time_variant(cfg.mae_model(), cfg);
  return assemble(cfg, std::move(mae), base);
}

std::vector<BenchReport> run_bench_sweep(const BenchConfig& cfg, const std::vector<double>& ratios) {
  cfg.validate();
  const auto base = time_variant(cfg.baseline_model(), cfg);
  std::vector<BenchReport> out;
  for (double p : ratios) {
    BenchConfig c = cfg;
    c.mask_ratio = p;
    c.validate();
    out.push_back(assemble(c, time_variant(c.mae_model(), c), base));
  }
  return out;
}

double memory_ratio(const BenchReport& r) {
  return static_cast<double>(r.baseline.peak_bytes) / static_cast<double>(r.mae.peak_bytes);
}

namespace {

nlohmann::json variant_json(const VariantResult& v) {
  return {{"model", model::to_json(v.config)},
          {"batch_seconds", v.batch_seconds},
          {"median_batch_seconds", v.median_batch_seconds},
          {"sec_per_epoch", v.sec_per_epoch},
          {"peak_bytes", v.peak_bytes}};
}

}  // namespace

nlohmann::json to_json(const BenchReport& r) {
  const auto& c = r.config;
  return {{"mae", variant_json(r.mae)},
          {"baseline", variant_json(r.baseline)},
          {"speedup", r.speedup},
          {"flops_ratio", r.flops_ratio},
          {"memory_ratio", memory_ratio(r)},
          {"thread_count", r.thread_count},
          {"precision", r.precision},
          {"n_tokens", c.n_tokens},
          {"mask_ratio", c.mask_ratio},
          {"d", c.d},
          {"heads", c.heads},
          {"enc_layers", c.enc_layers},
          {"dec_layers", c.dec_layers},
          {"baseline_layers", c.enc_layers + c.dec_layers},
          {"batch_clips", c.batch_clips},
          {"micro_batch", c.micro_batch},
          {"n_batches", c.n_batches},
          {"warmup_batches", c.warmup_batches},
          {"seed", c.seed}};
}

std::string csv_header() {
  return "d,heads,enc_layers,dec_layers,n_tokens,mask_ratio,threads,mae_sec_per_epoch,baseline_sec_per_epoch,"
         "speedup,flops_ratio,mae_peak_bytes,baseline_peak_bytes,memory_ratio";
}

std::string csv_row(const BenchReport& r) {
  const auto& c = r.config;
  std::ostringstream os;
  os.precision(10);
  os << c.d << ',' << c.heads << ',' << c.enc_layers << ',' << c.dec_layers << ',' << c.n_tokens << ','
     << c.mask_ratio << ',' << r.thread_count << ',' << r.mae.sec_per_epoch << ',' << r.baseline.sec_per_epoch << ','
     << r.speedup << ',' << r.flops_ratio << ',' << r.mae.peak_bytes << ',' << r.baseline.peak_bytes << ','
     << memory_ratio(r);
  return os.str();
}

BenchConfig bench_config_from(const RunConfig& rc) {
  BenchConfig c;
  c.threads = static_cast<int>(rc.get_int("threads"));
  c.d = rc.get_int("d", c.d);
  c.heads = rc.get_int("heads", c.heads);
  c.enc_layers = rc.get_int("enc_layers", c.enc_layers);
  c.dec_layers = rc.get_int("dec_layers", c.dec_layers);
  c.n_tokens = rc.get_int("n_tokens", c.n_tokens);
  c.n_rows = rc.get_int("n_rows", c.n_rows);
  c.mask_ratio = rc.get_double("mask_ratio", c.mask_ratio);
  c.batch_clips = rc.get_int("batch_clips", c.batch_clips);
  c.micro_batch = rc.get_int("micro_batch", c.micro_batch);
  c.n_batches = rc.get_int("n_batches", c.n_batches);
  c.warmup_batches = rc.get_int("warmup_batches", c.warmup_batches);
  c.epoch_batches = rc.get_int("epoch_batches", c.epoch_batches);
  c.seed = static_cast<std::uint64_t>(rc.get_int("seed", 0));
  rc.reject_unused();
  c.validate();
  return c;
}

}  // namespace maeast::bench
