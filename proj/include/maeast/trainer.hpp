#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "maeast/config.hpp"
#include "maeast/masking.hpp"
#include "maeast/model.hpp"
#include "maeast/objectives.hpp"

namespace maeast::train {

namespace fs = std::filesystem;
using tokens::TokenBatch;

struct TrainConfig {
  fs::path data_dir;
  fs::path out_dir;
  model::ModelConfig model;
  Index max_tokens_per_batch = 15872;
  Index total_steps = 1000;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double lr_power = 1.0;
  Index warmup_steps = 0;
  std::uint64_t seed = 0;
  objectives::LossConfig loss;
  masking::Strategy mask_strategy = masking::Strategy::PatchRandom;
  double mask_ratio = 0.75;
  Index span_length = 10;
  Index log_every = 1;
  Index ckpt_every = 1000;
  /// Trains on the first batch only, with masks drawn once and reused.
  bool overfit = false;
  int threads = 1;

  void validate() const;
};

struct StepMetrics {
  Index step = 0;
  double total = 0.0;
  double recon = 0.0;
  double nce = 0.0;
  double lr = 0.0;
  double tokens_per_sec = 0.0;
  std::size_t peak_bytes = 0;
};

nlohmann::json to_json(const StepMetrics& m);

struct TrainResult {
  std::vector<StepMetrics> log;  // one record per log_every steps
  double initial_loss = 0.0;     // total loss of the first step, before any update
  fs::path final_checkpoint;     // empty when out_dir is unset
};

/// Greedy fill in the given order; a batch closes when the next clip would
/// exceed the budget. Throws naming the clip that cannot fit alone.
std::vector<std::vector<std::size_t>> batch_by_tokens(std::span<const TokenBatch> clips, Index max_tokens);

/// Masks for one batch: chunked patch masks are shared by clips with equal
/// token counts, every other strategy draws per clip.
std::vector<masking::MaskPlan> draw_masks(std::span<const TokenBatch> batch, const TrainConfig& cfg,
                                          std::uint64_t seed);

struct Corpus {
  std::vector<TokenBatch> clips;
  audio::Normalizer normalizer;
};

/// Loads every `.fbank` file under `dir` (sorted by relative path), normalizes
/// with `normalizer.json` when present (fitting corpus statistics otherwise)
/// and tokenizes. Clip ids are relative paths.
Corpus load_corpus(const fs::path& dir, tokens::TokenizationMode mode);
/// Same, but normalizes with the given statistics (e.g. from a checkpoint).
Corpus load_corpus(const fs::path& dir, tokens::TokenizationMode mode, const audio::Normalizer* fixed);

/// Pretraining loop over in-memory clips. Writes checkpoints and
/// `metrics.jsonl` when cfg.out_dir is set.
TrainResult pretrain(model::MaeAstModel<float>& model, const Corpus& corpus, const TrainConfig& cfg);

/// Builds a fresh model from cfg.model and trains on cfg.data_dir.
TrainResult pretrain(const TrainConfig& cfg);

/// Writes a checkpoint to a temporary sibling, then renames it into place.
void write_checkpoint_atomic(const model::MaeAstModel<float>& model, const audio::Normalizer& norm,
                             const fs::path& dir);

TrainConfig train_config_from(const RunConfig& rc);
model::ModelConfig model_config_from(const RunConfig& rc);

struct FinetuneConfig {
  fs::path data_dir;
  fs::path labels;
  fs::path out_dir;
  Index epochs = 100;
  Index batch_clips = 32;
  double lr = 1e-2;
  double weight_decay = 0.0;
  double heldout_fraction = 0.2;
  bool unfreeze = false;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct FinetuneReport {
  double heldout_accuracy = 0.0;
  double train_accuracy = 0.0;
  Index n_train = 0;
  Index n_heldout = 0;
  Index n_classes = 0;
  bool degenerate = false;  // a single class: accuracy is trivially 1
  double final_loss = 0.0;
};

nlohmann::json to_json(const FinetuneReport& r);

/// Trains a linear head on mean-pooled encoder states (and the encoder too
/// when cfg.unfreeze). The held-out split is stratified by label.
FinetuneReport finetune(model::MaeAstModel<float>& model, std::span<const TokenBatch> clips,
                        std::span<const Index> labels, const FinetuneConfig& cfg,
                        model::ClassifierHead<float>* head_out = nullptr);

/// Labels CSV rows `relative_path,label_index`; every row must name a clip in
/// the corpus and every clip must have a label.
std::vector<Index> load_labels(const fs::path& csv, std::span<const TokenBatch> clips);

/// Checkpoint + config driven fine-tuning; writes the classifier, the encoder
/// when unfrozen, and `report.json` under cfg.out_dir.
FinetuneReport finetune(const fs::path& ckpt, const FinetuneConfig& cfg);

FinetuneConfig finetune_config_from(const RunConfig& rc);

}  // namespace maeast::train
