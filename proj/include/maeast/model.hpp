#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "json.hpp"
#include "maeast/audio_features.hpp"
#include "maeast/layers.hpp"
#include "maeast/masking.hpp"
#include "maeast/tokenizer.hpp"

namespace maeast::model {

using masking::MaskPlan;
using nn::Segments;
using nn::Tensor;
using nn::Var;
using tokens::TokenBatch;

enum class Variant {
  MaeAst,          // encoder on unmasked tokens, shallow decoder with mask tokens
  WithMaskTokens,  // decoder-only baseline: every token through every layer
};

struct ModelConfig {
  Index enc_layers = 6;
  Index dec_layers = 2;
  Index d = 768;
  Index heads = 12;
  Index d_in = tokens::kTokenDim;
  tokens::TokenizationMode mode = tokens::TokenizationMode::patch();
  Variant variant = Variant::MaeAst;
  /// Experimental switch; always on outside tests.
  bool positional_embedding = true;

  void validate() const;
  nn::TransformerBlockConfig block() const { return {d, heads, 4}; }
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

/// Closed-form trainable parameter count of the pretraining network.
Index expected_parameter_count(const ModelConfig& cfg);

struct FlopEstimate {
  double forward = 0.0;
  double backward = 0.0;  // modeled as 2x forward
  double total() const { return forward + backward; }
};

/// Per-layer cost at length L: attention 8Ld^2 + 4L^2d, MLP 16Ld^2. MaeAst
/// runs enc_layers at the unmasked length and dec_layers at N; the baseline
/// runs every layer at N.
FlopEstimate flops_estimate(const ModelConfig& cfg, Index n_tokens, double p);

/// Optional instrumentation: token rows seen by each transformer layer.
struct ForwardTrace {
  std::vector<Index> layer_rows;
};

template <typename T>
struct EncoderOutput {
  Var<T> states;      // [sum of per-clip rows x d]
  Segments segments;  // rows of each clip
};

/// Pretraining heads applied at masked positions, rows in ascending masked
/// index order, clips stacked.
template <typename T>
struct PretrainOutput {
  Var<T> recon_pred;  // [sum K x 256]
  Var<T> class_pred;  // [sum K x 256]
  Tensor<T> targets;  // normalized input tokens at the masked positions
  Var<T> hidden;      // decoder outputs feeding the heads
  Segments segments;  // K rows per clip
};

template <typename T>
class MaeAstModel {
 public:
  MaeAstModel(const ModelConfig& cfg, std::uint64_t seed);
  MaeAstModel(MaeAstModel&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore<T>& parameters() { return params_; }
  const nn::ParameterStore<T>& parameters() const { return params_; }

  /// Embeds only the unmasked tokens (masked token values are never read),
  /// adds positional embeddings at their original indices and runs the
  /// encoder stack.
  EncoderOutput<T> encode(std::span<const TokenBatch> clips, std::span<const MaskPlan> plans,
                          ForwardTrace* trace = nullptr) const;

  /// Re-inserts the shared mask embedding at masked slots, adds positional
  /// embeddings to every position, runs the decoder and both heads.
  PretrainOutput<T> decode(const EncoderOutput<T>& enc, std::span<const TokenBatch> clips,
                           std::span<const MaskPlan> plans, ForwardTrace* trace = nullptr) const;

  /// Baseline path: every position, masked ones as the mask embedding, goes
  /// through all layers.
  PretrainOutput<T> forward_with_mask_tokens(std::span<const TokenBatch> clips, std::span<const MaskPlan> plans,
                                             ForwardTrace* trace = nullptr) const;

  /// encode + decode, or the baseline path, according to the variant.
  PretrainOutput<T> pretrain_forward(std::span<const TokenBatch> clips, std::span<const MaskPlan> plans,
                                     ForwardTrace* trace = nullptr) const;

  /// Unmasked encoder pass for fine-tuning: returns [clips x d] mean-pooled
  /// final hidden states. Never touches decoder parameters.
  Var<T> pooled_encoding(std::span<const TokenBatch> clips, ForwardTrace* trace = nullptr) const;

  EncoderOutput<T> encode_all(std::span<const TokenBatch> clips, ForwardTrace* trace = nullptr) const;

  static bool is_encoder_parameter(const std::string& name);

 private:
  Tensor<T> positional_rows(std::span<const Index> positions) const;
  Var<T> embed(std::span<const TokenBatch> clips, std::span<const std::vector<Index>> keep) const;
  Var<T> run_stack(Var<T> x, const std::vector<nn::TransformerBlock<T>>& blocks, const Segments& seg,
                   const char* stack, ForwardTrace* trace) const;
  PretrainOutput<T> heads(const Var<T>& full, const Segments& full_seg, std::span<const TokenBatch> clips,
                          std::span<const MaskPlan> plans) const;

  ModelConfig cfg_;
  nn::ParameterStore<T> params_;
  nn::Linear<T> embed_;
  std::vector<nn::TransformerBlock<T>> encoder_;
  std::unique_ptr<nn::LayerNorm<T>> encoder_norm_;
  nn::Param<T>* mask_embedding_ = nullptr;
  std::vector<nn::TransformerBlock<T>> decoder_;
  std::unique_ptr<nn::LayerNorm<T>> decoder_norm_;
  nn::Linear<T> recon_head_;
  nn::Linear<T> class_head_;

  struct PeCache {
    std::mutex mutex;
    std::shared_ptr<const Tensor<T>> table;
  };
  std::unique_ptr<PeCache> pe_cache_ = std::make_unique<PeCache>();
};

/// Linear classifier on mean-pooled encoder states.
template <typename T>
class ClassifierHead {
 public:
  ClassifierHead(Index d, Index n_classes, std::uint64_t seed);
  Var<T> operator()(const Var<T>& pooled) const { return linear_(pooled); }
  nn::ParameterStore<T>& parameters() { return params_; }
  Index classes() const { return n_classes_; }

 private:
  nn::ParameterStore<T> params_;
  nn::Linear<T> linear_;
  Index n_classes_;
};

/// Mean-pooled encoder output through the classifier: logits [clips x classes].
template <typename T>
Var<T> finetune_forward(const MaeAstModel<T>& model, std::span<const TokenBatch> clips, const ClassifierHead<T>& head);

/// Checkpoint directory: parameter manifest + blob, plus `model.json` holding
/// the ModelConfig and normalizer statistics.
void save_model_checkpoint(const MaeAstModel<float>& model, const audio::Normalizer& norm,
                           const std::filesystem::path& dir);

struct LoadedModel {
  MaeAstModel<float> model;
  audio::Normalizer normalizer;
};

LoadedModel load_model_checkpoint(const std::filesystem::path& dir);
ModelConfig read_checkpoint_config(const std::filesystem::path& dir);

}  // namespace maeast::model
