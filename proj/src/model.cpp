#include "maeast/model.hpp"

#include <fstream>
#include <stdexcept>

#include "maeast/checkpoint.hpp"

namespace maeast::model {

namespace fs = std::filesystem;


void ModelConfig::validate() const {
  if (d <= 0 || d % 2 != 0) throw std::invalid_argument("model width d must be positive and even");
  if (heads <= 0 || d % heads != 0) throw std::invalid_argument("model width d must be divisible by heads");
  if (enc_layers < 0 || dec_layers < 0) throw std::invalid_argument("layer counts must be non-negative");
  if (d_in != tokens::kTokenDim || mode.token_dim() != d_in)
    throw std::invalid_argument("token input width must be 256");
  if (variant == Variant::WithMaskTokens && enc_layers != 0)
    throw std::invalid_argument("the with-mask-tokens baseline runs all depth in the decoder (enc_layers must be 0)");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"enc_layers", cfg.enc_layers},
          {"dec_layers", cfg.dec_layers},
          {"d", cfg.d},
          {"heads", cfg.heads},
          {"d_in", cfg.d_in},
          {"mode", tokens::to_string(cfg.mode.kind)},
          {"variant", to_string(cfg.variant)},
          {"positional_embedding", cfg.positional_embedding}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.enc_layers = j.at("enc_layers").get<Index>();
  cfg.dec_layers = j.at("dec_layers").get<Index>();
  cfg.d = j.at("d").get<Index>();
  cfg.heads = j.at("heads").get<Index>();
  cfg.d_in = j.value("d_in", tokens::kTokenDim);
  cfg.mode = tokens::parse_mode(j.at("mode").get<std::string>());
  cfg.variant = parse_variant(j.at("variant").get<std::string>());
  cfg.positional_embedding = j.value("positional_embedding", true);
  cfg.validate();
  return cfg;
}

Variant parse_variant(const std::string& name) {
  if (name == "mae") return Variant::MaeAst;
  if (name == "with-mask-tokens") return Variant::WithMaskTokens;
  throw std::invalid_argument("unknown model variant '" + name + "' (expected mae or with-mask-tokens)");
}

std::string to_string(Variant v) { return v == Variant::MaeAst ? "mae" : "with-mask-tokens"; }

Index expected_parameter_count(const ModelConfig& cfg) {
  const Index d = cfg.d;
  const Index block = 12 * d * d + 13 * d;
  Index n = cfg.d_in * d + d;
  n += (cfg.enc_layers + cfg.dec_layers) * block;
  if (cfg.enc_layers > 0) n += 2 * d;
  if (cfg.dec_layers > 0) n += 2 * d;
  n += d;
  n += 2 * (d * cfg.d_in + cfg.d_in);
  return n;
}

FlopEstimate flops_estimate(const ModelConfig& cfg, Index n_tokens, double p) {
  const double d = static_cast<double>(cfg.d);
  auto layer = [d](double len) { return 8.0 * len * d * d + 4.0 * len * len * d + 16.0 * len * d * d; };
  const double full = static_cast<double>(n_tokens);
  FlopEstimate est;
  if (cfg.variant == Variant::WithMaskTokens) {
    est.forward = static_cast<double>(cfg.enc_layers + cfg.dec_layers) * layer(full);
  } else {
    const double visible = static_cast<double>(n_tokens - round_count(p, n_tokens));
    est.forward = static_cast<double>(cfg.enc_layers) * layer(visible) + static_cast<double>(cfg.dec_layers) * layer(full);
  }
  est.backward = 2.0 * est.forward;
  return est;
}

namespace {

void check_plans(std::span<const TokenBatch> clips, std::span<const MaskPlan> plans) {
  if (clips.size() != plans.size()) throw std::invalid_argument("one mask plan per clip required");
  if (clips.empty()) throw std::invalid_argument("empty clip batch");
  for (std::size_t b = 0; b < clips.size(); ++b) {
    if (plans[b].size() != clips[b].n_tokens())
      throw std::invalid_argument("mask plan does not partition the tokens of clip '" + clips[b].clip_id + "'");
    if (plans[b].unmasked.empty()) throw std::invalid_argument("mask plan leaves no unmasked tokens");
  }
}

}  // namespace

template <typename T>
MaeAstModel<T>::MaeAstModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const auto block_cfg = cfg_.block();
  embed_ = nn::Linear<T>(params_, "encoder.embed", cfg_.d_in, cfg_.d, rng);
  for (Index i = 0; i < cfg_.enc_layers; ++i)
    encoder_.emplace_back(params_, "encoder.block" + std::to_string(i), block_cfg, rng);
  if (cfg_.enc_layers > 0) encoder_norm_ = std::make_unique<nn::LayerNorm<T>>(params_, "encoder.norm", cfg_.d);
  mask_embedding_ = &params_.add("decoder.mask_embedding", {cfg_.d});
  nn::init_normal(mask_embedding_->value, 0.02, rng);
  for (Index i = 0; i < cfg_.dec_layers; ++i)
    decoder_.emplace_back(params_, "decoder.block" + std::to_string(i), block_cfg, rng);
  if (cfg_.dec_layers > 0) decoder_norm_ = std::make_unique<nn::LayerNorm<T>>(params_, "decoder.norm", cfg_.d);
  recon_head_ = nn::Linear<T>(params_, "decoder.recon_head", cfg_.d, cfg_.d_in, rng);
  class_head_ = nn::Linear<T>(params_, "decoder.class_head", cfg_.d, cfg_.d_in, rng);
}

template <typename T>
bool MaeAstModel<T>::is_encoder_parameter(const std::string& name) {
  return name.rfind("encoder.", 0) == 0;
}

template <typename T>
Tensor<T> MaeAstModel<T>::positional_rows(std::span<const Index> positions) const {
  Index needed = 1;
  for (Index p : positions) needed = std::max(needed, p + 1);
  std::shared_ptr<const Tensor<T>> table;
  {
    std::lock_guard lock(pe_cache_->mutex);
    if (!pe_cache_->table || pe_cache_->table->rows() < needed) {
      const Index rows = std::max<Index>(needed, 512);
      pe_cache_->table = std::make_shared<const Tensor<T>>(nn::sinusoidal_pe<T>(rows, cfg_.d));
    }
    table = pe_cache_->table;
  }
  auto out = Tensor<T>::empty({static_cast<Index>(positions.size()), cfg_.d});
  for (std::size_t r = 0; r < positions.size(); ++r)
    std::copy_n(table->row(positions[r]), cfg_.d, out.row(static_cast<Index>(r)));
  return out;
}

template <typename T>
Var<T> MaeAstModel<T>::embed(std::span<const TokenBatch> clips, std::span<const std::vector<Index>> keep) const {
  Index rows = 0;
  for (const auto& k : keep) rows += static_cast<Index>(k.size());
  auto input = Tensor<T>::empty({rows, cfg_.d_in});
  std::vector<Index> positions;
  positions.reserve(static_cast<std::size_t>(rows));
  Index r = 0;
  for (std::size_t b = 0; b < clips.size(); ++b) {
    for (Index idx : keep[b]) {
      const auto tok = clips[b].token(idx);
      T* dst = input.row(r++);
      for (Index c = 0; c < cfg_.d_in; ++c) dst[c] = static_cast<T>(tok[c]);
      positions.push_back(idx);
    }
  }
  Var<T> x = embed_(Var<T>(std::move(input)));
  if (cfg_.positional_embedding) x = nn::add(x, Var<T>(positional_rows(positions)));
  return x;
}

template <typename T>
Var<T> MaeAstModel<T>::run_stack(Var<T> x, const std::vector<nn::TransformerBlock<T>>& blocks, const Segments& seg,
                                 const char* stack, ForwardTrace* trace) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (trace) trace->layer_rows.push_back(x.value().rows());
    try {
      x = blocks[i](x, seg);
    } catch (const NumericFault& e) {
      throw NumericFault(std::string(stack) + " layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return x;
}

template <typename T>
EncoderOutput<T> MaeAstModel<T>::encode(std::span<const TokenBatch> clips, std::span<const MaskPlan> plans,
                                        ForwardTrace* trace) const {
  check_plans(clips, plans);
  std::vector<std::vector<Index>> keep;
  std::vector<Index> lengths;
  for (const auto& plan : plans) {
    keep.push_back(plan.unmasked);
    lengths.push_back(static_cast<Index>(plan.unmasked.size()));
  }
  EncoderOutput<T> out;
  out.segments = Segments::from_lengths(lengths);
  out.states = run_stack(embed(clips, keep), encoder_, out.segments, "encoder", trace);
  if (encoder_norm_) out.states = (*encoder_norm_)(out.states);
  return out;
}

template <typename T>
EncoderOutput<T> MaeAstModel<T>::encode_all(std::span<const TokenBatch> clips, ForwardTrace* trace) const {
  if (clips.empty()) throw std::invalid_argument("empty clip batch");
  std::vector<std::vector<Index>> keep;
  std::vector<Index> lengths;
  for (const auto& clip : clips) {
    if (clip.n_tokens() < 1) throw std::invalid_argument("clip '" + clip.clip_id + "' has no tokens");
    std::vector<Index> all(static_cast<std::size_t>(clip.n_tokens()));
    for (Index i = 0; i < clip.n_tokens(); ++i) all[i] = i;
    keep.push_back(std::move(all));
    lengths.push_back(clip.n_tokens());
  }
  EncoderOutput<T> out;
  out.segments = Segments::from_lengths(lengths);
  out.states = run_stack(embed(clips, keep), encoder_, out.segments, "encoder", trace);
  if (encoder_norm_) out.states = (*encoder_norm_)(out.states);
  return out;
}

template <typename T>
PretrainOutput<T> MaeAstModel<T>::heads(const Var<T>& full, const Segments& full_seg, std::span<const TokenBatch> clips,
                                        std::span<const MaskPlan> plans) const {
  std::vector<Index> rows, counts;
  Index total = 0;
  for (const auto& plan : plans) total += static_cast<Index>(plan.masked.size());
  auto targets = Tensor<T>::empty({total, cfg_.d_in});
  Index r = 0;
  for (std::size_t b = 0; b < plans.size(); ++b) {
    counts.push_back(static_cast<Index>(plans[b].masked.size()));
    for (Index idx : plans[b].masked) {
      rows.push_back(full_seg.begin(static_cast<Index>(b)) + idx);
      const auto tok = clips[b].token(idx);
      T* dst = targets.row(r++);
      for (Index c = 0; c < cfg_.d_in; ++c) dst[c] = static_cast<T>(tok[c]);
    }
  }
  PretrainOutput<T> out;
  out.hidden = nn::gather_rows(full, rows);
  out.recon_pred = recon_head_(out.hidden);
  out.class_pred = class_head_(out.hidden);
  out.targets = std::move(targets);
  out.segments = Segments::from_lengths(counts);
  return out;
}

template <typename T>
PretrainOutput<T> MaeAstModel<T>::decode(const EncoderOutput<T>& enc, std::span<const TokenBatch> clips,
                                         std::span<const MaskPlan> plans, ForwardTrace* trace) const {
  check_plans(clips, plans);
  if (cfg_.dec_layers < 1) throw std::invalid_argument("pretraining requires at least one decoder layer");
  if (enc.segments.count() != static_cast<Index>(plans.size()))
    throw std::invalid_argument("decode: encoder output covers a different number of clips");
  std::vector<Index> source, positions, lengths;
  for (std::size_t b = 0; b < plans.size(); ++b) {
    const auto& plan = plans[b];
    if (enc.segments.length(static_cast<Index>(b)) != static_cast<Index>(plan.unmasked.size()))
      throw std::invalid_argument("decode: encoder rows do not match the plan's unmasked set");
    std::size_t next_visible = 0;
    for (Index i = 0; i < plan.size(); ++i) {
      if (next_visible < plan.unmasked.size() && plan.unmasked[next_visible] == i) {
        source.push_back(enc.segments.begin(static_cast<Index>(b)) + static_cast<Index>(next_visible));
        ++next_visible;
      } else {
        source.push_back(-1);
      }
      positions.push_back(i);
    }
    lengths.push_back(plan.size());
  }
  const Segments full_seg = Segments::from_lengths(lengths);
  Var<T> x = nn::assemble_rows(enc.states, mask_embedding_->var(), source);
  if (cfg_.positional_embedding) x = nn::add(x, Var<T>(positional_rows(positions)));
  x = run_stack(x, decoder_, full_seg, "decoder", trace);
  x = (*decoder_norm_)(x);
  return heads(x, full_seg, clips, plans);
}

template <typename T>
PretrainOutput<T> MaeAstModel<T>::forward_with_mask_tokens(std::span<const TokenBatch> clips,
                                                           std::span<const MaskPlan> plans, ForwardTrace* trace) const {
  if (cfg_.variant != Variant::WithMaskTokens)
    throw std::invalid_argument("forward_with_mask_tokens requires the with-mask-tokens variant");
  check_plans(clips, plans);
  if (cfg_.dec_layers < 1) throw std::invalid_argument("pretraining requires at least one decoder layer");
  std::vector<std::vector<Index>> keep;
  std::vector<Index> source, positions, lengths;
  Index visible_row = 0;
  for (const auto& plan : plans) {
    keep.push_back(plan.unmasked);
    std::size_t next_visible = 0;
    for (Index i = 0; i < plan.size(); ++i) {
      if (next_visible < plan.unmasked.size() && plan.unmasked[next_visible] == i) {
        source.push_back(visible_row++);
        ++next_visible;
      } else {
        source.push_back(-1);
      }
      positions.push_back(i);
    }
    lengths.push_back(plan.size());
  }
  const Segments full_seg = Segments::from_lengths(lengths);
  Var<T> visible;
  {
    // Projection only; positional embeddings are added once, to all slots.
    Index rows = 0;
    for (const auto& k : keep) rows += static_cast<Index>(k.size());
    auto input = Tensor<T>::empty({rows, cfg_.d_in});
    Index r = 0;
    for (std::size_t b = 0; b < clips.size(); ++b)
      for (Index idx : keep[b]) {
        const auto tok = clips[b].token(idx);
        T* dst = input.row(r++);
        for (Index c = 0; c < cfg_.d_in; ++c) dst[c] = static_cast<T>(tok[c]);
      }
    visible = embed_(Var<T>(std::move(input)));
  }
  Var<T> x = nn::assemble_rows(visible, mask_embedding_->var(), source);
  if (cfg_.positional_embedding) x = nn::add(x, Var<T>(positional_rows(positions)));
  x = run_stack(x, decoder_, full_seg, "decoder", trace);
  x = (*decoder_norm_)(x);
  return heads(x, full_seg, clips, plans);
}

template <typename T>
PretrainOutput<T> MaeAstModel<T>::pretrain_forward(std::span<const TokenBatch> clips, std::span<const MaskPlan> plans,
                                                   ForwardTrace* trace) const {
  if (cfg_.variant == Variant::WithMaskTokens) return forward_with_mask_tokens(clips, plans, trace);
  return decode(encode(clips, plans, trace), clips, plans, trace);
}

template <typename T>
Var<T> MaeAstModel<T>::pooled_encoding(std::span<const TokenBatch> clips, ForwardTrace* trace) const {
  const auto enc = encode_all(clips, trace);
  return nn::segment_mean(enc.states, enc.segments);
}

template <typename T>
ClassifierHead<T>::ClassifierHead(Index d, Index n_classes, std::uint64_t seed) : n_classes_(n_classes) {
  if (n_classes < 1) throw std::invalid_argument("classifier needs at least one class");
  std::mt19937_64 rng(seed);
  linear_ = nn::Linear<T>(params_, "classifier", d, n_classes, rng);
}

template <typename T>
Var<T> finetune_forward(const MaeAstModel<T>& model, std::span<const TokenBatch> clips, const ClassifierHead<T>& head) {
  return head(model.pooled_encoding(clips));
}

template class MaeAstModel<float>;
template class MaeAstModel<double>;
template class ClassifierHead<float>;
template class ClassifierHead<double>;
template Var<float> finetune_forward<float>(const MaeAstModel<float>&, std::span<const TokenBatch>,
                                            const ClassifierHead<float>&);
template Var<double> finetune_forward<double>(const MaeAstModel<double>&, std::span<const TokenBatch>,
                                              const ClassifierHead<double>&);

void save_model_checkpoint(const MaeAstModel<float>& model, const audio::Normalizer& norm, const fs::path& dir) {
  nn::save_parameters(model.parameters(), dir);
  const nlohmann::json sidecar = {
      {"model", to_json(model.config())},
      {"normalizer", {{"mean", norm.mean}, {"std", norm.std}, {"degenerate", norm.degenerate}}}};
  std::ofstream(dir / "model.json") << sidecar.dump(2) << "\n";
}

namespace {
nlohmann::json read_sidecar(const fs::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw std::runtime_error("checkpoint has no model.json: " + dir.string());
  return nlohmann::json::parse(in);
}
}  // namespace

ModelConfig read_checkpoint_config(const fs::path& dir) { return model_config_from_json(read_sidecar(dir).at("model")); }

LoadedModel load_model_checkpoint(const fs::path& dir) {
  const auto sidecar = read_sidecar(dir);
  LoadedModel out{MaeAstModel<float>(model_config_from_json(sidecar.at("model")), 0), {}};
  nn::load_parameters(out.model.parameters(), dir);
  const auto& n = sidecar.at("normalizer");
  out.normalizer.mean = n.at("mean").get<double>();
  out.normalizer.std = n.at("std").get<double>();
  out.normalizer.degenerate = n.value("degenerate", false);
  return out;
}

}  // namespace maeast::model
