#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "maeast/ops.hpp"

namespace maeast::nn {

/// Owns every trainable tensor of a model, in registration order. Names are
/// unique; pointers returned by add() stay valid for the store's lifetime.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Param<T>& add(const std::string& name, std::vector<Index> shape);
  Param<T>* find(const std::string& name);
  const Param<T>* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return *params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return *params_[i]; }
  Index element_count() const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
};

/// Normal(0, std) truncated to +/- 2 std.
template <typename T>
void init_trunc_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng);

template <typename T>
void init_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, Index in, Index out, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;
  Param<T>& weight() const { return *w_; }
  Param<T>& bias() const { return *b_; }

 private:
  Param<T>* w_ = nullptr;
  Param<T>* b_ = nullptr;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, Index d);
  Var<T> operator()(const Var<T>& x) const;

 private:
  Param<T>* gamma_ = nullptr;
  Param<T>* beta_ = nullptr;
};

struct TransformerBlockConfig {
  Index d = 768;
  Index heads = 12;
  Index mlp_ratio = 4;

  void validate() const;
};

template <typename T>
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterStore<T>& store, const std::string& name,
                         const TransformerBlockConfig& cfg, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x, const Segments& segments) const;
  const Linear<T>& qkv() const { return qkv_; }
  const Linear<T>& out() const { return out_; }

 private:
  Linear<T> qkv_;
  Linear<T> out_;
  Index heads_ = 1;
};

/// Pre-LN block: x + MHSA(LN(x)), then + MLP(LN(.)) with GELU.
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore<T>& store, const std::string& name, const TransformerBlockConfig& cfg,
                   std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x, const Segments& segments) const;
  const MultiHeadSelfAttention<T>& attention() const { return attn_; }
  const Linear<T>& mlp_out() const { return fc2_; }

 private:
  LayerNorm<T> ln1_;
  MultiHeadSelfAttention<T> attn_;
  LayerNorm<T> ln2_;
  Linear<T> fc1_;
  Linear<T> fc2_;
};

/// Fixed sinusoidal embeddings: even columns sin(pos / 10000^(2i/d)), odd
/// columns the matching cos. d must be even.
template <typename T>
Tensor<T> sinusoidal_pe(Index positions, Index d);

}  // namespace maeast::nn
