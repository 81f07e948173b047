#include "maeast/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace maeast::nn {

template <typename T>
Param<T>& ParameterStore<T>::add(const std::string& name, std::vector<Index> shape) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Param<T>>();
  p->name = name;
  p->value = Tensor<T>::zeros(std::move(shape));
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
Param<T>* ParameterStore<T>::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <typename T>
const Param<T>* ParameterStore<T>::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <typename T>
Index ParameterStore<T>::element_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename T>
void init_trunc_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Index i = 0; i < t.size(); ++i) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    t[i] = static_cast<T>(z * stddev);
  }
}

template <typename T>
void init_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, Index in, Index out,
                  std::mt19937_64& rng)
    : w_(&store.add(name + ".weight", {in, out})), b_(&store.add(name + ".bias", {out})) {
  init_trunc_normal(w_->value, 0.02, rng);
}

template <typename T>
Var<T> Linear<T>::operator()(const Var<T>& x) const {
  return linear(x, w_->var(), b_->var());
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name, Index d)
    : gamma_(&store.add(name + ".gamma", {d})), beta_(&store.add(name + ".beta", {d})) {
  std::fill_n(gamma_->value.data(), d, T(1));
}

template <typename T>
Var<T> LayerNorm<T>::operator()(const Var<T>& x) const {
  return layer_norm(x, gamma_->var(), beta_->var());
}

void TransformerBlockConfig::validate() const {
  if (d <= 0 || heads <= 0 || d % heads != 0)
    throw std::invalid_argument("transformer width must be divisible by the head count");
  if (mlp_ratio <= 0) throw std::invalid_argument("mlp_ratio must be positive");
}

template <typename T>
MultiHeadSelfAttention<T>::MultiHeadSelfAttention(ParameterStore<T>& store, const std::string& name,
                                                  const TransformerBlockConfig& cfg, std::mt19937_64& rng)
    : qkv_(store, name + ".qkv", cfg.d, 3 * cfg.d, rng),
      out_(store, name + ".out", cfg.d, cfg.d, rng),
      heads_(cfg.heads) {
  cfg.validate();
}

template <typename T>
Var<T> MultiHeadSelfAttention<T>::operator()(const Var<T>& x, const Segments& segments) const {
  return out_(attention(qkv_(x), segments, heads_));
}

template <typename T>
TransformerBlock<T>::TransformerBlock(ParameterStore<T>& store, const std::string& name,
                                      const TransformerBlockConfig& cfg, std::mt19937_64& rng)
    : ln1_(store, name + ".ln1", cfg.d),
      attn_(store, name + ".attn", cfg, rng),
      ln2_(store, name + ".ln2", cfg.d),
      fc1_(store, name + ".mlp.fc1", cfg.d, cfg.mlp_ratio * cfg.d, rng),
      fc2_(store, name + ".mlp.fc2", cfg.mlp_ratio * cfg.d, cfg.d, rng) {}

template <typename T>
Var<T> TransformerBlock<T>::operator()(const Var<T>& x, const Segments& segments) const {
  Var<T> h = add(x, attn_(ln1_(x), segments));
  return add(h, fc2_(gelu(fc1_(ln2_(h)))));
}

template <typename T>
Tensor<T> sinusoidal_pe(Index positions, Index d) {
  if (d <= 0 || d % 2 != 0) throw std::invalid_argument("sinusoidal_pe: width must be even");
  auto pe = Tensor<T>::empty({positions, d});
  for (Index pos = 0; pos < positions; ++pos) {
    for (Index i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, 2 * i) = static_cast<T>(std::sin(angle));
      pe(pos, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

#define MAEAST_INSTANTIATE_LAYERS(T)                                      \
  template class ParameterStore<T>;                                       \
  template class Linear<T>;                                               \
  template class LayerNorm<T>;                                            \
  template class MultiHeadSelfAttention<T>;                               \
  template class TransformerBlock<T>;                                     \
  template void init_trunc_normal<T>(Tensor<T>&, double, std::mt19937_64&); \
  template void init_normal<T>(Tensor<T>&, double, std::mt19937_64&);     \
  template Tensor<T> sinusoidal_pe<T>(Index, Index);

MAEAST_INSTANTIATE_LAYERS(float)
MAEAST_INSTANTIATE_LAYERS(double)

}  // namespace maeast::nn
