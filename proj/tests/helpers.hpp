#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "maeast/audio_features.hpp"
#include "maeast/masking.hpp"
#include "maeast/model.hpp"
#include "maeast/tokenizer.hpp"

namespace testing {

using maeast::Index;

inline maeast::tokens::TokenBatch random_clip(Index n_time, Index n_rows, std::uint64_t seed, float scale = 0.5f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, scale);
  maeast::tokens::TokenBatch tb;
  tb.n_time_steps = n_time;
  tb.n_channel_rows = n_rows;
  tb.clip_id = "clip" + std::to_string(seed);
  tb.tokens.resize(static_cast<std::size_t>(n_time * n_rows * maeast::tokens::kTokenDim));
  for (auto& v : tb.tokens) v = dist(rng);
  return tb;
}

/// A noisy pure tone at `hz`, `seconds` long.
inline maeast::audio::Waveform tone(double hz, double seconds, std::uint64_t seed, double noise = 0.01) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double ph = phase(rng);
  maeast::audio::Waveform w;
  const auto count = static_cast<std::size_t>(seconds * maeast::audio::kSampleRate);
  w.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    w.samples[i] = static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) /
                                                     maeast::audio::kSampleRate + ph) +
                                      n(rng));
  return w;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("maeast_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline maeast::model::ModelConfig toy_config(Index d = 16, Index heads = 2, Index enc = 1, Index dec = 1) {
  maeast::model::ModelConfig cfg;
  cfg.d = d;
  cfg.heads = heads;
  cfg.enc_layers = enc;
  cfg.dec_layers = dec;
  return cfg;
}

/// Relative error with an absolute floor so that near-zero gradients compare
/// on an absolute scale.
inline double rel_error(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testing

namespace testing {

/// Largest rel_error between the backpropagated gradient of `loss_fn` and
/// central differences, over every element of every parameter. Parameters
/// that receive no gradient are compared against zero.
template <typename F>
double fd_check(std::vector<maeast::nn::Param<double>*> params, F loss_fn, double eps = 1e-5, double floor = 1e-4) {
  for (auto* p : params) p->zero_grad();
  maeast::nn::backward(loss_fn());
  double worst = 0.0;
  maeast::nn::NoGradGuard guard;
  for (auto* p : params) {
    for (Index i = 0; i < p->value.size(); ++i) {
      const double analytic = p->has_grad ? p->grad[i] : 0.0;
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double lp = loss_fn().value()[0];
      p->value[i] = orig - eps;
      const double lm = loss_fn().value()[0];
      p->value[i] = orig;
      worst = std::max(worst, rel_error(analytic, (lp - lm) / (2.0 * eps), floor));
    }
  }
  return worst;
}

inline maeast::nn::Param<double> make_param(const std::string& name, std::vector<Index> shape, std::uint64_t seed,
                                            double scale = 1.0) {
  maeast::nn::Param<double> p;
  p.name = name;
  p.value = maeast::nn::Tensor<double>::zeros(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (Index i = 0; i < p.value.size(); ++i) p.value[i] = d(rng);
  return p;
}

inline maeast::nn::Tensor<double> random_tensor(std::vector<Index> shape, std::uint64_t seed, double scale = 1.0) {
  return make_param("t", std::move(shape), seed, scale).value;
}

}  // namespace testing
