#pragma once

#include "maeast/model.hpp"

namespace maeast::objectives {

using nn::Segments;
using nn::Tensor;
using nn::Var;

struct LossConfig {
  double lambda = 10.0;
  bool use_generative = true;
  bool use_discriminative = true;

  void validate() const;
};

/// Mean squared error over each clip's K x 256 block, averaged over clips.
template <typename T>
Var<T> recon_loss(const Var<T>& pred, const Tensor<T>& target, const Segments& segments);

/// InfoNCE with raw dot-product logits and negatives drawn only from the same
/// clip's masked positions; per-clip mean, averaged over clips. Every clip
/// needs K >= 2.
template <typename T>
Var<T> infonce_loss(const Var<T>& c, const Tensor<T>& x, const Segments& segments);

/// Single-clip conveniences.
double recon_loss(const Tensor<double>& pred, const Tensor<double>& target);
double infonce_loss(const Tensor<double>& c, const Tensor<double>& x);

template <typename T>
struct JointLoss {
  Var<T> total;
  double recon = 0.0;
  double nce = 0.0;
};

/// total = nce + lambda * recon, each term only when enabled. Disabled terms
/// are still evaluated (without a graph) so they can be logged.
template <typename T>
JointLoss<T> joint_loss(const model::PretrainOutput<T>& out, const LossConfig& cfg);

}  // namespace maeast::objectives
