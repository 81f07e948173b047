#pragma once

#include <vector>

#include "maeast/layers.hpp"

namespace maeast::nn {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled
};

template <typename T>
struct AdamSlot {
  Tensor<T> m;
  Tensor<T> v;
};

/// One Adam update of a single parameter at step t (1-based): decoupled
/// weight decay p *= (1 - lr*wd), then the bias-corrected moment step.
/// Throws NumericFault on a non-finite gradient.
template <typename T>
void adam_step(Param<T>& param, AdamSlot<T>& slot, Index t, double lr, const AdamHyper& hyper);

/// Adam over a whole store. Parameters that received no gradient since the
/// last zero_grad() are left untouched, weight decay included.
template <typename T>
class Adam {
 public:
  explicit Adam(ParameterStore<T>& store, AdamHyper hyper = {});
  void step(double lr);
  Index steps_taken() const { return t_; }

 private:
  ParameterStore<T>* store_;
  AdamHyper hyper_;
  std::vector<AdamSlot<T>> slots_;
  Index t_ = 0;
};

/// lr0 * (1 - t/T)^power after an optional linear warmup; reaches 0 at t = T.
double poly_decay_lr(Index t, Index total, double lr0, double power = 1.0, Index warmup = 0);

}  // namespace maeast::nn
