#include "maeast/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace maeast::nn {

template <typename T>
void adam_step(Param<T>& param, AdamSlot<T>& slot, Index t, double lr, const AdamHyper& hyper) {
  if (t < 1) throw std::invalid_argument("adam_step: step index is 1-based");
  if (!param.grad.defined() || param.grad.size() != param.value.size())
    throw std::invalid_argument("adam_step: gradient missing or mis-shaped for " + param.name);
  ensure_finite(param.grad, "gradient of " + param.name);
  if (!slot.m.defined()) {
    slot.m = Tensor<T>::zeros(param.value.shape());
    slot.v = Tensor<T>::zeros(param.value.shape());
  }
  if (slot.m.size() != param.value.size()) throw std::invalid_argument("adam_step: state shape mismatch");

  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  const T decay = static_cast<T>(1.0 - lr * hyper.weight_decay);
  const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
  T* p = param.value.data();
  const T* g = param.grad.data();
  T* m = slot.m.data();
  T* v = slot.v.data();
  for (Index i = 0; i < param.value.size(); ++i) {
    p[i] *= decay;
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    const double mhat = static_cast<double>(m[i]) / bc1;
    const double vhat = static_cast<double>(v[i]) / bc2;
    p[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + hyper.eps));
  }
}

template <typename T>
Adam<T>::Adam(ParameterStore<T>& store, AdamHyper hyper)
    : store_(&store), hyper_(hyper), slots_(store.size()) {}

template <typename T>
void Adam<T>::step(double lr) {
  ++t_;
  for (std::size_t i = 0; i < store_->size(); ++i) {
    Param<T>& p = (*store_)[i];
    if (!p.has_grad) continue;
    adam_step(p, slots_[i], t_, lr, hyper_);
  }
}

double poly_decay_lr(Index t, Index total, double lr0, double power, Index warmup) {
  if (total <= 0) throw std::invalid_argument("poly_decay_lr: total steps must be positive");
  if (t < 0 || t > total) throw std::invalid_argument("poly_decay_lr: step out of range");
  if (warmup < 0 || (warmup > 0 && warmup >= total))
    throw std::invalid_argument("poly_decay_lr: warmup must be in [0, total)");
  if (t < warmup) return lr0 * static_cast<double>(t + 1) / static_cast<double>(warmup);
  const double progress = static_cast<double>(t - warmup) / static_cast<double>(total - warmup);
  return lr0 * std::pow(1.0 - progress, power);
}

template void adam_step<float>(Param<float>&, AdamSlot<float>&, Index, double, const AdamHyper&);
template void adam_step<double>(Param<double>&, AdamSlot<double>&, Index, double, const AdamHyper&);
template class Adam<float>;
template class Adam<double>;

}  // namespace maeast::nn
