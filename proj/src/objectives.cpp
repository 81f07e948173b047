#include "maeast/objectives.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

#include "maeast/blas.hpp"

namespace maeast::objectives {

using nn::GradSink;
using nn::make_result;

void LossConfig::validate() const {
  if (!use_generative && !use_discriminative)
    throw std::invalid_argument("loss config: at least one of use_generative / use_discriminative must be set");
  if (!std::isfinite(lambda) || lambda < 0.0) throw std::invalid_argument("loss config: lambda must be finite and >= 0");
}

namespace {

template <typename T>
void check_pair(const Tensor<T>& a, const Tensor<T>& b, const Segments& seg, const char* op) {
  if (a.rank() != 2 || a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": prediction and target shapes differ");
  if (seg.count() < 1 || seg.total() != a.rows())
    throw std::invalid_argument(std::string(op) + ": segments do not cover the rows");
}

}  // namespace

template <typename T>
Var<T> recon_loss(const Var<T>& pred, const Tensor<T>& target, const Segments& segments) {
  const Tensor<T>& pv = pred.value();
  check_pair(pv, target, segments, "recon_loss");
  const Index cols = pv.cols(), clips = segments.count();
  double loss = 0.0;
  for (Index b = 0; b < clips; ++b) {
    const Index k = segments.length(b);
    if (k < 1) throw std::invalid_argument("recon_loss: clip with no masked tokens");
    double s = 0.0;
    for (Index r = segments.begin(b); r < segments.end(b); ++r) {
      const T* p = pv.row(r);
      const T* t = target.row(r);
      for (Index c = 0; c < cols; ++c) {
        const double diff = static_cast<double>(p[c]) - static_cast<double>(t[c]);
        s += diff * diff;
      }
    }
    loss += s / static_cast<double>(k * cols);
  }
  auto out = Tensor<T>::full({1}, static_cast<T>(loss / static_cast<double>(clips)));
  return make_result<T>(std::move(out), "recon_loss", {&pred},
                        [pv, target, segments, cols, clips](const Tensor<T>& g, GradSink<T>& sink) {
                          auto d = Tensor<T>::empty(pv.shape());
                          for (Index b = 0; b < clips; ++b) {
                            const T w = g[0] * T(2) / static_cast<T>(segments.length(b) * cols * clips);
                            for (Index r = segments.begin(b); r < segments.end(b); ++r) {
                              const T* p = pv.row(r);
                              const T* t = target.row(r);
                              T* o = d.row(r);
                              for (Index c = 0; c < cols; ++c) o[c] = w * (p[c] - t[c]);
                            }
                          }
                          sink.add(0, std::move(d));
                        });
}

template <typename T>
Var<T> infonce_loss(const Var<T>& c, const Tensor<T>& x, const Segments& segments) {
  const Tensor<T>& cv = c.value();
  check_pair(cv, x, segments, "infonce_loss");
  const Index cols = cv.cols(), clips = segments.count();
  // Softmax of each clip's similarity block, kept for the backward pass.
  std::vector<Tensor<T>> probs;
  probs.reserve(static_cast<std::size_t>(clips));
  double loss = 0.0;
  for (Index b = 0; b < clips; ++b) {
    const Index k = segments.length(b);
    if (k < 2) throw std::invalid_argument("infonce_loss: a clip has fewer than 2 masked tokens, no negatives");
    const Index r0 = segments.begin(b);
    auto sim = Tensor<T>::empty({k, k});
    nn::gemm<T>(nn::Trans::No, nn::Trans::Yes, k, k, cols, T(1), cv.row(r0), cols, x.row(r0), cols, T(0), sim.data(),
                k);
    double s = 0.0;
    for (Index i = 0; i < k; ++i) {
      const T* row = sim.row(i);
      double mx = row[0];
      for (Index j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double z = 0.0;
      for (Index j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
      s += mx + std::log(z) - static_cast<double>(row[i]);
    }
    loss += s / static_cast<double>(k);
    nn::softmax_rows(sim.data(), k, k, k);
    probs.push_back(std::move(sim));
  }
  auto out = Tensor<T>::full({1}, static_cast<T>(loss / static_cast<double>(clips)));
  return make_result<T>(std::move(out), "infonce_loss", {&c},
                        [x, segments, cols, clips, probs = std::move(probs)](const Tensor<T>& g, GradSink<T>& sink) {
                          auto d = Tensor<T>::empty({segments.total(), cols});
                          for (Index b = 0; b < clips; ++b) {
                            const Index k = segments.length(b), r0 = segments.begin(b);
                            auto pm = probs[static_cast<std::size_t>(b)].clone();
                            for (Index i = 0; i < k; ++i) pm(i, i) -= T(1);
                            const T w = g[0] / static_cast<T>(k * clips);
                            nn::gemm<T>(nn::Trans::No, nn::Trans::No, k, cols, k, w, pm.data(), k, x.row(r0), cols,
                                        T(0), d.row(r0), cols);
                          }
                          sink.add(0, std::move(d));
                        });
}

double recon_loss(const Tensor<double>& pred, const Tensor<double>& target) {
  if (pred.rank() != 2 || pred.rows() < 1) throw std::invalid_argument("recon_loss: need a non-empty K x D matrix");
  nn::NoGradGuard guard;
  return recon_loss<double>(Var<double>(pred), target, Segments::uniform(1, pred.rows())).value()[0];
}

double infonce_loss(const Tensor<double>& c, const Tensor<double>& x) {
  if (c.rank() != 2) throw std::invalid_argument("infonce_loss: need a K x D matrix");
  nn::NoGradGuard guard;
  return infonce_loss<double>(Var<double>(c), x, Segments::uniform(1, c.rows())).value()[0];
}

template <typename T>
JointLoss<T> joint_loss(const model::PretrainOutput<T>& out, const LossConfig& cfg) {
  cfg.validate();
  JointLoss<T> res;
  Var<T> recon, nce;
  {
    std::optional<nn::NoGradGuard> off;
    if (!cfg.use_generative) off.emplace();
    recon = recon_loss(out.recon_pred, out.targets, out.segments);
  }
  {
    std::optional<nn::NoGradGuard> off;
    if (!cfg.use_discriminative) off.emplace();
    nce = infonce_loss(out.class_pred, out.targets, out.segments);
  }
  res.recon = static_cast<double>(recon.value()[0]);
  res.nce = static_cast<double>(nce.value()[0]);
  if (cfg.use_generative && cfg.use_discriminative)
    res.total = nn::add(nce, nn::scale(recon, static_cast<T>(cfg.lambda)));
  else if (cfg.use_generative)
    res.total = nn::scale(recon, static_cast<T>(cfg.lambda));
  else
    res.total = nce;
  return res;
}

template Var<float> recon_loss<float>(const Var<float>&, const Tensor<float>&, const Segments&);
template Var<double> recon_loss<double>(const Var<double>&, const Tensor<double>&, const Segments&);
template Var<float> infonce_loss<float>(const Var<float>&, const Tensor<float>&, const Segments&);
template Var<double> infonce_loss<double>(const Var<double>&, const Tensor<double>&, const Segments&);
template JointLoss<float> joint_loss<float>(const model::PretrainOutput<float>&, const LossConfig&);
template JointLoss<double> joint_loss<double>(const model::PretrainOutput<double>&, const LossConfig&);

}  // namespace maeast::objectives
