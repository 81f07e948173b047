#include "maeast/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "maeast/blas.hpp"

namespace maeast::nn {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

template <typename T>
Tensor<T> column_sums(const Tensor<T>& g) {
  auto out = Tensor<T>::zeros({g.cols()});
  T* o = out.data();
  for (Index r = 0; r < g.rows(); ++r) {
    const T* row = g.row(r);
    for (Index c = 0; c < g.cols(); ++c) o[c] += row[c];
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  require(xv.rank() == 2 && wv.rank() == 2, "linear: x and W must be matrices");
  require(xv.cols() == wv.rows(), "linear: inner dimensions disagree");
  const Index rows = xv.rows(), in = wv.rows(), out_dim = wv.cols();
  auto out = Tensor<T>::empty({rows, out_dim});
  T beta = 0;
  if (b.defined()) {
    require(b.value().size() == out_dim, "linear: bias length disagrees with W");
    const T* bv = b.value().data();
    for (Index r = 0; r < rows; ++r) std::copy_n(bv, out_dim, out.row(r));
    beta = 1;
  }
  gemm<T>(Trans::No, Trans::No, rows, out_dim, in, T(1), xv.data(), in, wv.data(), out_dim, beta,
          out.data(), out_dim);

  const bool has_bias = b.defined();
  return make_result<T>(std::move(out), "linear", {&x, &w, &b},
                        [xv, wv, rows, in, out_dim, has_bias](const Tensor<T>& g, GradSink<T>& sink) {
                          if (sink.needs(0)) {
                            auto dx = Tensor<T>::empty({rows, in});
                            gemm<T>(Trans::No, Trans::Yes, rows, in, out_dim, T(1), g.data(), out_dim,
                                    wv.data(), out_dim, T(0), dx.data(), in);
                            sink.add(0, std::move(dx));
                          }
                          if (sink.needs(1)) {
                            auto dw = Tensor<T>::empty({in, out_dim});
                            gemm<T>(Trans::Yes, Trans::No, in, out_dim, rows, T(1), xv.data(), in,
                                    g.data(), out_dim, T(0), dw.data(), out_dim);
                            sink.add(1, std::move(dw));
                          }
                          if (has_bias && sink.needs(2)) sink.add(2, column_sums(g));
                        });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.value().size() == b.value().size(), "add: size mismatch");
  auto out = Tensor<T>::empty(a.value().shape());
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* o = out.data();
  for (Index i = 0; i < out.size(); ++i) o[i] = av[i] + bv[i];
  return make_result<T>(std::move(out), "add", {&a, &b}, [](const Tensor<T>& g, GradSink<T>& sink) {
    sink.add(0, g);
    sink.add(1, g);
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  auto out = Tensor<T>::empty(x.value().shape());
  for (Index i = 0; i < out.size(); ++i) out[i] = x.value()[i] * factor;
  return make_result<T>(std::move(out), "scale", {&x}, [factor](const Tensor<T>& g, GradSink<T>& sink) {
    auto dx = Tensor<T>::empty(g.shape());
    for (Index i = 0; i < g.size(); ++i) dx[i] = g[i] * factor;
    sink.add(0, std::move(dx));
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Tensor<T>& xv = x.value();
  require(xv.rank() == 2, "layer_norm: x must be a matrix");
  const Index rows = xv.rows(), d = xv.cols();
  require(gamma.value().size() == d && beta.value().size() == d, "layer_norm: affine size mismatch");
  auto xhat = Tensor<T>::empty({rows, d});
  auto rstd = Tensor<T>::empty({rows});
  auto out = Tensor<T>::empty({rows, d});
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  for (Index r = 0; r < rows; ++r) {
    const T* xr = xv.row(r);
    T mean = 0;
    for (Index c = 0; c < d; ++c) mean += xr[c];
    mean /= static_cast<T>(d);
    T var = 0;
    for (Index c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    T* hr = xhat.row(r);
    T* orow = out.row(r);
    for (Index c = 0; c < d; ++c) {
      hr[c] = (xr[c] - mean) * rs;
      orow[c] = hr[c] * gv[c] + bv[c];
    }
  }
  Tensor<T> gamma_v = gamma.value();
  return make_result<T>(
      std::move(out), "layer_norm", {&x, &gamma, &beta},
      [xhat, rstd, gamma_v, rows, d](const Tensor<T>& g, GradSink<T>& sink) {
        if (sink.needs(1)) {
          auto dg = Tensor<T>::zeros({d});
          for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < d; ++c) dg[c] += g(r, c) * xhat(r, c);
          sink.add(1, std::move(dg));
        }
        if (sink.needs(2)) sink.add(2, column_sums(g));
        if (sink.needs(0)) {
          auto dx = Tensor<T>::empty({rows, d});
          const T* gv = gamma_v.data();
          for (Index r = 0; r < rows; ++r) {
            const T* gr = g.row(r);
            const T* hr = xhat.row(r);
            T mean_dh = 0, mean_dh_h = 0;
            for (Index c = 0; c < d; ++c) {
              const T dh = gr[c] * gv[c];
              mean_dh += dh;
              mean_dh_h += dh * hr[c];
            }
            mean_dh /= static_cast<T>(d);
            mean_dh_h /= static_cast<T>(d);
            T* dr = dx.row(r);
            for (Index c = 0; c < d; ++c)
              dr[c] = rstd[r] * (gr[c] * gv[c] - mean_dh - hr[c] * mean_dh_h);
          }
          sink.add(0, std::move(dx));
        }
      });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  auto out = Tensor<T>::empty(xv.shape());
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  const T* in = xv.data();
  T* o = out.data();
  for (Index i = 0; i < out.size(); ++i) o[i] = T(0.5) * in[i] * (T(1) + std::erf(in[i] * inv_sqrt2));
  return make_result<T>(std::move(out), "gelu", {&x}, [xv](const Tensor<T>& g, GradSink<T>& sink) {
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    auto dx = Tensor<T>::empty(g.shape());
    const T* in = xv.data();
    for (Index i = 0; i < dx.size(); ++i) {
      const T v = in[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      dx[i] = g[i] * (cdf + v * pdf);
    }
    sink.add(0, std::move(dx));
  });
}

template <typename T>
void softmax_rows(T* data, Index rows, Index cols, Index ld) {
  for (Index r = 0; r < rows; ++r) {
    T* row = data + r * ld;
    T mx = row[0];
    for (Index c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum = 0;
    for (Index c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    const T inv = T(1) / sum;
    for (Index c = 0; c < cols; ++c) row[c] *= inv;
  }
}

template <typename T>
Var<T> attention(const Var<T>& qkv, const Segments& segments, Index heads) {
  const Tensor<T>& qv = qkv.value();
  require(qv.rank() == 2 && qv.cols() % 3 == 0, "attention: qkv must be [R x 3d]");
  const Index d = qv.cols() / 3;
  require(heads >= 1 && d % heads == 0, "attention: width must be divisible by heads");
  require(segments.total() == qv.rows(), "attention: segments do not cover qkv rows");
  const Index dh = d / heads, ld = 3 * d;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));

  std::vector<Index> prob_offsets{0};
  for (Index b = 0; b < segments.count(); ++b) {
    require(segments.length(b) >= 1, "attention: empty segment");
    prob_offsets.push_back(prob_offsets.back() + heads * segments.length(b) * segments.length(b));
  }
  auto probs = Tensor<T>::empty({prob_offsets.back()});
  auto out = Tensor<T>::empty({qv.rows(), d});

  for (Index b = 0; b < segments.count(); ++b) {
    const Index len = segments.length(b), r0 = segments.begin(b);
    for (Index h = 0; h < heads; ++h) {
      const T* q = qv.data() + r0 * ld + h * dh;
      const T* k = q + d;
      const T* v = q + 2 * d;
      T* p = probs.data() + prob_offsets[b] + h * len * len;
      gemm<T>(Trans::No, Trans::Yes, len, len, dh, scale_factor, q, ld, k, ld, T(0), p, len);
      softmax_rows(p, len, len, len);
      gemm<T>(Trans::No, Trans::No, len, dh, len, T(1), p, len, v, ld, T(0), out.data() + r0 * d + h * dh, d);
    }
  }

  return make_result<T>(
      std::move(out), "attention", {&qkv},
      [qv, probs, segments, prob_offsets, heads, d, dh, ld, scale_factor](const Tensor<T>& g,
                                                                         GradSink<T>& sink) {
        auto dqkv = Tensor<T>::empty(qv.shape());
        Index max_len = 0;
        for (Index b = 0; b < segments.count(); ++b) max_len = std::max(max_len, segments.length(b));
        std::vector<T> dp(static_cast<std::size_t>(max_len * max_len));
        for (Index b = 0; b < segments.count(); ++b) {
          const Index len = segments.length(b), r0 = segments.begin(b);
          for (Index h = 0; h < heads; ++h) {
            const T* q = qv.data() + r0 * ld + h * dh;
            const T* k = q + d;
            const T* v = q + 2 * d;
            const T* p = probs.data() + prob_offsets[b] + h * len * len;
            const T* go = g.data() + r0 * d + h * dh;
            T* dq = dqkv.data() + r0 * ld + h * dh;
            T* dk = dq + d;
            T* dv = dq + 2 * d;
            gemm<T>(Trans::Yes, Trans::No, len, dh, len, T(1), p, len, go, d, T(0), dv, ld);
            gemm<T>(Trans::No, Trans::Yes, len, len, dh, T(1), go, d, v, ld, T(0), dp.data(), len);
            for (Index i = 0; i < len; ++i) {
              T* dpr = dp.data() + i * len;
              const T* pr = p + i * len;
              T dot = 0;
              for (Index j = 0; j < len; ++j) dot += dpr[j] * pr[j];
              for (Index j = 0; j < len; ++j) dpr[j] = pr[j] * (dpr[j] - dot);
            }
            gemm<T>(Trans::No, Trans::No, len, dh, len, scale_factor, dp.data(), len, k, ld, T(0), dq, ld);
            gemm<T>(Trans::Yes, Trans::No, len, dh, len, scale_factor, dp.data(), len, q, ld, T(0), dk, ld);
          }
        }
        sink.add(0, std::move(dqkv));
      });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const Index> rows) {
  const Tensor<T>& xv = x.value();
  require(xv.rank() == 2, "gather_rows: x must be a matrix");
  const Index d = xv.cols();
  std::vector<Index> idx(rows.begin(), rows.end());
  auto out = Tensor<T>::empty({static_cast<Index>(idx.size()), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < xv.rows(), "gather_rows: row index out of range");
    std::copy_n(xv.row(idx[i]), d, out.row(static_cast<Index>(i)));
  }
  const Index src_rows = xv.rows();
  return make_result<T>(std::move(out), "gather_rows", {&x},
                        [idx = std::move(idx), src_rows, d](const Tensor<T>& g, GradSink<T>& sink) {
                          auto dx = Tensor<T>::zeros({src_rows, d});
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            const T* gr = g.row(static_cast<Index>(i));
                            T* dr = dx.row(idx[i]);
                            for (Index c = 0; c < d; ++c) dr[c] += gr[c];
                          }
                          sink.add(0, std::move(dx));
                        });
}

template <typename T>
Var<T> assemble_rows(const Var<T>& visible, const Var<T>& fill, std::span<const Index> source) {
  const Tensor<T>& vv = visible.value();
  require(vv.rank() == 2, "assemble_rows: visible must be a matrix");
  const Index d = vv.cols();
  require(fill.value().size() == d, "assemble_rows: fill width mismatch");
  std::vector<Index> src(source.begin(), source.end());
  auto out = Tensor<T>::empty({static_cast<Index>(src.size()), d});
  for (std::size_t r = 0; r < src.size(); ++r) {
    require(src[r] < vv.rows(), "assemble_rows: source index out of range");
    const T* from = src[r] >= 0 ? vv.row(src[r]) : fill.value().data();
    std::copy_n(from, d, out.row(static_cast<Index>(r)));
  }
  const Index visible_rows = vv.rows();
  return make_result<T>(
      std::move(out), "assemble_rows", {&visible, &fill},
      [src = std::move(src), visible_rows, d](const Tensor<T>& g, GradSink<T>& sink) {
        auto dv = Tensor<T>::zeros({visible_rows, d});
        auto df = Tensor<T>::zeros({d});
        for (std::size_t r = 0; r < src.size(); ++r) {
          const T* gr = g.row(static_cast<Index>(r));
          T* dst = src[r] >= 0 ? dv.row(src[r]) : df.data();
          for (Index c = 0; c < d; ++c) dst[c] += gr[c];
        }
        sink.add(0, std::move(dv));
        sink.add(1, std::move(df));
      });
}

template <typename T>
Var<T> segment_mean(const Var<T>& x, const Segments& segments) {
  const Tensor<T>& xv = x.value();
  require(xv.rank() == 2 && segments.total() == xv.rows(), "segment_mean: segments do not cover rows");
  const Index d = xv.cols();
  auto out = Tensor<T>::zeros({segments.count(), d});
  for (Index b = 0; b < segments.count(); ++b) {
    require(segments.length(b) >= 1, "segment_mean: empty segment");
    T* o = out.row(b);
    for (Index r = segments.begin(b); r < segments.end(b); ++r)
      for (Index c = 0; c < d; ++c) o[c] += xv(r, c);
    const T inv = T(1) / static_cast<T>(segments.length(b));
    for (Index c = 0; c < d; ++c) o[c] *= inv;
  }
  return make_result<T>(std::move(out), "segment_mean", {&x},
                        [segments, d](const Tensor<T>& g, GradSink<T>& sink) {
                          auto dx = Tensor<T>::empty({segments.total(), d});
                          for (Index b = 0; b < segments.count(); ++b) {
                            const T inv = T(1) / static_cast<T>(segments.length(b));
                            for (Index r = segments.begin(b); r < segments.end(b); ++r)
                              for (Index c = 0; c < d; ++c) dx(r, c) = g(b, c) * inv;
                          }
                          sink.add(0, std::move(dx));
                        });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const Index> labels) {
  const Tensor<T>& lv = logits.value();
  require(lv.rank() == 2 && lv.rows() == static_cast<Index>(labels.size()) && lv.rows() >= 1,
          "cross_entropy: one label per logits row required");
  const Index n = lv.rows(), k = lv.cols();
  auto probs = lv.clone();
  softmax_rows(probs.data(), n, k, k);
  std::vector<Index> lab(labels.begin(), labels.end());
  T loss = 0;
  for (Index i = 0; i < n; ++i) {
    require(lab[i] >= 0 && lab[i] < k, "cross_entropy: label out of range");
    const T* row = lv.row(i);
    T mx = row[0];
    for (Index c = 1; c < k; ++c) mx = std::max(mx, row[c]);
    T sum = 0;
    for (Index c = 0; c < k; ++c) sum += std::exp(row[c] - mx);
    loss += mx + std::log(sum) - row[lab[i]];
  }
  auto out = Tensor<T>::full({1}, loss / static_cast<T>(n));
  return make_result<T>(std::move(out), "cross_entropy", {&logits},
                        [probs, lab = std::move(lab), n, k](const Tensor<T>& g, GradSink<T>& sink) {
                          auto dl = probs.clone();
                          const T w = g[0] / static_cast<T>(n);
                          for (Index i = 0; i < n; ++i) {
                            dl(i, lab[i]) -= T(1);
                            for (Index c = 0; c < k; ++c) dl(i, c) *= w;
                          }
                          sink.add(0, std::move(dl));
                        });
}

#define MAEAST_INSTANTIATE_OPS(T)                                                              \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                      \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> scale<T>(const Var<T>&, T);                                                  \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);               \
  template Var<T> gelu<T>(const Var<T>&);                                                      \
  template Var<T> attention<T>(const Var<T>&, const Segments&, Index);                         \
  template Var<T> gather_rows<T>(const Var<T>&, std::span<const Index>);                       \
  template Var<T> assemble_rows<T>(const Var<T>&, const Var<T>&, std::span<const Index>);      \
  template Var<T> segment_mean<T>(const Var<T>&, const Segments&);                             \
  template Var<T> cross_entropy<T>(const Var<T>&, std::span<const Index>);                     \
  template void softmax_rows<T>(T*, Index, Index, Index);

MAEAST_INSTANTIATE_OPS(float)
MAEAST_INSTANTIATE_OPS(double)

}  // namespace maeast::nn
