#include "maeast/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace maeast::nn {

namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

void MemoryTracker::on_alloc(std::size_t bytes) {
  const std::size_t now = g_live.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void MemoryTracker::on_free(std::size_t bytes) { g_live.fetch_sub(bytes); }
std::size_t MemoryTracker::live_bytes() { return g_live.load(); }
std::size_t MemoryTracker::peak_bytes() { return g_peak.load(); }
void MemoryTracker::reset_peak() { g_peak.store(g_live.load()); }

template <typename T>
Tensor<T>::Buffer::Buffer(std::size_t n, bool zero)
    : data(zero ? new T[n]() : new T[n]), count(n) {
  MemoryTracker::on_alloc(count * sizeof(T));
}

template <typename T>
Tensor<T>::Buffer::~Buffer() {
  MemoryTracker::on_free(count * sizeof(T));
}

template <typename T>
Tensor<T>::Tensor(std::vector<Index> shape, bool zero) : shape_(std::move(shape)) {
  size_ = 1;
  for (Index d : shape_) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    size_ *= d;
  }
  buf_ = std::make_shared<Buffer>(static_cast<std::size_t>(size_), zero);
}

template <typename T>
Tensor<T> Tensor<T>::from(std::vector<Index> shape, std::span<const T> values) {
  Tensor t(std::move(shape), false);
  if (static_cast<Index>(values.size()) != t.size())
    throw std::invalid_argument("Tensor::from: value count does not match shape");
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  if (!defined()) return {};
  Tensor t(shape_, false);
  std::copy_n(data(), size_, t.data());
  return t;
}

Segments Segments::uniform(Index count, Index length) {
  Segments s;
  for (Index b = 0; b < count; ++b) s.offsets.push_back(s.offsets.back() + length);
  return s;
}

Segments Segments::from_lengths(std::span<const Index> lengths) {
  Segments s;
  for (Index len : lengths) s.offsets.push_back(s.offsets.back() + len);
  return s;
}

template <typename T>
bool all_finite(std::span<const T> values) {
  // x - x is 0 for finite x and NaN otherwise; the sum stays 0 only if all
  // elements are finite. Written branch-free so it vectorizes.
  T acc = 0;
  for (T v : values) acc += v - v;
  return acc == T(0);
}

template <typename T>
void ensure_finite(const Tensor<T>& t, std::string_view where) {
  if (!all_finite<T>(t.values()))
    throw NumericFault("non-finite value produced by " + std::string(where));
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.size() != src.size()) throw std::invalid_argument("add_inplace: size mismatch");
  T* d = dst.data();
  const T* s = src.data();
  for (Index i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template class Tensor<float>;
template class Tensor<double>;
template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);
template void ensure_finite<float>(const Tensor<float>&, std::string_view);
template void ensure_finite<double>(const Tensor<double>&, std::string_view);
template void add_inplace<float>(Tensor<float>&, const Tensor<float>&);
template void add_inplace<double>(Tensor<double>&, const Tensor<double>&);

}  // namespace maeast::nn
