#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "maeast/blas.hpp"
#include "maeast/checkpoint.hpp"
#include "maeast/layers.hpp"
#include "maeast/objectives.hpp"
#include "maeast/optim.hpp"

using namespace maeast;
using namespace maeast::nn;
using testing::fd_check;
using testing::make_param;
using testing::random_tensor;

namespace {

// Scalar reduction used to drive gradient checks.
Var<double> reduce(const Var<double>& y, std::uint64_t seed = 99) {
  const auto target = random_tensor(y.shape(), seed);
  return objectives::recon_loss<double>(y, target, Segments::uniform(1, y.value().rows()));
}

Tensor<double> matmul_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  auto c = Tensor<double>::zeros({a.rows(), b.cols()});
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

}  // namespace

TEST_CASE("tensor storage is tracked and handles alias") {
  const auto before = MemoryTracker::live_bytes();
  {
    auto t = Tensor<float>::zeros({4, 8});
    CHECK(MemoryTracker::live_bytes() == before + 4 * 8 * sizeof(float));
    auto alias = t;
    alias(1, 2) = 5.0f;
    CHECK(t(1, 2) == 5.0f);
    auto deep = t.clone();
    deep(1, 2) = 1.0f;
    CHECK(t(1, 2) == 5.0f);
    CHECK(MemoryTracker::peak_bytes() >= MemoryTracker::live_bytes());
  }
  CHECK(MemoryTracker::live_bytes() == before);
}

TEST_CASE("gemm matches a triple loop for every transpose combination") {
  const auto a = random_tensor({3, 5}, 1), b = random_tensor({5, 7}, 2);
  const auto want = matmul_oracle(a, b);
  // Transposed copies.
  auto at = Tensor<double>::empty({5, 3}), bt = Tensor<double>::empty({7, 5});
  for (Index i = 0; i < 3; ++i)
    for (Index k = 0; k < 5; ++k) at(k, i) = a(i, k);
  for (Index k = 0; k < 5; ++k)
    for (Index j = 0; j < 7; ++j) bt(j, k) = b(k, j);
  for (int ta = 0; ta < 2; ++ta)
    for (int tb = 0; tb < 2; ++tb) {
      auto c = Tensor<double>::zeros({3, 7});
      gemm<double>(ta ? Trans::Yes : Trans::No, tb ? Trans::Yes : Trans::No, 3, 7, 5, 1.0,
                   ta ? at.data() : a.data(), ta ? 3 : 5, tb ? bt.data() : b.data(), tb ? 5 : 7, 0.0, c.data(), 7);
      for (Index i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("linear") {
  SUBCASE("hand example") {
    const double xv[] = {1, 2}, wv[] = {1, 0, 0, 1}, bv[] = {3, 4};
    const auto y = linear<double>(Tensor<double>::from({1, 2}, xv), Tensor<double>::from({2, 2}, wv),
                                  Tensor<double>::from({2}, bv));
    CHECK(y.value()[0] == 4.0);
    CHECK(y.value()[1] == 6.0);
  }
  SUBCASE("identity weight") {
    const auto x = random_tensor({4, 3}, 5);
    auto w = Tensor<double>::zeros({3, 3});
    for (Index i = 0; i < 3; ++i) w(i, i) = 1.0;
    const auto y = linear<double>(x, w, Tensor<double>::zeros({3}));
    for (Index i = 0; i < x.size(); ++i) CHECK(y.value()[i] == x[i]);
  }
  SUBCASE("random shapes against a triple loop") {
    const auto x = random_tensor({3, 5}, 11), w = random_tensor({5, 7}, 12), b = random_tensor({7}, 13);
    const auto want = matmul_oracle(x, w);
    const auto y = linear<double>(x, w, b).value();
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 7; ++j) CHECK(std::abs(y(i, j) - (want(i, j) + b[j])) < 1e-12);
  }
  SUBCASE("shape mismatch rejected") {
    CHECK_THROWS_AS(linear<double>(random_tensor({2, 3}, 1), random_tensor({4, 2}, 2), Tensor<double>()),
                    std::invalid_argument);
  }
  SUBCASE("gradients") {
    auto x = make_param("x", {4, 5}, 21), w = make_param("w", {5, 3}, 22), b = make_param("b", {3}, 23);
    CHECK(fd_check({&x, &w, &b}, [&] { return reduce(linear(x.var(), w.var(), b.var())); }) < 1e-7);
  }
}

TEST_CASE("layer norm and gelu against direct formulas") {
  const auto x = random_tensor({3, 6}, 31);
  const auto g = random_tensor({6}, 32), b = random_tensor({6}, 33);
  const auto y = layer_norm<double>(x, g, b).value();
  for (Index r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (Index c = 0; c < 6; ++c) mean += x(r, c) / 6;
    for (Index c = 0; c < 6; ++c) var += (x(r, c) - mean) * (x(r, c) - mean) / 6;
    for (Index c = 0; c < 6; ++c)
      CHECK(std::abs(y(r, c) - ((x(r, c) - mean) / std::sqrt(var + 1e-6) * g[c] + b[c])) < 1e-12);
  }
  const auto ge = gelu<double>(x).value();
  for (Index i = 0; i < x.size(); ++i)
    CHECK(std::abs(ge[i] - 0.5 * x[i] * (1.0 + std::erf(x[i] / std::numbers::sqrt2))) < 1e-14);

  auto xp = make_param("x", {3, 6}, 34), gp = make_param("g", {6}, 35), bp = make_param("b", {6}, 36);
  CHECK(fd_check({&xp, &gp, &bp}, [&] { return reduce(layer_norm(xp.var(), gp.var(), bp.var())); }) < 1e-6);
  CHECK(fd_check({&xp}, [&] { return reduce(gelu(xp.var())); }) < 1e-7);
}

namespace {

// Per-head attention oracle over one segment of qkv.
Tensor<double> attention_oracle(const Tensor<double>& qkv, Index r0, Index n, Index heads) {
  const Index d = qkv.cols() / 3, hd = d / heads;
  auto out = Tensor<double>::zeros({n, d});
  for (Index h = 0; h < heads; ++h)
    for (Index i = 0; i < n; ++i) {
      std::vector<double> s(static_cast<std::size_t>(n));
      double mx = -1e300;
      for (Index j = 0; j < n; ++j) {
        double dot = 0;
        for (Index c = 0; c < hd; ++c) dot += qkv(r0 + i, h * hd + c) * qkv(r0 + j, d + h * hd + c);
        s[j] = dot / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& v : s) z += (v = std::exp(v - mx));
      for (Index j = 0; j < n; ++j)
        for (Index c = 0; c < hd; ++c) out(i, h * hd + c) += s[j] / z * qkv(r0 + j, 2 * d + h * hd + c);
    }
  return out;
}

}  // namespace

TEST_CASE("attention") {
  SUBCASE("matches a per-head loop on two segments") {
    const auto qkv = random_tensor({9, 24}, 41);
    const Index lens[] = {5, 4};
    const auto seg = Segments::from_lengths(lens);
    const auto y = attention<double>(qkv, seg, 2).value();
    for (Index b = 0; b < 2; ++b) {
      const auto want = attention_oracle(qkv, seg.begin(b), seg.length(b), 2);
      for (Index i = 0; i < seg.length(b); ++i)
        for (Index c = 0; c < 8; ++c) CHECK(std::abs(y(seg.begin(b) + i, c) - want(i, c)) < 1e-10);
    }
  }
  SUBCASE("single token returns its value vector") {
    const auto qkv = random_tensor({1, 12}, 42);
    const auto y = attention<double>(qkv, Segments::uniform(1, 1), 2).value();
    for (Index c = 0; c < 4; ++c) CHECK(y[c] == doctest::Approx(qkv[8 + c]).epsilon(1e-14));
  }
  SUBCASE("softmax rows are stochastic") {
    auto m = random_tensor({4, 7}, 43, 10.0);
    softmax_rows(m.data(), 4, 7, 7);
    for (Index r = 0; r < 4; ++r) {
      double s = 0;
      for (Index c = 0; c < 7; ++c) s += m(r, c);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  SUBCASE("gradients") {
    auto qkv = make_param("qkv", {7, 12}, 44);
    const Index lens[] = {3, 4};
    const auto seg = Segments::from_lengths(lens);
    CHECK(fd_check({&qkv}, [&] { return reduce(attention(qkv.var(), seg, 2)); }) < 1e-6);
  }
}

TEST_CASE("row plumbing ops") {
  auto x = make_param("x", {5, 3}, 51), fill = make_param("fill", {3}, 52);
  const Index rows[] = {4, 0, 2};
  const auto g = gather_rows<double>(x.value, rows).value();
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 3; ++c) CHECK(g(r, c) == x.value(rows[r], c));
  const Index source[] = {1, -1, 3, -1};
  const auto a = assemble_rows<double>(x.value, fill.value, source).value();
  for (Index c = 0; c < 3; ++c) {
    CHECK(a(0, c) == x.value(1, c));
    CHECK(a(1, c) == fill.value[c]);
    CHECK(a(3, c) == fill.value[c]);
  }
  const Index lens[] = {2, 3};
  const auto seg = Segments::from_lengths(lens);
  const auto m = segment_mean<double>(x.value, seg).value();
  for (Index c = 0; c < 3; ++c) CHECK(std::abs(m(1, c) - (x.value(2, c) + x.value(3, c) + x.value(4, c)) / 3) < 1e-14);

  CHECK(fd_check({&x}, [&] { return reduce(gather_rows(x.var(), rows)); }) < 1e-7);
  CHECK(fd_check({&x, &fill}, [&] { return reduce(assemble_rows(x.var(), fill.var(), source)); }) < 1e-7);
  CHECK(fd_check({&x}, [&] { return reduce(segment_mean(x.var(), seg)); }) < 1e-7);
}

TEST_CASE("cross entropy") {
  auto logits = make_param("l", {4, 3}, 61);
  const Index labels[] = {0, 2, 1, 2};
  double want = 0;
  for (Index i = 0; i < 4; ++i) {
    double z = 0;
    for (Index c = 0; c < 3; ++c) z += std::exp(logits.value(i, c));
    want += std::log(z) - logits.value(i, labels[i]);
  }
  CHECK(cross_entropy<double>(logits.value, labels).value()[0] == doctest::Approx(want / 4).epsilon(1e-12));
  CHECK(fd_check({&logits}, [&] { return cross_entropy(logits.var(), labels); }) < 1e-7);
  const Index bad[] = {0, 3, 1, 2};
  CHECK_THROWS_AS(cross_entropy<double>(logits.value, bad), std::invalid_argument);
}

TEST_CASE("transformer block") {
  std::mt19937_64 rng(7);
  ParameterStore<double> store;
  TransformerBlockConfig cfg{16, 2, 4};
  TransformerBlock<double> block(store, "b", cfg, rng);
  const auto seg = Segments::uniform(1, 12);

  SUBCASE("every parameter passes finite differences") {
    auto x = make_param("x", {12, 16}, 71);
    std::vector<Param<double>*> ps{&x};
    for (auto& p : store) ps.push_back(p.get());
    CHECK(fd_check(ps, [&] { return reduce(block(x.var(), seg)); }) < 1e-5);
  }
  SUBCASE("zero output projections make the block the identity") {
    std::fill_n(block.attention().out().weight().value.data(), 16 * 16, 0.0);
    std::fill_n(block.mlp_out().weight().value.data(), 64 * 16, 0.0);
    const auto x = random_tensor({12, 16}, 72);
    const auto y = block(Var<double>(x), seg).value();
    for (Index i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("permutation equivariance") {
    const auto x = random_tensor({12, 16}, 73);
    std::vector<Index> perm{3, 7, 0, 11, 1, 9, 2, 4, 10, 5, 8, 6};
    const auto y = block(Var<double>(x), seg).value();
    const auto yp = block(gather_rows<double>(x, perm), seg).value();
    for (Index r = 0; r < 12; ++r)
      for (Index c = 0; c < 16; ++c) CHECK(std::abs(yp(r, c) - y(perm[r], c)) < 1e-12);
  }
  SUBCASE("equal tokens give equal outputs") {
    auto x = Tensor<double>::empty({5, 16});
    const auto row = random_tensor({16}, 74);
    for (Index r = 0; r < 5; ++r) std::copy_n(row.data(), 16, x.row(r));
    const auto y = block(Var<double>(x), Segments::uniform(1, 5)).value();
    for (Index r = 1; r < 5; ++r)
      for (Index c = 0; c < 16; ++c) CHECK(std::abs(y(r, c) - y(0, c)) < 1e-12);
  }
  SUBCASE("heads must divide d") {
    CHECK_THROWS_AS((TransformerBlockConfig{16, 3, 4}.validate()), std::invalid_argument);
  }
}

TEST_CASE("sinusoidal positional embeddings") {
  const auto pe = sinusoidal_pe<double>(50, 32);
  for (Index c = 0; c < 32; ++c) CHECK(pe(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
  for (Index r = 0; r < 50; ++r) {
    double s = 0;
    for (Index c = 0; c < 32; ++c) s += pe(r, c) * pe(r, c);
    CHECK(std::abs(s - 16.0) < 1e-9);
  }
  CHECK(std::abs(pe(1, 0) - 0.841471) < 1e-6);
  CHECK(std::abs(pe(3, 6) - std::sin(3.0 / std::pow(10000.0, 6.0 / 32.0))) < 1e-14);
  CHECK(std::abs(pe(3, 7) - std::cos(3.0 / std::pow(10000.0, 6.0 / 32.0))) < 1e-14);
  CHECK_THROWS_AS(sinusoidal_pe<double>(4, 7), std::invalid_argument);
}

TEST_CASE("adam and the learning-rate schedule") {
  AdamHyper hyper;
  SUBCASE("zero gradient only applies weight decay") {
    Param<double> p = make_param("p", {3}, 81);
    const auto before = p.value.clone();
    p.grad = Tensor<double>::zeros({3});
    AdamSlot<double> slot;
    adam_step(p, slot, 1, 1e-3, hyper);
    for (Index i = 0; i < 3; ++i) CHECK(p.value[i] == doctest::Approx(before[i] * (1 - 1e-3 * 0.01)).epsilon(1e-14));
  }
  SUBCASE("first step with unit gradient moves by about lr") {
    Param<double> p;
    p.value = Tensor<double>::zeros({1});
    p.grad = Tensor<double>::full({1}, 1.0);
    AdamSlot<double> slot;
    adam_step(p, slot, 1, 1e-4, hyper);
    // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
    CHECK(p.value[0] == doctest::Approx(-1e-4 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("identical parameters stay identical") {
    ParameterStore<double> store;
    auto& a = store.add("a", {4});
    auto& b = store.add("b", {4});
    for (Index i = 0; i < 4; ++i) a.value[i] = b.value[i] = 0.1 * static_cast<double>(i);
    Adam<double> opt(store, hyper);
    for (int t = 0; t < 5; ++t) {
      for (auto* p : {&a, &b}) {
        p->grad = Tensor<double>::full({4}, 0.3 * t - 0.5);
        p->has_grad = true;
      }
      opt.step(1e-2);
    }
    for (Index i = 0; i < 4; ++i) CHECK(a.value[i] == b.value[i]);
  }
  SUBCASE("parameters without gradients are untouched") {
    ParameterStore<double> store;
    auto& a = store.add("a", {2});
    a.value[0] = 1.0;
    Adam<double> opt(store, hyper);
    opt.step(1e-2);
    CHECK(a.value[0] == 1.0);
  }
  SUBCASE("non-finite gradients fault") {
    Param<double> p;
    p.value = Tensor<double>::zeros({1});
    p.grad = Tensor<double>::full({1}, std::nan(""));
    AdamSlot<double> slot;
    CHECK_THROWS_AS(adam_step(p, slot, 1, 1e-3, hyper), NumericFault);
  }
  SUBCASE("polynomial decay") {
    CHECK(poly_decay_lr(0, 100, 1e-4) == 1e-4);
    CHECK(poly_decay_lr(100, 100, 1e-4) == 0.0);
    CHECK(poly_decay_lr(50, 100, 1e-4) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(poly_decay_lr(25, 100, 1.0, 2.0) == doctest::Approx(0.5625).epsilon(1e-12));
    // Warmup ramps (t + 1) / warmup so step 0 already trains.
    CHECK(poly_decay_lr(5, 100, 1.0, 1.0, 10) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK_THROWS(poly_decay_lr(0, 0, 1e-4));
    CHECK_THROWS(poly_decay_lr(101, 100, 1e-4));
  }
}

TEST_CASE("non-finite forward values fault") {
  auto x = Tensor<double>::full({1, 2}, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(gelu<double>(x), NumericFault);
}

TEST_CASE("no-grad guard builds no graph") {
  auto p = make_param("p", {2, 2}, 91);
  {
    NoGradGuard guard;
    CHECK_FALSE(gelu(p.var()).requires_grad());
  }
  CHECK(gelu(p.var()).requires_grad());
}

TEST_CASE("parameter checkpoints round-trip") {
  std::mt19937_64 rng(3);
  ParameterStore<float> store;
  Linear<float> lin(store, "layer", 4, 3, rng);
  const auto dir = testing::temp_dir("nn_ckpt");
  save_parameters(store, dir);
  const auto manifest = read_manifest(dir);
  REQUIRE(manifest.size() == 2);
  CHECK(manifest[0].name == "layer.weight");
  CHECK(manifest[1].offset == 12 * 4);
  CHECK(std::filesystem::file_size(dir / kBlobFile) == 15 * sizeof(float));

  ParameterStore<float> other;
  std::mt19937_64 rng2(4);
  Linear<float> lin2(other, "layer", 4, 3, rng2);
  load_parameters(other, dir);
  for (Index i = 0; i < 12; ++i) CHECK(other[0].value[i] == store[0].value[i]);
  const auto w = read_parameter(dir, "layer.weight");
  CHECK(w[5] == store[0].value[5]);

  ParameterStore<float> wrong;
  std::mt19937_64 rng3(5);
  Linear<float> lin3(wrong, "layer", 3, 3, rng3);
  CHECK_THROWS(load_parameters(wrong, dir));
}
