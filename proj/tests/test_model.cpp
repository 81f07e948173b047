#include <cmath>
#include <cstring>

#include "doctest.h"
#include "helpers.hpp"
#include "maeast/objectives.hpp"

using namespace maeast;
using namespace maeast::model;
using maeast::nn::Tensor;
using maeast::nn::Var;
using testing::random_clip;
using testing::toy_config;

namespace {

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), sizeof(T) * a.size()) == 0;
}

// Per-layer cost written out from the stated formula.
double layer_cost(double len, double d) { return 8 * len * d * d + 4 * len * len * d + 16 * len * d * d; }

}  // namespace

TEST_CASE("encoder sees only unmasked tokens") {
  MaeAstModel<float> m(toy_config(16, 2, 2, 1), 1);
  const std::vector clips{random_clip(62, 8, 1)};
  const std::vector plans{masking::mask_random(496, 0.75, 2)};
  ForwardTrace trace;
  const auto enc = m.encode(clips, plans, &trace);
  CHECK(enc.states.shape() == std::vector<Index>{124, 16});
  CHECK(trace.layer_rows == std::vector<Index>{124, 124});
  const auto out = m.decode(enc, clips, plans, &trace);
  CHECK(out.recon_pred.shape() == std::vector<Index>{372, 256});
  CHECK(out.class_pred.shape() == std::vector<Index>{372, 256});
  CHECK(out.targets.shape() == std::vector<Index>{372, 256});
  CHECK(trace.layer_rows == std::vector<Index>{124, 124, 496});
  // Targets are the masked input tokens in ascending index order.
  for (std::size_t r = 0; r < plans[0].masked.size(); r += 37) {
    const auto tok = clips[0].token(plans[0].masked[r]);
    for (Index c = 0; c < 256; ++c) REQUIRE(out.targets(static_cast<Index>(r), c) == tok[c]);
  }
}

TEST_CASE("mask content invariance") {
  MaeAstModel<float> m(toy_config(32, 4, 2, 1), 3);
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    std::vector clips{random_clip(6, 8, trial), random_clip(4, 8, trial + 100)};
    const std::vector plans{masking::mask_random(48, 0.75, trial), masking::mask_random(32, 0.5, trial + 7)};
    const auto a = m.pretrain_forward(clips, plans);
    const auto enc_a = m.encode(clips, plans);
    for (std::size_t b = 0; b < clips.size(); ++b)
      for (Index i : plans[b].masked)
        for (auto& v : clips[b].token(i)) v = v * -3.0f + 1.0f;
    const auto bb = m.pretrain_forward(clips, plans);
    const auto enc_b = m.encode(clips, plans);
    CHECK(bitwise_equal(enc_a.states.value(), enc_b.states.value()));
    CHECK(bitwise_equal(a.recon_pred.value(), bb.recon_pred.value()));
    CHECK(bitwise_equal(a.class_pred.value(), bb.class_pred.value()));
    CHECK_FALSE(bitwise_equal(a.targets, bb.targets));
  }
}

TEST_CASE("encoder without layers is projection plus positional embedding") {
  MaeAstModel<double> m(toy_config(16, 2, 0, 1), 4);
  const std::vector clips{random_clip(2, 8, 5)};
  const std::vector plans{masking::mask_random(16, 0.5, 6)};
  const auto enc = m.encode(clips, plans).states.value();
  const auto* w = m.parameters().find("encoder.embed.weight");
  const auto* b = m.parameters().find("encoder.embed.bias");
  const auto pe = nn::sinusoidal_pe<double>(16, 16);
  for (std::size_t r = 0; r < plans[0].unmasked.size(); ++r) {
    const Index pos = plans[0].unmasked[r];
    const auto tok = clips[0].token(pos);
    for (Index c = 0; c < 16; ++c) {
      double want = b->value[c] + pe(pos, c);
      for (Index k = 0; k < 256; ++k) want += static_cast<double>(tok[k]) * w->value(k, c);
      CHECK(std::abs(enc(static_cast<Index>(r), c) - want) < 1e-10);
    }
  }
}

TEST_CASE("masked slots share one embedding") {
  auto cfg = toy_config(16, 2, 1, 2);
  cfg.positional_embedding = false;
  MaeAstModel<double> m(cfg, 7);
  const std::vector clips{random_clip(3, 8, 8)};
  const std::vector plans{masking::mask_random(24, 0.5, 9)};
  const auto out = m.pretrain_forward(clips, plans);
  const auto& h = out.hidden.value();
  for (Index r = 1; r < h.rows(); ++r)
    for (Index c = 0; c < 16; ++c) CHECK(std::abs(h(r, c) - h(0, c)) < 1e-12);

  MaeAstModel<double> with_pe(toy_config(16, 2, 1, 2), 7);
  const auto out_pe = with_pe.pretrain_forward(clips, plans);
  const auto& hp = out_pe.hidden.value();
  double diff = 0;
  for (Index c = 0; c < 16; ++c) diff += std::abs(hp(1, c) - hp(0, c));
  CHECK(diff > 1e-6);
}

TEST_CASE("decoder depth changes values not shapes") {
  const std::vector clips{random_clip(4, 8, 10)};
  const std::vector plans{masking::mask_random(32, 0.75, 11)};
  MaeAstModel<float> one(toy_config(16, 2, 1, 1), 12), two(toy_config(16, 2, 1, 2), 12);
  const auto a = one.pretrain_forward(clips, plans), b = two.pretrain_forward(clips, plans);
  CHECK(a.recon_pred.shape() == b.recon_pred.shape());
  CHECK_FALSE(bitwise_equal(a.recon_pred.value(), b.recon_pred.value()));
}

TEST_CASE("mask-token baseline runs every position through every layer") {
  auto cfg = toy_config(16, 2, 0, 3);
  cfg.variant = Variant::WithMaskTokens;
  MaeAstModel<float> base(cfg, 13);
  const std::vector clips{random_clip(6, 8, 14)};
  const std::vector plans{masking::mask_random(48, 0.75, 15)};
  ForwardTrace trace;
  const auto out = base.pretrain_forward(clips, plans, &trace);
  CHECK(trace.layer_rows == std::vector<Index>{48, 48, 48});
  CHECK(out.recon_pred.shape() == std::vector<Index>{36, 256});
  CHECK(out.class_pred.shape() == std::vector<Index>{36, 256});

  // Masked content never reaches the baseline either.
  auto mutated = clips;
  for (Index i : plans[0].masked) mutated[0].token(i)[0] += 5.0f;
  CHECK(bitwise_equal(out.recon_pred.value(), base.pretrain_forward(mutated, plans).recon_pred.value()));

  auto bad = cfg;
  bad.enc_layers = 1;
  CHECK_THROWS(bad.validate());
  MaeAstModel<float> mae(toy_config(16, 2, 1, 1), 1);
  CHECK_THROWS(mae.forward_with_mask_tokens(clips, plans));
}

TEST_CASE("flop estimates") {
  ModelConfig mae = toy_config(768, 12, 12, 2), base = toy_config(768, 12, 0, 14);
  base.variant = Variant::WithMaskTokens;
  const double d = 768;
  const double want_mae = 12 * layer_cost(124, d) + 2 * layer_cost(496, d);
  const double want_base = 14 * layer_cost(496, d);
  CHECK(flops_estimate(mae, 496, 0.75).forward == doctest::Approx(want_mae).epsilon(1e-12));
  CHECK(flops_estimate(base, 496, 0.75).forward == doctest::Approx(want_base).epsilon(1e-12));
  CHECK(flops_estimate(mae, 496, 0.75).backward == 2 * flops_estimate(mae, 496, 0.75).forward);
  CHECK(flops_estimate(base, 496, 0.75).total() / flops_estimate(mae, 496, 0.75).total() > 2.0);
  for (double p : {0.1, 0.25, 0.5, 0.75, 0.9})
    CHECK(flops_estimate(base, 496, p).total() > flops_estimate(mae, 496, p).total());

  ModelConfig zero_enc = toy_config(64, 4, 0, 3), base3 = toy_config(64, 4, 0, 3);
  base3.variant = Variant::WithMaskTokens;
  CHECK(flops_estimate(zero_enc, 200, 0.0).total() == flops_estimate(base3, 200, 0.0).total());
  // Quadratic attention makes the per-layer cost superlinear in N.
  const ModelConfig one = toy_config(64, 4, 0, 1);
  CHECK(flops_estimate(one, 4000, 0.5).forward > 2 * flops_estimate(one, 2000, 0.5).forward);
}

TEST_CASE("parameter counts") {
  for (auto [enc, dec, d] : {std::tuple{1, 1, 16}, {6, 2, 64}, {0, 3, 32}, {2, 1, 128}}) {
    auto cfg = toy_config(d, 4, enc, dec);
    MaeAstModel<float> m(cfg, 0);
    CHECK(m.parameters().element_count() == expected_parameter_count(cfg));
    Index enc_count = 0;
    for (const auto& p : m.parameters())
      if (MaeAstModel<float>::is_encoder_parameter(p->name)) enc_count += p->value.size();
    MaeAstModel<float> deeper(toy_config(d, 4, enc, dec + 2), 0);
    Index deeper_enc = 0;
    for (const auto& p : deeper.parameters())
      if (MaeAstModel<float>::is_encoder_parameter(p->name)) deeper_enc += p->value.size();
    CHECK(enc_count == deeper_enc);
  }
  // Default configuration, counted by hand.
  const ModelConfig def;
  const Index d = 768;
  CHECK(expected_parameter_count(def) ==
        256 * d + d + 8 * (12 * d * d + 13 * d) + 2 * d + 2 * d + d + 2 * (256 * d + 256));
}

TEST_CASE("joint-loss gradient for every parameter") {
  MaeAstModel<double> m(toy_config(16, 2, 1, 1), 21);
  const std::vector clips{random_clip(3, 4, 22)};
  const std::vector plans{masking::mask_random(12, 0.5, 23)};
  std::vector<nn::Param<double>*> ps;
  for (auto& p : m.parameters()) ps.push_back(p.get());
  const objectives::LossConfig cfg;
  const double worst =
      testing::fd_check(ps, [&] { return objectives::joint_loss(m.pretrain_forward(clips, plans), cfg).total; });
  CHECK(worst < 1e-5);
}

TEST_CASE("fine-tune path") {
  MaeAstModel<float> m(toy_config(16, 2, 1, 2), 31);
  ClassifierHead<float> head(16, 3, 32);
  std::vector clips{random_clip(5, 8, 33), random_clip(2, 8, 34)};
  const auto logits = finetune_forward(m, clips, head);
  CHECK(logits.shape() == std::vector<Index>{2, 3});

  const Index labels[] = {0, 2};
  m.parameters().zero_grad();
  nn::backward(nn::cross_entropy(logits, labels));
  for (const auto& p : m.parameters()) {
    if (MaeAstModel<float>::is_encoder_parameter(p->name))
      CHECK_MESSAGE(p->has_grad, p->name);
    else
      CHECK_MESSAGE(!p->has_grad, p->name);
  }

  // Single-token clip: pooling returns that token's encoding.
  tokens::TokenBatch single = random_clip(1, 1, 35);
  const std::vector one{single};
  const auto enc = m.encode_all(one).states.value();
  const auto pooled = m.pooled_encoding(one).value();
  for (Index c = 0; c < 16; ++c) CHECK(pooled[c] == enc[c]);
  CHECK_THROWS(m.pooled_encoding(std::span<const tokens::TokenBatch>{}));
}

TEST_CASE("plan validation") {
  MaeAstModel<float> m(toy_config(16, 2, 1, 1), 41);
  const std::vector clips{random_clip(2, 8, 42)};
  CHECK_THROWS(m.encode(clips, std::vector{masking::mask_random(12, 0.5, 1)}));
  masking::MaskPlan all_masked;
  for (Index i = 0; i < 16; ++i) all_masked.masked.push_back(i);
  CHECK_THROWS(m.encode(clips, std::vector{all_masked}));
  const std::vector plans{masking::mask_random(16, 0.5, 2)};
  const auto enc = m.encode(clips, plans);
  CHECK_THROWS(m.decode(enc, clips, std::vector{masking::mask_random(16, 0.25, 2)}));
}

TEST_CASE("checkpoint round trip reproduces outputs bitwise") {
  MaeAstModel<float> m(toy_config(32, 4, 2, 1), 51);
  const auto dir = testing::temp_dir("model_ckpt");
  save_model_checkpoint(m, audio::Normalizer{-4.0, 2.5, false}, dir);
  const auto loaded = load_model_checkpoint(dir);
  CHECK(loaded.normalizer.mean == -4.0);
  CHECK(loaded.normalizer.std == 2.5);
  CHECK(read_checkpoint_config(dir).enc_layers == 2);
  const std::vector clips{random_clip(4, 8, 52)};
  const std::vector plans{masking::mask_random(32, 0.75, 53)};
  const auto a = m.pretrain_forward(clips, plans), b = loaded.model.pretrain_forward(clips, plans);
  CHECK(bitwise_equal(a.recon_pred.value(), b.recon_pred.value()));
  CHECK(bitwise_equal(a.class_pred.value(), b.class_pred.value()));

  MaeAstModel<float> same(toy_config(32, 4, 2, 1), 51);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    CHECK(bitwise_equal(m.parameters()[i].value, same.parameters()[i].value));
}

TEST_CASE("config json round trip") {
  auto cfg = toy_config(64, 8, 3, 2);
  cfg.mode = tokens::TokenizationMode::frame();
  const auto back = model_config_from_json(to_json(cfg));
  CHECK(back.d == 64);
  CHECK(back.heads == 8);
  CHECK(back.enc_layers == 3);
  CHECK(back.mode.kind == tokens::TokenKind::Frame);
  CHECK(back.variant == Variant::MaeAst);
  CHECK_THROWS(parse_variant("ssast"));
}
