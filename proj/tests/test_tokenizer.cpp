#include <random>

#include "doctest.h"
#include "helpers.hpp"

using namespace maeast;
using namespace maeast::tokens;

namespace {

audio::Spectrogram random_spec(Index frames, std::uint64_t seed) {
  audio::Spectrogram s;
  s.n_frames = frames;
  s.values.resize(static_cast<std::size_t>(frames * 128));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  for (auto& v : s.values) v = d(rng);
  s.normalized = true;
  return s;
}

}  // namespace

TEST_CASE("token counts") {
  CHECK(tokenize(random_spec(992, 1), TokenizationMode::patch()).n_tokens() == 496);
  CHECK(tokenize(random_spec(998, 1), TokenizationMode::patch()).n_tokens() == 496);
  CHECK(tokenize(random_spec(16, 1), TokenizationMode::patch()).n_tokens() == 8);
  const auto frame = tokenize(random_spec(100, 1), TokenizationMode::frame());
  CHECK(frame.n_tokens() == 50);
  CHECK(frame.n_channel_rows == 1);
  CHECK(frame.tokens.size() == 50 * 256);
  CHECK(TokenizationMode::patch().token_dim() == 256);
  CHECK(TokenizationMode::frame().token_dim() == 256);
}

TEST_CASE("unroll order and token layout follow the index formula") {
  const auto s = random_spec(70, 2);
  for (auto mode : {TokenizationMode::patch(), TokenizationMode::frame()}) {
    const auto tb = tokenize(s, mode);
    CHECK(tb.n_time_steps == 70 / mode.patch_frames);
    for (Index t = 0; t < tb.n_time_steps; ++t)
      for (Index c = 0; c < tb.n_channel_rows; ++c) {
        const auto tok = detokenize_target(tb, t * tb.n_channel_rows + c);
        for (Index m = 0; m < mode.patch_mels; ++m)
          for (Index f = 0; f < mode.patch_frames; ++f)
            REQUIRE(tok[m * mode.patch_frames + f] == s.at(c * mode.patch_mels + m, t * mode.patch_frames + f));
      }
  }
}

TEST_CASE("every retained cell appears exactly once") {
  audio::Spectrogram s;
  s.n_frames = 40;
  s.normalized = true;
  s.values.resize(40 * 128);
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = static_cast<float>(i);
  const auto tb = tokenize(s, TokenizationMode::patch());
  std::vector<int> seen(s.values.size(), 0);
  for (float v : tb.tokens) ++seen[static_cast<std::size_t>(v)];
  for (Index f = 0; f < 40; ++f)
    for (Index m = 0; m < 128; ++m) CHECK(seen[f * 128 + m] == (f < 32 ? 1 : 0));
}

TEST_CASE("shifting whole time steps permutes tokens by stride 8") {
  const auto s = random_spec(48, 3);
  auto swapped = s;
  for (Index f = 0; f < 16; ++f)
    for (Index m = 0; m < 128; ++m) std::swap(swapped.at(m, f), swapped.at(m, f + 32));
  const auto a = tokenize(s, TokenizationMode::patch()), b = tokenize(swapped, TokenizationMode::patch());
  for (Index c = 0; c < 8; ++c) {
    CHECK(std::equal(a.token(c).begin(), a.token(c).end(), b.token(16 + c).begin()));
    CHECK(std::equal(a.token(8 + c).begin(), a.token(8 + c).end(), b.token(8 + c).begin()));
  }
}

TEST_CASE("rejections") {
  auto raw = random_spec(32, 4);
  raw.normalized = false;
  CHECK_THROWS(tokenize(raw, TokenizationMode::patch()));
  CHECK_THROWS(tokenize(random_spec(15, 4), TokenizationMode::patch()));
  const auto tb = tokenize(random_spec(32, 4), TokenizationMode::patch());
  CHECK_THROWS_AS(detokenize_target(tb, 16), std::out_of_range);
  CHECK_THROWS_AS(detokenize_target(tb, -1), std::out_of_range);
  CHECK_THROWS(parse_mode("wide"));
}

TEST_CASE("zero regions give zero targets") {
  auto s = random_spec(32, 5);
  for (Index f = 0; f < 16; ++f)
    for (Index m = 0; m < 16; ++m) s.at(m, f) = 0.0f;
  const auto tok = detokenize_target(tokenize(s, TokenizationMode::patch()), 0);
  CHECK(std::all_of(tok.begin(), tok.end(), [](float v) { return v == 0.0f; }));
}
