#include "maeast/tokenizer.hpp"

#include <stdexcept>

namespace maeast::tokens {

TokenBatch tokenize(const audio::Spectrogram& s, TokenizationMode mode, std::string clip_id) {
  if (!s.normalized) throw std::invalid_argument("tokenize: spectrogram must be normalized");
  if (mode.token_dim() != kTokenDim || audio::kNumMels % mode.patch_mels != 0)
    throw std::invalid_argument("tokenize: unsupported token geometry");
  if (s.n_frames < mode.patch_frames)
    throw std::invalid_argument("tokenize: spectrogram shorter than one token (" + std::to_string(s.n_frames) +
                                " frames)");
  TokenBatch tb;
  tb.clip_id = std::move(clip_id);
  tb.n_time_steps = s.n_frames / mode.patch_frames;
  tb.n_channel_rows = mode.channel_rows();
  tb.tokens.resize(static_cast<std::size_t>(tb.n_tokens() * kTokenDim));
  for (Index t = 0; t < tb.n_time_steps; ++t) {
    for (Index c = 0; c < tb.n_channel_rows; ++c) {
      float* dst = tb.tokens.data() + (t * tb.n_channel_rows + c) * kTokenDim;
      for (Index m = 0; m < mode.patch_mels; ++m)
        for (Index f = 0; f < mode.patch_frames; ++f)
          dst[m * mode.patch_frames + f] = s.at(c * mode.patch_mels + m, t * mode.patch_frames + f);
    }
  }
  return tb;
}

std::vector<float> detokenize_target(const TokenBatch& tb, Index idx) {
  if (idx < 0 || idx >= tb.n_tokens())
    throw std::out_of_range("detokenize_target: token index " + std::to_string(idx) + " out of range");
  const auto tok = tb.token(idx);
  return {tok.begin(), tok.end()};
}

TokenizationMode parse_mode(const std::string& name) {
  if (name == "patch") return TokenizationMode::patch();
  if (name == "frame") return TokenizationMode::frame();
  throw std::invalid_argument("unknown tokenization mode '" + name + "' (expected patch or frame)");
}

std::string to_string(TokenKind kind) { return kind == TokenKind::Patch ? "patch" : "frame"; }

}  // namespace maeast::tokens
