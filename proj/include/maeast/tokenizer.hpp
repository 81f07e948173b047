#pragma once

#include <span>
#include <string>
#include <vector>

#include "maeast/audio_features.hpp"

namespace maeast::tokens {

enum class TokenKind { Patch, Frame };

/// Patch: 16 mels x 16 frames (8 channel rows per time step).
/// Frame: 128 mels x 2 frames (one row per time step).
struct TokenizationMode {
  TokenKind kind = TokenKind::Patch;
  Index patch_mels = 16;
  Index patch_frames = 16;

  static TokenizationMode patch() { return {TokenKind::Patch, 16, 16}; }
  static TokenizationMode frame() { return {TokenKind::Frame, 128, 2}; }

  Index channel_rows() const { return audio::kNumMels / patch_mels; }
  Index token_dim() const { return patch_mels * patch_frames; }
};

inline constexpr Index kTokenDim = 256;

/// Tokens in unroll order i = t * n_channel_rows + c: the channel (mel band)
/// varies fastest within a time step. Within a token, element
/// k = mel_offset * patch_frames + frame_offset.
struct TokenBatch {
  std::vector<float> tokens;  // [n_tokens x 256]
  Index n_time_steps = 0;
  Index n_channel_rows = 0;
  std::string clip_id;

  Index n_tokens() const { return n_time_steps * n_channel_rows; }
  std::span<const float> token(Index i) const {
    return {tokens.data() + i * kTokenDim, static_cast<std::size_t>(kTokenDim)};
  }
  std::span<float> token(Index i) { return {tokens.data() + i * kTokenDim, static_cast<std::size_t>(kTokenDim)}; }
};

/// Splits a normalized spectrogram into non-overlapping tokens. Trailing
/// frames that do not fill a whole token are dropped.
TokenBatch tokenize(const audio::Spectrogram& s, TokenizationMode mode, std::string clip_id = {});

/// The normalized input token at idx, as fed to the model; this is also the
/// reconstruction target.
std::vector<float> detokenize_target(const TokenBatch& tb, Index idx);

TokenizationMode parse_mode(const std::string& name);
std::string to_string(TokenKind kind);

}  // namespace maeast::tokens
