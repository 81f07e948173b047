#pragma once

// Waveform ingestion and 128-bin log-Mel filterbank features.
//
// Frames are 25 ms (400 samples) with a 10 ms (160 sample) shift, Hann
// windowed and zero-padded to a 512-point FFT. The filterbank uses the HTK
// mel scale, 128 triangular filters spanning 0-8000 Hz, with triangle weights
// computed on the mel axis. Log energies are ln(E + 1e-10).

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "maeast/common.hpp"

namespace maeast::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr Index kWindowLength = 400;
inline constexpr Index kFrameShift = 160;
inline constexpr Index kFftSize = 512;
inline constexpr Index kNumMels = 128;
inline constexpr double kLogFloor = 1e-10;

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Waveform {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate = kSampleRate;
};

/// Log-Mel features stored frame-major: values[frame * 128 + mel].
struct Spectrogram {
  std::vector<float> values;
  Index n_frames = 0;
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;
  bool normalized = false;

  static constexpr Index n_mels = kNumMels;

  float at(Index mel, Index frame) const { return values[static_cast<std::size_t>(frame * n_mels + mel)]; }
  float& at(Index mel, Index frame) { return values[static_cast<std::size_t>(frame * n_mels + mel)]; }
};

/// Corpus-level scalar statistics. `degenerate` marks std == 0.
struct Normalizer {
  double mean = 0.0;
  double std = 1.0;
  bool degenerate = false;
};

/// Reads RIFF/WAVE PCM16 mono 16 kHz; samples are divided by 32768.
Waveform load_wav(const std::filesystem::path& path);
/// Writes PCM16 mono; values are clipped to [-1, 1) before quantization.
void save_wav(const std::filesystem::path& path, const Waveform& w);

/// floor((samples - 400) / 160) + 1; throws for clips shorter than a window.
Index frame_count(Index samples);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

Spectrogram log_mel(const Waveform& w);

Normalizer fit_normalizer(std::span<const Spectrogram> specs);
/// (v - mean) / (2 * std): zero mean, standard deviation 1/2 over the corpus.
Spectrogram normalize(const Spectrogram& s, const Normalizer& n);
Spectrogram denormalize(const Spectrogram& s, const Normalizer& n);

/// `.fbank` layout: u32 n_frames, u32 n_mels (little-endian), then float32
/// values row-major [n_frames x n_mels].
void write_fbank(const std::filesystem::path& path, const Spectrogram& s);
Spectrogram read_fbank(const std::filesystem::path& path);

void save_normalizer(const std::filesystem::path& path, const Normalizer& n);
Normalizer load_normalizer(const std::filesystem::path& path);

}  // namespace maeast::audio
