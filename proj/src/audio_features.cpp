#include "maeast/audio_features.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace maeast::audio {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "feature I/O assumes a little-endian host");

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

struct MelBank {
  // weights[m] covers FFT bins [first[m], first[m] + weights[m].size()).
  std::array<Index, kNumMels> first{};
  std::array<std::vector<double>, kNumMels> weights;
};

MelBank build_mel_bank() {
  MelBank bank;
  constexpr Index n_bins = kFftSize / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(kSampleRate / 2.0);
  const double delta = (mel_hi - mel_lo) / static_cast<double>(kNumMels + 1);
  for (Index m = 0; m < kNumMels; ++m) {
    const double left = mel_lo + static_cast<double>(m) * delta;
    const double center = left + delta;
    const double right = center + delta;
    bank.first[m] = -1;
    for (Index k = 0; k < n_bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * kSampleRate / static_cast<double>(kFftSize));
      double w = 0.0;
      if (mel > left && mel <= center) w = (mel - left) / (center - left);
      else if (mel > center && mel < right) w = (right - mel) / (right - center);
      if (w > 0.0) {
        if (bank.first[m] < 0) bank.first[m] = k;
        bank.weights[m].resize(static_cast<std::size_t>(k - bank.first[m] + 1), 0.0);
        bank.weights[m].back() = w;
      }
    }
    if (bank.first[m] < 0) bank.first[m] = 0;
  }
  return bank;
}

const MelBank& mel_bank() {
  static const MelBank bank = build_mel_bank();
  return bank;
}

}  // namespace

Waveform load_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw AudioError(path.string() + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw AudioError(path.string() + ": truncated fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw AudioError(path.string() + ": data chunk before fmt chunk");
      if (format != 1) throw AudioError(path.string() + ": encoding unsupported (PCM only)");
      if (channels != 1) throw AudioError(path.string() + ": channels unsupported (" + std::to_string(channels) + ")");
      if (bits != 16) throw AudioError(path.string() + ": bit depth unsupported (" + std::to_string(bits) + ")");
      if (rate != kSampleRate)
        throw AudioError(path.string() + ": sample rate unsupported (" + std::to_string(rate) + " Hz)");
      if (body + size > bytes.size() || size % 2 != 0) throw AudioError(path.string() + ": truncated data chunk");
      Waveform w;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<float>(raw) / 32768.0f;
      }
      return w;
    }
    pos = body + size + (size & 1U);
  }
  throw AudioError(path.string() + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

void save_wav(const fs::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AudioError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (float s : w.samples) {
    const double clipped = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
  }
}

Index frame_count(Index samples) {
  if (samples < kWindowLength)
    throw AudioError("clip shorter than one analysis window (" + std::to_string(samples) + " < 400 samples)");
  return (samples - kWindowLength) / kFrameShift + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Spectrogram log_mel(const Waveform& w) {
  if (w.sample_rate != kSampleRate)
    throw AudioError("sample rate unsupported (" + std::to_string(w.sample_rate) + " Hz)");
  const Index n_frames = frame_count(static_cast<Index>(w.samples.size()));
  const MelBank& bank = mel_bank();

  std::array<double, kWindowLength> window{};
  for (Index i = 0; i < kWindowLength; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / (kWindowLength - 1));

  Spectrogram s;
  s.n_frames = n_frames;
  s.values.resize(static_cast<std::size_t>(n_frames * kNumMels));
  std::vector<std::complex<double>> buf(kFftSize);
  std::vector<double> power(kFftSize / 2 + 1);
  for (Index f = 0; f < n_frames; ++f) {
    const float* frame = w.samples.data() + f * kFrameShift;
    for (Index i = 0; i < kFftSize; ++i)
      buf[i] = i < kWindowLength ? std::complex<double>(frame[i] * window[i], 0.0) : std::complex<double>();
    fft(buf);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
    for (Index m = 0; m < kNumMels; ++m) {
      double e = 0.0;
      const auto& wts = bank.weights[m];
      for (std::size_t j = 0; j < wts.size(); ++j) e += wts[j] * power[bank.first[m] + j];
      s.at(m, f) = static_cast<float>(std::log(e + kLogFloor));
    }
  }
  return s;
}

Normalizer fit_normalizer(std::span<const Spectrogram> specs) {
  if (specs.empty()) throw std::invalid_argument("fit_normalizer: empty corpus");
  // Welford accumulation over every value in the corpus.
  double mean = 0.0, m2 = 0.0;
  std::uint64_t n = 0;
  for (const auto& s : specs) {
    for (float v : s.values) {
      ++n;
      const double delta = v - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (v - mean);
    }
  }
  if (n == 0) throw std::invalid_argument("fit_normalizer: corpus holds no values");
  Normalizer out;
  out.mean = mean;
  out.std = std::sqrt(m2 / static_cast<double>(n));
  out.degenerate = out.std == 0.0;
  return out;
}

Spectrogram normalize(const Spectrogram& s, const Normalizer& n) {
  if (!(n.std > 0.0)) throw std::invalid_argument("normalize: degenerate corpus (std == 0)");
  if (s.normalized) throw std::invalid_argument("normalize: spectrogram already normalized");
  Spectrogram out = s;
  const double inv = 1.0 / (2.0 * n.std);
  for (float& v : out.values) v = static_cast<float>((v - n.mean) * inv);
  out.normalized = true;
  return out;
}

Spectrogram denormalize(const Spectrogram& s, const Normalizer& n) {
  if (!s.normalized) throw std::invalid_argument("denormalize: spectrogram is not normalized");
  Spectrogram out = s;
  for (float& v : out.values) v = static_cast<float>(static_cast<double>(v) * 2.0 * n.std + n.mean);
  out.normalized = false;
  return out;
}

void write_fbank(const fs::path& path, const Spectrogram& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AudioError("cannot write " + path.string());
  put_u32(out, static_cast<std::uint32_t>(s.n_frames));
  put_u32(out, static_cast<std::uint32_t>(Spectrogram::n_mels));
  out.write(reinterpret_cast<const char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * 4));
  if (!out) throw AudioError("short write to " + path.string());
}

Spectrogram read_fbank(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  unsigned char hdr[8];
  in.read(reinterpret_cast<char*>(hdr), 8);
  if (in.gcount() != 8) throw AudioError(path.string() + ": truncated header");
  const std::uint32_t frames = read_u32(hdr);
  const std::uint32_t mels = read_u32(hdr + 4);
  if (mels != Spectrogram::n_mels) throw AudioError(path.string() + ": expected 128 mel bins");
  Spectrogram s;
  s.n_frames = frames;
  s.values.resize(static_cast<std::size_t>(frames) * mels);
  in.read(reinterpret_cast<char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(s.values.size() * 4)) throw AudioError(path.string() + ": truncated payload");
  return s;
}

void save_normalizer(const fs::path& path, const Normalizer& n) {
  nlohmann::json j = {{"mean", n.mean}, {"std", n.std}, {"degenerate", n.degenerate}};
  std::ofstream(path) << j.dump(2) << "\n";
}

Normalizer load_normalizer(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw AudioError("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  Normalizer n;
  n.mean = j.at("mean").get<double>();
  n.std = j.at("std").get<double>();
  n.degenerate = j.value("degenerate", n.std == 0.0);
  return n;
}

}  // namespace maeast::audio
