#include "dereverb/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace dereverb::wav {
namespace {

constexpr std::uint16_t kPcm = 1;
constexpr std::uint16_t kFloat = 3;
constexpr std::uint16_t kExtensible = 0xFFFE;

std::uint32_t u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

Waveform read(const std::string& path, const ReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open WAV file '" + path + "'");
  const std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) { return ConfigError("'" + path + "': " + why); };
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 || std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* samples = nullptr;
  std::size_t sample_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const unsigned char* chunk = data.data() + pos;
    const std::size_t size = u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(size, data.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw fail("truncated fmt chunk");
      format = u16(chunk + 8);
      channels = u16(chunk + 10);
      rate = u32(chunk + 12);
      bits = u16(chunk + 22);
      if (format == kExtensible) {
        if (avail < 40) throw fail("truncated extensible fmt chunk");
        format = u16(chunk + 8 + 24);  // first two bytes of the subformat GUID
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      samples = chunk + 8;
      sample_bytes = avail;
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || rate == 0) throw fail("missing fmt chunk");
  if (!samples) throw fail("missing data chunk");
  if (!((format == kPcm && bits == 16) || (format == kFloat && bits == 32)))
    throw fail("unsupported sample format (need PCM16 or float32)");
  if (channels != 1 && !options.downmix)
    throw fail("has " + std::to_string(channels) + " channels; only mono is supported (use --downmix to average them)");

  const std::size_t width = bits / 8;
  const std::size_t frames = sample_bytes / (width * channels);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = samples + (f * channels + c) * width;
      if (format == kPcm)
        acc += static_cast<std::int16_t>(u16(p)) / 32768.0;
      else
        acc += std::bit_cast<float>(u32(p));
    }
    w.samples[f] = acc / channels;
  }
  if (!std::all_of(w.samples.begin(), w.samples.end(), [](double v) { return std::isfinite(v); }))
    throw fail("contains non-finite samples");
  return w;
}

void write(const std::string& path, const Waveform& x, SampleFormat format) {
  if (!(x.sample_rate > 0.0) || x.sample_rate != std::floor(x.sample_rate))
    throw ConfigError("write_wav: sample rate must be a positive integer");
  const bool pcm = format == SampleFormat::pcm16;
  const std::uint16_t width = pcm ? 2 : 4;
  const auto rate = static_cast<std::uint32_t>(x.sample_rate);
  const auto data_bytes = static_cast<std::uint32_t>(x.samples.size() * width);

  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm ? kPcm : kFloat);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * width);
  put_u16(out, width);
  put_u16(out, static_cast<std::uint16_t>(width * 8));
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double v : x.samples) {
    if (pcm) {
      const double s = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write WAV file '" + path + "'");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw ConfigError("failed writing WAV file '" + path + "'");
}

}  // namespace dereverb::wav
