#include "ceae/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ceae {

namespace {

uint16_t get_u16(const std::string& b, size_t pos) {
  uint16_t v;
  std::memcpy(&v, b.data() + pos, 2);
  return v;
}

uint32_t get_u32(const std::string& b, size_t pos) {
  uint32_t v;
  std::memcpy(&v, b.data() + pos, 4);
  return v;
}

}  // namespace

AudioClip parse_wav_bytes(const std::string& b, const std::string& origin) {
  auto fail = [&](const std::string& what) -> void {
    throw ValueError("WAV " + origin + ": " + what);
  };
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0)
    fail("malformed header (missing RIFF/WAVE magic)");

  bool have_fmt = false;
  uint16_t channels = 0, bits = 0, codec = 0;
  uint32_t rate = 0;
  size_t data_pos = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= b.size()) {
    std::string id = b.substr(pos, 4);
    uint32_t sz = get_u32(b, pos + 4);
    pos += 8;
    if (pos + sz > b.size()) fail("malformed header (chunk '" + id + "' overruns file)");
    if (id == "fmt ") {
      if (sz < 16) fail("malformed header (fmt chunk too short)");
      codec = get_u16(b, pos);
      channels = get_u16(b, pos + 2);
      rate = get_u32(b, pos + 4);
      bits = get_u16(b, pos + 14);
      have_fmt = true;
    } else if (id == "data") {
      data_pos = pos;
      data_len = sz;
    }
    pos += sz + (sz & 1);  // chunks are word-aligned
  }

  if (!have_fmt) fail("malformed header (no fmt chunk)");
  if (codec != 1) fail("unsupported codec " + std::to_string(codec) + " (expected PCM)");
  if (channels != 1)
    fail("unsupported channel count " + std::to_string(channels) + " (expected mono)");
  if (rate != static_cast<uint32_t>(kSampleRate))
    fail("unsupported sample rate " + std::to_string(rate) + " (expected " +
         std::to_string(kSampleRate) + ")");
  if (bits != 16) fail("unsupported bit depth " + std::to_string(bits) + " (expected 16)");
  if (data_pos == 0 && data_len == 0) fail("malformed header (no data chunk)");

  AudioClip clip;
  size_t n = data_len / 2;
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t s;
    std::memcpy(&s, b.data() + data_pos + 2 * i, 2);
    clip.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return clip;
}

AudioClip load_wav(const std::string& path) {
  return parse_wav_bytes(read_file_bytes(path), path);
}

std::string encode_wav_bytes(const AudioClip& clip) {
  const uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  append_u32(out, 36 + data_len);
  out += "WAVE";
  out += "fmt ";
  append_u32(out, 16);
  const uint32_t rate = kSampleRate;
  const uint16_t codec = 1, channels = 1, bits = 16;
  out.push_back(static_cast<char>(codec & 0xff));
  out.push_back(static_cast<char>(codec >> 8));
  out.push_back(static_cast<char>(channels & 0xff));
  out.push_back(static_cast<char>(channels >> 8));
  append_u32(out, rate);
  append_u32(out, rate * channels * (bits / 8));  // byte rate
  const uint16_t block = channels * (bits / 8);
  out.push_back(static_cast<char>(block & 0xff));
  out.push_back(static_cast<char>(block >> 8));
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>(bits >> 8));
  out += "data";
  append_u32(out, data_len);
  for (double x : clip.samples) {
    // Same 1/32768 scale as the reader, so decode(encode(s)) is idempotent.
    const long q = std::clamp<long>(std::lrint(x * 32768.0), -32768, 32767);
    const auto s = static_cast<int16_t>(q);
    out.push_back(static_cast<char>(s & 0xff));
    out.push_back(static_cast<char>((s >> 8) & 0xff));
  }
  return out;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  write_file_bytes(path, encode_wav_bytes(clip));
}

std::vector<AudioClip> segment(const AudioClip& clip, size_t seg_samples) {
  require(seg_samples >= 1, "segment size must be >= 1");
  std::vector<AudioClip> out;
  size_t n = clip.samples.size() / seg_samples;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    AudioClip s;
    s.sample_rate = clip.sample_rate;
    s.samples.assign(clip.samples.begin() + static_cast<long>(i * seg_samples),
                     clip.samples.begin() + static_cast<long>((i + 1) * seg_samples));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ceae
