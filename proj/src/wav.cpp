#include "tfcorr/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tfcorr/tensor.hpp"

namespace tfcorr::wav {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

uint32_t read_u32(std::istream& s) {
  unsigned char b[4];
  s.read(reinterpret_cast<char*>(b), 4);
  TFC_CHECK(s.good(), "wav: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& s) {
  unsigned char b[2];
  s.read(reinterpret_cast<char*>(b), 2);
  TFC_CHECK(s.good(), "wav: truncated file");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& s, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
  s.write(b, 4);
}

void write_u16(std::ostream& s, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  s.write(b, 2);
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  TFC_CHECK(f.is_open(), "wav: cannot open " << path);

  char tag[4];
  f.read(tag, 4);
  TFC_CHECK(f.good() && std::memcmp(tag, "RIFF", 4) == 0, "wav: not a RIFF file: " << path);
  read_u32(f);  // riff size
  f.read(tag, 4);
  TFC_CHECK(f.good() && std::memcmp(tag, "WAVE", 4) == 0, "wav: not a WAVE file: " << path);

  WavData out;
  uint16_t format = 0, bits = 0;
  bool have_fmt = false, have_data = false;
  while (f.read(tag, 4)) {
    const uint32_t size = read_u32(f);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      TFC_CHECK(size >= 16, "wav: malformed fmt chunk");
      format = read_u16(f);
      out.channels = read_u16(f);
      out.sample_rate = static_cast<int>(read_u32(f));
      read_u32(f);  // byte rate
      read_u16(f);  // block align
      bits = read_u16(f);
      if (size > 16) f.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      TFC_CHECK(have_fmt, "wav: data chunk before fmt");
      TFC_CHECK(out.channels > 0 && out.sample_rate > 0, "wav: malformed fmt fields");
      if (format == kFormatPcm) {
        TFC_CHECK(bits == 16, "wav: PCM bit depth " << bits << " unsupported (want 16)");
        const size_t n = size / 2;
        std::vector<int16_t> raw(n);
        f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
        TFC_CHECK(f.good(), "wav: truncated data chunk");
        out.samples.resize(n);
        for (size_t i = 0; i < n; ++i)
          out.samples[i] = static_cast<float>(raw[i]) / 32768.0f;
      } else if (format == kFormatFloat) {
        TFC_CHECK(bits == 32, "wav: float bit depth " << bits << " unsupported (want 32)");
        const size_t n = size / 4;
        out.samples.resize(n);
        f.read(reinterpret_cast<char*>(out.samples.data()),
               static_cast<std::streamsize>(n * 4));
        TFC_CHECK(f.good(), "wav: truncated data chunk");
      } else {
        TFC_CHECK(false, "wav: unsupported format tag " << format);
      }
      if (size % 2) f.seekg(1, std::ios::cur);
      have_data = true;
    } else {
      f.seekg(size + (size % 2), std::ios::cur);
    }
  }
  TFC_CHECK(have_fmt && have_data, "wav: missing fmt or data chunk in " << path);
  TFC_CHECK(out.samples.size() % static_cast<size_t>(out.channels) == 0,
            "wav: sample count not divisible by channel count");
  return out;
}

void write_wav(const std::string& path, const WavData& w, bool float32) {
  TFC_CHECK(w.channels > 0 && w.sample_rate > 0, "wav: invalid header fields");
  std::ofstream f(path, std::ios::binary);
  TFC_CHECK(f.is_open(), "wav: cannot write " << path);

  const uint16_t bytes_per = float32 ? 4 : 2;
  const uint32_t data_size = static_cast<uint32_t>(w.samples.size() * bytes_per);
  f.write("RIFF", 4);
  write_u32(f, 36 + data_size);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  write_u32(f, 16);
  write_u16(f, float32 ? kFormatFloat : kFormatPcm);
  write_u16(f, static_cast<uint16_t>(w.channels));
  write_u32(f, static_cast<uint32_t>(w.sample_rate));
  write_u32(f, static_cast<uint32_t>(w.sample_rate) * w.channels * bytes_per);
  write_u16(f, static_cast<uint16_t>(w.channels * bytes_per));
  write_u16(f, static_cast<uint16_t>(bytes_per * 8));
  f.write("data", 4);
  write_u32(f, data_size);
  if (float32) {
    f.write(reinterpret_cast<const char*>(w.samples.data()),
            static_cast<std::streamsize>(data_size));
  } else {
    std::vector<int16_t> raw(w.samples.size());
    for (size_t i = 0; i < w.samples.size(); ++i) {
      const float x = std::clamp(w.samples[i], -1.0f, 1.0f);
      raw[i] = static_cast<int16_t>(std::lrintf(x * 32767.0f));
    }
    f.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(data_size));
  }
  TFC_CHECK(f.good(), "wav: write failed for " << path);
}

}  // namespace tfcorr::wav
