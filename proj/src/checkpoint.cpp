#include "tfcorr/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint io writes raw element data and assumes a "
              "little-endian host");

namespace tfcorr {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'C', 'N'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_scalar(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_scalar(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  TFC_CHECK(is.gcount() == static_cast<std::streamsize>(sizeof(T)),
            "checkpoint: truncated file");
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

void read_exact(std::istream& is, void* dst, size_t n) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  TFC_CHECK(is.gcount() == static_cast<std::streamsize>(n),
            "checkpoint: truncated file");
}

size_t byte_size(const Tensor& t) {
  return static_cast<size_t>(t.numel()) * (t.dtype() == Dtype::F32 ? 4 : 8);
}

const void* raw_ptr(const Tensor& t) {
  const void* p = nullptr;
  dispatch(t.dtype(), [&](auto tag) {
    using R = decltype(tag);
    p = const_cast<Tensor&>(t).data<R>().data();
  });
  return p;
}

void* raw_ptr(Tensor& t) { return const_cast<void*>(raw_ptr(static_cast<const Tensor&>(t))); }

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
  TFC_CHECK(dst.dtype() == src.dtype(),
            "checkpoint: dtype mismatch for " << name);
  TFC_CHECK(dst.shape() == src.shape(),
            "checkpoint: shape mismatch for " << name << ": "
                << shape_str(dst.shape()) << " vs " << shape_str(src.shape()));
  std::memcpy(raw_ptr(dst), raw_ptr(src), byte_size(dst));
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::set<std::string> seen;
  for (const auto& [name, t] : ck.entries) {
    TFC_CHECK(seen.insert(name).second, "checkpoint: duplicate entry " << name);
    TFC_CHECK(t.defined(), "checkpoint: undefined tensor for " << name);
  }

  std::ofstream os(path, std::ios::binary);
  TFC_CHECK(os.good(), "checkpoint: cannot open " << path << " for writing");
  os.write(kMagic, 4);
  write_scalar<uint16_t>(os, kVersion);

  std::ostringstream cfg;
  for (const auto& [k, v] : ck.config) cfg << k << "=" << v << "\n";
  const std::string cfg_str = cfg.str();
  TFC_CHECK(cfg_str.size() <= UINT32_MAX, "checkpoint: config block too large");
  write_scalar<uint32_t>(os, static_cast<uint32_t>(cfg_str.size()));
  os.write(cfg_str.data(), static_cast<std::streamsize>(cfg_str.size()));

  TFC_CHECK(ck.entries.size() <= UINT32_MAX, "checkpoint: too many entries");
  write_scalar<uint32_t>(os, static_cast<uint32_t>(ck.entries.size()));
  for (const auto& [name, t] : ck.entries) {
    TFC_CHECK(name.size() <= UINT16_MAX, "checkpoint: name too long: " << name);
    write_scalar<uint16_t>(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_scalar<uint8_t>(os, t.dtype() == Dtype::F32 ? 0 : 1);
    TFC_CHECK(t.rank() <= UINT8_MAX, "checkpoint: rank too large for " << name);
    write_scalar<uint8_t>(os, static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape()) write_scalar<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(static_cast<const char*>(raw_ptr(t)),
             static_cast<std::streamsize>(byte_size(t)));
  }
  TFC_CHECK(os.good(), "checkpoint: write failed for " << path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  TFC_CHECK(is.good(), "checkpoint: cannot open " << path);

  char magic[4];
  read_exact(is, magic, 4);
  TFC_CHECK(std::memcmp(magic, kMagic, 4) == 0,
            "checkpoint: bad magic in " << path);
  const auto version = read_scalar<uint16_t>(is);
  TFC_CHECK(version == kVersion,
            "checkpoint: unsupported version " << version << " (want " << kVersion << ")");

  Checkpoint ck;
  const auto cfg_len = read_scalar<uint32_t>(is);
  std::string cfg_str(cfg_len, '\0');
  if (cfg_len > 0) read_exact(is, cfg_str.data(), cfg_len);
  std::istringstream cfg(cfg_str);
  std::string line;
  while (std::getline(cfg, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    TFC_CHECK(eq != std::string::npos, "checkpoint: malformed config line: " << line);
    ck.config[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const auto count = read_scalar<uint32_t>(is);
  std::set<std::string> seen;
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_scalar<uint16_t>(is);
    std::string name(name_len, '\0');
    if (name_len > 0) read_exact(is, name.data(), name_len);
    TFC_CHECK(seen.insert(name).second, "checkpoint: duplicate entry " << name);
    const auto dt = read_scalar<uint8_t>(is);
    TFC_CHECK(dt <= 1, "checkpoint: bad dtype tag " << int(dt) << " for " << name);
    const auto rank = read_scalar<uint8_t>(is);
    Shape shape(rank);
    int64_t numel = 1;
    constexpr int64_t kMaxElems = int64_t{1} << 40;
    for (auto& d : shape) {
      const uint64_t raw = read_scalar<uint64_t>(is);
      TFC_CHECK(raw <= static_cast<uint64_t>(kMaxElems),
                "checkpoint: implausible dim for " << name);
      d = static_cast<int64_t>(raw);
      TFC_CHECK(numel == 0 || d <= kMaxElems / std::max<int64_t>(numel, 1),
                "checkpoint: implausible size for " << name);
      numel = d == 0 ? 0 : numel * d;
    }
    Tensor t(shape, dt == 0 ? Dtype::F32 : Dtype::F64);
    read_exact(is, raw_ptr(t), byte_size(t));
    ck.entries.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

Checkpoint snapshot(const nn::ParamStore& ps, const AdamW* opt,
                    std::map<std::string, std::string> config) {
  Checkpoint ck;
  ck.config = std::move(config);
  if (opt) ck.config["step"] = std::to_string(opt->steps());
  for (const auto& [name, v] : ps.entries())
    ck.entries.emplace_back(name, v->value.clone());
  if (opt) {
    auto* mut = const_cast<AdamW*>(opt);
    for (const auto& [name, v] : ps.entries()) {
      ck.entries.emplace_back("adam.m." + name, mut->moment_m(name).clone());
      ck.entries.emplace_back("adam.v." + name, mut->moment_v(name).clone());
    }
  }
  return ck;
}

void restore(const Checkpoint& ck, nn::ParamStore& ps, AdamW* opt) {
  for (const auto& [name, v] : ps.entries()) {
    const Tensor* t = ck.find(name);
    TFC_CHECK(t != nullptr, "checkpoint: missing parameter " << name);
    copy_into(v->value, *t, name);
  }
  if (opt) {
    for (const auto& [name, v] : ps.entries()) {
      const Tensor* m = ck.find("adam.m." + name);
      const Tensor* mv = ck.find("adam.v." + name);
      TFC_CHECK(m != nullptr && mv != nullptr,
                "checkpoint: missing optimizer moments for " << name);
      copy_into(opt->moment_m(name), *m, "adam.m." + name);
      copy_into(opt->moment_v(name), *mv, "adam.v." + name);
    }
    const auto it = ck.config.find("step");
    if (it != ck.config.end()) opt->set_steps(std::stoll(it->second));
  }
}

}  // namespace tfcorr
