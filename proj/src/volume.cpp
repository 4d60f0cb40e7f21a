#include "tabs/volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "tabs/common.hpp"

namespace tabs {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'B', 'S', 'V', 'O', 'L', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF32 = 0;
// Caps dimensions well past paper scale while rejecting corrupt headers.
constexpr std::uint64_t kMaxElements = 1ull << 33;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t get_u32(const std::string& buf, std::size_t& off, const std::string& path) {
  if (off + 4 > buf.size())
    throw DataError(path + ": truncated header, need 4 bytes at offset " + std::to_string(off) +
                    ", file has " + std::to_string(buf.size()));
  std::uint32_t v;
  std::memcpy(&v, buf.data() + off, 4);
  off += 4;
  return v;
}

std::string serialize_meta(const std::map<std::string, std::string>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) {
    if (k.empty() || k.find('=') != std::string::npos || k.find('\n') != std::string::npos)
      throw UsageError("volume metadata key '" + k + "' may not contain '=' or newlines");
    if (v.find('\n') != std::string::npos)
      throw UsageError("volume metadata value for '" + k + "' may not contain newlines");
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::map<std::string, std::string> parse_meta(const std::string& text, const std::string& path) {
  std::map<std::string, std::string> meta;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) throw DataError(path + ": metadata line missing terminator");
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw DataError(path + ": malformed metadata line '" + line + "'");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

struct Header {
  VolumeInfo info;
  std::size_t payload_offset = 0;
};

Header parse_header(const std::string& buf, const std::string& path) {
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw DataError(path + ": bad magic, not a TABSVOL1 volume");
  std::size_t off = 8;
  const std::uint32_t version = get_u32(buf, off, path);
  if (version != kVersion)
    throw DataError(path + ": unsupported version " + std::to_string(version));
  Header h;
  h.info.channels = get_u32(buf, off, path);
  h.info.dx = get_u32(buf, off, path);
  h.info.dy = get_u32(buf, off, path);
  h.info.dz = get_u32(buf, off, path);
  const std::uint32_t dtype = get_u32(buf, off, path);
  if (dtype != kDtypeF32)
    throw DataError(path + ": unsupported dtype " + std::to_string(dtype));
  const std::uint32_t sem = get_u32(buf, off, path);
  if (sem > 3) throw DataError(path + ": unknown semantics tag " + std::to_string(sem));
  h.info.semantics = static_cast<Semantics>(sem);
  const std::uint32_t meta_len = get_u32(buf, off, path);
  if (off + meta_len > buf.size())
    throw DataError(path + ": truncated metadata, need " + std::to_string(meta_len) +
                    " bytes at offset " + std::to_string(off));
  h.info.meta = parse_meta(buf.substr(off, meta_len), path);
  h.payload_offset = off + meta_len;
  const std::uint64_t elems = static_cast<std::uint64_t>(h.info.channels) * h.info.dx *
                              h.info.dy * h.info.dz;
  if (h.info.channels == 0 || h.info.dx == 0 || h.info.dy == 0 || h.info.dz == 0 ||
      elems > kMaxElements)
    throw DataError(path + ": implausible dimensions " + std::to_string(h.info.channels) + "x" +
                    std::to_string(h.info.dx) + "x" + std::to_string(h.info.dy) + "x" +
                    std::to_string(h.info.dz));
  return h;
}

}  // namespace

const char* semantics_name(Semantics s) {
  switch (s) {
    case Semantics::raw_t1: return "raw_t1";
    case Semantics::tissue_probs: return "tissue_probs";
    case Semantics::labels: return "labels";
    case Semantics::mask: return "mask";
  }
  return "unknown";
}

Semantics semantics_from_name(const std::string& name) {
  if (name == "raw_t1") return Semantics::raw_t1;
  if (name == "tissue_probs") return Semantics::tissue_probs;
  if (name == "labels") return Semantics::labels;
  if (name == "mask") return Semantics::mask;
  throw DataError("unknown semantics '" + name + "'");
}

Volume::Volume(std::size_t channels, std::size_t dx, std::size_t dy, std::size_t dz,
               Semantics semantics)
    : channels(channels), dx(dx), dy(dy), dz(dz), semantics(semantics) {
  values.assign(channels * dx * dy * dz, 0.0f);
}

std::string Volume::meta_or(const std::string& key, const std::string& fallback) const {
  auto it = meta.find(key);
  return it == meta.end() ? fallback : it->second;
}

void validate_volume(const Volume& v) {
  if (v.channels == 0 || v.dx == 0 || v.dy == 0 || v.dz == 0)
    throw DataError("volume has empty dimensions");
  if (v.values.size() != v.channels * v.voxels())
    throw DataError("volume buffer holds " + std::to_string(v.values.size()) +
                    " values, dimensions require " + std::to_string(v.channels * v.voxels()));
  for (float x : v.values)
    if (!std::isfinite(x)) throw DataError("volume contains non-finite values");
  if (v.semantics == Semantics::tissue_probs) {
    if (v.channels != 3) throw DataError("tissue_probs volume must have 3 channels");
    const std::size_t n = v.voxels();
    const float* p = v.values.data();
    for (std::size_t i = 0; i < n; ++i) {
      const float s = p[i] + p[n + i] + p[2 * n + i];
      if (s != 0.0f && (s < 1.0f - 1e-4f || s > 1.0f + 1e-4f))
        throw DataError("tissue probabilities sum to " + std::to_string(s) + " at voxel " +
                        std::to_string(i));
    }
  }
}

void save_volume(const Volume& v, const std::string& path) {
  validate_volume(v);
  std::string out;
  out.reserve(64 + v.values.size() * 4);
  out.append(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(v.channels));
  put_u32(out, static_cast<std::uint32_t>(v.dx));
  put_u32(out, static_cast<std::uint32_t>(v.dy));
  put_u32(out, static_cast<std::uint32_t>(v.dz));
  put_u32(out, kDtypeF32);
  put_u32(out, static_cast<std::uint32_t>(v.semantics));
  const std::string meta = serialize_meta(v.meta);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  out.append(reinterpret_cast<const char*>(v.values.data()), v.values.size() * 4);
  atomic_write_file(path, out);
}

Volume load_volume(const std::string& path) {
  const std::string buf = read_file(path);
  const Header h = parse_header(buf, path);
  Volume v(h.info.channels, h.info.dx, h.info.dy, h.info.dz, h.info.semantics);
  v.meta = h.info.meta;
  const std::size_t need = v.values.size() * 4;
  if (buf.size() - h.payload_offset != need)
    throw DataError(path + ": payload expected " + std::to_string(need) + " bytes, found " +
                    std::to_string(buf.size() - h.payload_offset));
  std::memcpy(v.values.data(), buf.data() + h.payload_offset, need);
  validate_volume(v);
  return v;
}

VolumeInfo inspect_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  // Headers are tiny; read a bounded prefix instead of the payload.
  std::string buf(4096, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  std::size_t base = 8 + 7 * 4;
  if (buf.size() >= base) {
    std::size_t off = base - 4;
    const std::uint32_t meta_len = get_u32(buf, off, path);
    const std::size_t need = base + meta_len;
    if (need > buf.size()) {
      std::string more(need - buf.size(), '\0');
      in.read(more.data(), static_cast<std::streamsize>(more.size()));
      more.resize(static_cast<std::size_t>(in.gcount()));
      buf += more;
    }
  }
  return parse_header(buf, path).info;
}

Tensor to_tensor(const Volume& v) {
  return Tensor(Shape{v.channels, v.dx, v.dy, v.dz}, v.values);
}

Volume from_tensor(const Tensor& t, Semantics semantics, std::map<std::string, std::string> meta) {
  if (t.rank() != 4) throw UsageError("from_tensor expects rank-4 [C,dx,dy,dz], got " +
                                      shape_str(t.shape()));
  Volume v(t.extent(0), t.extent(1), t.extent(2), t.extent(3), semantics);
  v.meta = std::move(meta);
  v.values.assign(t.data().begin(), t.data().end());
  return v;
}

}  // namespace tabs
