#include "tabs/checkpoint.hpp"

#include <cstring>
#include <set>

#include "tabs/common.hpp"

namespace tabs {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'B', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxElements = 1ull << 33;

template <typename T>
void put_raw(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

template <typename T>
T get_raw(const std::string& buf, std::size_t& off, const std::string& path) {
  if (off + sizeof(T) > buf.size())
    throw DataError(path + ": truncated, need " + std::to_string(sizeof(T)) +
                    " bytes at offset " + std::to_string(off) + ", file has " +
                    std::to_string(buf.size()));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void put_entry(std::string& out, const CheckpointEntry& e) {
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
  out += e.name;
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
  for (std::size_t d : e.shape) put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  out.append(reinterpret_cast<const char*>(e.values.data()), e.values.size() * 4);
}

CheckpointEntry get_entry(const std::string& buf, std::size_t& off, const std::string& path) {
  CheckpointEntry e;
  const std::uint32_t name_len = get_raw<std::uint32_t>(buf, off, path);
  if (name_len > 4096 || off + name_len > buf.size())
    throw DataError(path + ": implausible name length " + std::to_string(name_len) +
                    " at offset " + std::to_string(off - 4));
  e.name = buf.substr(off, name_len);
  off += name_len;
  const std::uint32_t rank = get_raw<std::uint32_t>(buf, off, path);
  if (rank > 8) throw DataError(path + ": implausible tensor rank " + std::to_string(rank));
  std::uint64_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = get_raw<std::uint32_t>(buf, off, path);
    e.shape.push_back(d);
    numel *= d;
    if (numel > kMaxElements)
      throw DataError(path + ": tensor '" + e.name + "' too large");
  }
  const std::size_t bytes = static_cast<std::size_t>(numel) * 4;
  if (off + bytes > buf.size())
    throw DataError(path + ": truncated payload for '" + e.name + "', need " +
                    std::to_string(bytes) + " bytes at offset " + std::to_string(off) +
                    ", file has " + std::to_string(buf.size()));
  e.values.resize(static_cast<std::size_t>(numel));
  std::memcpy(e.values.data(), buf.data() + off, bytes);
  off += bytes;
  return e;
}

void check_unique(const std::vector<CheckpointEntry>& entries, const std::string& path,
                  const char* what) {
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (!seen.insert(e.name).second)
      throw DataError(path + ": duplicate " + what + " '" + e.name + "'");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, 8);
  put_raw<std::uint32_t>(out, kVersion);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
  out += ckpt.config_text;
  put_raw<std::uint32_t>(out, ckpt.epoch);
  put_raw<double>(out, ckpt.best_val);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& e : ckpt.params) put_entry(out, e);
  put_raw<std::uint64_t>(out, ckpt.adam.step);
  put_raw<double>(out, ckpt.adam.learning_rate);
  put_raw<double>(out, ckpt.adam.beta1);
  put_raw<double>(out, ckpt.adam.beta2);
  put_raw<double>(out, ckpt.adam.eps);
  put_raw<double>(out, ckpt.adam.weight_decay);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.adam.slots.size()));
  for (const auto& e : ckpt.adam.slots) put_entry(out, e);
  atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& fpath) {
  const std::string path = fpath.string();
  const std::string buf = read_file(fpath);
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw DataError(path + ": bad magic, not a checkpoint file");
  std::size_t off = 8;
  Checkpoint ckpt;
  const std::uint32_t version = get_raw<std::uint32_t>(buf, off, path);
  if (version != kVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t cfg_len = get_raw<std::uint32_t>(buf, off, path);
  if (off + cfg_len > buf.size())
    throw DataError(path + ": truncated config text at offset " + std::to_string(off));
  ckpt.config_text = buf.substr(off, cfg_len);
  off += cfg_len;
  ckpt.epoch = get_raw<std::uint32_t>(buf, off, path);
  ckpt.best_val = get_raw<double>(buf, off, path);
  const std::uint32_t count = get_raw<std::uint32_t>(buf, off, path);
  if (count > 100000) throw DataError(path + ": implausible parameter count");
  ckpt.params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) ckpt.params.push_back(get_entry(buf, off, path));
  ckpt.adam.step = get_raw<std::uint64_t>(buf, off, path);
  ckpt.adam.learning_rate = get_raw<double>(buf, off, path);
  ckpt.adam.beta1 = get_raw<double>(buf, off, path);
  ckpt.adam.beta2 = get_raw<double>(buf, off, path);
  ckpt.adam.eps = get_raw<double>(buf, off, path);
  ckpt.adam.weight_decay = get_raw<double>(buf, off, path);
  const std::uint32_t slot_count = get_raw<std::uint32_t>(buf, off, path);
  if (slot_count > 200000) throw DataError(path + ": implausible optimizer slot count");
  ckpt.adam.slots.reserve(slot_count);
  for (std::uint32_t i = 0; i < slot_count; ++i)
    ckpt.adam.slots.push_back(get_entry(buf, off, path));
  if (off != buf.size())
    throw DataError(path + ": " + std::to_string(buf.size() - off) + " trailing bytes");
  check_unique(ckpt.params, path, "parameter");
  check_unique(ckpt.adam.slots, path, "optimizer slot");
  return ckpt;
}

std::vector<CheckpointEntry> snapshot_params(const Model& model) {
  std::vector<CheckpointEntry> out;
  for (const auto& [name, tensor] : model.parameters()) {
    CheckpointEntry e;
    e.name = name;
    e.shape = tensor.shape();
    e.values.assign(tensor.data().begin(), tensor.data().end());
    out.push_back(std::move(e));
  }
  return out;
}

void load_into_model(Model& model, const std::vector<CheckpointEntry>& params) {
  auto& live = model.parameters();
  if (live.size() != params.size())
    throw DataError("checkpoint holds " + std::to_string(params.size()) +
                    " parameters, model expects " + std::to_string(live.size()));
  for (const auto& e : params) {
    Tensor& t = model.param(e.name);  // throws on unknown name
    if (t.shape() != e.shape)
      throw DataError("checkpoint parameter '" + e.name + "' has shape " + shape_str(e.shape) +
                      ", model expects " + shape_str(t.shape()));
    std::copy(e.values.begin(), e.values.end(), t.raw_data().begin());
  }
}

}  // namespace tabs
