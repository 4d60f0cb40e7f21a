#include "tabs/common.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <system_error>

namespace tabs {

namespace {

bool read_sequential_env() {
  const char* v = std::getenv("TABS_SEQUENTIAL");
  return v != nullptr && std::string(v) == "1";
}

std::atomic<Exec> g_exec{read_sequential_env() ? Exec::serial : Exec::parallel};
std::atomic<int> g_eval_jobs{1};

}  // namespace

bool sequential_forced() {
  static const bool forced = read_sequential_env();
  return forced;
}

Exec active_exec() {
  if (sequential_forced()) return Exec::serial;
  return g_exec.load(std::memory_order_relaxed);
}

void set_exec(Exec mode) { g_exec.store(mode, std::memory_order_relaxed); }

int eval_jobs() {
  if (sequential_forced()) return 1;
  return g_eval_jobs.load(std::memory_order_relaxed);
}

void set_eval_jobs(int jobs) {
  g_eval_jobs.store(jobs < 1 ? 1 : jobs, std::memory_order_relaxed);
}

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  fs::path dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("rename failed for: " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof()) throw DataError(path.string() + ": read failed");
  return buf;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace tabs
