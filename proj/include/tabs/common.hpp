#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace tabs {

// Error categories map onto the CLI exit codes: usage/configuration errors
// exit 1, data/format errors exit 2, numeric failures (NaN) exit 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Compute-kernel backend. Every kernel reduces each output element in a fixed
// serial order owned by one thread, so serial and parallel results are
// bitwise identical; serial is the reference the tests compare against.
enum class Exec { serial, parallel };

Exec active_exec();
void set_exec(Exec mode);

// True when TABS_SEQUENTIAL=1 is set in the environment. Forces Exec::serial
// and caps evaluation jobs at 1 regardless of later set_exec/set_eval_jobs.
bool sequential_forced();

// Subject-level parallelism for evaluation loops (--jobs).
int eval_jobs();
void set_eval_jobs(int jobs);

// Whole-file atomic write: temp file in the target directory, then rename.
// Failed writes never leave a partial file at `path`.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

// Whole file into memory; DataError when the file is missing or unreadable.
std::string read_file(const std::filesystem::path& path);

// splitmix64 step; decorrelates derived seeds (per-epoch shuffles, per-subject
// noise streams) from a base seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace tabs
