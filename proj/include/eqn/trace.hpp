#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eqn/vec.hpp"

// Chain traces: per-iteration per-walker observable rows plus run metadata.
// The binary form is the bit-exactness reference (identical runs produce
// identical files); a text form with the same logical schema is available
// for inspection.  Timing and acceptance summaries live in a sidecar
// key=value file so the trace bytes stay deterministic.

namespace eqn {

struct TraceMeta {
  std::string sampler;
  std::string preset;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;  // full run configuration
  std::uint64_t target_hash = 0;  // target + observable lineage
  bool biased = false;
  int walkers = 1;
  std::vector<std::string> columns;
};

struct TraceSidecar {
  double grads_per_iteration = 0.0;
  double seconds_per_iteration = 0.0;
  double acceptance_rate = 1.0;
  std::uint64_t step_errors = 0;
  std::uint64_t iterations = 0;
};

class TraceWriter {
 public:
  // Creates the file and writes the header.  When `resume_rows` is nonzero,
  // the file must already exist with exactly that many rows; new rows append.
  TraceWriter(const std::string& path, const TraceMeta& meta, bool binary,
              std::uint64_t resume_rows = 0);
  ~TraceWriter();

  // One iteration's rows: walkers x columns values.
  void append(std::uint64_t iteration, ConstSpan row_block);
  void flush();

  // Writes the sidecar (<path>.meta).
  void finalize(const TraceSidecar& s);

  const std::string& path() const noexcept { return path_; }
  std::uint64_t rows_written() const noexcept { return rows_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string path_;
  std::uint64_t rows_ = 0;
};

struct ChainTrace {
  TraceMeta meta;
  TraceSidecar sidecar;
  std::uint64_t rows = 0;
  Vec data;  // rows x walkers x columns

  double value(std::uint64_t t, int walker, int col) const {
    return data[(t * meta.walkers + std::size_t(walker)) * meta.columns.size() + col];
  }
  int column(const std::string& name) const;  // -1 if absent

  Vec walker_series(int walker, int col) const;
  Vec ensemble_mean_series(int col) const;
  double mean(int col) const;
};

ChainTrace read_trace(const std::string& path);

// FNV-1a of a canonical string; used for config and lineage hashes.
std::uint64_t fnv1a(const std::string& s);

}  // namespace eqn
