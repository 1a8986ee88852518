#pragma once

#include <map>
#include <string>
#include <vector>

#include "affmatch/binio.hpp"
#include "affmatch/errors.hpp"
#include "affmatch/tensor.hpp"

namespace affmatch {

// Flat binary container mapping parameter names to shaped 64-bit values.
// Little-endian throughout; doubles round-trip bit-exactly. Entries are
// written in name order so identical stores serialize to identical bytes.

inline constexpr char kCheckpointMagic[8] = {'A', 'F', 'M', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& entries) {
  BufWriter w;
  w.bytes(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u64(entries.size());
  for (const auto& [name, t] : entries) {
    if (name.empty() || name.size() > 0xffff) throw IoError("checkpoint: bad entry name");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u16(2);
    w.u64(t.rows());
    w.u64(t.cols());
    for (double v : t.data()) w.f64(v);
  }
  w.write_file(path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  BufReader r = BufReader::read_file(path);
  if (r.str(8) != std::string(kCheckpointMagic, 8)) throw IoError("checkpoint: bad magic: " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t count = r.u64();
  std::map<std::string, Tensor> out;
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::string name = r.str(r.u16());
    const std::uint16_t rank = r.u16();
    if (rank != 2) throw IoError("checkpoint: unsupported rank " + std::to_string(rank));
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    std::vector<double> data(rows * cols);
    for (auto& v : data) v = r.f64();
    out.emplace(name, Tensor::from(rows, cols, std::move(data)));
  }
  if (!r.at_end()) throw IoError("checkpoint: trailing bytes: " + path);
  return out;
}

}  // namespace affmatch
