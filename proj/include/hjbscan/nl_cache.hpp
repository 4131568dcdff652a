#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "hjbscan/nl_hjb.hpp"

namespace hjbscan {

/// 64-bit FNV-1a over raw bytes.
class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= p[i];
      hash_ *= 1099511628211ull;
    }
  }
  template <class T>
  void add(const T& value) {
    add_bytes(&value, sizeof(T));
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 14695981039346656037ull;
};

/// Content key of a block element: problem constants, state grid, block length, shooting intervals.
inline std::uint64_t element_cache_key(const NonlinearScalarProblem& p, const StateGrid& grid, double block_length,
                                       int n) {
  Fnv1a h;
  for (double c : {p.c0, p.c1, p.c2, p.g, p.qx, p.ru, p.pf, grid.x_min, grid.x_max, block_length}) h.add(c);
  h.add(grid.num_points);
  h.add(n);
  return h.value();
}

inline std::filesystem::path element_cache_path(const std::filesystem::path& dir, std::uint64_t key) {
  char name[40];
  std::snprintf(name, sizeof(name), "element-%016llx.bin", static_cast<unsigned long long>(key));
  return dir / name;
}

namespace detail {
inline constexpr char kCacheMagic[8] = {'H', 'J', 'B', 'E', 'L', 'M', '0', '1'};
}

inline void save_element(const std::filesystem::path& file, std::uint64_t key, const BlockElement& e) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write element cache " + file.string());
  const auto& d = e.diagnostics;
  const std::int64_t M = e.element.values.rows();
  out.write(detail::kCacheMagic, sizeof(detail::kCacheMagic));
  out.write(reinterpret_cast<const char*>(&key), sizeof(key));
  out.write(reinterpret_cast<const char*>(&M), sizeof(M));
  for (long v : {d.pairs, d.converged, d.out_of_range, d.failed}) {
    const std::int64_t w = v;
    out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  }
  out.write(reinterpret_cast<const char*>(&d.max_constraint_violation), sizeof(double));
  out.write(reinterpret_cast<const char*>(&d.max_stationarity), sizeof(double));
  out.write(reinterpret_cast<const char*>(e.element.values.data()),
            static_cast<std::streamsize>(sizeof(double) * M * M));
  if (!out) throw std::runtime_error("failed writing element cache " + file.string());
}

/// The cached element, or nothing when the file is missing, foreign or truncated.
inline std::optional<BlockElement> load_element(const std::filesystem::path& file, std::uint64_t key,
                                                const StateGrid& grid, double s, double block_length) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[sizeof(detail::kCacheMagic)];
  std::uint64_t stored_key = 0;
  std::int64_t M = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&stored_key), sizeof(stored_key));
  in.read(reinterpret_cast<char*>(&M), sizeof(M));
  if (!in || std::memcmp(magic, detail::kCacheMagic, sizeof(magic)) != 0 || stored_key != key ||
      M != grid.num_points) {
    return std::nullopt;
  }
  BlockElement e;
  std::int64_t counts[4];
  in.read(reinterpret_cast<char*>(counts), sizeof(counts));
  in.read(reinterpret_cast<char*>(&e.diagnostics.max_constraint_violation), sizeof(double));
  in.read(reinterpret_cast<char*>(&e.diagnostics.max_stationarity), sizeof(double));
  e.diagnostics.pairs = counts[0];
  e.diagnostics.converged = counts[1];
  e.diagnostics.out_of_range = counts[2];
  e.diagnostics.failed = counts[3];
  e.element = GridCondValueFn{grid, Eigen::MatrixXd(M, M), s, s + block_length, false};
  in.read(reinterpret_cast<char*>(e.element.values.data()), static_cast<std::streamsize>(sizeof(double) * M * M));
  if (!in) return std::nullopt;
  return e;
}

}  // namespace hjbscan
