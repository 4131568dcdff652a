#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hjbscan/parallel.hpp"

namespace hjbscan {

enum class ScanDirection { kForward, kReverse };

struct ScanPlan {
  std::size_t length = 0;
  ScanDirection direction = ScanDirection::kForward;
  Backend backend = Backend::kSequential;
};

struct ScanStats {
  int up_sweep_levels = 0;
  int down_sweep_levels = 0;
  std::size_t combines = 0;
};

/// Critical-path combine depth of the up-sweep: ceil(log2 T).
inline int scan_depth(std::size_t length) {
  if (length == 0) throw std::invalid_argument("scan_depth: empty sequence");
  return static_cast<int>(std::bit_width(length - 1));
}

/// The fixed combination tree shared by both backends.
///
/// Brent-Kung up-sweep and down-sweep over `size` slots. Every level is a list
/// of (src, dst) pairs meaning slot[dst] = slot[src] (+) slot[dst]; pairs in a
/// level touch disjoint destinations and never read another pair's
/// destination, so a level can run in any order or concurrently. When `size`
/// is not a power of two, the last partial group of each up-sweep level is
/// merged into the final slot so that slot size-1 holds the full reduction
/// after exactly ceil(log2 size) levels.
class ScanSchedule {
 public:
  using Level = std::vector<std::pair<std::size_t, std::size_t>>;

  explicit ScanSchedule(std::size_t size) : size_(size) {
    if (size == 0) throw std::invalid_argument("scan: empty sequence");
    // lo[p]: first index of the range currently accumulated in slot p.
    std::vector<std::size_t> lo(size);
    for (std::size_t p = 0; p < size; ++p) lo[p] = p;

    for (std::size_t half = 1; half < size; half *= 2) {
      Level level;
      for (std::size_t g = 0; g < size; g += 2 * half) {
        const std::size_t left = g + half - 1;
        if (left >= size - 1) break;
        const std::size_t right = std::min(g + 2 * half - 1, size - 1);
        if (lo[right] != left + 1) throw std::logic_error("scan schedule: non-adjacent up-sweep merge");
        level.emplace_back(left, right);
        lo[right] = lo[left];
      }
      up_.push_back(std::move(level));
    }

    const std::size_t top = up_.size();
    for (std::size_t d = top; d-- > 0;) {
      const std::size_t half = std::size_t{1} << d;
      Level level;
      for (std::size_t i = 2 * half - 1; i + half < size; i += 2 * half) {
        const std::size_t j = i + half;
        if (lo[i] == 0 && lo[j] == i + 1) {
          level.emplace_back(i, j);
          lo[j] = 0;
        }
      }
      if (!level.empty()) down_.push_back(std::move(level));
    }
    for (std::size_t p = 0; p < size; ++p) {
      if (lo[p] != 0) throw std::logic_error("scan schedule: incomplete prefix");
    }
  }

  std::size_t size() const { return size_; }
  const std::vector<Level>& up_sweep() const { return up_; }
  const std::vector<Level>& down_sweep() const { return down_; }

 private:
  std::size_t size_;
  std::vector<Level> up_;
  std::vector<Level> down_;
};

/// All inclusive prefix (forward) or suffix (reverse) combinations.
///
/// forward: out[k] = a[0] (+) ... (+) a[k]
/// reverse: out[k] = a[k] (+) ... (+) a[T-1]
///
/// `combine` must be associative and safe to call concurrently. When an
/// identity element is supplied the sequence is padded to a power of two.
/// Sequential and parallel backends evaluate the same tree, so their outputs
/// are bitwise identical.
template <class E, class Combine>
std::vector<E> inclusive_scan(std::span<const E> elements, Combine&& combine, const ScanPlan& plan,
                              WorkerPool* pool = nullptr, const std::optional<E>& identity = std::nullopt,
                              ScanStats* stats = nullptr) {
  const std::size_t n = elements.size();
  if (n == 0) throw std::invalid_argument("inclusive_scan: empty input");
  if (plan.length != n) throw std::invalid_argument("inclusive_scan: plan length does not match input");

  const bool reverse = plan.direction == ScanDirection::kReverse;
  const std::size_t padded = identity ? std::bit_ceil(n) : n;

  std::vector<E> work;
  work.reserve(padded);
  for (std::size_t k = 0; k < n; ++k) work.push_back(elements[reverse ? n - 1 - k : k]);
  for (std::size_t k = n; k < padded; ++k) work.push_back(*identity);

  // In reverse mode the sequence is flipped, so the operands swap sides.
  auto apply = [&](std::size_t src, std::size_t dst) {
    work[dst] = reverse ? combine(work[dst], work[src]) : combine(work[src], work[dst]);
  };

  const ScanSchedule schedule(padded);
  const Execution exec{plan.backend, pool};
  std::size_t combines = 0;
  for (const auto* sweep : {&schedule.up_sweep(), &schedule.down_sweep()}) {
    for (const auto& level : *sweep) {
      exec.for_each(level.size(), [&](std::size_t i) { apply(level[i].first, level[i].second); });
      combines += level.size();
    }
  }
  if (stats) {
    stats->up_sweep_levels = static_cast<int>(schedule.up_sweep().size());
    stats->down_sweep_levels = static_cast<int>(schedule.down_sweep().size());
    stats->combines = combines;
  }

  work.erase(work.begin() + static_cast<std::ptrdiff_t>(n), work.end());
  if (reverse) std::reverse(work.begin(), work.end());
  return work;
}

template <class E, class Combine>
std::vector<E> inclusive_scan(const std::vector<E>& elements, Combine&& combine, const ScanPlan& plan,
                              WorkerPool* pool = nullptr, const std::optional<E>& identity = std::nullopt,
                              ScanStats* stats = nullptr) {
  return inclusive_scan(std::span<const E>(elements), std::forward<Combine>(combine), plan, pool, identity,
                        stats);
}

}  // namespace hjbscan
