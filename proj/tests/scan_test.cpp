#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "hjbscan/scan.hpp"

namespace hjbscan {
namespace {

std::vector<long> scan_ints(const std::vector<long>& in, ScanDirection dir, Backend backend,
                            WorkerPool* pool = nullptr) {
  return inclusive_scan(in, std::plus<long>{}, ScanPlan{in.size(), dir, backend}, pool);
}

TEST(InclusiveScan, ForwardSum) {
  EXPECT_EQ(scan_ints({1, 2, 3, 4}, ScanDirection::kForward, Backend::kSequential), (std::vector<long>{1, 3, 6, 10}));
}

TEST(InclusiveScan, ReverseSum) {
  EXPECT_EQ(scan_ints({1, 2, 3, 4}, ScanDirection::kReverse, Backend::kSequential), (std::vector<long>{10, 9, 7, 4}));
}

TEST(InclusiveScan, GammaProduct) {
  const std::vector<double> in{std::exp(0.3), std::exp(0.7)};
  const auto out = inclusive_scan(in, std::multiplies<double>{}, ScanPlan{2, ScanDirection::kForward});
  EXPECT_EQ(out[0], std::exp(0.3));
  EXPECT_NEAR(out[1], std::exp(1.0), 1e-15);
}

TEST(InclusiveScan, RejectsEmptyAndMismatchedPlan) {
  const std::vector<long> empty;
  EXPECT_THROW(inclusive_scan(empty, std::plus<long>{}, ScanPlan{0}), std::invalid_argument);
  const std::vector<long> three{1, 2, 3};
  EXPECT_THROW(inclusive_scan(three, std::plus<long>{}, ScanPlan{4}), std::invalid_argument);
}

// Non-commutative, associative: string concatenation exposes operand order.
TEST(InclusiveScan, OperandOrderEveryLength) {
  WorkerPool pool(3);
  auto cat = [](const std::string& a, const std::string& b) { return a + b; };
  for (std::size_t T = 1; T <= 70; ++T) {
    std::vector<std::string> in(T);
    for (std::size_t k = 0; k < T; ++k) in[k] = std::string(1, static_cast<char>('A' + k % 26));
    for (auto dir : {ScanDirection::kForward, ScanDirection::kReverse}) {
      for (auto backend : {Backend::kSequential, Backend::kParallel}) {
        const auto out = inclusive_scan(in, cat, ScanPlan{T, dir, backend}, &pool);
        for (std::size_t k = 0; k < T; ++k) {
          const std::string expect = dir == ScanDirection::kForward
                                         ? std::accumulate(in.begin(), in.begin() + k + 1, std::string{})
                                         : std::accumulate(in.begin() + k, in.end(), std::string{});
          ASSERT_EQ(out[k], expect) << "T=" << T << " k=" << k;
        }
      }
      const auto padded = inclusive_scan(in, cat, ScanPlan{T, dir}, nullptr, std::optional<std::string>{""});
      EXPECT_EQ(padded, inclusive_scan(in, cat, ScanPlan{T, dir})) << "T=" << T;
    }
  }
}

TEST(InclusiveScan, FirstElementUnchanged) {
  std::vector<double> in{0.1, 0.2, 0.3};
  const auto out = inclusive_scan(in, std::plus<double>{}, ScanPlan{3});
  EXPECT_EQ(out[0], in[0]);
}

TEST(InclusiveScan, ParallelBitwiseEqualsSequential) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  WorkerPool pool(4);
  for (std::size_t T : {1u, 2u, 5u, 17u, 100u, 1000u, 1023u}) {
    std::vector<double> in(T);
    for (auto& x : in) x = u(rng);
    for (auto dir : {ScanDirection::kForward, ScanDirection::kReverse}) {
      const auto seq = inclusive_scan(in, std::plus<double>{}, ScanPlan{T, dir, Backend::kSequential});
      const auto par = inclusive_scan(in, std::plus<double>{}, ScanPlan{T, dir, Backend::kParallel}, &pool);
      ASSERT_EQ(0, std::memcmp(seq.data(), par.data(), T * sizeof(double))) << "T=" << T;
    }
  }
}

TEST(InclusiveScan, FloatingSumCloseToLeftFold) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> in(5000);
  for (auto& x : in) x = u(rng);
  const auto out = inclusive_scan(in, std::plus<double>{}, ScanPlan{in.size()});
  double fold = 0.0;
  for (std::size_t k = 0; k < in.size(); ++k) {
    fold += in[k];
    ASSERT_NEAR(out[k], fold, 1e-8 * fold);
  }
}

TEST(ScanDepth, Examples) {
  EXPECT_EQ(scan_depth(1), 0);
  EXPECT_EQ(scan_depth(8), 3);
  EXPECT_EQ(scan_depth(1000), 10);
  EXPECT_THROW(scan_depth(0), std::invalid_argument);
}

TEST(ScanDepth, MeasuredLevelsMatch) {
  for (std::size_t T = 1; T <= 600; ++T) {
    std::vector<int> in(T, 1);
    ScanStats stats;
    inclusive_scan(in, std::plus<int>{}, ScanPlan{T}, nullptr, std::optional<int>{}, &stats);
    ASSERT_EQ(stats.up_sweep_levels, scan_depth(T)) << "T=" << T;
    ASSERT_LE(stats.down_sweep_levels, scan_depth(T)) << "T=" << T;
    ASSERT_LE(stats.combines, 2 * T) << "T=" << T;
  }
}

TEST(WorkerPool, ParallelForVisitsEveryIndexOnce) {
  WorkerPool pool(4);
  std::vector<int> hits(10007, 0);
  pool.parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) ASSERT_EQ(h, 1);
}

TEST(WorkerPool, PropagatesExceptions) {
  WorkerPool pool(3);
  EXPECT_THROW(pool.parallel_for(100, [](std::size_t i) {
    if (i == 57) throw std::runtime_error("boom");
  }),
               std::runtime_error);
  std::vector<int> hits(50, 0);
  pool.parallel_for(hits.size(), [&](std::size_t i) { hits[i] = 1; });
  EXPECT_EQ(std::accumulate(hits.begin(), hits.end(), 0), 50);
}

}  // namespace
}  // namespace hjbscan
