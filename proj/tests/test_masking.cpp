#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

using namespace maeast;
using namespace maeast::masking;

namespace {

void check_partition(const MaskPlan& plan, Index n) {
  REQUIRE(plan.size() == n);
  CHECK(std::is_sorted(plan.masked.begin(), plan.masked.end()));
  CHECK(std::is_sorted(plan.unmasked.begin(), plan.unmasked.end()));
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  for (Index i : plan.masked) ++seen[i];
  for (Index i : plan.unmasked) ++seen[i];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

}  // namespace

TEST_CASE("random masking") {
  const auto plan = mask_random(496, 0.75, 1);
  check_partition(plan, 496);
  CHECK(plan.masked.size() == 372);
  CHECK(plan.unmasked.size() == 124);

  const auto two = mask_random(2, 0.5, 3);
  CHECK(two.masked.size() == 1);
  CHECK(two.unmasked.size() == 1);

  CHECK(mask_random(50, 0.3, 9).masked == mask_random(50, 0.3, 9).masked);
  CHECK(mask_random(50, 0.3, 9).masked != mask_random(50, 0.3, 10).masked);

  std::array<int, 4> hits{};
  const int seeds = 100000;
  for (int s = 0; s < seeds; ++s) {
    const auto p = mask_random(4, 0.5, static_cast<std::uint64_t>(s));
    REQUIRE(p.masked.size() == 2);
    for (Index i : p.masked) ++hits[i];
  }
  for (int h : hits) CHECK(std::abs(h / static_cast<double>(seeds) - 0.5) < 0.01);

  CHECK_THROWS(mask_random(1, 0.5, 0));
  CHECK_THROWS(mask_random(10, 0.0, 0));
  CHECK_THROWS(mask_random(10, 1.0, 0));
  CHECK_THROWS(mask_random(3, 0.1, 0));   // round(0.3) = 0 masked
  CHECK_THROWS(mask_random(3, 0.9, 0));   // round(2.7) = 3, nothing unmasked
}

TEST_CASE("exact counts over the sweep") {
  for (double p : {0.25, 0.5, 0.75}) {
    for (Index n = 8; n <= 1024; ++n) {
      const Index want = round_count(p, n);
      const auto r = mask_random(n, p, static_cast<std::uint64_t>(n));
      REQUIRE(static_cast<Index>(r.masked.size()) == want);
      if (n % 8 == 0) {
        const auto c = mask_patch_chunked(n / 8, 8, p, static_cast<std::uint64_t>(n));
        check_partition(c, n);
        REQUIRE(static_cast<Index>(c.masked.size()) == want);
      }
    }
  }
}

TEST_CASE("chunked patch masking") {
  SUBCASE("full-size grid") {
    const auto plan = mask_patch_chunked(62, 8, 0.75, 5);
    check_partition(plan, 496);
    CHECK(plan.masked.size() == 372);
    CHECK(plan.warnings.empty());
    CHECK(plan.masked == mask_patch_chunked(62, 8, 0.75, 5).masked);
  }
  SUBCASE("small ratio truncates one chunk") {
    const auto plan = mask_patch_chunked(62, 8, 0.005, 6);
    CHECK(plan.masked.size() == 2);
  }
  SUBCASE("narrow grid falls back to random with a warning") {
    const auto plan = mask_patch_chunked(50, 1, 0.5, 7);
    CHECK(plan.masked.size() == 25);
    CHECK(plan.strategy == Strategy::PatchRandom);
    CHECK(plan.warnings.size() == 1);
  }
  SUBCASE("chunked clusters more than random, 95% bootstrap") {
    const int trials = 300;
    std::vector<double> chunked, random;
    for (int k = 0; k < trials; ++k) {
      chunked.push_back(clustering_statistic(mask_patch_chunked(62, 8, 0.5, mix_seed(1, k)), 62, 8));
      random.push_back(clustering_statistic(mask_random(496, 0.5, mix_seed(2, k)), 62, 8));
    }
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> pick(0, trials - 1);
    std::vector<double> diffs;
    for (int b = 0; b < 2000; ++b) {
      double sc = 0, sr = 0;
      for (int i = 0; i < trials; ++i) sc += chunked[pick(rng)], sr += random[pick(rng)];
      diffs.push_back((sc - sr) / trials);
    }
    CHECK(percentile(diffs, 0.025) > 0.0);
  }
}

TEST_CASE("clustering statistic by hand") {
  MaskPlan plan;
  // 3 x 3 grid, masked: the centre and its right-hand neighbour.
  plan.masked = {4, 5};
  plan.unmasked = {0, 1, 2, 3, 6, 7, 8};
  // Index 4 = (t1, c1), index 5 = (t1, c2): mutual row neighbours.
  CHECK(clustering_statistic(plan, 3, 3) == 1.0);
  plan.masked = {0, 8};
  plan.unmasked = {1, 2, 3, 4, 5, 6, 7};
  CHECK(clustering_statistic(plan, 3, 3) == 0.0);
}

TEST_CASE("span masking calibration") {
  CHECK(calibrate_span_p(0.75, 10).start_probability == doctest::Approx(0.129449).epsilon(1e-5));
  CHECK(calibrate_span_p(0.3, 1).start_probability == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(calibrate_span_p(1e-9, 10).start_probability < 1e-9);
  CHECK_THROWS(calibrate_span_p(0.0, 10));
  CHECK_THROWS(calibrate_span_p(0.5, 0));

  const auto st = mask_stats(Strategy::FrameChunked, 500, 0.75, 10000, 3, 1);
  CHECK(st.mean_fraction >= 0.73);
  CHECK(st.mean_fraction <= 0.77);
}

TEST_CASE("frame-chunked plans") {
  const auto cal = calibrate_span_p(0.75, 10);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto plan = mask_frame_chunked(120, cal, s);
    check_partition(plan, 120);
    CHECK(!plan.masked.empty());
    CHECK(!plan.unmasked.empty());
    // Every maximal masked run has length >= 10 unless it ends at the last index.
    std::vector<char> m(120, 0);
    for (Index i : plan.masked) m[i] = 1;
    for (Index i = 0; i < 120;) {
      if (!m[i]) {
        ++i;
        continue;
      }
      Index j = i;
      while (j < 120 && m[j]) ++j;
      if (j < 120) CHECK(j - i >= 10);
      i = j;
    }
  }
  SpanMaskCalibration never = cal;
  never.start_probability = 0.0;
  CHECK_THROWS_WITH(mask_frame_chunked(120, never, 0), doctest::Contains("degenerate"));
  CHECK_THROWS(mask_frame_chunked(10, cal, 0));
}

TEST_CASE("broadcast across a batch") {
  const auto plan = mask_patch_chunked(4, 8, 0.5, 1);
  std::vector<tokens::TokenBatch> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(testing::random_clip(4, 8, i));
  const auto plans = broadcast_mask(plan, batch);
  CHECK(plans.size() == 8);
  for (const auto& p : plans) CHECK(p.masked == plan.masked);
  CHECK(broadcast_mask(plan, std::span(batch).first(1)).size() == 1);
  batch.push_back(testing::random_clip(5, 8, 9));
  CHECK_THROWS(broadcast_mask(plan, batch));
}

TEST_CASE("sampling and parsing") {
  for (auto s : {Strategy::PatchRandom, Strategy::PatchChunked, Strategy::FrameRandom, Strategy::FrameChunked}) {
    CHECK(parse_strategy(to_string(s)) == s);
    check_partition(sample_plan(s, 20, 8, 0.5, 1), 160);
  }
  CHECK_THROWS(parse_strategy("stripes"));
  const auto st = mask_stats(Strategy::PatchRandom, 496, 0.75, 50, 1, 8);
  CHECK(st.mean_fraction == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(st.std_fraction < 1e-9);
}
