#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "onsetsurv/io.hpp"
#include "onsetsurv/random.hpp"
#include "onsetsurv/targets.hpp"

using namespace onsetsurv;
using namespace onsetsurv::targets;

namespace {

// Literal definition: scan forward / backward from each frame.
std::vector<TargetFrame> oracle_targets(const std::set<std::size_t>& onsets, std::size_t n, int threshold) {
  std::vector<TargetFrame> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto& tf = out[t];
    tf.tte_T = static_cast<int>(n - 1 - t);
    tf.tte_u = 0;
    for (std::size_t s = t; s < n; ++s)
      if (onsets.count(s)) {
        tf.tte_T = static_cast<int>(s - t);
        tf.tte_u = 1;
        break;
      }
    tf.tse_T = static_cast<int>(t);
    tf.tse_u = 0;
    for (std::size_t s = t + 1; s-- > 0;)
      if (onsets.count(s)) {
        tf.tse_T = static_cast<int>(t - s);
        tf.tse_u = 1;
        break;
      }
    if (tf.tte_T > threshold) tf.tte_T = threshold, tf.tte_u = 0;
    if (tf.tse_T > threshold) tf.tse_T = threshold, tf.tse_u = 0;
  }
  return out;
}

std::vector<int> column(const std::vector<TargetFrame>& v, int TargetFrame::*field) {
  std::vector<int> out;
  for (const auto& t : v) out.push_back(t.*field);
  return out;
}

}  // namespace

TEST_SUITE("onset_frames") {
  TEST_CASE("rounding") {
    CHECK(onset_frames({{0.031}}, 0.010, 100) == std::vector<std::size_t>{3});
    CHECK(onset_frames({}, 0.010, 100).empty());
    CHECK(onset_frames({{0.014, 0.016}}, 0.010, 100) == std::vector<std::size_t>{1, 2});
    // exact halves on a binary-representable grid: 0.5 -> 0, 1.5 -> 2, 2.5 -> 2 (merged)
    CHECK(onset_frames({{0.25, 0.75, 1.25}}, 0.5, 10) == std::vector<std::size_t>{0, 2});
  }

  TEST_CASE("frames past the clip are dropped") {
    CHECK(onset_frames({{0.01, 0.5, 0.995}}, 0.010, 50) == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(onset_frames({{0.1}}, 0.0, 10), std::invalid_argument);
  }
}

TEST_SUITE("compute_targets") {
  TEST_CASE("two onsets, no threshold") {
    const auto t = compute_targets({3, 8}, 12);
    CHECK(column(t, &TargetFrame::tte_T) == std::vector<int>{3, 2, 1, 0, 4, 3, 2, 1, 0, 2, 1, 0});
    CHECK(column(t, &TargetFrame::tte_u) == std::vector<int>{1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0});
    CHECK(column(t, &TargetFrame::tse_T) == std::vector<int>{0, 1, 2, 0, 1, 2, 3, 4, 0, 1, 2, 3});
    CHECK(column(t, &TargetFrame::tse_u) == std::vector<int>{0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1});
  }

  TEST_CASE("no onsets censors everything") {
    const auto t = compute_targets({}, 4);
    CHECK(column(t, &TargetFrame::tte_T) == std::vector<int>{3, 2, 1, 0});
    CHECK(column(t, &TargetFrame::tse_T) == std::vector<int>{0, 1, 2, 3});
    for (const auto& f : t) CHECK((f.tte_u == 0 && f.tse_u == 0));
  }

  TEST_CASE("threshold clipping") {
    const auto t = compute_targets({3, 8}, 12, 2);
    CHECK(t[0].tte_T == 2);
    CHECK(t[0].tte_u == 0);
    CHECK(t[4].tte_T == 2);
    CHECK(t[4].tte_u == 0);
    CHECK(t[7].tte_T == 1);
    CHECK(t[7].tte_u == 1);
  }

  TEST_CASE("invalid arguments") {
    CHECK_THROWS_AS(compute_targets({12}, 12), std::invalid_argument);
    CHECK_THROWS_AS(compute_targets({1}, 12, 0), std::invalid_argument);
  }

  TEST_CASE("matches the scan oracle and round-trips") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 1 + uniform_index(rng, 200);
      std::set<std::size_t> onsets;
      const std::size_t k = uniform_index(rng, std::min<std::size_t>(n, 30) + 1);
      while (onsets.size() < k) onsets.insert(uniform_index(rng, n));
      const int threshold = uniform01(rng) < 0.2 ? kNoThreshold : 1 + static_cast<int>(uniform_index(rng, 25));
      const std::vector<std::size_t> frames(onsets.begin(), onsets.end());
      const auto t = compute_targets(frames, n, threshold);
      REQUIRE(t.size() == n);
      CHECK(t == oracle_targets(onsets, n, threshold));
      CHECK(reconstruct_onsets(t) == frames);
      for (const auto& f : t) {
        CHECK(f.tte_T >= 0);
        CHECK(f.tse_T >= 0);
        CHECK(f.tte_T <= threshold);
        CHECK(f.tse_T <= threshold);
      }
    }
  }
}

TEST_SUITE("annotation_io") {
  TEST_CASE("parse with comments and extra columns") {
    std::string warn;
    const auto a = parse_annotation("# header\n0.5\n\n1.25 extra column\n  2.0\t\n", &warn);
    CHECK(a.onsets == std::vector<double>{0.5, 1.25, 2.0});
    CHECK(warn.empty());
  }

  TEST_CASE("unsorted input is sorted with a warning") {
    std::string warn;
    const auto a = parse_annotation("2.0\n0.5\n1.0\n", &warn);
    CHECK(a.onsets == std::vector<double>{0.5, 1.0, 2.0});
    CHECK(warn.find("sorted") != std::string::npos);
  }

  TEST_CASE("bad lines rejected with a line number") {
    try {
      parse_annotation("0.5\nabc\n");
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_annotation("-1.0\n"), std::invalid_argument);
  }

  TEST_CASE("format and parse round trip") {
    const std::vector<double> times{0.01, 0.5, 12.345678};
    CHECK(parse_annotation(format_onsets(times)).onsets == times);
    CHECK(format_onsets({}).empty());
    const auto path = std::filesystem::temp_directory_path() / "onsetsurv_test_onsets.txt";
    write_onsets(path, times);
    CHECK(read_annotation(path).onsets == times);
    std::filesystem::remove(path);
  }

  TEST_CASE("validate") {
    CHECK_NOTHROW(validate({{0.0, 0.1}}));
    CHECK_THROWS_AS(validate({{0.1, 0.1}}), std::invalid_argument);
    CHECK_THROWS_AS(validate({{0.2, 0.1}}), std::invalid_argument);
  }
}
