#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "onsetsurv/inference.hpp"
#include "onsetsurv/random.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace onsetsurv;
using namespace onsetsurv::infer;

TEST_SUITE("odf") {
  TEST_CASE("combination rule") {
    CHECK(combine(0.0, 0.0) == 0.0);
    CHECK(combine(1.0, 0.3) == 1.0);
    CHECK(combine(0.2, 1.0) == 1.0);
    CHECK(combine(0.5, 0.5) == 0.75);
  }

  TEST_CASE("uses the shifted grid at the horizon") {
    const dist::DistParams a{2.0, 3.0}, b{5.0, 1.5};
    for (auto f : {dist::Family::loglogistic, dist::Family::pareto}) {
      const double p1 = dist::cdf(f, a, 2.0), p2 = dist::cdf(f, b, 2.0);
      CHECK(odf(f, a, b) == doctest::Approx(1 - (1 - p1) * (1 - p2)).epsilon(1e-15));
      CHECK(odf(f, a, b, 0) == doctest::Approx(combine(dist::cdf(f, a, 1.0), dist::cdf(f, b, 1.0))).epsilon(1e-15));
      CHECK(odf(f, a, b, 3) >= odf(f, a, b, 1));
    }
    CHECK_THROWS_AS(odf(dist::Family::pareto, a, b, -1), std::invalid_argument);
  }

  TEST_CASE("values lie in [0, 1]") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
      const dist::DistParams a{uniform(rng, 0.01, 100), uniform(rng, 0.01, 5)};
      const dist::DistParams b{uniform(rng, 0.01, 100), uniform(rng, 0.01, 5)};
      const double v = odf(dist::Family::loglogistic, a, b);
      CHECK((v >= 0.0 && v <= 1.0));
    }
  }
}

TEST_SUITE("smoothing") {
  TEST_CASE("kernel shape") {
    const auto& k = hamming5();
    REQUIRE(k.size() == 5);
    const double raw[] = {0.08, 0.54, 1.0, 0.54, 0.08};
    const double total = 2.24;
    for (int i = 0; i < 5; ++i) CHECK(k[i] == doctest::Approx(raw[i] / total).epsilon(1e-15));
    CHECK(std::accumulate(k.begin(), k.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("constant stays constant") {
    ODFSeries s{std::vector<double>(37, 0.3), 0.01};
    for (double v : smooth(s).values) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
    ODFSeries one{{0.7}, 0.01};
    CHECK(smooth(one).values[0] == doctest::Approx(0.7));
    CHECK(smooth(ODFSeries{}).values.empty());
  }

  TEST_CASE("impulse response is the kernel") {
    ODFSeries s{std::vector<double>(21, 0.0), 0.01};
    s.values[10] = 1.0;
    const auto out = smooth(s);
    const auto& k = hamming5();
    for (int i = 0; i < 21; ++i) {
      const int d = i - 10;
      CHECK(out.values[i] == doctest::Approx(std::abs(d) <= 2 ? k[d + 2] : 0.0).epsilon(1e-15));
    }
  }

  TEST_CASE("matches a naive loop away from the edges") {
    Rng rng(2);
    const auto& k = hamming5();
    for (int trial = 0; trial < 100; ++trial) {
      ODFSeries s;
      s.values.resize(5 + uniform_index(rng, 200));
      for (auto& v : s.values) v = uniform01(rng);
      const auto out = smooth(s);
      const long n = static_cast<long>(s.values.size());
      for (long t = 0; t < n; ++t) {
        double acc = 0, mass = 0;
        for (long j = -2; j <= 2; ++j)
          if (t + j >= 0 && t + j < n) acc += k[j + 2] * s.values[t + j], mass += k[j + 2];
        CHECK(out.values[t] == acc / mass);
      }
    }
  }
}

TEST_SUITE("peak_picking") {
  TEST_CASE("default windows") {
    PeakPickConfig c;
    CHECK(c.w1() == 3);
    CHECK(c.w2() == 3);
    CHECK(c.w3() == 12);
    CHECK(c.w4() == 1);
    CHECK(c.w5() == 0);
  }

  TEST_CASE("single impulse") {
    ODFSeries s{std::vector<double>(30, 0.0), 0.01};
    s.values[10] = 1.0;
    const auto t = pick_peaks(s, {});
    REQUIRE(t.size() == 1);
    CHECK(t[0] == doctest::Approx(0.10));
  }

  TEST_CASE("constant series has no peaks") {
    PeakPickConfig c;
    c.delta = 0.01;
    CHECK(pick_peak_frames(std::vector<double>(50, 0.8), c).empty());
    CHECK(pick_peak_frames({}, c).empty());
  }

  TEST_CASE("plateau yields its first frame only") {
    PeakPickConfig c;
    c.delta = 0.1;
    std::vector<double> x(30, 0.0);
    x[10] = x[11] = x[12] = 1.0;
    CHECK(pick_peak_frames(x, c) == std::vector<std::size_t>{10});
  }

  TEST_CASE("series hop overrides the config hop") {
    ODFSeries s{std::vector<double>(30, 0.0), 0.02};
    s.values[5] = 1.0;
    CHECK(pick_peaks(s, {}) == std::vector<double>{0.1});
  }

  TEST_CASE("invalid config rejected") {
    PeakPickConfig c;
    c.t1 = -0.01;
    CHECK_THROWS_AS(pick_peak_frames({0.0}, c), std::invalid_argument);
    c = {};
    c.hop = 0.0;
    CHECK_THROWS_AS(pick_peak_frames({0.0}, c), std::invalid_argument);
  }

  TEST_CASE("agrees with the literal oracle on random series") {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> x(1 + uniform_index(rng, 120));
      const bool quantised = trial % 2 == 0;  // coarse levels create plateaus and ties
      for (auto& v : x) v = quantised ? static_cast<double>(uniform_index(rng, 4)) / 4.0 : uniform01(rng);
      PeakPickConfig c;
      c.t1 = 0.01 * static_cast<double>(uniform_index(rng, 6));
      c.t2 = 0.01 * static_cast<double>(uniform_index(rng, 6));
      c.t3 = 0.01 * static_cast<double>(uniform_index(rng, 15));
      c.t4 = 0.01 * static_cast<double>(uniform_index(rng, 4));
      c.t5 = 0.01 * static_cast<double>(uniform_index(rng, 5));
      c.delta = uniform(rng, 0.0, 0.5);
      const auto got = pick_peak_frames(x, c);
      CHECK(got == testing::oracle_peaks(x, static_cast<long>(c.w1()), static_cast<long>(c.w2()), static_cast<long>(c.w3()),
                                static_cast<long>(c.w4()), static_cast<long>(c.w5()), c.delta));
      CHECK(std::is_sorted(got.begin(), got.end()));
    }
  }
}
