#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include "onsetsurv/features.hpp"
#include "onsetsurv/io.hpp"
#include "onsetsurv/resample.hpp"
#include "onsetsurv/wav.hpp"
#include "support.hpp"

using namespace onsetsurv;
using namespace onsetsurv::dsp;

namespace {

AudioClip noise_clip(std::size_t n, std::uint64_t seed, double sr = 44100.0) {
  Rng rng(seed);
  AudioClip c;
  c.sample_rate = sr;
  c.samples.resize(n);
  for (auto& s : c.samples) s = uniform(rng, -0.5, 0.5);
  return c;
}

// Direct DFT with explicit reflection padding and a periodic Hann window.
std::vector<double> dft_frame(const std::vector<double>& x, std::size_t t, std::size_t win, std::size_t hop,
                              std::size_t nfft) {
  const long n = static_cast<long>(x.size());
  auto reflect = [n](long i) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return static_cast<std::size_t>(i);
  };
  std::vector<double> frame(nfft, 0.0);
  const std::size_t off = (nfft - win) / 2;
  const long start = static_cast<long>(t * hop) - static_cast<long>(nfft / 2);
  for (std::size_t i = 0; i < win; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));
    frame[off + i] = w * x[reflect(start + static_cast<long>(off + i))];
  }
  std::vector<double> mag(nfft / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < nfft; ++i)
      acc += frame[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % nfft) /
                                            static_cast<double>(nfft));
    mag[k] = std::abs(acc);
  }
  return mag;
}

}  // namespace

TEST_SUITE("stft") {
  TEST_CASE("silence gives zero magnitudes") {
    AudioClip c;
    c.samples.assign(4410, 0.0);
    const auto m = stft_magnitude(c, 1024, 441);
    for (double v : m.data()) CHECK(v == 0.0);
  }

  TEST_CASE("one second at hop 441 has 101 frames") {
    AudioClip c;
    c.samples.assign(44100, 0.0);
    CHECK(stft_magnitude(c, 1024, 441).dim(0) == 101);
    CHECK(stft_magnitude(c, 1024, 441).dim(1) == 513);
  }

  TEST_CASE("bin-centred sine concentrates its energy") {
    const std::size_t nfft = 2048;
    for (std::size_t k : {10, 37, 200, 700}) {
      AudioClip c;
      const double f = static_cast<double>(k) * c.sample_rate / nfft;
      c.samples.resize(22050);
      for (std::size_t i = 0; i < c.samples.size(); ++i)
        c.samples[i] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / c.sample_rate);
      const auto m = stft_magnitude(c, nfft, 441);
      const std::size_t bins = m.dim(1);
      for (std::size_t t = 5; t < m.dim(0) - 5; t += 7) {
        double total = 0, lobe = 0, centre = 0;
        for (std::size_t b = 0; b < bins; ++b) {
          const double e = m[t * bins + b] * m[t * bins + b];
          total += e;
          if (b + 1 >= k && b <= k + 1) lobe += e;
          if (b == k) centre = e;
        }
        INFO("bin " << k << " frame " << t);
        CHECK(lobe / total > 0.9);
        for (std::size_t b = 0; b < bins; ++b) CHECK(m[t * bins + b] * m[t * bins + b] <= centre);
      }
    }
  }

  TEST_CASE("matches a direct DFT") {
    const auto c = noise_clip(3000, 3);
    const std::size_t win = 200, hop = 441, nfft = 256;
    const auto m = stft_magnitude(c, win, hop, nfft);
    CHECK(m.dim(0) == 3000 / hop + 1);
    for (std::size_t t = 0; t < m.dim(0); ++t) {
      const auto want = dft_frame(c.samples, t, win, hop, nfft);
      for (std::size_t b = 0; b < want.size(); ++b) CHECK(m[t * m.dim(1) + b] == doctest::Approx(want[b]).epsilon(1e-9));
    }
  }

  TEST_CASE("invalid sizes rejected") {
    AudioClip c;
    CHECK_THROWS_AS(stft_magnitude(c, 1024, 441), std::invalid_argument);
    c.samples.assign(100, 0.0);
    CHECK_THROWS_AS(stft_magnitude(c, 1024, 441), std::invalid_argument);
    CHECK_THROWS_AS(stft_magnitude(c, 64, 0), std::invalid_argument);
    CHECK_THROWS_AS(stft_magnitude(c, 64, 10, 32), std::invalid_argument);
  }

  TEST_CASE("next_pow2") {
    CHECK(next_pow2(1) == 1);
    CHECK(next_pow2(1014) == 1024);
    CHECK(next_pow2(1024) == 1024);
    CHECK(next_pow2(4101) == 8192);
  }
}

TEST_SUITE("mel") {
  TEST_CASE("zero magnitudes give zero energies") {
    const auto mel = mel_project(Tensor({4, 1025}), 44100, 80, 27.5, 16000);
    CHECK(mel.shape() == nn::Shape{4, 80});
    for (double v : mel.data()) CHECK(v == 0.0);
  }

  TEST_CASE("all-ones spectrum returns each filter's area") {
    const auto fb = mel_filterbank(44100, 2048, 80, 27.5, 16000);
    const auto mel = mel_project(Tensor({1, 1025}, 1.0), 44100, 80, 27.5, 16000);
    for (std::size_t m = 0; m < 80; ++m) {
      double area = 0;
      for (std::size_t k = 0; k < 1025; ++k) area += fb[m * 1025 + k];
      CHECK(mel[m] == doctest::Approx(area).epsilon(1e-12));
    }
  }

  TEST_CASE("filters integrate to one over frequency") {
    // Area normalisation: the continuous triangle of height 2/(hi-lo) has unit area, so the
    // bin sum times the bin width approaches 1 where filters span many bins.
    const std::size_t nfft = 8192;
    const double df = 44100.0 / nfft;
    const auto fb = mel_filterbank(44100, nfft, 80, 27.5, 16000);
    for (std::size_t m = 40; m < 80; ++m) {
      double area = 0;
      for (std::size_t k = 0; k < nfft / 2 + 1; ++k) area += fb[m * (nfft / 2 + 1) + k];
      CHECK(area * df == doctest::Approx(1.0).epsilon(0.02));
    }
  }

  TEST_CASE("filter peaks rise with the band index") {
    const auto fb = mel_filterbank(44100, 4096, 80, 27.5, 16000);
    std::size_t prev = 0;
    for (std::size_t m = 0; m < 80; ++m) {
      std::size_t arg = 0;
      for (std::size_t k = 0; k < 2049; ++k)
        if (fb[m * 2049 + k] > fb[m * 2049 + arg]) arg = k;
      CHECK(arg >= prev);
      prev = arg;
    }
  }

  TEST_CASE("white noise excites every band") {
    const auto c = noise_clip(44100, 5);
    for (double w : {0.023, 0.046, 0.093}) {
      const auto win = static_cast<std::size_t>(std::lround(44100 * w));
      const auto mel = mel_project(stft_magnitude(c, win, 441), 44100, 80, 27.5, 16000);
      for (double v : mel.data()) CHECK(v > 0.0);
    }
  }

  TEST_CASE("too many bands for a short FFT is an error") {
    CHECK_THROWS_AS(mel_filterbank(44100, 256, 80, 27.5, 16000), std::invalid_argument);
    CHECK_THROWS_AS(mel_filterbank(44100, 2048, 80, 100, 50), std::invalid_argument);
    CHECK_THROWS_AS(mel_filterbank(44100, 2048, 80, 27.5, 30000), std::invalid_argument);
  }
}

TEST_SUITE("log_compress") {
  TEST_CASE("identities and monotonicity") {
    const auto out = log_compress(Tensor({3}, {0.0, std::numbers::e - 1.0, 10.0}));
    CHECK(out[0] == 0.0);
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-15));
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
      const double a = uniform(rng, 0, 100), b = uniform(rng, 0, 100);
      const auto r = log_compress(Tensor({2}, {a, b}));
      if (a > b) CHECK(r[0] > r[1]);
    }
    CHECK_THROWS_AS(log_compress(Tensor({1}, -1.0)), std::invalid_argument);
  }
}

TEST_SUITE("feature_stack") {
  TEST_CASE("shape and channel equality") {
    const auto c = noise_clip(22050, 7);
    const auto f = build_features(c);
    CHECK(f.values.shape() == nn::Shape{51, 80, 3});
    const FeatureConfig cfg;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const auto standalone = log_mel(c, cfg.windows[ch], cfg);
      bool equal = true;
      for (std::size_t t = 0; t < 51; ++t)
        for (std::size_t m = 0; m < 80; ++m) equal = equal && f.values.at({t, m, ch}) == standalone.at({t, m});
      CHECK(equal);
    }
  }

  TEST_CASE("silence gives zeros") {
    AudioClip c;
    c.samples.assign(44100, 0.0);
    const auto f = build_features(c);
    CHECK(f.frames() == 101);
    for (double v : f.values.data()) CHECK(v == 0.0);
  }

  TEST_CASE("deterministic and monotone in amplitude") {
    const auto c = noise_clip(30000, 9);
    const auto a = build_features(c), b = build_features(c);
    CHECK(a.values == b.values);
    auto loud = c;
    for (auto& s : loud.samples) s *= 2.0;
    const auto l = build_features(loud);
    std::size_t decreased = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) decreased += l.values[i] < a.values[i];
    CHECK(decreased == 0);
  }

  TEST_CASE("a click's energy peaks within one frame of its time") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
      AudioClip c;
      c.samples.assign(44100, 0.0);
      const std::size_t at = 5000 + uniform_index(rng, 34000);
      c.samples[at] = 1.0;
      const auto f = build_features(c);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t t = 0; t < f.frames(); ++t) {
          double e = 0.0;
          for (std::size_t m = 0; m < 80; ++m) e += f.values.at({t, m, ch});
          if (e > best) best = e, arg = t;
        }
        INFO("click at sample " << at << ", channel " << ch);
        CHECK(std::abs(static_cast<double>(arg) * 0.010 - static_cast<double>(at) / 44100.0) <= 0.010);
      }
    }
  }

  TEST_CASE("wrong sample rate rejected") {
    auto c = noise_clip(22050, 8, 22050);
    CHECK_THROWS_AS(build_features(c), std::invalid_argument);
  }

  TEST_CASE("chunks") {
    Rng rng(9);
    FeatureTensor f{testing::random_tensor({30, 80, 3}, rng), 0.01};
    const auto c7 = extract_chunk(f, 7);
    for (std::size_t i = 0; i < 15 * 240; ++i) CHECK(c7.values[i] == f.values[i]);
    const auto c0 = extract_chunk(f, 0);
    for (std::size_t i = 0; i < 7 * 240; ++i) CHECK(c0.values[i] == 0.0);
    for (std::size_t i = 0; i < 8 * 240; ++i) CHECK(c0.values[7 * 240 + i] == f.values[i]);
    for (std::size_t t = 0; t < 30; ++t) {
      const auto c = extract_chunk(f, t);
      bool same = true;
      for (std::size_t i = 0; i < 240; ++i) same = same && c.values[7 * 240 + i] == f.values[t * 240 + i];
      CHECK(same);
    }
    const auto last = extract_chunk(f, 29);
    for (std::size_t i = 8 * 240; i < 15 * 240; ++i) CHECK(last.values[i] == 0.0);
    CHECK_THROWS_AS(extract_chunk(f, 30), std::out_of_range);
  }

  TEST_CASE("feature cache round trip") {
    Rng rng(10);
    FeatureTensor f{testing::random_tensor({12, 80, 3}, rng), 0.01};
    const auto dir = std::filesystem::temp_directory_path() / "onsetsurv_test_cache";
    std::filesystem::create_directories(dir);
    const auto path = dir / "f.feat";
    save_feature_cache(path, f, 0xdeadbeefcafef00dULL);
    const auto back = load_feature_cache(path);
    CHECK(back.features.values == f.values);
    CHECK(back.features.hop == f.hop);
    CHECK(back.source_hash == 0xdeadbeefcafef00dULL);
    io::atomic_write(path, "garbage");
    CHECK_THROWS_AS(load_feature_cache(path), std::runtime_error);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("wav") {
  TEST_CASE("round trips") {
    auto c = noise_clip(1000, 11);
    const auto f32 = decode_wav(encode_wav(c, WavFormat::float32));
    CHECK(f32.sample_rate == 44100.0);
    REQUIRE(f32.samples.size() == 1000);
    for (std::size_t i = 0; i < 1000; ++i) CHECK(f32.samples[i] == static_cast<double>(static_cast<float>(c.samples[i])));
    const auto p16 = decode_wav(encode_wav(c, WavFormat::pcm16));
    for (std::size_t i = 0; i < 1000; ++i) CHECK(std::abs(p16.samples[i] - c.samples[i]) <= 1.0 / 32767);
    const auto p24 = decode_wav(encode_wav(c, WavFormat::pcm24));
    for (std::size_t i = 0; i < 1000; ++i) CHECK(std::abs(p24.samples[i] - c.samples[i]) <= 1.0 / 8388607);
  }

  TEST_CASE("malformed input rejected") {
    CHECK_THROWS(decode_wav(""));
    CHECK_THROWS(decode_wav("RIFF\x04\0\0\0WAVE"));
    std::string bytes = encode_wav(noise_clip(10, 1));
    CHECK_THROWS(decode_wav(bytes.substr(0, 30)));
  }
}

TEST_SUITE("resample") {
  TEST_CASE("identity rate leaves the clip unchanged") {
    const auto c = noise_clip(500, 12);
    CHECK(resample_to(c, 44100).samples == c.samples);
  }

  TEST_CASE("output length is ceil(n * to / from)") {
    std::vector<double> x(1001, 0.0);
    CHECK(resample(x, 48000, 44100).size() == 920);
    CHECK(resample(x, 22050, 44100).size() == 2002);
  }

  TEST_CASE("a low sine survives resampling") {
    const double f = 440.0;
    std::vector<double> x(48000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / 48000.0);
    const auto y = resample(x, 48000, 44100);
    double worst = 0;
    for (std::size_t i = 2000; i + 2000 < y.size(); ++i)
      worst = std::max(worst, std::abs(y[i] - std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / 44100.0)));
    CHECK(worst < 1e-3);
  }
}
