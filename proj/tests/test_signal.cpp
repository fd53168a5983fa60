#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include "incepse/data.hpp"
#include "incepse/errors.hpp"
#include "incepse/signal.hpp"
#include "oracles.hpp"

using namespace incepse;
namespace sg = incepse::signal;

namespace {

std::vector<double> sine(double freq, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs);
  return x;
}

double rms(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(hi - lo));
}

double mag_db(const sg::BiquadCascade& f, double freq, double fs) {
  return 20.0 * std::log10(std::abs(sg::response_at(f, freq, fs)));
}

// -3 dB crossing by bisection on |H|.
double find_crossing(const sg::BiquadCascade& f, double fs, double lo, double hi, bool rising) {
  const double target = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double m = std::abs(sg::response_at(f, mid, fs));
    const bool above = m > target;
    if (above == rising) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

} // namespace

TEST_CASE("bandpass design gain anchors") {
  sg::BandpassSpec spec; // 1-45 Hz at fs 100, order 3
  sg::BiquadCascade f = sg::design_bandpass(spec);

  CHECK(std::abs(sg::response_at(f, 0.0, 100.0)) < 1e-12); // DC blocked

  const double center = std::sqrt(1.0 * 45.0);
  CHECK(std::abs(mag_db(f, center, 100.0)) < 0.5);

  CHECK(std::abs(sg::response_at(f, 49.0, 100.0)) <
        std::abs(sg::response_at(f, 20.0, 100.0)));
  // monotone roll-off above the band
  double prev = std::abs(sg::response_at(f, 45.5, 100.0));
  for (double freq = 46.0; freq < 49.9; freq += 0.5) {
    const double cur = std::abs(sg::response_at(f, freq, 100.0));
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("-3 dB points sit on the band edges within 2%") {
  sg::BandpassSpec spec;
  sg::BiquadCascade f = sg::design_bandpass(spec);
  const double lo = find_crossing(f, 100.0, 0.25, 4.0, true);
  const double hi = find_crossing(f, 100.0, 40.0, 49.9, false);
  CHECK(std::abs(lo - 1.0) / 1.0 < 0.02);
  CHECK(std::abs(hi - 45.0) / 45.0 < 0.02);
}

TEST_CASE("design rejects cutoffs at or above Nyquist") {
  sg::BandpassSpec bad;
  bad.high_hz = 60.0;
  CHECK_THROWS_WITH_AS(sg::design_bandpass(bad), doctest::Contains("Nyquist"), Error);
}

TEST_CASE("all sections are stable for orders 1..8 and random bands") {
  Rng rng(7);
  auto pole_mags = [](const sg::Biquad& q) {
    const std::complex<double> a1(q.a1, 0.0), a2(q.a2, 0.0);
    const std::complex<double> disc = std::sqrt(a1 * a1 - 4.0 * a2);
    return std::pair{std::abs((-a1 + disc) / 2.0), std::abs((-a1 - disc) / 2.0)};
  };
  for (int order = 1; order <= 8; ++order) {
    for (int rep = 0; rep < 8; ++rep) {
      sg::BandpassSpec spec;
      spec.fs_hz = 100.0;
      spec.low_hz = rng.uniform(0.2, 10.0);
      spec.high_hz = rng.uniform(spec.low_hz + 2.0, 49.0);
      spec.order = order;
      sg::BiquadCascade f = sg::design_bandpass(spec);
      CHECK(f.sections.size() == static_cast<std::size_t>(order));
      for (const sg::Biquad& q : f.sections) {
        auto [m1, m2] = pole_mags(q);
        CHECK(m1 < 1.0);
        CHECK(m2 < 1.0);
      }
    }
  }
}

TEST_CASE("zero-phase pass preserves a 20 Hz probe") {
  sg::BiquadCascade f = sg::design_bandpass({});
  std::vector<double> x = sine(20.0, 100.0, 1000);
  std::vector<double> y = sg::apply_zero_phase(f, x);
  REQUIRE(y.size() == x.size());

  const double in_rms = rms(x, 100, 900);
  const double out_rms = rms(y, 100, 900);
  CHECK(std::abs(out_rms / in_rms - 1.0) < 0.02);

  // cross-correlation peak lag is zero (no phase shift); the probe period
  // is 5 samples, so scan within +-2
  double best = -1e300;
  int best_lag = -99;
  for (int lag = -2; lag <= 2; ++lag) {
    double c = 0.0;
    for (std::size_t i = 100; i < 900; ++i)
      c += x[i] * y[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + lag)];
    if (c > best) {
      best = c;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("zero-phase blocks DC") {
  sg::BiquadCascade f = sg::design_bandpass({});
  std::vector<double> x(1000, 2.5);
  std::vector<double> y = sg::apply_zero_phase(f, x);
  for (std::size_t i = 50; i < 950; ++i) CHECK(std::abs(y[i]) < 1e-6 * 2.5);
}

TEST_CASE("baseline wander at 0.2 Hz is attenuated by at least 20 dB") {
  sg::BiquadCascade f = sg::design_bandpass({});
  std::vector<double> x = sine(0.2, 100.0, 1000);
  std::vector<double> y = sg::apply_zero_phase(f, x);
  const double ratio = rms(y, 100, 900) / rms(x, 100, 900);
  CHECK(20.0 * std::log10(ratio) < -20.0);

  // filtering twice never increases stopband energy
  std::vector<double> y2 = sg::apply_zero_phase(f, y);
  CHECK(rms(y2, 100, 900) <= rms(y, 100, 900) + 1e-12);
}

TEST_CASE("passband-only energy changes by less than 3%") {
  sg::BiquadCascade f = sg::design_bandpass({});
  std::vector<double> x = sine(10.0, 100.0, 1000);
  std::vector<double> y = sg::apply_zero_phase(f, x);
  CHECK(std::abs(rms(y, 0, 1000) / rms(x, 0, 1000) - 1.0) < 0.03);
}

TEST_CASE("zero-phase rejects too-short signals") {
  sg::BiquadCascade f = sg::design_bandpass({});
  std::vector<double> x(3 * 2 * f.sections.size(), 1.0);
  CHECK_THROWS_WITH_AS(sg::apply_zero_phase(f, x), doctest::Contains("too short"), Error);
}

TEST_CASE("standardize uses train statistics and flags zero variance") {
  data::SynthSpec spec;
  spec.num_records = 40;
  spec.classes = 2;
  spec.imbalance_ratios = {0.7, 0.3};
  spec.leads = 3;
  spec.seconds = 2.0;
  spec.noise_sigma = 0.25;
  data::Dataset d = data::synth_dataset(spec, 5);
  data::Splits splits = data::split_folds(d);

  auto stats = sg::standardize(d, splits.train);
  REQUIRE(stats.size() == 3);
  CHECK(d.stats.has_value());

  // the training split itself is now zero-mean unit-std per lead
  for (int lead = 0; lead < d.leads; ++lead) {
    double sum = 0.0, sq = 0.0;
    std::int64_t n = 0;
    for (std::size_t idx : splits.train.indices) {
      const float* row = d.record_lead(idx, lead);
      for (int t = 0; t < d.samples; ++t) {
        sum += row[t];
        sq += row[t] * row[t];
        ++n;
      }
    }
    const double mean = sum / static_cast<double>(n);
    const double stddev = std::sqrt(sq / static_cast<double>(n) - mean * mean);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(stddev - 1.0) < 1e-4);
  }

  // a constant lead is rejected by name
  data::Dataset flat = data::synth_dataset(spec, 6);
  for (std::size_t r = 0; r < flat.records.size(); ++r) {
    float* row = flat.record_lead(r, 1);
    for (int t = 0; t < flat.samples; ++t) row[t] = 3.0f;
  }
  data::Splits fsplits = data::split_folds(flat);
  CHECK_THROWS_WITH_AS(sg::standardize(flat, fsplits.train),
                       doctest::Contains("zero variance in lead 1"), Error);
}

TEST_CASE("stats sidecar round-trips at full precision") {
  std::vector<data::LeadStats> stats = {{0.12345678901234567, 1.0000000000000002},
                                        {-3.25, 0.5}};
  const auto path = std::filesystem::temp_directory_path() / "incepse_stats_test.txt";
  sg::write_stats_file(stats, path.string());
  auto loaded = sg::read_stats_file(path.string());
  REQUIRE(loaded.size() == stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    CHECK(loaded[i].mean == stats[i].mean);
    CHECK(loaded[i].stddev == stats[i].stddev);
  }
}
