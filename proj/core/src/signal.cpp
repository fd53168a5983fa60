#include "incepse/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "incepse/errors.hpp"

namespace incepse::signal {

void BandpassSpec::validate() const {
  if (fs_hz <= 0.0) fail_validation("bandpass: sampling rate must be positive");
  if (high_hz >= fs_hz / 2.0)
    fail_validation("bandpass: cutoff at or above Nyquist (" + std::to_string(high_hz) + " Hz vs fs " +
                    std::to_string(fs_hz) + " Hz)");
  if (!(0.0 < low_hz && low_hz < high_hz))
    fail_validation("bandpass: need 0 < low < high < fs/2");
  if (order < 1 || order > 8) fail_validation("bandpass: order must be in 1..8");
}

BiquadCascade design_bandpass(const BandpassSpec& spec) {
  spec.validate();
  using cd = std::complex<double>;
  const double fs = spec.fs_hz;
  const int n = spec.order;

  // Pre-warped analog band edges for the bilinear transform.
  const double wl = 2.0 * fs * std::tan(std::numbers::pi * spec.low_hz / fs);
  const double wh = 2.0 * fs * std::tan(std::numbers::pi * spec.high_hz / fs);
  const double bw = wh - wl;
  const double w0sq = wl * wh;

  // Butterworth prototype poles on the left unit circle.
  std::vector<cd> prototype;
  for (int k = 0; k < n; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n);
    prototype.emplace_back(std::cos(theta), std::sin(theta));
  }

  auto bilinear = [fs](cd s) { return (2.0 * fs + s) / (2.0 * fs - s); };
  // Lowpass-to-bandpass: each prototype pole p maps to the two roots of
  // s^2 - (bw p) s + w0^2.
  auto bp_poles = [&](cd p) {
    const cd bwp = bw * p;
    const cd disc = std::sqrt(bwp * bwp - 4.0 * w0sq);
    return std::pair<cd, cd>{(bwp + disc) / 2.0, (bwp - disc) / 2.0};
  };

  BiquadCascade cascade;
  auto push_pair = [&cascade](cd z1, cd z2) {
    Biquad q;
    q.b0 = 1.0;
    q.b1 = 0.0;
    q.b2 = -1.0; // one zero at z=1 (from s=0), one at z=-1 (from s=inf)
    q.a1 = -(z1 + z2).real();
    q.a2 = (z1 * z2).real();
    if (std::abs(z1) >= 1.0 || std::abs(z2) >= 1.0)
      fail_runtime("bandpass design produced an unstable pole");
    cascade.sections.push_back(q);
  };

  for (const cd& p : prototype) {
    if (p.imag() > 1e-12) {
      // conjugate partners come from conj(p); pair each image with its own
      // conjugate to get real coefficients
      auto [s_plus, s_minus] = bp_poles(p);
      const cd zp = bilinear(s_plus);
      const cd zm = bilinear(s_minus);
      push_pair(zp, std::conj(zp));
      push_pair(zm, std::conj(zm));
    } else if (std::abs(p.imag()) <= 1e-12) {
      // real prototype pole (odd order): its two images form one section
      auto [s_plus, s_minus] = bp_poles(p);
      push_pair(bilinear(s_plus), bilinear(s_minus));
    }
  }

  // Unity gain at the digital frequency whose pre-warp is the geometric
  // band center.
  const double f_center = fs / std::numbers::pi * std::atan(std::sqrt(w0sq) / (2.0 * fs));
  cascade.gain = 1.0;
  const double mag = std::abs(response_at(cascade, f_center, fs));
  if (mag <= 0.0) fail_runtime("bandpass design degenerate at center frequency");
  cascade.gain = 1.0 / mag;
  return cascade;
}

std::complex<double> response_at(const BiquadCascade& f, double freq_hz, double fs_hz) {
  using cd = std::complex<double>;
  const double w = 2.0 * std::numbers::pi * freq_hz / fs_hz;
  const cd z1 = std::polar(1.0, -w); // z^-1
  const cd z2 = z1 * z1;
  cd h(f.gain, 0.0);
  for (const Biquad& q : f.sections)
    h *= (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
  return h;
}

namespace {

// Steady-state unit-step state of one DF2T biquad; scaled by the first
// input sample it suppresses the startup transient of a level shift.
struct BiquadState {
  double s1 = 0.0, s2 = 0.0;
};

BiquadState steady_state(const Biquad& q) {
  const double denom = 1.0 + q.a1 + q.a2;
  const double h1 = denom != 0.0 ? (q.b0 + q.b1 + q.b2) / denom : 0.0;
  BiquadState st;
  st.s1 = h1 - q.b0;
  st.s2 = q.b2 - q.a2 * h1;
  return st;
}

void run_cascade(const BiquadCascade& f, std::vector<double>& x) {
  const double lead = x.empty() ? 0.0 : x.front();
  double section_dc_in = lead;
  for (const Biquad& q : f.sections) {
    BiquadState st = steady_state(q);
    const double denom = 1.0 + q.a1 + q.a2;
    const double h1 = denom != 0.0 ? (q.b0 + q.b1 + q.b2) / denom : 0.0;
    double s1 = st.s1 * section_dc_in;
    double s2 = st.s2 * section_dc_in;
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * out + s2;
      s2 = q.b2 * in - q.a2 * out;
      v = out;
    }
    section_dc_in *= h1; // steady input level seen by the next section
  }
  if (f.gain != 1.0)
    for (double& v : x) v *= f.gain;
}

} // namespace

std::vector<double> filter_once(const BiquadCascade& f, const std::vector<double>& x) {
  std::vector<double> y = x;
  run_cascade(f, y);
  return y;
}

namespace {

double max_pole_radius(const BiquadCascade& f) {
  using cd = std::complex<double>;
  double r = 0.0;
  for (const Biquad& q : f.sections) {
    const cd disc = std::sqrt(cd(q.a1 * q.a1 - 4.0 * q.a2, 0.0));
    r = std::max({r, std::abs((-q.a1 + disc) / 2.0), std::abs((-q.a1 - disc) / 2.0)});
  }
  return r;
}

// Edge padding has to outlast the slowest pole's transient (3 time
// constants), or refiltering an already-filtered signal pumps startup
// transients back into the interior.
std::size_t pad_length(const BiquadCascade& f) {
  const std::size_t floor_len = 3 * (2 * f.sections.size());
  const double r = max_pole_radius(f);
  if (r >= 1.0) return floor_len;
  const double tail = 3.0 / -std::log(r);
  return std::max(floor_len, static_cast<std::size_t>(std::ceil(tail)));
}

} // namespace

std::vector<double> apply_zero_phase(const BiquadCascade& f, const std::vector<double>& x) {
  const std::size_t padlen = pad_length(f);
  if (x.size() <= padlen)
    fail_validation("signal too short for zero-phase filtering: " + std::to_string(x.size()) +
                    " samples, need more than " + std::to_string(padlen));

  // reflective extension on both ends, point-symmetric about the endpoint
  // so value and slope stay continuous across the join
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * padlen);
  for (std::size_t i = 0; i < padlen; ++i) ext.push_back(2.0 * x.front() - x[padlen - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < padlen; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 2 - i]);

  run_cascade(f, ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(f, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
                             ext.end() - static_cast<std::ptrdiff_t>(padlen));
}

void filter_dataset(data::Dataset& d, const BiquadCascade& f) {
  std::vector<double> lead(static_cast<std::size_t>(d.samples));
  for (std::size_t r = 0; r < d.records.size(); ++r) {
    for (int l = 0; l < d.leads; ++l) {
      float* row = d.record_lead(r, l);
      for (int t = 0; t < d.samples; ++t) lead[static_cast<std::size_t>(t)] = row[t];
      std::vector<double> filtered = apply_zero_phase(f, lead);
      for (int t = 0; t < d.samples; ++t)
        row[t] = static_cast<float>(filtered[static_cast<std::size_t>(t)]);
    }
  }
}

std::vector<data::LeadStats> standardize(data::Dataset& d, const data::SplitView& stats_source) {
  if (stats_source.indices.empty()) fail_validation("standardize: empty stats source split");
  const int leads = d.leads;
  std::vector<data::LeadStats> stats(static_cast<std::size_t>(leads));
  for (int l = 0; l < leads; ++l) {
    double sum = 0.0, sq = 0.0;
    std::int64_t n = 0;
    for (std::size_t idx : stats_source.indices) {
      const float* row = d.record_lead(idx, l);
      for (int t = 0; t < d.samples; ++t) {
        const double v = row[t];
        sum += v;
        sq += v * v;
        ++n;
      }
    }
    const double mean = sum / static_cast<double>(n);
    double var = sq / static_cast<double>(n) - mean * mean;
    if (var < 0.0) var = 0.0;
    if (var == 0.0)
      fail_validation("standardize: zero variance in lead " + std::to_string(l));
    stats[static_cast<std::size_t>(l)] = {mean, std::sqrt(var)};
  }
  for (std::size_t r = 0; r < d.records.size(); ++r) {
    for (int l = 0; l < leads; ++l) {
      const data::LeadStats& s = stats[static_cast<std::size_t>(l)];
      float* row = d.record_lead(r, l);
      for (int t = 0; t < d.samples; ++t)
        row[t] = static_cast<float>((row[t] - s.mean) / s.stddev);
    }
  }
  d.stats = stats;
  return stats;
}

void write_stats_file(const std::vector<data::LeadStats>& stats, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_runtime("cannot write stats file: " + path);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    char line[128];
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n", i, stats[i].mean, stats[i].stddev);
    out << line;
  }
}

std::vector<data::LeadStats> read_stats_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_validation("cannot open stats file: " + path);
  std::vector<data::LeadStats> stats;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t idx;
    double mean, stddev;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf", &idx, &mean, &stddev) != 3)
      fail_validation("malformed stats line: " + line);
    if (idx != stats.size()) fail_validation("stats file lead indices out of order: " + path);
    stats.push_back({mean, stddev});
  }
  return stats;
}

} // namespace incepse::signal
