#pragma once

#include <complex>
#include <string>
#include <vector>

#include "incepse/data.hpp"

namespace incepse::signal {

struct BandpassSpec {
  double low_hz = 1.0;
  double high_hz = 45.0;
  double fs_hz = 100.0;
  int order = 3; // per band edge; the bandpass has 2*order poles

  void validate() const;
};

/// One second-order section, direct form II transposed, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double gain = 1.0; // applied once per pass
};

/// Butterworth bandpass: analog prototype -> lowpass-to-bandpass transform
/// -> bilinear transform with frequency pre-warping -> second-order
/// sections. The -3 dB points land on low_hz/high_hz; every pole is
/// strictly inside the unit circle (asserted).
BiquadCascade design_bandpass(const BandpassSpec& spec);

/// Single-pass complex frequency response H(e^{j 2 pi f / fs}).
std::complex<double> response_at(const BiquadCascade& f, double freq_hz, double fs_hz);

/// One causal pass with steady-state initial conditions (transient
/// suppression for the leading value).
std::vector<double> filter_once(const BiquadCascade& f, const std::vector<double>& x);

/// Forward-backward (zero net phase) filtering with reflective edge
/// padding of 3*(2*sections) samples. Requires the signal to be longer
/// than the padding.
std::vector<double> apply_zero_phase(const BiquadCascade& f, const std::vector<double>& x);

/// Zero-phase filter every lead of every record in place.
void filter_dataset(data::Dataset& d, const BiquadCascade& f);

/// Per-lead z-score with statistics from `stats_source` (the training
/// split) applied to the whole dataset; stats are stored on the dataset.
/// Throws naming the lead if one has zero variance.
std::vector<data::LeadStats> standardize(data::Dataset& d, const data::SplitView& stats_source);

/// Sidecar: one line per lead, `index,mean,std`, full decimal precision.
void write_stats_file(const std::vector<data::LeadStats>& stats, const std::string& path);
std::vector<data::LeadStats> read_stats_file(const std::string& path);

} // namespace incepse::signal
