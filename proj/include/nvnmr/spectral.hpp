#pragma once

// FFT analysis of probability traces: one-sided magnitude spectra, peak
// detection at the beat note and its harmonics, and amplitude extraction.
//
// Normalization: 2/N one-sided amplitude convention. A pure cosine of
// amplitude A sampled on-bin reports magnitude A at its frequency; the DC
// bin (and the Nyquist bin for even N) carries 1/N. Non-power-of-two
// lengths go through a mixed-radix O(N log N) transform; nothing is ever
// zero padded.

#include <string>
#include <vector>

#include "nvnmr/types.hpp"

namespace nvnmr {

struct Spectrum {
  ArrayXd freqs;  // angular, bin k at 2*pi*k/(N*tau), one sided
  ArrayXd mags;
  std::string window = "rectangular";
  bool detrended = true;
  Index n_samples = 0;
  double sample_tau = 0.0;

  double bin_width() const { return 2.0 * M_PI / (sample_tau * static_cast<double>(n_samples)); }
};

struct Peak {
  double frequency = 0.0;     // bin center of the located maximum
  double magnitude = 0.0;
  double quality = 0.0;       // magnitude / median background
  double harmonic = 0.0;      // in units of the expected beat (0.5, 1, 2, ...)
  bool is_local_max = false;
  double interpolated_frequency = 0.0;  // 3-point refined estimate

  // Documented presence threshold for harmonics.
  bool present() const { return is_local_max && quality >= 5.0; }
};

struct PeakReport {
  std::vector<Peak> peaks;  // sorted by magnitude, descending
  double expected_beat = 0.0;
  double background_median = 0.0;
};

// One-sided magnitude spectrum of the (optionally mean-removed) trace.
// window is "rectangular" (default, used for figure reproduction) or "hann"
// (coherent gain 0.5; magnitudes are reported unrescaled).
// Requires at least 16 samples.
Spectrum compute_spectrum(const ProbabilityTrace& trace,
                          const std::string& window = "rectangular",
                          bool detrend = true);

// Magnitude and local-max status at k*beat for k = 1..max_harmonic plus the
// half harmonic beat/2 (central-frequency amplification studies). The beat
// must be positive and resolvable (>= 4 bins).
PeakReport detect_harmonics(const Spectrum& spec, double beat, int max_harmonic);

// Magnitude of the averaged trace's spectrum at the bin nearest `beat`,
// refined to the local maximum over the 3 neighboring bins. All traces must
// share tau and length.
double beat_amplitude(const std::vector<ProbabilityTrace>& traces, double beat);

// Same reader with the incoherent noise floor subtracted in power:
// sqrt(max(m_beat^2 - <m^2>_background, 0)), the background taken over bins
// away from the beat's half-harmonics. Coincides with beat_amplitude when
// the ensemble noise is negligible; unbiased for small amplitudes buried in
// Monte Carlo noise, where the raw magnitude folds the floor upward.
double beat_amplitude_noise_corrected(const std::vector<ProbabilityTrace>& traces,
                                      double beat);

// Largest non-DC spectral peak (global maximum over bins k >= 1).
Peak dominant_peak(const Spectrum& spec);

// 3-point interpolation of an off-bin peak position from neighbor
// magnitudes; exact for the rectangular-window line shape. Returns the
// fractional-bin offset in [-0.5, 0.5].
double interpolate_peak_offset(double mag_left, double mag_center, double mag_right);

}  // namespace nvnmr
