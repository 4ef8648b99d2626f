#include "nvnmr/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace nvnmr {

namespace {

double median_background(const ArrayXd& mags) {
  // Median over the non-DC bins.
  if (mags.size() < 2) return 0.0;
  std::vector<double> v(mags.data() + 1, mags.data() + mags.size());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return v[mid];
}

Index nearest_bin(const Spectrum& spec, double freq) {
  const double k = freq / spec.bin_width();
  return std::clamp<Index>(static_cast<Index>(std::llround(k)), 0, spec.mags.size() - 1);
}

// Shift the candidate bin to the largest of {k-1, k, k+1}.
Index refine_local_max(const ArrayXd& mags, Index k) {
  Index best = k;
  for (Index i = std::max<Index>(k - 1, 0); i <= std::min<Index>(k + 1, mags.size() - 1); ++i)
    if (mags[i] > mags[best]) best = i;
  return best;
}

bool is_local_max(const ArrayXd& mags, Index k) {
  const bool left_ok = k == 0 || mags[k] >= mags[k - 1];
  const bool right_ok = k == mags.size() - 1 || mags[k] >= mags[k + 1];
  return k > 0 && left_ok && right_ok;
}

Peak make_peak(const Spectrum& spec, Index bin, double background, double harmonic) {
  Peak peak;
  peak.frequency = spec.freqs[bin];
  peak.magnitude = spec.mags[bin];
  peak.quality = background > 0.0 ? peak.magnitude / background
                                  : (peak.magnitude > 0.0 ? INFINITY : 0.0);
  peak.harmonic = harmonic;
  peak.is_local_max = is_local_max(spec.mags, bin);
  double offset = 0.0;
  if (bin > 0 && bin + 1 < spec.mags.size())
    offset = interpolate_peak_offset(spec.mags[bin - 1], spec.mags[bin], spec.mags[bin + 1]);
  peak.interpolated_frequency = spec.freqs[bin] + offset * spec.bin_width();
  return peak;
}

}  // namespace

double interpolate_peak_offset(double mag_left, double mag_center, double mag_right) {
  // For the rectangular-window line shape the neighbor magnitudes obey
  // m_- = A/(1+d), m_0 = A/d-like ratios, giving d = (m_+ - m_-)/(m_+ + m_-)
  // exactly. On-bin peaks have both neighbors at the numerical floor.
  const double denom = mag_left + mag_right;
  if (!(denom > 0.0) || denom < 1e-12 * mag_center) return 0.0;
  return std::clamp((mag_right - mag_left) / denom, -0.5, 0.5);
}

Spectrum compute_spectrum(const ProbabilityTrace& trace, const std::string& window,
                          bool detrend) {
  const Index n = trace.values.size();
  if (n < 16) throw std::invalid_argument("compute_spectrum: need at least 16 samples");
  if (trace.tau <= 0.0) throw std::invalid_argument("compute_spectrum: tau must be > 0");

  ArrayXd x = trace.values;
  if (detrend) x -= x.mean();
  if (window == "hann") {
    const ArrayXd idx = ArrayXd::LinSpaced(n, 0.0, static_cast<double>(n - 1));
    x *= 0.5 * (1.0 - (2.0 * M_PI * idx / static_cast<double>(n - 1)).cos());
  } else if (window != "rectangular") {
    throw std::invalid_argument("compute_spectrum: unknown window '" + window + "'");
  }

  Eigen::FFT<double> fft;
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);

  const Index n_bins = n / 2 + 1;
  Spectrum spec;
  spec.window = window;
  spec.detrended = detrend;
  spec.n_samples = n;
  spec.sample_tau = trace.tau;
  spec.freqs = ArrayXd::LinSpaced(n_bins, 0.0, 2.0 * M_PI * static_cast<double>(n_bins - 1) /
                                                  (trace.tau * static_cast<double>(n)));
  spec.mags.resize(n_bins);
  const double scale = 2.0 / static_cast<double>(n);
  for (Index k = 0; k < n_bins; ++k) spec.mags[k] = scale * std::abs(out[static_cast<std::size_t>(k)]);
  spec.mags[0] *= 0.5;                       // DC carries 1/N
  if (n % 2 == 0) spec.mags[n_bins - 1] *= 0.5;  // so does Nyquist for even N
  return spec;
}

PeakReport detect_harmonics(const Spectrum& spec, double beat, int max_harmonic) {
  if (!(beat > 0.0)) throw std::invalid_argument("detect_harmonics: beat must be > 0");
  if (beat < 4.0 * spec.bin_width())
    throw std::invalid_argument("detect_harmonics: beat not resolvable (< 4 bins)");
  if (max_harmonic < 1)
    throw std::invalid_argument("detect_harmonics: max_harmonic must be >= 1");

  PeakReport report;
  report.expected_beat = beat;
  report.background_median = median_background(spec.mags);

  std::vector<double> orders;
  orders.push_back(0.5);
  for (int k = 1; k <= max_harmonic; ++k) orders.push_back(static_cast<double>(k));

  for (const double h : orders) {
    const double f = h * beat;
    if (f > spec.freqs[spec.freqs.size() - 1]) continue;
    const Index bin = refine_local_max(spec.mags, nearest_bin(spec, f));
    report.peaks.push_back(make_peak(spec, bin, report.background_median, h));
  }
  std::sort(report.peaks.begin(), report.peaks.end(),
            [](const Peak& a, const Peak& b) { return a.magnitude > b.magnitude; });
  return report;
}

namespace {

Spectrum mean_trace_spectrum(const std::vector<ProbabilityTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("beat_amplitude: no traces");
  const Index n = traces.front().values.size();
  const double tau = traces.front().tau;
  ProbabilityTrace mean;
  mean.tau = tau;
  mean.values = ArrayXd::Zero(n);
  for (const ProbabilityTrace& trace : traces) {
    if (trace.values.size() != n || trace.tau != tau)
      throw std::invalid_argument("beat_amplitude: traces must share the same grid");
    mean.values += trace.values;
  }
  mean.values /= static_cast<double>(traces.size());
  return compute_spectrum(mean, "rectangular", true);
}

}  // namespace

double beat_amplitude(const std::vector<ProbabilityTrace>& traces, double beat) {
  const Spectrum spec = mean_trace_spectrum(traces);
  const Index bin = refine_local_max(spec.mags, nearest_bin(spec, beat));
  return spec.mags[bin];
}

double beat_amplitude_noise_corrected(const std::vector<ProbabilityTrace>& traces,
                                      double beat) {
  const Spectrum spec = mean_trace_spectrum(traces);
  const Index bin = refine_local_max(spec.mags, nearest_bin(spec, beat));

  // Noise floor from the median bin power, excluding the neighborhoods of
  // the first half-harmonics k*beat/2 where the signal lives. The median of
  // an exponential (chi^2 with 2 dof) noise power is mean*ln 2, and stays
  // robust against leftover structured lines elsewhere in the spectrum.
  const double half_step = 0.5 * beat / spec.bin_width();
  std::vector<double> powers;
  powers.reserve(static_cast<std::size_t>(spec.mags.size()));
  for (Index k = 1; k < spec.mags.size(); ++k) {
    bool guarded = false;
    for (int j = 1; j <= 16; ++j) {
      if (std::abs(static_cast<double>(k) - j * half_step) < 4.0) {
        guarded = true;
        break;
      }
    }
    if (!guarded) powers.push_back(spec.mags[k] * spec.mags[k]);
  }
  double floor_power = 0.0;
  if (!powers.empty()) {
    const std::size_t mid = powers.size() / 2;
    std::nth_element(powers.begin(), powers.begin() + mid, powers.end());
    floor_power = powers[mid] / std::log(2.0);
  }
  const double signal_power = spec.mags[bin] * spec.mags[bin] - floor_power;
  return signal_power > 0.0 ? std::sqrt(signal_power) : 0.0;
}

Peak dominant_peak(const Spectrum& spec) {
  Index best = 1;
  for (Index k = 2; k < spec.mags.size(); ++k)
    if (spec.mags[k] > spec.mags[best]) best = k;
  return make_peak(spec, best, median_background(spec.mags), 0.0);
}

}  // namespace nvnmr
