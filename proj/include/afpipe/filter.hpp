#pragma once

#include <complex>
#include <span>
#include <vector>

#include "afpipe/common.hpp"

namespace afpipe {

// One normalized direct-form-II-transposed section (a0 == 1).
struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

// Digital Butterworth low-pass as cascaded second-order sections, designed by
// pole placement on the analog prototype and a pre-warped bilinear transform.
// Unity gain at DC by construction.
inline std::vector<Biquad> butterworth_lowpass_sos(int order, double cutoff_hz, double fs) {
  if (order < 1) throw ConfigError("butterworth: order must be >= 1");
  if (fs <= 0) throw ConfigError("butterworth: fs must be positive");
  if (cutoff_hz <= 0 || cutoff_hz >= fs / 2.0)
    throw ConfigError("butterworth: cutoff " + std::to_string(cutoff_hz) +
                      " Hz must lie in (0, fs/2) for fs " + std::to_string(fs));

  const double k = 2.0 * fs;                              // bilinear constant
  const double wc = k * std::tan(M_PI * cutoff_hz / fs);  // pre-warped analog cutoff

  std::vector<Biquad> sos;
  // Conjugate pole pairs: s^2 + 2*zeta*wc*s + wc^2 with zeta = -cos(angle).
  for (int i = 0; i < order / 2; ++i) {
    const double angle = M_PI * (2.0 * i + order + 1.0) / (2.0 * order);
    const double zeta = -std::cos(angle);
    const double a2s = 1.0, a1s = 2.0 * zeta * wc, a0s = wc * wc;
    const double d0 = a2s * k * k + a1s * k + a0s;
    Biquad q;
    q.b0 = wc * wc / d0;
    q.b1 = 2.0 * q.b0;
    q.b2 = q.b0;
    q.a1 = 2.0 * (a0s - a2s * k * k) / d0;
    q.a2 = (a2s * k * k - a1s * k + a0s) / d0;
    sos.push_back(q);
  }
  if (order % 2 == 1) {  // real pole at -wc
    const double d0 = k + wc;
    Biquad q;
    q.b0 = wc / d0;
    q.b1 = q.b0;
    q.a1 = (wc - k) / d0;
    sos.push_back(q);
  }
  return sos;
}

// Single forward pass with zero initial state.
inline std::vector<double> sosfilt(const std::vector<Biquad>& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (const Biquad& q : sos) {
    double s1 = 0.0, s2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * out + s2;
      s2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
  return y;
}

namespace detail {

// Forward pass with each section's state initialized to its steady-state
// response for a constant input equal to the first sample. Constant signals
// pass through untouched and startup transients shrink to what the edge
// padding can absorb.
inline void sosfilt_steady_init(const std::vector<Biquad>& sos, std::vector<double>& y) {
  for (const Biquad& q : sos) {
    const double gain = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double u0 = y.empty() ? 0.0 : y.front();
    const double y0 = gain * u0;
    double s1 = y0 - q.b0 * u0;
    double s2 = q.b2 * u0 - q.a2 * y0;
    for (double& v : y) {
      const double in = v;
      const double out = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * out + s2;
      s2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
}

}  // namespace detail

// Zero-phase forward-backward filtering with odd-reflection edge padding.
// The effective magnitude response is |H|^2 and the phase is zero, so peak
// positions are not displaced. Padding is affine in x, which keeps the whole
// operation linear.
inline std::vector<double> filtfilt(const std::vector<Biquad>& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t want = 3 * (2 * sos.size() + 1);
  const std::size_t pad = std::min(n - 1, want);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  detail::sosfilt_steady_init(sos, ext);
  std::reverse(ext.begin(), ext.end());
  detail::sosfilt_steady_init(sos, ext);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

// |H(f)| of the cascade at one frequency, from the transfer function itself.
inline double sos_gain_at(const std::vector<Biquad>& sos, double freq_hz, double fs) {
  const std::complex<double> z = std::polar(1.0, -2.0 * M_PI * freq_hz / fs);
  std::complex<double> h = 1.0;
  for (const Biquad& q : sos) {
    h *= (q.b0 + q.b1 * z + q.b2 * z * z) / (1.0 + q.a1 * z + q.a2 * z * z);
  }
  return std::abs(h);
}

}  // namespace afpipe
