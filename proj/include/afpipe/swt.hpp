#pragma once

#include <array>
#include <span>
#include <vector>

#include "afpipe/common.hpp"

namespace afpipe {

// Daubechies-3 decomposition filters. The high-pass is the quadrature mirror
// of the low-pass; sign conventions are irrelevant here because detail
// coefficients are squared downstream.
inline constexpr std::array<double, 6> kDb3Lo = {
    0.035226291882100656, -0.08544127388224149, -0.13501102001039084,
    0.4598775021193313,   0.8068915093133388,   0.3326705529509569};

inline constexpr std::array<double, 6> kDb3Hi = {
    0.3326705529509569,   -0.8068915093133388, 0.4598775021193313,
    0.13501102001039084,  -0.08544127388224149, -0.035226291882100656};

namespace detail {

// Circular a-trous convolution with the filter upsampled by `step`.
inline std::vector<double> atrous_conv(const std::vector<double>& x,
                                       const std::array<double, 6>& filt,
                                       std::size_t step) {
  const std::size_t n = x.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    std::size_t pos = i;
    for (std::size_t k = 0; k < filt.size(); ++k) {
      acc += filt[k] * x[pos];
      pos = pos >= step ? pos - step : pos + n - step;
    }
    y[i] = acc;
  }
  return y;
}

}  // namespace detail

// Detail coefficients of the undecimated (stationary) wavelet transform at
// `level`, time-aligned with the input. The input is reflection-padded on
// both sides and rounded up to a multiple of 2^level so the circular cascade
// is valid; the cumulative group delay of the filter cascade,
// 2.5 * (2^level - 1) samples for 6-tap filters, is compensated before the
// pads are cropped away.
inline std::vector<double> swt_detail(std::span<const double> x, int level) {
  if (level < 1) throw ConfigError("swt: level must be >= 1");
  const std::size_t n = x.size();
  const std::size_t block = std::size_t{1} << level;
  if (n < block)
    throw DetectorError("swt: input length " + std::to_string(n) +
                        " shorter than 2^level = " + std::to_string(block));

  const std::size_t pad_left = std::min<std::size_t>(64, n - 1);
  std::size_t pad_right = std::min<std::size_t>(64, n - 1);
  while ((n + pad_left + pad_right) % block != 0) ++pad_right;

  std::vector<double> ext;
  ext.reserve(n + pad_left + pad_right);
  for (std::size_t i = pad_left; i >= 1; --i) ext.push_back(x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < pad_right; ++i) {
    const std::size_t mirrored = n >= 2 ? n - 2 - (i % (n - 1)) : 0;
    ext.push_back(x[mirrored]);
  }

  std::vector<double> approx = std::move(ext);
  std::vector<double> det;
  for (int j = 1; j <= level; ++j) {
    const std::size_t step = std::size_t{1} << (j - 1);
    det = detail::atrous_conv(approx, kDb3Hi, step);
    if (j < level) approx = detail::atrous_conv(approx, kDb3Lo, step);
  }

  const auto total = static_cast<std::size_t>(det.size());
  const auto delay = static_cast<std::size_t>(
      std::llround(2.5 * ((std::size_t{1} << level) - 1)));
  std::vector<double> aligned(n);
  for (std::size_t i = 0; i < n; ++i) aligned[i] = det[(i + pad_left + delay) % total];
  return aligned;
}

}  // namespace afpipe
