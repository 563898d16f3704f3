#pragma once

// Spectral and linear-prediction kernels shared by pitch, formant and
// feature analysis.

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/Polynomials>

#include "prosody/error.hpp"

namespace prosody::spectral {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// |X[k]|^2 for k = 0..nfft/2 of the zero-padded frame.
inline std::vector<double> power_spectrum(std::span<const double> frame, std::size_t nfft) {
  std::vector<double> padded(nfft, 0.0);
  std::copy_n(frame.begin(), std::min(frame.size(), nfft), padded.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  std::vector<double> power(nfft / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
  return power;
}

/// Linear autocorrelation r[k] = sum_n x[n] x[n+k] for k = 0..max_lag via FFT.
inline std::vector<double> autocorrelation_fft(std::span<const double> x, std::size_t max_lag,
                                               Eigen::FFT<double>& fft) {
  const std::size_t nfft = next_pow2(x.size() + max_lag + 1);
  std::vector<double> padded(nfft, 0.0);
  std::copy(x.begin(), x.end(), padded.begin());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  for (auto& v : spec) v = std::norm(v);
  std::vector<double> r;
  fft.inv(r, spec);
  r.resize(max_lag + 1);
  return r;
}

/// Direct autocorrelation, r[k] = sum_n x[n] x[n+k], k = 0..max_lag.
inline std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag && k < x.size(); ++k) {
    double acc = 0.0;
    for (std::size_t n = 0; n + k < x.size(); ++n) acc += x[n] * x[n + k];
    r[k] = acc;
  }
  return r;
}

/// Predictor coefficients alpha[1..p] with x[n] ~ sum_k alpha[k] x[n-k], so
/// the inverse filter is A(z) = 1 - sum_k alpha[k] z^-k.
struct LpcResult {
  std::vector<double> alpha;  // index 0 unused, holds 1.0
  double error = 0.0;         // final prediction error energy
};

/// Levinson-Durbin recursion on autocorrelation r[0..order].
inline LpcResult levinson_durbin(std::span<const double> r, std::size_t order) {
  if (r.size() < order + 1) throw Error(ErrorCode::InvalidArgument, "autocorrelation too short for order");
  LpcResult out;
  out.alpha.assign(order + 1, 0.0);
  out.alpha[0] = 1.0;
  double err = r[0];
  if (!(err > 0.0)) {
    out.error = 0.0;
    return out;
  }
  std::vector<double> prev(order + 1, 0.0);
  for (std::size_t i = 1; i <= order; ++i) {
    double acc = r[i];
    for (std::size_t j = 1; j < i; ++j) acc -= out.alpha[j] * r[i - j];
    const double k = acc / err;
    prev = out.alpha;
    out.alpha[i] = k;
    for (std::size_t j = 1; j < i; ++j) out.alpha[j] = prev[j] - k * prev[i - j];
    err *= (1.0 - k * k);
    if (!(err > 0.0)) {
      err = 0.0;
      break;
    }
  }
  out.error = err;
  return out;
}

/// Cepstrum c[1..n_ceps] of the all-pole model 1/A(z) from predictor
/// coefficients (complex cepstrum of a minimum-phase system).
inline std::vector<double> lpc_to_cepstrum(std::span<const double> alpha, std::size_t n_ceps) {
  const std::size_t p = alpha.size() - 1;
  std::vector<double> c(n_ceps + 1, 0.0);
  for (std::size_t n = 1; n <= n_ceps; ++n) {
    double acc = n <= p ? alpha[n] : 0.0;
    for (std::size_t k = 1; k < n; ++k) {
      if (n - k <= p) acc += (static_cast<double>(k) / static_cast<double>(n)) * c[k] * alpha[n - k];
    }
    c[n] = acc;
  }
  return c;
}

/// Roots of the inverse filter A(z) = 1 - sum alpha[k] z^-k, i.e. of the
/// polynomial z^p - alpha[1] z^(p-1) - ... - alpha[p].
inline std::vector<std::complex<double>> inverse_filter_roots(std::span<const double> alpha) {
  const std::size_t p = alpha.size() - 1;
  if (p == 0) return {};
  // Eigen expects ascending coefficients: c0 + c1 z + ... + cp z^p.
  Eigen::VectorXd coeffs(static_cast<Eigen::Index>(p + 1));
  for (std::size_t k = 0; k < p; ++k) coeffs(static_cast<Eigen::Index>(k)) = -alpha[p - k];
  coeffs(static_cast<Eigen::Index>(p)) = 1.0;
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver;
  solver.compute(coeffs);
  const auto& roots = solver.roots();
  std::vector<std::complex<double>> out(static_cast<std::size_t>(roots.size()));
  for (Eigen::Index i = 0; i < roots.size(); ++i) out[static_cast<std::size_t>(i)] = roots(i);
  return out;
}

}  // namespace prosody::spectral
