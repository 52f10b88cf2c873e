#pragma once

// Small signal utilities shared by the simulator, metrics and harness.

#include <cstdint>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "dpmclp/signal.hpp"

namespace dpmclp {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Full linear convolution via zero-padded FFT. Output length a.size() + b.size() - 1.
inline Eigen::VectorXd fft_convolve(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0 || b.size() == 0) return Eigen::VectorXd();
  const auto out_len = static_cast<std::size_t>(a.size() + b.size() - 1);
  const std::size_t nfft = next_pow2(out_len);
  Eigen::FFT<double> fft;
  std::vector<double> pa(nfft, 0.0), pb(nfft, 0.0);
  std::copy(a.data(), a.data() + a.size(), pa.begin());
  std::copy(b.data(), b.data() + b.size(), pb.begin());
  std::vector<cplx> fa, fb;
  fft.fwd(fa, pa);
  fft.fwd(fb, pb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  std::vector<double> y;
  fft.inv(y, fa);
  Eigen::VectorXd out(static_cast<Eigen::Index>(out_len));
  for (std::size_t t = 0; t < out_len; ++t) out[static_cast<Eigen::Index>(t)] = y[t];
  return out;
}

inline double mean_power(const Eigen::VectorXd& x) {
  return x.size() == 0 ? 0.0 : x.squaredNorm() / static_cast<double>(x.size());
}

/// SplitMix64 finalizer; used to derive independent RNG streams from a master seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace dpmclp
