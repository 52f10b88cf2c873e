#pragma once

#include <cmath>

#include "dpmclp/signal.hpp"

namespace dpmclp {

/// Complex soft threshold: v * max(|v| - tau, 0) / |v|. For real inputs this is
/// the usual three-branch shrinkage (v - tau, v + tau, or 0).
inline cplx soft_threshold(cplx v, double tau) {
  const double mag = std::abs(v);
  if (mag <= tau || mag == 0.0) return cplx(0.0, 0.0);
  return v * ((mag - tau) / mag);
}

inline double soft_threshold(double v, double tau) {
  if (v >= tau) return v - tau;
  if (v <= -tau) return v + tau;
  return 0.0;
}

template <typename Derived>
Eigen::VectorXcd soft_threshold(const Eigen::MatrixBase<Derived>& v, double tau) {
  if (tau < 0.0) throw Error("soft_threshold: tau must be >= 0");
  Eigen::VectorXcd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = soft_threshold(cplx(v(i)), tau);
  return out;
}

}  // namespace dpmclp
