#pragma once

// Multi-norm (l2 + l1) minimum-power distortionless beamformer, one bin at a time:
//
//   min_w  sum_n |w^H x(n)|^2 + lambda |w^H x(n)|   s.t.  w^H a = 1
//
// Outer ADMM on the split z(n) = w^H x(n) with multiplier eta_w(n); the w
// subproblem enforces the constraint with its own multiplier eta_1 and penalty
// 1/(2 rho_1), iterated max_inner times per outer step.
//
// Each bin is rescaled internally to unit mean channel power (lambda scaled
// alongside), so the penalty parameters act the same in loud and quiet bins and
// the iterates are scale covariant.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dpmclp/room.hpp"
#include "dpmclp/shrinkage.hpp"
#include "dpmclp/signal.hpp"

namespace dpmclp {

struct BeamConfig {
  double lambda_w = 0.0;
  double rho_w = 1.0;
  double mu_w = 2.0;
  double gamma_w = 1.0;
  double rho_1 = 1e-3;
  double gamma_1 = 1e3;
  std::size_t max_outer = 30;
  std::size_t max_inner = 10;
  double tol = 1e-8;             // relative change of w between outer steps
  double constraint_tol = 1e-9;  // |w^H a - 1| target for the inner loop
  double diag_load = 1e-6;

  static BeamConfig defaults_for(const TfTensor& X, double lambda_rel = 0.01) {
    BeamConfig c;
    c.lambda_w = lambda_rel * X.mean_abs();
    return c;
  }

  void validate() const {
    if (!(lambda_w >= 0.0)) throw Error("BeamConfig: lambda_w must be >= 0");
    if (!(rho_w > 0.0) || !(mu_w > 0.0) || !(rho_1 > 0.0))
      throw Error("BeamConfig: rho_w, mu_w and rho_1 must be > 0");
    if (!(gamma_w >= 0.0) || !(gamma_1 >= 0.0)) throw Error("BeamConfig: step sizes must be >= 0");
    if (max_outer < 1 || max_inner < 1) throw Error("BeamConfig: iteration caps must be >= 1");
    if (!(diag_load >= 0.0)) throw Error("BeamConfig: diag_load must be >= 0");
  }
};

/// ADMM state of one bin, in the caller's (unnormalised) units.
struct BinBeamState {
  Eigen::VectorXcd w;
  Eigen::VectorXcd z_w;    // per frame
  Eigen::VectorXcd eta_w;  // per frame
  cplx eta_1{0.0, 0.0};
  std::size_t outer_iters = 0;
  double constraint_residual = 0.0;
  bool converged = false;
};

struct BeamWeights {
  std::vector<BinBeamState> bins;
  std::vector<std::string> warnings;

  Eigen::Index bin_count() const { return static_cast<Eigen::Index>(bins.size()); }
  const Eigen::VectorXcd& w(Eigen::Index bin) const { return bins[static_cast<std::size_t>(bin)].w; }

  double max_constraint_residual() const {
    double r = 0.0;
    for (const auto& b : bins) r = std::max(r, b.constraint_residual);
    return r;
  }
};

/// ADMM multiplier step for one frame: eta_w + gamma_w (w^H x - z_w).
inline cplx update_etaw(const Eigen::VectorXcd& w, const Eigen::VectorXcd& x, cplx z_w, cplx eta_w,
                        const BeamConfig& cfg) {
  return eta_w + cfg.gamma_w * (w.dot(x) - z_w);
}

/// Proximal gradient step on z_w for one frame.
inline cplx update_zw(const Eigen::VectorXcd& w, const Eigen::VectorXcd& x, cplx z_w, cplx eta_w,
                      const BeamConfig& cfg) {
  const cplx grad = -eta_w - (w.dot(x) - z_w) / cfg.rho_w;
  return soft_threshold(z_w - grad / cfg.mu_w, cfg.lambda_w / cfg.mu_w);
}

namespace detail {

/// Normal matrix of the w subproblem: (1 + 1/(2 rho_w)) X X^H + a a^H/(2 rho_1) + eps I.
inline Eigen::LLT<Eigen::MatrixXcd> weight_matrix(const Eigen::MatrixXcd& X, const Eigen::VectorXcd& a,
                                                  const BeamConfig& cfg) {
  const Eigen::Index M = X.rows();
  Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(M, M);
  R.selfadjointView<Eigen::Lower>().rankUpdate(X);
  R.triangularView<Eigen::StrictlyUpper>() = R.adjoint();
  const double eps = cfg.diag_load * R.diagonal().real().sum() / static_cast<double>(M);
  Eigen::MatrixXcd A = (1.0 + 1.0 / (2.0 * cfg.rho_w)) * R + (a * a.adjoint()) / (2.0 * cfg.rho_1);
  A.diagonal().array() += eps;
  Eigen::LLT<Eigen::MatrixXcd> llt(A);
  if (llt.info() != Eigen::Success) throw Error("ill-conditioned beamformer normal matrix");
  return llt;
}

/// Inner constrained solve for w with eta_1 dual ascent. `st` is in normalised units.
inline void inner_weight_loop(const Eigen::LLT<Eigen::MatrixXcd>& A, const Eigen::MatrixXcd& X,
                              const Eigen::VectorXcd& a, BinBeamState& st, const BeamConfig& cfg) {
  const Eigen::VectorXcd coef = (st.z_w / (2.0 * cfg.rho_w) - 0.5 * st.eta_w).conjugate();
  const Eigen::VectorXcd data_term = X * coef;
  for (std::size_t j = 0; j < cfg.max_inner; ++j) {
    const cplx a_coef = 1.0 / (2.0 * cfg.rho_1) - 0.5 * std::conj(st.eta_1);
    st.w = A.solve(data_term + a * a_coef);
    const cplx r = st.w.dot(a) - 1.0;
    st.eta_1 += cfg.gamma_1 * r;
    st.constraint_residual = std::abs(r);
    if (st.constraint_residual < cfg.constraint_tol) break;
  }
}

}  // namespace detail

/// One w update (inner eta_1 loop included) for a bin, given its ADMM state in
/// normalised units.
inline Eigen::VectorXcd update_w(const Eigen::MatrixXcd& X, const Eigen::VectorXcd& a, BinBeamState& st,
                                 const BeamConfig& cfg) {
  const auto A = detail::weight_matrix(X, a, cfg);
  detail::inner_weight_loop(A, X, a, st, cfg);
  return st.w;
}

/// Full ADMM solve for one bin. X is M x N, a the target steering vector.
inline BinBeamState solve_bin(const Eigen::MatrixXcd& X, const Eigen::VectorXcd& a, const BeamConfig& cfg) {
  cfg.validate();
  const Eigen::Index M = X.rows();
  const Eigen::Index N = X.cols();
  if (a.size() != M) throw Error("solve_bin: steering vector length does not match channel count");
  const double a2 = a.squaredNorm();
  if (!(a2 > 0.0)) throw Error("solve_bin: steering vector is zero");

  BinBeamState st;
  st.w = a / a2;
  st.z_w = Eigen::VectorXcd::Zero(N);
  st.eta_w = Eigen::VectorXcd::Zero(N);

  const double power = X.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, N * M));
  if (M == 1 || !(power > 0.0)) {
    // Only the constraint is informative.
    st.z_w = (st.w.adjoint() * X).transpose();
    st.constraint_residual = std::abs(st.w.dot(a) - 1.0);
    st.converged = true;
    return st;
  }

  const double scale = std::sqrt(power);
  const Eigen::MatrixXcd Xn = X / scale;
  BeamConfig ncfg = cfg;
  ncfg.lambda_w = cfg.lambda_w / scale;

  st.z_w = (st.w.adjoint() * Xn).transpose();
  const auto A = detail::weight_matrix(Xn, a, ncfg);

  for (std::size_t l = 1; l <= ncfg.max_outer; ++l) {
    const Eigen::VectorXcd w_prev = st.w;
    const Eigen::VectorXcd z_prev = st.z_w;
    detail::inner_weight_loop(A, Xn, a, st, ncfg);
    for (Eigen::Index n = 0; n < N; ++n) {
      const Eigen::VectorXcd x = Xn.col(n);
      st.z_w[n] = update_zw(st.w, x, st.z_w[n], st.eta_w[n], ncfg);
      st.eta_w[n] = update_etaw(st.w, x, st.z_w[n], st.eta_w[n], ncfg);
    }
    st.outer_iters = l;
    // A stalled w alone is not convergence: the split z_w must have settled and
    // agree with w^H x as well.
    const Eigen::VectorXcd y = (st.w.adjoint() * Xn).transpose();
    const double y_norm = std::max(y.norm(), 1e-300);
    const double rel_w = (st.w - w_prev).norm() / std::max(st.w.norm(), 1e-300);
    const double rel_z = (st.z_w - z_prev).norm() / y_norm;
    const double primal = (y - st.z_w).norm() / y_norm;
    if (std::max({rel_w, rel_z, primal}) < ncfg.tol && st.constraint_residual <= ncfg.constraint_tol) {
      st.converged = true;
      break;
    }
  }
  st.z_w *= scale;
  st.eta_w *= scale;
  st.eta_1 *= scale * scale;
  return st;
}

/// Per-bin weights for target azimuth theta_s.
inline BeamWeights estimate_weights(const TfTensor& X, double theta_s, const ArrayGeometry& geom,
                                    const BeamConfig& cfg, double constraint_warn = 1e-6) {
  cfg.validate();
  if (geom.size() != X.mics()) throw Error("estimate_weights: geometry and tensor channel counts differ");
  if (!X.all_finite()) throw Error("estimate_weights: input tensor has non-finite entries");
  BeamWeights out;
  out.bins.reserve(static_cast<std::size_t>(X.bins()));
  for (Eigen::Index w = 0; w < X.bins(); ++w) {
    const Eigen::VectorXcd a = steering_vector(geom, theta_s, w, X.bins(), X.sample_rate());
    out.bins.push_back(solve_bin(Eigen::MatrixXcd(X.bin(w)), a, cfg));
    if (out.bins.back().constraint_residual > constraint_warn) {
      std::ostringstream msg;
      msg << "bin " << w << ": distortionless constraint residual " << out.bins.back().constraint_residual;
      out.warnings.push_back(msg.str());
    }
  }
  return out;
}

/// s(n,w) = w(w)^H x(n,w); single-channel output.
inline TfTensor apply_weights(const TfTensor& X, const BeamWeights& weights) {
  if (weights.bin_count() != X.bins()) throw Error("apply_weights: bin count mismatch");
  TfTensor S(1, X.frames(), X.bins(), X.frame_len(), X.hop(), X.sample_rate());
  for (Eigen::Index w = 0; w < X.bins(); ++w) {
    const Eigen::VectorXcd& wv = weights.w(w);
    if (wv.size() != X.mics()) throw Error("apply_weights: weight length does not match channel count");
    S.bin(w) = wv.adjoint() * X.bin(w);
  }
  return S;
}

/// |w^H a(theta)| over a uniform azimuth grid on [0, 2 pi).
inline std::vector<std::pair<double, double>> beam_pattern(const Eigen::VectorXcd& w, const ArrayGeometry& geom,
                                                           Eigen::Index bin, Eigen::Index bins, double sample_rate,
                                                           std::size_t points = 360) {
  std::vector<std::pair<double, double>> out;
  out.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(points);
    out.emplace_back(theta, std::abs(w.dot(steering_vector(geom, theta, bin, bins, sample_rate))));
  }
  return out;
}

}  // namespace dpmclp
