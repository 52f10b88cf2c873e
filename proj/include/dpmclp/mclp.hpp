#pragma once

// Dual-path multichannel linear prediction (MCLP) dereverberation.
//
// The early component is modelled as
//
//   x(n,w) = y(n,w) - G_t(w)^H yt(n,w) - G_f(n)^H yf(n,w)
//
// with a temporal filter per bin (prediction from frames n-D-1 .. n-D-K_t) and a
// frequential filter per frame (prediction from bins w-K_f .. w+K_f of the same
// frame, centre block masked). The filters minimise
//
//   sum ||x||^2 + lambda ||z||_1 + Re{eta^H (x - z)} + 1/(2 rho) ||x - z||^2
//
// by alternating exact block solves for G_t and G_f, a proximal gradient step on
// the split variable z, and dual ascent on eta.
//
// Gradient convention: for a real function V of complex z we use the Wirtinger
// gradient 2 dV/dz*, so grad_z V = -eta - (x - z)/rho.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dpmclp/shrinkage.hpp"
#include "dpmclp/signal.hpp"

namespace dpmclp {

struct MclpConfig {
  std::size_t k_t = 10;
  std::size_t k_f = 0;
  std::size_t delta_t = 2;
  double lambda_z = 0.0;
  double rho_g = 1.0;
  double mu_z = 2.0;
  double gamma = 1.0;
  std::size_t max_iters = 20;
  double tol = 1e-4;
  // Loading added to every normal-equation matrix: diag_load * trace / dim.
  double diag_load = 1e-6;
  // Separate loading for the frequential normal matrices; unset = diag_load.
  std::optional<double> diag_load_f;
  // Bins on each side of the centre that are masked as well (0 = centre only).
  std::size_t guard_f = 0;
  // Record the objective around each G_t and G_f sweep.
  bool track_blocks = false;

  /// Defaults with lambda_z = lambda_rel * mean|y|.
  static MclpConfig defaults_for(const TfTensor& Y, double lambda_rel = 0.01) {
    MclpConfig c;
    c.lambda_z = lambda_rel * Y.mean_abs();
    return c;
  }

  void validate() const {
    if (delta_t < 1) throw Error("MclpConfig: delta_t must be >= 1");
    if (!(lambda_z >= 0.0)) throw Error("MclpConfig: lambda_z must be >= 0");
    if (!(rho_g > 0.0) || !(mu_z > 0.0) || !(gamma >= 0.0))
      throw Error("MclpConfig: rho_g and mu_z must be > 0, gamma >= 0");
    if (!(diag_load >= 0.0)) throw Error("MclpConfig: diag_load must be >= 0");
    if (diag_load_f && !(*diag_load_f >= 0.0)) throw Error("MclpConfig: diag_load_f must be >= 0");
    if (!(tol >= 0.0)) throw Error("MclpConfig: tol must be >= 0");
  }

  Eigen::Index temporal_dim(Eigen::Index mics) const { return static_cast<Eigen::Index>(k_t) * mics; }
  Eigen::Index frequential_dim(Eigen::Index mics) const { return static_cast<Eigen::Index>(2 * k_f + 1) * mics; }
  double frequential_load() const { return diag_load_f.value_or(diag_load); }
};

/// Temporal filters G_t(w), (K_t M) x M per bin; frequential filters G_f(n),
/// ((2K_f+1) M) x M per frame.
struct DualPathFilters {
  Eigen::Index mics = 0;
  std::size_t k_t = 0;
  std::size_t k_f = 0;
  std::size_t delta_t = 1;
  std::size_t guard_f = 0;
  std::vector<Eigen::MatrixXcd> temporal;
  std::vector<Eigen::MatrixXcd> frequential;

  static DualPathFilters zeros(Eigen::Index mics, Eigen::Index frames, Eigen::Index bins, const MclpConfig& cfg) {
    DualPathFilters f;
    f.mics = mics;
    f.k_t = cfg.k_t;
    f.k_f = cfg.k_f;
    f.delta_t = cfg.delta_t;
    f.guard_f = cfg.guard_f;
    f.temporal.assign(static_cast<std::size_t>(bins), Eigen::MatrixXcd::Zero(cfg.temporal_dim(mics), mics));
    f.frequential.assign(static_cast<std::size_t>(frames), Eigen::MatrixXcd::Zero(cfg.frequential_dim(mics), mics));
    return f;
  }

  Eigen::Index bins() const { return static_cast<Eigen::Index>(temporal.size()); }
  Eigen::Index frames() const { return static_cast<Eigen::Index>(frequential.size()); }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& g : temporal) s += g.squaredNorm();
    for (const auto& g : frequential) s += g.squaredNorm();
    return s;
  }

  void check_against(const TfTensor& Y) const {
    if (Y.mics() != mics || Y.bins() != bins() || Y.frames() != frames())
      throw Error("DualPathFilters: dimensions do not match the observation tensor");
    const auto dt = static_cast<Eigen::Index>(k_t) * mics;
    const auto df = static_cast<Eigen::Index>(2 * k_f + 1) * mics;
    for (const auto& g : temporal)
      if (g.rows() != dt || g.cols() != mics) throw Error("DualPathFilters: temporal filter has wrong shape");
    for (const auto& g : frequential)
      if (g.rows() != df || g.cols() != mics) throw Error("DualPathFilters: frequential filter has wrong shape");
  }
};

struct BlockCheck {
  double before = 0.0;
  double after_gt = 0.0;
  double after_gf = 0.0;
};

struct MclpState {
  TfTensor z;
  TfTensor eta;
  std::size_t iter = 0;
  bool converged = false;
  std::vector<double> objective_trace;
  std::vector<double> primal_residual;  // ||x - z||_F after each iteration
  std::vector<BlockCheck> block_trace;

  static MclpState initial(const TfTensor& Y) {
    MclpState s;
    s.z = Y;
    s.eta = Y.zeros_like();
    return s;
  }
};

struct MclpResult {
  DualPathFilters filters;
  MclpState state;
  TfTensor estimate;  // x^(n, w)
};

// ---------------------------------------------------------------------------
// Stacked observations

/// [y(n-D-1, w); ...; y(n-D-K_t, w)], out-of-range frames as zeros.
inline Eigen::VectorXcd stack_temporal(const TfTensor& Y, Eigen::Index n, Eigen::Index w, std::size_t delta_t,
                                       std::size_t k_t) {
  const Eigen::Index M = Y.mics();
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(k_t) * M);
  for (std::size_t k = 0; k < k_t; ++k) {
    const Eigen::Index src = n - static_cast<Eigen::Index>(delta_t + 1 + k);
    if (src >= 0 && src < Y.frames()) v.segment(static_cast<Eigen::Index>(k) * M, M) = Y.cell(src, w);
  }
  return v;
}

/// [y(n, w-K_f); ...; y(n, w); ...; y(n, w+K_f)], out-of-range bins as zeros.
/// With `mask_center` the lag-0 block (and `guard` blocks either side of it) is
/// zeroed so a bin never predicts itself.
inline Eigen::VectorXcd stack_frequential(const TfTensor& Y, Eigen::Index n, Eigen::Index w, std::size_t k_f,
                                          bool mask_center = true, std::size_t guard = 0) {
  const Eigen::Index M = Y.mics();
  const auto K = static_cast<Eigen::Index>(k_f);
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero((2 * K + 1) * M);
  for (Eigen::Index j = 0; j <= 2 * K; ++j) {
    if (mask_center && std::abs(j - K) <= static_cast<Eigen::Index>(guard)) continue;
    const Eigen::Index src = w - K + j;
    if (src >= 0 && src < Y.bins()) v.segment(j * M, M) = Y.cell(n, src);
  }
  return v;
}

namespace detail {

/// All temporal stacks of bin w as columns: (K_t M) x N.
inline Eigen::MatrixXcd temporal_regressors(const TfTensor& Y, Eigen::Index w, std::size_t delta_t, std::size_t k_t) {
  const Eigen::Index M = Y.mics();
  const Eigen::Index N = Y.frames();
  Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(k_t) * M, N);
  const auto slab = Y.bin(w);
  for (std::size_t k = 0; k < k_t; ++k) {
    const auto shift = static_cast<Eigen::Index>(delta_t + 1 + k);
    if (shift >= N) break;
    R.block(static_cast<Eigen::Index>(k) * M, shift, M, N - shift) = slab.leftCols(N - shift);
  }
  return R;
}

/// All frequential stacks of frame n as columns: ((2K_f+1) M) x W, centre masked.
inline Eigen::MatrixXcd frequential_regressors(const TfTensor& Y, Eigen::Index n, std::size_t k_f,
                                               std::size_t guard = 0) {
  const Eigen::Index M = Y.mics();
  const Eigen::Index W = Y.bins();
  const auto K = static_cast<Eigen::Index>(k_f);
  Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero((2 * K + 1) * M, W);
  const auto slab = Y.frame(n);
  for (Eigen::Index j = 0; j <= 2 * K; ++j) {
    if (std::abs(j - K) <= static_cast<Eigen::Index>(guard)) continue;
    const Eigen::Index off = j - K;  // column w of block j holds bin w + off
    const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
    const Eigen::Index hi = std::min<Eigen::Index>(W, W - off);
    if (hi > lo) R.block(j * M, lo, M, hi - lo) = slab.middleCols(lo + off, hi - lo);
  }
  return R;
}

/// Factorised normal-equation matrix (1 + c) R R^H + eps I, eps = load * trace(R R^H) / dim.
struct NormalMatrix {
  Eigen::LLT<Eigen::MatrixXcd> llt;
  bool empty = true;  // no regressor energy: the block solution is zero

  NormalMatrix() = default;
  NormalMatrix(const Eigen::MatrixXcd& regressors, double c, double load, const std::string& where) {
    const Eigen::Index D = regressors.rows();
    if (D == 0) return;
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(D, D);
    A.selfadjointView<Eigen::Lower>().rankUpdate(regressors);
    const double tr = A.diagonal().real().sum();
    if (!(tr > 0.0)) return;
    A *= (1.0 + c);
    A.diagonal().array() += load * tr / static_cast<double>(D);
    // Structurally empty regressors (masked or out-of-band blocks) have zero
    // right-hand sides; pin them so their coefficients solve to exactly zero.
    for (Eigen::Index i = 0; i < D; ++i)
      if (A(i, i).real() == 0.0) A(i, i) = 1.0;
    llt.compute(A);
    if (llt.info() != Eigen::Success) throw Error("ill-conditioned normal equations at " + where);
    empty = false;
  }

  Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const {
    if (empty) return Eigen::MatrixXcd::Zero(rhs.rows(), rhs.cols());
    return llt.solve(rhs);
  }
};

/// Columns t_n = (1 + c)(y - p_other) + eta/2 - c z, c = 1/(2 rho).
template <typename A, typename B, typename C, typename D>
Eigen::MatrixXcd block_target(const A& y, const B& p_other, const C& eta, const D& z, double rho) {
  const double c = 1.0 / (2.0 * rho);
  return (1.0 + c) * (y - p_other) + 0.5 * eta - c * z;
}

inline std::string bin_label(Eigen::Index w) { return "bin " + std::to_string(w); }
inline std::string frame_label(Eigen::Index n) { return "frame " + std::to_string(n); }

/// G_t(w)^H yt(n,w) for every frame of bin w: M x N.
inline Eigen::MatrixXcd temporal_prediction(const TfTensor& Y, const DualPathFilters& f, Eigen::Index w) {
  if (f.k_t == 0) return Eigen::MatrixXcd::Zero(Y.mics(), Y.frames());
  return f.temporal[static_cast<std::size_t>(w)].adjoint() * temporal_regressors(Y, w, f.delta_t, f.k_t);
}

/// G_f(n)^H yf(n,w) for every bin of frame n: M x W.
inline Eigen::MatrixXcd frequential_prediction(const TfTensor& Y, const DualPathFilters& f, Eigen::Index n) {
  if (f.k_f == 0) return Eigen::MatrixXcd::Zero(Y.mics(), Y.bins());
  return f.frequential[static_cast<std::size_t>(n)].adjoint() * frequential_regressors(Y, n, f.k_f, f.guard_f);
}

inline TfTensor all_temporal_predictions(const TfTensor& Y, const DualPathFilters& f) {
  TfTensor P = Y.zeros_like();
  for (Eigen::Index w = 0; w < Y.bins(); ++w) P.bin(w) = temporal_prediction(Y, f, w);
  return P;
}

inline TfTensor all_frequential_predictions(const TfTensor& Y, const DualPathFilters& f) {
  TfTensor P = Y.zeros_like();
  for (Eigen::Index n = 0; n < Y.frames(); ++n) P.frame(n) = frequential_prediction(Y, f, n);
  return P;
}

/// x = (y - p_t) - p_f, elementwise.
inline TfTensor residual(const TfTensor& Y, const TfTensor& Pt, const TfTensor& Pf) {
  TfTensor X = Y.zeros_like();
  auto& xd = X.raw();
  const auto& yd = Y.raw();
  const auto& td = Pt.raw();
  const auto& fd = Pf.raw();
  for (std::size_t i = 0; i < xd.size(); ++i) xd[i] = (yd[i] - td[i]) - fd[i];
  return X;
}

}  // namespace detail

/// Augmented Lagrangian value for the given early-component estimate x and split/dual state.
inline double augmented_lagrangian(const TfTensor& X, const TfTensor& Z, const TfTensor& Eta, const MclpConfig& cfg) {
  const auto& x = X.raw();
  const auto& z = Z.raw();
  const auto& e = Eta.raw();
  const double c = 1.0 / (2.0 * cfg.rho_g);
  long double acc = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const cplx d = x[i] - z[i];
    acc += std::norm(x[i]);
    acc += cfg.lambda_z * std::abs(z[i]);
    acc += (std::conj(e[i]) * d).real();
    acc += c * std::norm(d);
  }
  return static_cast<double>(acc);
}

/// x^(n,w) = y(n,w) - G_t^H yt - G_f^H yf for every cell.
inline TfTensor apply_filters(const TfTensor& Y, const DualPathFilters& filters) {
  filters.check_against(Y);
  return detail::residual(Y, detail::all_temporal_predictions(Y, filters),
                          detail::all_frequential_predictions(Y, filters));
}

/// Exact minimiser of the augmented Lagrangian over G_t(w), all else fixed.
inline Eigen::MatrixXcd update_gt(const TfTensor& Y, const DualPathFilters& filters, const MclpState& state,
                                  const MclpConfig& cfg, Eigen::Index w) {
  if (cfg.k_t == 0) return Eigen::MatrixXcd::Zero(0, Y.mics());
  const Eigen::MatrixXcd R = detail::temporal_regressors(Y, w, cfg.delta_t, cfg.k_t);
  const detail::NormalMatrix A(R, 1.0 / (2.0 * cfg.rho_g), cfg.diag_load, detail::bin_label(w));
  Eigen::MatrixXcd pf(Y.mics(), Y.frames());
  for (Eigen::Index n = 0; n < Y.frames(); ++n) {
    const Eigen::VectorXcd yf = stack_frequential(Y, n, w, filters.k_f, true, filters.guard_f);
    pf.col(n) = filters.k_f == 0 ? Eigen::VectorXcd::Zero(Y.mics())
                                 : Eigen::VectorXcd(filters.frequential[static_cast<std::size_t>(n)].adjoint() * yf);
  }
  const Eigen::MatrixXcd T = detail::block_target(Y.bin(w), pf, state.eta.bin(w), state.z.bin(w), cfg.rho_g);
  return A.solve(R * T.adjoint());
}

/// Exact minimiser over G_f(n), all else fixed (uses the current G_t).
inline Eigen::MatrixXcd update_gf(const TfTensor& Y, const DualPathFilters& filters, const MclpState& state,
                                  const MclpConfig& cfg, Eigen::Index n) {
  const Eigen::MatrixXcd R = detail::frequential_regressors(Y, n, cfg.k_f, cfg.guard_f);
  if (cfg.k_f == 0) return Eigen::MatrixXcd::Zero(R.rows(), Y.mics());
  const detail::NormalMatrix A(R, 1.0 / (2.0 * cfg.rho_g), cfg.frequential_load(), detail::frame_label(n));
  Eigen::MatrixXcd pt(Y.mics(), Y.bins());
  for (Eigen::Index w = 0; w < Y.bins(); ++w) {
    const Eigen::VectorXcd yt = stack_temporal(Y, n, w, filters.delta_t, filters.k_t);
    pt.col(w) = filters.k_t == 0 ? Eigen::VectorXcd::Zero(Y.mics())
                                 : Eigen::VectorXcd(filters.temporal[static_cast<std::size_t>(w)].adjoint() * yt);
  }
  const Eigen::MatrixXcd T = detail::block_target(Y.frame(n), pt, state.eta.frame(n), state.z.frame(n), cfg.rho_g);
  return A.solve(R * T.adjoint());
}

/// Proximal gradient step on z(n,w) given the current early-component estimate x(n,w).
template <typename X, typename Z, typename E>
Eigen::VectorXcd update_z(const X& x, const Z& z, const E& eta, const MclpConfig& cfg) {
  const Eigen::VectorXcd grad = -eta - (x - z) / cfg.rho_g;
  return soft_threshold(z - grad / cfg.mu_z, cfg.lambda_z / cfg.mu_z);
}

template <typename X, typename Z, typename E>
Eigen::VectorXcd update_eta(const X& x, const Z& z, const E& eta, const MclpConfig& cfg) {
  return eta + cfg.gamma * (x - z);
}

/// Runs the alternating scheme G_t sweep -> G_f sweep -> z -> eta until the
/// relative filter change drops below tol or max_iters is reached.
inline MclpResult estimate_filters(const TfTensor& Y, const MclpConfig& cfg) {
  cfg.validate();
  if (!Y.all_finite()) throw Error("estimate_filters: observation tensor has non-finite entries");
  const Eigen::Index M = Y.mics();
  const Eigen::Index N = Y.frames();
  const Eigen::Index W = Y.bins();

  MclpResult out;
  out.filters = DualPathFilters::zeros(M, N, W, cfg);
  out.state = MclpState::initial(Y);
  if (cfg.k_t == 0 && cfg.k_f == 0) {
    out.estimate = Y;
    out.state.converged = true;
    return out;
  }

  DualPathFilters& F = out.filters;
  MclpState& S = out.state;
  const double c = 1.0 / (2.0 * cfg.rho_g);

  // Normal matrices depend only on Y; factorise once.
  std::vector<detail::NormalMatrix> bin_mats(static_cast<std::size_t>(cfg.k_t > 0 ? W : 0));
  for (Eigen::Index w = 0; w < static_cast<Eigen::Index>(bin_mats.size()); ++w)
    bin_mats[static_cast<std::size_t>(w)] =
        detail::NormalMatrix(detail::temporal_regressors(Y, w, cfg.delta_t, cfg.k_t), c, cfg.diag_load,
                             detail::bin_label(w));
  std::vector<detail::NormalMatrix> frame_mats(static_cast<std::size_t>(cfg.k_f > 0 ? N : 0));
  for (Eigen::Index n = 0; n < static_cast<Eigen::Index>(frame_mats.size()); ++n)
    frame_mats[static_cast<std::size_t>(n)] =
        detail::NormalMatrix(detail::frequential_regressors(Y, n, cfg.k_f, cfg.guard_f), c, cfg.frequential_load(),
                             detail::frame_label(n));

  TfTensor Pt = Y.zeros_like();
  TfTensor Pf = Y.zeros_like();
  TfTensor X = Y;

  auto check_finite = [](double v, const char* step, std::size_t iter) {
    if (!std::isfinite(v))
      throw Error(std::string("estimate_filters: divergence (non-finite objective) after ") + step + " at iteration " +
                  std::to_string(iter));
  };

  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    BlockCheck bc;
    if (cfg.track_blocks) bc.before = augmented_lagrangian(X, S.z, S.eta, cfg);
    double change = 0.0;

    // Temporal sweep, with G_f from the previous iteration.
    if (cfg.k_t > 0) {
      for (Eigen::Index w = 0; w < W; ++w) {
        const Eigen::MatrixXcd R = detail::temporal_regressors(Y, w, cfg.delta_t, cfg.k_t);
        const Eigen::MatrixXcd T = detail::block_target(Y.bin(w), Pf.bin(w), S.eta.bin(w), S.z.bin(w), cfg.rho_g);
        Eigen::MatrixXcd G = bin_mats[static_cast<std::size_t>(w)].solve(R * T.adjoint());
        change += (G - F.temporal[static_cast<std::size_t>(w)]).squaredNorm();
        F.temporal[static_cast<std::size_t>(w)] = std::move(G);
        Pt.bin(w) = F.temporal[static_cast<std::size_t>(w)].adjoint() * R;
      }
    }
    if (cfg.track_blocks) {
      X = detail::residual(Y, Pt, Pf);
      bc.after_gt = augmented_lagrangian(X, S.z, S.eta, cfg);
      check_finite(bc.after_gt, "G_t update", it);
    }

    // Frequential sweep, with the fresh G_t.
    if (cfg.k_f > 0) {
      for (Eigen::Index n = 0; n < N; ++n) {
        const Eigen::MatrixXcd R = detail::frequential_regressors(Y, n, cfg.k_f, cfg.guard_f);
        const Eigen::MatrixXcd T =
            detail::block_target(Y.frame(n), Pt.frame(n), S.eta.frame(n), S.z.frame(n), cfg.rho_g);
        Eigen::MatrixXcd G = frame_mats[static_cast<std::size_t>(n)].solve(R * T.adjoint());
        change += (G - F.frequential[static_cast<std::size_t>(n)]).squaredNorm();
        F.frequential[static_cast<std::size_t>(n)] = std::move(G);
        Pf.frame(n) = F.frequential[static_cast<std::size_t>(n)].adjoint() * R;
      }
    }
    X = detail::residual(Y, Pt, Pf);
    if (cfg.track_blocks) {
      bc.after_gf = augmented_lagrangian(X, S.z, S.eta, cfg);
      check_finite(bc.after_gf, "G_f update", it);
      S.block_trace.push_back(bc);
    }

    // Split variable and multiplier, cell by cell.
    long double primal = 0.0L;
    for (Eigen::Index w = 0; w < W; ++w) {
      for (Eigen::Index n = 0; n < N; ++n) {
        auto z = S.z.cell(n, w);
        auto eta = S.eta.cell(n, w);
        const auto x = X.cell(n, w);
        z = update_z(x, z, eta, cfg);
        eta = update_eta(x, z, eta, cfg);
        primal += (x - z).squaredNorm();
      }
    }

    const double L = augmented_lagrangian(X, S.z, S.eta, cfg);
    check_finite(L, "z/eta update", it);
    S.objective_trace.push_back(L);
    S.primal_residual.push_back(std::sqrt(static_cast<double>(primal)));
    S.iter = it;

    const double norm = F.squared_norm();
    const double rel = norm > 0.0 ? std::sqrt(change / norm) : (change > 0.0 ? 1.0 : 0.0);
    if (rel < cfg.tol) {
      S.converged = true;
      break;
    }
  }

  out.estimate = std::move(X);
  return out;
}

}  // namespace dpmclp
