#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dpmclp {

using cplx = std::complex<double>;

/// Library-wide error type. Every precondition violation, malformed input and
/// solver failure surfaces as one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Multichannel real-valued audio. Row m holds channel m.
struct TimeSignal {
  Eigen::MatrixXd samples;  // channels x length
  double sample_rate = 16000.0;

  TimeSignal() = default;
  TimeSignal(Eigen::MatrixXd s, double fs) : samples(std::move(s)), sample_rate(fs) { validate(); }

  static TimeSignal zeros(Eigen::Index channels, Eigen::Index length, double fs) {
    return TimeSignal(Eigen::MatrixXd::Zero(channels, length), fs);
  }
  static TimeSignal mono(const Eigen::VectorXd& x, double fs) {
    return TimeSignal(Eigen::MatrixXd(x.transpose()), fs);
  }

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index length() const { return samples.cols(); }
  bool empty() const { return samples.size() == 0; }

  Eigen::VectorXd channel(Eigen::Index m) const { return samples.row(m).transpose(); }

  void validate() const {
    if (!(sample_rate > 0.0)) throw Error("TimeSignal: sample_rate must be positive");
    if (!samples.allFinite()) throw Error("TimeSignal: non-finite sample");
  }
};

/// Complex time-frequency tensor y(m, n, w): M channels, N frames, W one-sided bins.
///
/// Storage is bin-major, then frame, then channel, so the M-vector y(n, w) is
/// contiguous and the per-bin M x N slab is a plain column-major matrix. Per-frame
/// M x W slabs are exposed through an outer-stride map.
class TfTensor {
 public:
  using BinSlab = Eigen::Map<Eigen::MatrixXcd>;
  using ConstBinSlab = Eigen::Map<const Eigen::MatrixXcd>;
  using FrameSlab = Eigen::Map<Eigen::MatrixXcd, 0, Eigen::OuterStride<>>;
  using ConstFrameSlab = Eigen::Map<const Eigen::MatrixXcd, 0, Eigen::OuterStride<>>;
  using Cell = Eigen::Map<Eigen::VectorXcd>;
  using ConstCell = Eigen::Map<const Eigen::VectorXcd>;

  TfTensor() = default;
  TfTensor(Eigen::Index mics, Eigen::Index frames, Eigen::Index bins, std::size_t frame_len = 0,
           std::size_t hop = 0, double sample_rate = 16000.0)
      : mics_(mics),
        frames_(frames),
        bins_(bins),
        frame_len_(frame_len),
        hop_(hop),
        sample_rate_(sample_rate),
        data_(static_cast<std::size_t>(mics * frames * bins), cplx(0.0, 0.0)) {
    if (mics < 1 || frames < 1 || bins < 1) throw Error("TfTensor: all dimensions must be >= 1");
    if (frame_len != 0 && static_cast<Eigen::Index>(frame_len / 2 + 1) != bins)
      throw Error("TfTensor: bin count must equal frame_len/2 + 1");
  }

  /// A tensor with the same shape and framing metadata, all zeros.
  TfTensor zeros_like() const { return TfTensor(mics_, frames_, bins_, frame_len_, hop_, sample_rate_); }

  Eigen::Index mics() const { return mics_; }
  Eigen::Index frames() const { return frames_; }
  Eigen::Index bins() const { return bins_; }
  std::size_t frame_len() const { return frame_len_; }
  std::size_t hop() const { return hop_; }
  double sample_rate() const { return sample_rate_; }

  cplx& operator()(Eigen::Index m, Eigen::Index n, Eigen::Index w) { return data_[index(m, n, w)]; }
  const cplx& operator()(Eigen::Index m, Eigen::Index n, Eigen::Index w) const { return data_[index(m, n, w)]; }

  Cell cell(Eigen::Index n, Eigen::Index w) { return Cell(&data_[index(0, n, w)], mics_); }
  ConstCell cell(Eigen::Index n, Eigen::Index w) const { return ConstCell(&data_[index(0, n, w)], mics_); }

  BinSlab bin(Eigen::Index w) { return BinSlab(&data_[index(0, 0, w)], mics_, frames_); }
  ConstBinSlab bin(Eigen::Index w) const { return ConstBinSlab(&data_[index(0, 0, w)], mics_, frames_); }

  FrameSlab frame(Eigen::Index n) {
    return FrameSlab(&data_[index(0, n, 0)], mics_, bins_, Eigen::OuterStride<>(mics_ * frames_));
  }
  ConstFrameSlab frame(Eigen::Index n) const {
    return ConstFrameSlab(&data_[index(0, n, 0)], mics_, bins_, Eigen::OuterStride<>(mics_ * frames_));
  }

  const std::vector<cplx>& raw() const { return data_; }
  std::vector<cplx>& raw() { return data_; }

  bool all_finite() const {
    for (const auto& v : data_)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }

  double squared_norm() const {
    long double acc = 0.0L;
    for (const auto& v : data_) acc += std::norm(v);
    return static_cast<double>(acc);
  }

  double mean_abs() const {
    if (data_.empty()) return 0.0;
    long double acc = 0.0L;
    for (const auto& v : data_) acc += std::abs(v);
    return static_cast<double>(acc / static_cast<long double>(data_.size()));
  }

  /// Single-channel tensor holding channel m.
  TfTensor channel(Eigen::Index m) const {
    TfTensor out(1, frames_, bins_, frame_len_, hop_, sample_rate_);
    for (Eigen::Index w = 0; w < bins_; ++w)
      for (Eigen::Index n = 0; n < frames_; ++n) out(0, n, w) = (*this)(m, n, w);
    return out;
  }

  bool same_shape(const TfTensor& o) const {
    return mics_ == o.mics_ && frames_ == o.frames_ && bins_ == o.bins_;
  }

 private:
  std::size_t index(Eigen::Index m, Eigen::Index n, Eigen::Index w) const {
    return static_cast<std::size_t>((w * frames_ + n) * mics_ + m);
  }

  Eigen::Index mics_ = 0;
  Eigen::Index frames_ = 0;
  Eigen::Index bins_ = 0;
  std::size_t frame_len_ = 0;
  std::size_t hop_ = 0;
  double sample_rate_ = 16000.0;
  std::vector<cplx> data_;
};

}  // namespace dpmclp
