#pragma once

// Binary container for estimated filters and beamformer weights.
//
// All fields little-endian. Complex values are (re, im) float64 pairs and
// matrices are stored column-major.
//
//   char[4]  magic "DPMC"
//   u32      version (2)
//   u32      M, K_t, K_f, N, W, delta_t, guard_f
//   W  x  complex[(K_t M) x M]          temporal filters, bin-major
//   N  x  complex[((2K_f+1) M) x M]     frequential filters, frame-major
//   u32      has_weights (0 or 1)
//   if has_weights:
//     f64    sample_rate, speed_of_sound
//     u32    reference_index
//     f64[M][3] microphone positions (m)
//     W  x  complex[M]                  beamformer weights, bin-major

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "dpmclp/beamformer.hpp"
#include "dpmclp/mclp.hpp"
#include "dpmclp/room.hpp"

namespace dpmclp {

struct WeightSet {
  std::vector<Eigen::VectorXcd> w;  // per bin
  ArrayGeometry geometry;
  double sample_rate = 16000.0;
};

struct EnhancerArtifacts {
  DualPathFilters filters;
  std::optional<WeightSet> weights;
};

namespace detail {

inline constexpr char kContainerMagic[4] = {'D', 'P', 'M', 'C'};
inline constexpr std::uint32_t kContainerVersion = 2;

class LeWriter {
 public:
  explicit LeWriter(const std::filesystem::path& p) : os_(p, std::ios::binary) {
    if (!os_) throw Error("container: cannot open '" + p.string() + "' for writing");
  }
  template <typename T>
  void put(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put(const Eigen::MatrixXcd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        put<double>(m(i, j).real());
        put<double>(m(i, j).imag());
      }
  }
  void raw(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }
  bool ok() const { return static_cast<bool>(os_); }

 private:
  std::ofstream os_;
};

class LeReader {
 public:
  explicit LeReader(const std::filesystem::path& p) : is_(p, std::ios::binary) {
    if (!is_) throw Error("container: cannot open '" + p.string() + "'");
  }
  template <typename T>
  T get() {
    T v;
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw Error("container: truncated file");
    return v;
  }
  Eigen::MatrixXcd matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXcd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double re = get<double>();
        const double im = get<double>();
        m(i, j) = cplx(re, im);
      }
    return m;
  }
  void raw(char* p, std::size_t n) {
    is_.read(p, static_cast<std::streamsize>(n));
    if (!is_) throw Error("container: truncated file");
  }

 private:
  std::ifstream is_;
};

}  // namespace detail

inline void write_container(const std::filesystem::path& path, const EnhancerArtifacts& a) {
  const DualPathFilters& f = a.filters;
  detail::LeWriter out(path);
  out.raw(detail::kContainerMagic, 4);
  out.put<std::uint32_t>(detail::kContainerVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(f.mics));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(f.k_t));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(f.k_f));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(f.frames()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(f.bins()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(f.delta_t));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(f.guard_f));
  for (const auto& g : f.temporal) out.put(g);
  for (const auto& g : f.frequential) out.put(g);
  out.put<std::uint32_t>(a.weights ? 1u : 0u);
  if (a.weights) {
    const WeightSet& ws = *a.weights;
    if (static_cast<Eigen::Index>(ws.w.size()) != f.bins() || ws.geometry.size() != f.mics)
      throw Error("container: weight set does not match filter dimensions");
    out.put<double>(ws.sample_rate);
    out.put<double>(ws.geometry.speed_of_sound);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(ws.geometry.reference_index));
    for (const auto& p : ws.geometry.mic_positions)
      for (int i = 0; i < 3; ++i) out.put<double>(p[i]);
    for (const auto& w : ws.w) out.put(Eigen::MatrixXcd(w));
  }
  if (!out.ok()) throw Error("container: write failed for '" + path.string() + "'");
}

inline EnhancerArtifacts read_container(const std::filesystem::path& path) {
  detail::LeReader in(path);
  char magic[4];
  in.raw(magic, 4);
  if (std::memcmp(magic, detail::kContainerMagic, 4) != 0) throw Error("container: bad magic in '" + path.string() + "'");
  const auto version = in.get<std::uint32_t>();
  if (version != detail::kContainerVersion) throw Error("container: unsupported version " + std::to_string(version));

  EnhancerArtifacts a;
  DualPathFilters& f = a.filters;
  f.mics = in.get<std::uint32_t>();
  f.k_t = in.get<std::uint32_t>();
  f.k_f = in.get<std::uint32_t>();
  const auto N = static_cast<Eigen::Index>(in.get<std::uint32_t>());
  const auto W = static_cast<Eigen::Index>(in.get<std::uint32_t>());
  f.delta_t = in.get<std::uint32_t>();
  f.guard_f = in.get<std::uint32_t>();
  if (f.mics < 1 || N < 1 || W < 1) throw Error("container: invalid shape header");
  const auto dt = static_cast<Eigen::Index>(f.k_t) * f.mics;
  const auto df = static_cast<Eigen::Index>(2 * f.k_f + 1) * f.mics;
  for (Eigen::Index w = 0; w < W; ++w) f.temporal.push_back(in.matrix(dt, f.mics));
  for (Eigen::Index n = 0; n < N; ++n) f.frequential.push_back(in.matrix(df, f.mics));
  if (in.get<std::uint32_t>() != 0) {
    WeightSet ws;
    ws.sample_rate = in.get<double>();
    ws.geometry.speed_of_sound = in.get<double>();
    ws.geometry.reference_index = in.get<std::uint32_t>();
    for (Eigen::Index m = 0; m < f.mics; ++m) {
      Point3 p;
      for (int i = 0; i < 3; ++i) p[i] = in.get<double>();
      ws.geometry.mic_positions.push_back(p);
    }
    ws.geometry.validate();
    for (Eigen::Index w = 0; w < W; ++w) ws.w.push_back(in.matrix(f.mics, 1).col(0));
    a.weights = std::move(ws);
  }
  return a;
}

}  // namespace dpmclp
