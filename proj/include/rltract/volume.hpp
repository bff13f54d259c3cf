#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rltract/geometry.hpp"

namespace rlt {

static_assert(std::endian::native == std::endian::little,
              "volume I/O assumes a little-endian host");

struct GridDims {
  int nx = 0, ny = 0, nz = 0;

  std::int64_t voxels() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
  }
  bool operator==(const GridDims&) const = default;
};

namespace detail {

// The 8 voxel-center corners around a continuous voxel coordinate with their
// trilinear weights. Corners outside the grid are flagged invalid; their
// contribution is zero, so positions outside the grid sample to zero.
struct TrilinearStencil {
  std::array<std::int64_t, 8> flat;   // flat voxel index, -1 if outside
  std::array<double, 8> w;
};

inline TrilinearStencil trilinear_stencil(const GridDims& d, const Vec3& v) {
  TrilinearStencil st;
  const double fx = std::floor(v.x()), fy = std::floor(v.y()),
               fz = std::floor(v.z());
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy),
            z0 = static_cast<int>(fz);
  const double tx = v.x() - fx, ty = v.y() - fy, tz = v.z() - fz;
  const double wx[2] = {1.0 - tx, tx};
  const double wy[2] = {1.0 - ty, ty};
  const double wz[2] = {1.0 - tz, tz};
  int n = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int x = x0 + dx, y = y0 + dy, z = z0 + dz;
        st.w[n] = wx[dx] * wy[dy] * wz[dz];
        st.flat[n] = d.contains(x, y, z)
                         ? (static_cast<std::int64_t>(z) * d.ny + y) * d.nx + x
                         : -1;
        ++n;
      }
  return st;
}

}  // namespace detail

// 3-D grid of per-voxel C-channel float values with a voxel->world affine.
// Immutable after construction as far as concurrent use is concerned:
// sampling is const and thread-safe.
class VectorVolume {
 public:
  VectorVolume() = default;
  VectorVolume(GridDims dims, int channels, AffineTransform affine,
               float fill = 0.f)
      : dims_(dims), channels_(channels), affine_(std::move(affine)),
        data_(static_cast<std::size_t>(dims.voxels()) * channels, fill) {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0 || channels <= 0)
      throw std::invalid_argument("VectorVolume: non-positive dims");
  }

  const GridDims& dims() const { return dims_; }
  int channels() const { return channels_; }
  const AffineTransform& affine() const { return affine_; }
  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  std::int64_t flat_index(int i, int j, int k) const {
    return (static_cast<std::int64_t>(k) * dims_.ny + j) * dims_.nx + i;
  }

  float* voxel(int i, int j, int k) {
    return data_.data() + flat_index(i, j, k) * channels_;
  }
  const float* voxel(int i, int j, int k) const {
    return data_.data() + flat_index(i, j, k) * channels_;
  }

  // Trilinear interpolation of all channels at a world-mm position.
  // `out` must hold channels() doubles. Out-of-grid corners contribute zero.
  void trilinear_world(const Vec3& p_world, double* out) const {
    const Vec3 v = affine_.world_to_voxel(p_world);
    const auto st = detail::trilinear_stencil(dims_, v);
    for (int c = 0; c < channels_; ++c) out[c] = 0.0;
    for (int n = 0; n < 8; ++n) {
      if (st.flat[n] < 0) continue;
      const float* cell = data_.data() + st.flat[n] * channels_;
      const double w = st.w[n];
      for (int c = 0; c < channels_; ++c) out[c] += w * cell[c];
    }
  }

  Eigen::VectorXd trilinear_world(const Vec3& p_world) const {
    Eigen::VectorXd out(channels_);
    trilinear_world(p_world, out.data());
    return out;
  }

 private:
  GridDims dims_;
  int channels_ = 0;
  AffineTransform affine_;
  std::vector<float> data_;
};

// Single-channel volume (masks, FA, ROI labels).
class ScalarVolume {
 public:
  ScalarVolume() = default;
  ScalarVolume(GridDims dims, AffineTransform affine, float fill = 0.f)
      : vol_(dims, 1, std::move(affine), fill) {}

  const GridDims& dims() const { return vol_.dims(); }
  const AffineTransform& affine() const { return vol_.affine(); }
  const std::vector<float>& data() const { return vol_.data(); }
  std::vector<float>& data() { return vol_.data(); }

  float& at(int i, int j, int k) { return *vol_.voxel(i, j, k); }
  float at(int i, int j, int k) const { return *vol_.voxel(i, j, k); }

  double trilinear_world(const Vec3& p) const {
    double v;
    vol_.trilinear_world(p, &v);
    return v;
  }

  // value of the voxel whose center is closest to p; zero outside the grid
  double nearest_world(const Vec3& p) const {
    const Vec3 v = affine().world_to_voxel(p);
    const int i = static_cast<int>(std::lround(v.x()));
    const int j = static_cast<int>(std::lround(v.y()));
    const int k = static_cast<int>(std::lround(v.z()));
    return dims().contains(i, j, k) ? at(i, j, k) : 0.0;
  }

  std::int64_t count_nonzero() const {
    std::int64_t n = 0;
    for (float f : data())
      if (f != 0.f) ++n;
    return n;
  }

  const VectorVolume& as_vector() const { return vol_; }
  VectorVolume& as_vector() { return vol_; }

 private:
  VectorVolume vol_;
};

// Up to max_peaks unit directions per voxel, zero-padded. Peaks are looked
// up at the nearest voxel; interpolating direction fields across voxels is
// not meaningful.
class PeaksVolume {
 public:
  PeaksVolume() = default;
  PeaksVolume(GridDims dims, int max_peaks, AffineTransform affine)
      : vol_(dims, 3 * max_peaks, std::move(affine)), max_peaks_(max_peaks) {
    if (max_peaks <= 0 || max_peaks > 5)
      throw std::invalid_argument("PeaksVolume: max_peaks must be in 1..5");
  }

  explicit PeaksVolume(VectorVolume v) : vol_(std::move(v)) {
    if (vol_.channels() % 3 != 0)
      throw std::invalid_argument("PeaksVolume: channels not divisible by 3");
    max_peaks_ = vol_.channels() / 3;
  }

  const GridDims& dims() const { return vol_.dims(); }
  int max_peaks() const { return max_peaks_; }
  const AffineTransform& affine() const { return vol_.affine(); }
  const VectorVolume& as_vector() const { return vol_; }

  void set_peak(int i, int j, int k, int slot, const Vec3& v) {
    float* cell = vol_.voxel(i, j, k) + 3 * slot;
    cell[0] = static_cast<float>(v.x());
    cell[1] = static_cast<float>(v.y());
    cell[2] = static_cast<float>(v.z());
  }

  // nonzero peaks at a voxel; out must hold max_peaks() entries
  int peaks_at_voxel(int i, int j, int k, Vec3* out) const {
    const float* cell = vol_.voxel(i, j, k);
    int n = 0;
    for (int s = 0; s < max_peaks_; ++s) {
      const Vec3 v(cell[3 * s], cell[3 * s + 1], cell[3 * s + 2]);
      if (v.squaredNorm() > 0.0) out[n++] = v;
    }
    return n;
  }

  // peaks of the voxel nearest to a world position; zero count outside
  int peaks_at_world(const Vec3& p, Vec3* out) const {
    const Vec3 v = vol_.affine().world_to_voxel(p);
    const int i = static_cast<int>(std::lround(v.x()));
    const int j = static_cast<int>(std::lround(v.y()));
    const int k = static_cast<int>(std::lround(v.z()));
    if (!dims().contains(i, j, k)) return 0;
    return peaks_at_voxel(i, j, k, out);
  }

 private:
  VectorVolume vol_;
  int max_peaks_ = 0;
};

// ---------------------------------------------------------------------------
// Volume file format "V1": UTF-8 key-value header terminated by an `END`
// line, then raw little-endian float32 in C order (x fastest among the
// spatial axes, channels contiguous within a voxel).
//
//   dims = nx ny nz
//   channels = C
//   affine = 16 entries, row-major
//   dtype = f32le
//   END
// ---------------------------------------------------------------------------

inline void write_v1(const std::string& path, const VectorVolume& vol) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::ostringstream h;
  h << "dims = " << vol.dims().nx << ' ' << vol.dims().ny << ' '
    << vol.dims().nz << '\n';
  h << "channels = " << vol.channels() << '\n';
  h << "affine =";
  const Eigen::Matrix4d& m = vol.affine().matrix();
  h.precision(17);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) h << ' ' << m(r, c);
  h << '\n';
  h << "dtype = f32le\n";
  h << "END\n";
  f << h.str();
  f.write(reinterpret_cast<const char*>(vol.data().data()),
          static_cast<std::streamsize>(vol.data().size() * sizeof(float)));
  if (!f) throw std::runtime_error("short write: " + path);
}

inline void write_v1(const std::string& path, const ScalarVolume& vol) {
  write_v1(path, vol.as_vector());
}

inline VectorVolume read_v1(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  GridDims dims;
  int channels = -1;
  Eigen::Matrix4d m;
  bool have_dims = false, have_affine = false, have_dtype = false;
  std::string line;
  while (std::getline(f, line)) {
    if (line == "END") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ": malformed V1 header line: " + line);
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    std::istringstream val(line.substr(eq + 1));
    if (key == "dims") {
      if (!(val >> dims.nx >> dims.ny >> dims.nz))
        throw std::runtime_error(path + ": bad dims");
      have_dims = true;
    } else if (key == "channels") {
      if (!(val >> channels)) throw std::runtime_error(path + ": bad channels");
    } else if (key == "affine") {
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
          if (!(val >> m(r, c))) throw std::runtime_error(path + ": bad affine");
      have_affine = true;
    } else if (key == "dtype") {
      std::string tag;
      val >> tag;
      if (tag != "f32le")
        throw std::runtime_error(path + ": unsupported dtype " + tag);
      have_dtype = true;
    } else {
      throw std::runtime_error(path + ": unknown V1 header key: " + key);
    }
  }
  if (!have_dims || channels <= 0 || !have_affine || !have_dtype)
    throw std::runtime_error(path + ": incomplete V1 header");
  VectorVolume vol(dims, channels, AffineTransform(m));
  f.read(reinterpret_cast<char*>(vol.data().data()),
         static_cast<std::streamsize>(vol.data().size() * sizeof(float)));
  if (f.gcount() !=
      static_cast<std::streamsize>(vol.data().size() * sizeof(float)))
    throw std::runtime_error(path + ": truncated V1 payload");
  for (float x : vol.data())
    if (!std::isfinite(x))
      throw std::runtime_error(path + ": non-finite value in volume");
  return vol;
}

inline ScalarVolume read_v1_scalar(const std::string& path) {
  VectorVolume v = read_v1(path);
  if (v.channels() != 1)
    throw std::runtime_error(path + ": expected a single-channel volume");
  ScalarVolume s(v.dims(), v.affine());
  s.data() = v.data();
  return s;
}

}  // namespace rlt
