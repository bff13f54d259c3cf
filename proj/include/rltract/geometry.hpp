#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace rlt {

using Vec3 = Eigen::Vector3d;

// Voxel-index -> world-mm affine map. Streamline geometry (step size,
// length bounds) lives in world mm; volumes index by voxel.
class AffineTransform {
 public:
  AffineTransform()
      : mat_(Eigen::Matrix4d::Identity()), inv_(Eigen::Matrix4d::Identity()) {}

  explicit AffineTransform(const Eigen::Matrix4d& m) : mat_(m) {
    const Eigen::Matrix3d lin = m.topLeftCorner<3, 3>();
    if (std::abs(lin.determinant()) < 1e-12)
      throw std::invalid_argument("AffineTransform: singular linear part");
    if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() >
        1e-12)
      throw std::invalid_argument("AffineTransform: last row must be 0 0 0 1");
    inv_ = mat_.inverse();
  }

  // isotropic voxel size, voxel i centered at (i + 1/2) * vs
  static AffineTransform voxel_grid(double voxel_size_mm) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 0) = m(1, 1) = m(2, 2) = voxel_size_mm;
    m.topRightCorner<3, 1>().setConstant(0.5 * voxel_size_mm);
    return AffineTransform(m);
  }

  Vec3 voxel_to_world(const Vec3& v) const {
    return mat_.topLeftCorner<3, 3>() * v + mat_.topRightCorner<3, 1>();
  }

  Vec3 world_to_voxel(const Vec3& w) const {
    return inv_.topLeftCorner<3, 3>() * w + inv_.topRightCorner<3, 1>();
  }

  // world-space offset of one voxel step along the given voxel axis
  Vec3 axis_step(int axis) const { return mat_.block<3, 1>(0, axis); }

  // mm extent of one voxel along the given axis
  double voxel_extent(int axis) const { return axis_step(axis).norm(); }

  // geometric mean voxel extent; used by the step-size rescaling rule
  double mean_voxel_extent() const {
    return std::cbrt(voxel_extent(0) * voxel_extent(1) * voxel_extent(2));
  }

  const Eigen::Matrix4d& matrix() const { return mat_; }

  bool operator==(const AffineTransform& o) const { return mat_ == o.mat_; }

 private:
  Eigen::Matrix4d mat_;
  Eigen::Matrix4d inv_;
};

}  // namespace rlt
