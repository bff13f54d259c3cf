#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rltract/sphere.hpp"
#include "rltract/volume.hpp"

namespace rlt {

struct BundleSpec {
  std::vector<Vec3> centerline;  // world mm, >= 2 points
  double radius = 0.0;           // tube radius, mm
  int head_roi = 0;              // ROI label capping the first point
  int tail_roi = 0;              // ROI label capping the last point
};

struct PhantomSpec {
  GridDims dims;
  double voxel_size = 3.0;  // mm, isotropic
  double kappa = 30.0;      // lobe sharpness of the synthetic fODF
  int max_peaks = 5;
  std::vector<BundleSpec> bundles;
};

struct Phantom {
  VectorVolume fodf;        // 28-channel even-SH coefficients
  VectorVolume raw;         // 100-direction amplitudes, min-max normalized
  PeaksVolume peaks;
  ScalarVolume wm_mask;
  ScalarVolume interface_mask;
  ScalarVolume fa;
  ScalarVolume rois;        // ROI labels, 0 = none
  std::vector<ScalarVolume> gt_bundle_masks;
  std::vector<std::pair<int, int>> valid_pairs;  // (head, tail) per bundle
};

namespace detail {

struct PolylineHit {
  double dist;
  Vec3 tangent;  // unit tangent of the closest segment
};

inline PolylineHit closest_on_polyline(std::span<const Vec3> pts,
                                       const Vec3& p) {
  PolylineHit best{std::numeric_limits<double>::infinity(), Vec3::UnitX()};
  for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
    const Vec3 a = pts[s], b = pts[s + 1];
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 <= 0.0) continue;
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    const double d = (a + t * ab - p).norm();
    if (d < best.dist) {
      best.dist = d;
      best.tangent = ab.normalized();
    }
  }
  return best;
}

}  // namespace detail

inline void validate(const PhantomSpec& spec) {
  if (spec.dims.nx <= 0 || spec.dims.ny <= 0 || spec.dims.nz <= 0)
    throw std::invalid_argument("phantom: non-positive grid dims");
  if (spec.voxel_size <= 0) throw std::invalid_argument("phantom: voxel size");
  if (spec.kappa <= 0) throw std::invalid_argument("phantom: kappa <= 0");
  if (spec.bundles.empty()) throw std::invalid_argument("phantom: no bundles");
  const Vec3 extent(spec.dims.nx * spec.voxel_size,
                    spec.dims.ny * spec.voxel_size,
                    spec.dims.nz * spec.voxel_size);
  std::vector<int> roi_ids;
  for (const auto& b : spec.bundles) {
    if (b.centerline.size() < 2)
      throw std::invalid_argument("phantom: centerline needs >= 2 points");
    if (b.radius <= 0) throw std::invalid_argument("phantom: radius <= 0");
    if (b.head_roi <= 0 || b.tail_roi <= 0 || b.head_roi == b.tail_roi)
      throw std::invalid_argument("phantom: bad ROI ids");
    roi_ids.push_back(b.head_roi);
    roi_ids.push_back(b.tail_roi);
    // radius is not enforced along z: slab phantoms are thinner than the tube
    for (const Vec3& p : b.centerline) {
      for (int ax = 0; ax < 2; ++ax)
        if (p[ax] - b.radius < 0.0 || p[ax] + b.radius > extent[ax])
          throw std::invalid_argument(
              "phantom: bundle does not fit inside the grid");
      if (p.z() < 0.0 || p.z() > extent.z())
        throw std::invalid_argument(
            "phantom: bundle does not fit inside the grid");
    }
  }
  std::sort(roi_ids.begin(), roi_ids.end());
  if (std::adjacent_find(roi_ids.begin(), roi_ids.end()) != roi_ids.end())
    throw std::invalid_argument("phantom: ROI ids must be unique");
}

// Builds the synthetic phantom: tube bundles around the given centerlines,
// per-voxel peaks from the centerline tangents, fODFs from the peaks, ROI
// caps at the bundle endpoints (carved out of the WM mask, playing the role
// of GM), and the WM/ROI interface mask.
inline Phantom generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  const AffineTransform affine = AffineTransform::voxel_grid(spec.voxel_size);
  const GridDims d = spec.dims;
  const int nb = static_cast<int>(spec.bundles.size());

  Phantom ph{
      VectorVolume(d, kShCoeffCount, affine),
      VectorVolume(d, kSphereDirCount, affine),
      PeaksVolume(d, spec.max_peaks, affine),
      ScalarVolume(d, affine),
      ScalarVolume(d, affine),
      ScalarVolume(d, affine),
      ScalarVolume(d, affine),
      {},
      {},
  };
  for (int b = 0; b < nb; ++b) {
    ph.gt_bundle_masks.emplace_back(d, affine);
    ph.valid_pairs.emplace_back(spec.bundles[b].head_roi,
                                spec.bundles[b].tail_roi);
  }

  std::vector<char> in_tube(static_cast<std::size_t>(d.voxels()) * nb, 0);
  // cos of the merge angle below which two tangents count as one peak
  const double merge_cos = std::cos(15.0 * M_PI / 180.0);

  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const Vec3 w = affine.voxel_to_world(Vec3(i, j, k));
        const std::int64_t flat =
            (static_cast<std::int64_t>(k) * d.ny + j) * d.nx + i;

        int roi_label = 0;
        std::vector<Vec3> tangents;
        for (int b = 0; b < nb; ++b) {
          const BundleSpec& bs = spec.bundles[b];
          const auto hit = detail::closest_on_polyline(bs.centerline, w);
          if (hit.dist <= bs.radius) {
            in_tube[flat * nb + b] = 1;
            bool merged = false;
            for (const Vec3& t : tangents)
              if (std::abs(t.dot(hit.tangent)) >= merge_cos) {
                merged = true;
                break;
              }
            if (!merged && static_cast<int>(tangents.size()) < spec.max_peaks)
              tangents.push_back(hit.tangent);
          }
          const Vec3 caps[2] = {bs.centerline.front(), bs.centerline.back()};
          const int cap_ids[2] = {bs.head_roi, bs.tail_roi};
          for (int e = 0; e < 2; ++e) {
            if ((w - caps[e]).norm() <= bs.radius) {
              if (roi_label != 0 && roi_label != cap_ids[e])
                throw std::invalid_argument(
                    "phantom: ROIs of different ids overlap");
              roi_label = cap_ids[e];
            }
          }
        }

        if (roi_label != 0) {
          ph.rois.at(i, j, k) = static_cast<float>(roi_label);
          continue;  // ROI caps are not WM
        }
        if (tangents.empty()) continue;

        ph.wm_mask.at(i, j, k) = 1.f;
        for (int b = 0; b < nb; ++b)
          if (in_tube[flat * nb + b]) ph.gt_bundle_masks[b].at(i, j, k) = 1.f;
        for (std::size_t s = 0; s < tangents.size(); ++s)
          ph.peaks.set_peak(i, j, k, static_cast<int>(s), tangents[s]);
        ph.fa.at(i, j, k) = tangents.size() == 1 ? 0.8f : 0.5f;

        const ShVec coeffs = sh_project_peaks(tangents, spec.kappa);
        float* cell = ph.fodf.voxel(i, j, k);
        for (int c = 0; c < kShCoeffCount; ++c)
          cell[c] = static_cast<float>(coeffs[c]);
      }

  // interface = WM voxels 26-adjacent to an ROI voxel
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        if (ph.wm_mask.at(i, j, k) == 0.f) continue;
        bool near_roi = false;
        for (int dk = -1; dk <= 1 && !near_roi; ++dk)
          for (int dj = -1; dj <= 1 && !near_roi; ++dj)
            for (int di = -1; di <= 1 && !near_roi; ++di) {
              if (di == 0 && dj == 0 && dk == 0) continue;
              if (d.contains(i + di, j + dj, k + dk) &&
                  ph.rois.at(i + di, j + dj, k + dk) != 0.f)
                near_roi = true;
            }
        if (near_roi) ph.interface_mask.at(i, j, k) = 1.f;
      }

  // raw signal: fODF amplitudes on the fixed direction set, min-max
  // normalized over WM voxels (background stays zero)
  const auto& design = detail::sh_design();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::vector<double> amp(kSphereDirCount);
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        if (ph.wm_mask.at(i, j, k) == 0.f) continue;
        const float* cell = ph.fodf.voxel(i, j, k);
        Eigen::Map<const Eigen::VectorXf> c(cell, kShCoeffCount);
        const Eigen::VectorXd a = design.basis * c.cast<double>();
        lo = std::min(lo, a.minCoeff());
        hi = std::max(hi, a.maxCoeff());
        float* out = ph.raw.voxel(i, j, k);
        for (int q = 0; q < kSphereDirCount; ++q)
          out[q] = static_cast<float>(a[q]);
      }
  if (hi > lo)
    for (int k = 0; k < d.nz; ++k)
      for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) {
          if (ph.wm_mask.at(i, j, k) == 0.f) continue;
          float* out = ph.raw.voxel(i, j, k);
          for (int q = 0; q < kSphereDirCount; ++q)
            out[q] = static_cast<float>((out[q] - lo) / (hi - lo));
        }

  return ph;
}

// ---------------------------------------------------------------------------
// Declarative phantom spec, JSON:
// {
//   "dims": [nx, ny, nz], "voxel_size": 3.0, "kappa": 30.0, "max_peaks": 5,
//   "bundles": [{"radius": 4.0, "head_roi": 1, "tail_roi": 2,
//                "centerline": [[x,y,z], ...]}, ...]
// }
// ---------------------------------------------------------------------------

inline PhantomSpec parse_phantom_spec(const nlohmann::json& j) {
  static const std::vector<std::string> known{"dims", "voxel_size", "kappa",
                                              "max_peaks", "bundles"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("phantom spec: unknown key: " + key);
  PhantomSpec spec;
  const auto dims = j.at("dims");
  spec.dims = {dims.at(0).get<int>(), dims.at(1).get<int>(),
               dims.at(2).get<int>()};
  spec.voxel_size = j.value("voxel_size", 3.0);
  spec.kappa = j.value("kappa", 30.0);
  spec.max_peaks = j.value("max_peaks", 5);
  for (const auto& jb : j.at("bundles")) {
    static const std::vector<std::string> bkeys{"radius", "head_roi",
                                                "tail_roi", "centerline"};
    for (const auto& [key, _] : jb.items())
      if (std::find(bkeys.begin(), bkeys.end(), key) == bkeys.end())
        throw std::invalid_argument("phantom bundle: unknown key: " + key);
    BundleSpec b;
    b.radius = jb.at("radius").get<double>();
    b.head_roi = jb.at("head_roi").get<int>();
    b.tail_roi = jb.at("tail_roi").get<int>();
    for (const auto& jp : jb.at("centerline"))
      b.centerline.emplace_back(jp.at(0).get<double>(), jp.at(1).get<double>(),
                                jp.at(2).get<double>());
    spec.bundles.push_back(std::move(b));
  }
  return spec;
}

inline PhantomSpec load_phantom_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  f >> j;
  return parse_phantom_spec(j);
}

}  // namespace rlt
