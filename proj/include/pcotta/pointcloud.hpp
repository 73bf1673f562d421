#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pcotta/common.hpp"
#include "pcotta/rng.hpp"
#include "pcotta/tensor.hpp"

namespace pcotta {

using Vec3 = std::array<float, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator*(float s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline double sqdist(const Vec3& a, const Vec3& b) {
  double dx = double(a[0]) - b[0], dy = double(a[1]) - b[1], dz = double(a[2]) - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// An ordered list of 3-D points in a unit-normalized frame.
struct PointCloud {
  std::vector<Vec3> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}

  int size() const { return int(points.size()); }
  bool empty() const { return points.empty(); }

  Vec3 centroid() const {
    double c[3] = {0, 0, 0};
    for (const Vec3& p : points)
      for (int d = 0; d < 3; ++d) c[d] += p[d];
    return {float(c[0] / points.size()), float(c[1] / points.size()), float(c[2] / points.size())};
  }

  /// Center the centroid at the origin and scale the max radius to 1.
  void normalize() {
    if (points.empty()) throw contract_error("normalize: empty cloud");
    Vec3 c = centroid();
    float max_r = 0;
    for (Vec3& p : points) {
      p = p - c;
      max_r = std::max(max_r, float(std::sqrt(sqdist(p, {0, 0, 0}))));
    }
    if (max_r > 0)
      for (Vec3& p : points) p = (1.0f / max_r) * p;
  }

  /// Flatten to an n-by-3 tensor.
  template <typename T = float>
  Tensor<T> as_tensor() const {
    Tensor<T> t({size(), 3});
    for (int i = 0; i < size(); ++i)
      for (int d = 0; d < 3; ++d) t.data[size_t(i) * 3 + d] = T(points[size_t(i)][d]);
    return t;
  }

  static PointCloud from_tensor(const TensorF& t) {
    if (t.cols() != 3) throw shape_error("from_tensor: expected n-by-3");
    PointCloud c;
    c.points.resize(size_t(t.rows()));
    for (int i = 0; i < t.rows(); ++i)
      for (int d = 0; d < 3; ++d) c.points[size_t(i)][d] = t.data[size_t(i) * 3 + d];
    return c;
  }

  /// Lexicographic (x, y, z) sort; the canonical order used before patching.
  PointCloud sorted() const {
    PointCloud c = *this;
    std::sort(c.points.begin(), c.points.end(), [](const Vec3& a, const Vec3& b) {
      if (a[0] != b[0]) return a[0] < b[0];
      if (a[1] != b[1]) return a[1] < b[1];
      return a[2] < b[2];
    });
    return c;
  }
};

/// Rotation + translation; rotation kept orthonormal with determinant +1.
struct RigidTransform {
  std::array<float, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  Vec3 translation{0, 0, 0};

  Vec3 apply(const Vec3& p) const {
    const auto& r = rotation;
    return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + translation[0],
            r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + translation[1],
            r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + translation[2]};
  }

  RigidTransform inverse() const {
    RigidTransform inv;
    const auto& r = rotation;
    inv.rotation = {r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]};
    Vec3 t = translation;
    inv.translation = {-(inv.rotation[0] * t[0] + inv.rotation[1] * t[1] + inv.rotation[2] * t[2]),
                       -(inv.rotation[3] * t[0] + inv.rotation[4] * t[1] + inv.rotation[5] * t[2]),
                       -(inv.rotation[6] * t[0] + inv.rotation[7] * t[1] + inv.rotation[8] * t[2])};
    return inv;
  }

  /// Axis-angle rotation (Rodrigues), zero translation.
  static RigidTransform rotation_axis_angle(const Vec3& axis, float angle) {
    float n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (n == 0) throw contract_error("rotation_axis_angle: zero axis");
    float x = axis[0] / n, y = axis[1] / n, z = axis[2] / n;
    float c = std::cos(angle), s = std::sin(angle), t = 1 - c;
    RigidTransform r;
    r.rotation = {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,
                  t * x * y + s * z, t * y * y + c,     t * y * z - s * x,
                  t * x * z - s * y, t * y * z + s * x, t * z * z + c};
    return r;
  }
};

inline PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) out.points.push_back(t.apply(p));
  return out;
}

// ---------------------------------------------------------------------------
// Sampling and grouping kernels

/// Greedy max-min farthest point sampling. First pick is `start`; each next
/// pick maximizes the distance to the selected set, ties to the lowest index.
inline std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, int start = 0) {
  int n = cloud.size();
  if (m < 1 || m > n)
    throw size_error("farthest_point_sample: m=" + std::to_string(m) + " out of range for " +
                     std::to_string(n) + " points");
  if (start < 0 || start >= n) throw size_error("farthest_point_sample: bad start index");
  std::vector<int> picked;
  picked.reserve(size_t(m));
  std::vector<double> dist(size_t(n), std::numeric_limits<double>::infinity());
  int cur = start;
  for (int s = 0; s < m; ++s) {
    picked.push_back(cur);
    const Vec3& c = cloud.points[size_t(cur)];
    double best = -1;
    int arg = 0;
    for (int i = 0; i < n; ++i) {
      double d = sqdist(cloud.points[size_t(i)], c);
      if (d < dist[size_t(i)]) dist[size_t(i)] = d;
      if (dist[size_t(i)] > best) {
        best = dist[size_t(i)];
        arg = i;
      }
    }
    cur = arg;
  }
  return picked;
}

/// Patch centers plus per-center neighbor groups in center-relative
/// coordinates.
struct PatchSet {
  std::vector<Vec3> centers;              // m
  std::vector<std::vector<Vec3>> groups;  // m x g, relative to center

  int patch_count() const { return int(centers.size()); }
  int group_size() const { return groups.empty() ? 0 : int(groups[0].size()); }
};

/// g nearest neighbors of an arbitrary center point, ties to lowest index,
/// re-centered by subtracting the center.
inline std::vector<Vec3> knn_relative(const PointCloud& cloud, const Vec3& center, int g) {
  int n = cloud.size();
  if (g > n)
    throw size_error("knn_group: g=" + std::to_string(g) + " exceeds cloud size " +
                     std::to_string(n));
  std::vector<std::pair<double, int>> d(size_t(n));
  for (int i = 0; i < n; ++i) d[size_t(i)] = {sqdist(cloud.points[size_t(i)], center), i};
  std::partial_sort(d.begin(), d.begin() + g, d.end());
  std::vector<Vec3> out(size_t(g));
  for (int k = 0; k < g; ++k) out[size_t(k)] = cloud.points[size_t(d[size_t(k)].second)] - center;
  return out;
}

inline PatchSet knn_group(const PointCloud& cloud, const std::vector<int>& center_idx, int g) {
  PatchSet ps;
  ps.centers.reserve(center_idx.size());
  ps.groups.reserve(center_idx.size());
  for (int ci : center_idx) {
    const Vec3& c = cloud.points[size_t(ci)];
    ps.centers.push_back(c);
    ps.groups.push_back(knn_relative(cloud, c, g));
  }
  return ps;
}

inline PatchSet knn_group_at(const PointCloud& cloud, const std::vector<Vec3>& centers, int g) {
  PatchSet ps;
  ps.centers = centers;
  ps.groups.reserve(centers.size());
  for (const Vec3& c : centers) ps.groups.push_back(knn_relative(cloud, c, g));
  return ps;
}

// ---------------------------------------------------------------------------
// Chamfer distance (plain evaluation path; the differentiable op lives on the
// tape, see tape.hpp)

inline double chamfer_distance(const PointCloud& p, const PointCloud& g) {
  if (p.empty() || g.empty()) throw contract_error("chamfer_distance: empty point cloud");
  double term1 = 0, term2 = 0;
  for (const Vec3& x : p.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& y : g.points) best = std::min(best, sqdist(x, y));
    term1 += best;
  }
  for (const Vec3& y : g.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& x : p.points) best = std::min(best, sqdist(y, x));
    term2 += best;
  }
  return term1 / p.size() + term2 / g.size();
}

// ---------------------------------------------------------------------------
// Corruption

/// Gaussian jitter followed by a half-space crop that keeps `keep_fraction`
/// of the points (occlusion-style missingness). Deterministic per seed.
inline PointCloud corrupt(const PointCloud& cloud, double noise_sigma, double keep_fraction,
                          uint64_t seed) {
  if (noise_sigma < 0) throw contract_error("corrupt: negative noise sigma");
  if (keep_fraction <= 0 || keep_fraction > 1)
    throw contract_error("corrupt: keep_fraction must be in (0,1]");
  Rng rng(seed);
  PointCloud out = cloud;
  if (noise_sigma > 0)
    for (Vec3& p : out.points)
      for (int d = 0; d < 3; ++d) p[d] += float(rng.normal(0.0, noise_sigma));
  if (keep_fraction < 1.0) {
    int n = out.size();
    int keep = int(std::lround(keep_fraction * n));
    auto dir = rng.unit_vector();
    std::vector<std::pair<double, int>> proj(size_t(n));
    for (int i = 0; i < n; ++i) {
      const Vec3& p = out.points[size_t(i)];
      proj[size_t(i)] = {double(p[0]) * dir[0] + double(p[1]) * dir[1] + double(p[2]) * dir[2], i};
    }
    std::sort(proj.begin(), proj.end());
    std::vector<uint8_t> keep_mask(size_t(n), 0);
    for (int k = 0; k < keep; ++k) keep_mask[size_t(proj[size_t(k)].second)] = 1;
    PointCloud cropped;
    cropped.points.reserve(size_t(keep));
    for (int i = 0; i < n; ++i)
      if (keep_mask[size_t(i)]) cropped.points.push_back(out.points[size_t(i)]);
    out = std::move(cropped);
  }
  if (out.size() < 8)
    throw size_error("corrupt: resulting cloud has " + std::to_string(out.size()) +
                     " points (< 8)");
  return out;
}

/// Replace each point with the mean of its k nearest neighbors (self
/// included); the local smoothing used as the denoising reference.
inline PointCloud knn_smooth(const PointCloud& cloud, int k) {
  int n = cloud.size();
  k = std::min(k, n);
  PointCloud out;
  out.points.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    auto rel = knn_relative(cloud, cloud.points[size_t(i)], k);
    Vec3 mean{0, 0, 0};
    for (const Vec3& r : rel) mean = mean + r;
    out.points[size_t(i)] = cloud.points[size_t(i)] + (1.0f / float(k)) * mean;
  }
  return out;
}

// ---------------------------------------------------------------------------
// XYZ text I/O

inline void save_xyz(const PointCloud& cloud, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw config_error("cannot write " + path);
  char buf[128];
  for (const Vec3& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", double(p[0]), double(p[1]), double(p[2]));
    f << buf;
  }
}

inline PointCloud load_xyz(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open " + path);
  PointCloud cloud;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    double x, y, z;
    if (!(is >> x >> y >> z))
      throw parse_error(path + ": malformed line " + std::to_string(lineno) + ": '" + line + "'");
    std::string rest;
    if (is >> rest)
      throw parse_error(path + ": trailing tokens on line " + std::to_string(lineno));
    cloud.points.push_back({float(x), float(y), float(z)});
  }
  if (cloud.empty()) throw parse_error(path + ": no points found");
  return cloud;
}

}  // namespace pcotta
