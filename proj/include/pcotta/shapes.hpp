#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pcotta/common.hpp"
#include "pcotta/pointcloud.hpp"
#include "pcotta/rng.hpp"

namespace pcotta {

enum class Category { Sphere = 0, Box, Cylinder, Cone, Torus, Capsule, Wedge };
inline constexpr int kCategoryCount = 7;

enum class DomainStyle { SrcA = 0, SrcB, TgtA, TgtB };
inline constexpr int kDomainCount = 4;

inline const char* category_name(Category c) {
  switch (c) {
    case Category::Sphere: return "sphere";
    case Category::Box: return "box";
    case Category::Cylinder: return "cylinder";
    case Category::Cone: return "cone";
    case Category::Torus: return "torus";
    case Category::Capsule: return "capsule";
    case Category::Wedge: return "wedge";
  }
  return "?";
}

inline const char* domain_name(DomainStyle d) {
  switch (d) {
    case DomainStyle::SrcA: return "SRC_A";
    case DomainStyle::SrcB: return "SRC_B";
    case DomainStyle::TgtA: return "TGT_A";
    case DomainStyle::TgtB: return "TGT_B";
  }
  return "?";
}

inline Category category_from_string(const std::string& s) {
  for (int i = 0; i < kCategoryCount; ++i)
    if (s == category_name(Category(i))) return Category(i);
  throw config_error("unknown shape category '" + s + "'");
}

inline DomainStyle domain_from_string(const std::string& s) {
  for (int i = 0; i < kDomainCount; ++i)
    if (s == domain_name(DomainStyle(i))) return DomainStyle(i);
  throw config_error("unknown domain style '" + s + "'");
}

inline bool is_source_domain(DomainStyle d) {
  return d == DomainStyle::SrcA || d == DomainStyle::SrcB;
}

/// Everything needed to regenerate one cloud bit-exactly.
struct ShapeSpec {
  Category category = Category::Sphere;
  DomainStyle style = DomainStyle::SrcA;
  uint64_t seed = 0;
  int point_count = 256;
};

namespace detail {

// Instance geometry drawn once per spec so that each seed is a distinct
// object of its family.
struct ShapeParams {
  double a = 1, b = 1, c = 1;
};

inline ShapeParams instance_params(Category cat, Rng& rng) {
  ShapeParams p;
  switch (cat) {
    case Category::Sphere: break;
    case Category::Box:
      p.a = 1.0;
      p.b = rng.uniform(0.5, 1.0);
      p.c = rng.uniform(0.3, 1.0);
      break;
    case Category::Cylinder:
      p.a = rng.uniform(0.35, 0.7);   // radius
      p.b = rng.uniform(0.6, 1.1);    // half height
      break;
    case Category::Cone:
      p.a = rng.uniform(0.5, 0.9);    // base radius
      p.b = rng.uniform(1.0, 1.8);    // height
      break;
    case Category::Torus:
      p.a = rng.uniform(0.55, 0.75);  // major radius
      p.b = rng.uniform(0.15, 0.3);   // tube radius
      break;
    case Category::Capsule:
      p.a = rng.uniform(0.3, 0.5);    // radius
      p.b = rng.uniform(0.4, 0.9);    // cylinder half height
      break;
    case Category::Wedge:
      p.a = rng.uniform(0.8, 1.4);    // leg along x
      p.b = rng.uniform(0.6, 1.2);    // leg along y
      p.c = rng.uniform(0.5, 1.0);    // half length along z
      break;
  }
  return p;
}

inline Vec3 sample_sphere(Rng& rng) {
  auto v = rng.unit_vector();
  return {float(v[0]), float(v[1]), float(v[2])};
}

inline Vec3 sample_box(const ShapeParams& p, Rng& rng) {
  double ax = p.a, ay = p.b, az = p.c;
  double area_x = ay * az, area_y = ax * az, area_z = ax * ay;  // per face pair
  double total = 2 * (area_x + area_y + area_z);
  double r = rng.uniform(0.0, total);
  double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
  double sgn = rng.uniform() < 0.5 ? -1.0 : 1.0;
  if (r < 2 * area_x) return {float(sgn * ax), float(u * ay), float(v * az)};
  if (r < 2 * (area_x + area_y)) return {float(u * ax), float(sgn * ay), float(v * az)};
  return {float(u * ax), float(v * ay), float(sgn * az)};
}

inline Vec3 sample_cylinder(const ShapeParams& p, Rng& rng) {
  double r = p.a, h = p.b;
  double lateral = 2 * std::numbers::pi * r * 2 * h;
  double caps = 2 * std::numbers::pi * r * r;
  double pick = rng.uniform(0.0, lateral + caps);
  double phi = rng.uniform(0.0, 2 * std::numbers::pi);
  if (pick < lateral) {
    double z = rng.uniform(-h, h);
    return {float(r * std::cos(phi)), float(r * std::sin(phi)), float(z)};
  }
  double rr = r * std::sqrt(rng.uniform());
  double z = rng.uniform() < 0.5 ? -h : h;
  return {float(rr * std::cos(phi)), float(rr * std::sin(phi)), float(z)};
}

inline Vec3 sample_cone(const ShapeParams& p, Rng& rng) {
  double r = p.a, h = p.b;
  double slant = std::sqrt(r * r + h * h);
  double lateral = std::numbers::pi * r * slant;
  double base = std::numbers::pi * r * r;
  double phi = rng.uniform(0.0, 2 * std::numbers::pi);
  // apex at z = +h/2, base at z = -h/2 (centered so the prism is near origin)
  if (rng.uniform(0.0, lateral + base) < lateral) {
    double t = std::sqrt(rng.uniform());  // area grows linearly from the apex
    double rr = r * t;
    double z = h / 2 - h * t;
    return {float(rr * std::cos(phi)), float(rr * std::sin(phi)), float(z)};
  }
  double rr = r * std::sqrt(rng.uniform());
  return {float(rr * std::cos(phi)), float(rr * std::sin(phi)), float(-h / 2)};
}

inline Vec3 sample_torus(const ShapeParams& p, Rng& rng) {
  double R = p.a, a = p.b;
  for (;;) {
    double theta = rng.uniform(0.0, 2 * std::numbers::pi);  // around the tube
    if (rng.uniform() * (R + a) > R + a * std::cos(theta)) continue;
    double phi = rng.uniform(0.0, 2 * std::numbers::pi);
    double rr = R + a * std::cos(theta);
    return {float(rr * std::cos(phi)), float(rr * std::sin(phi)), float(a * std::sin(theta))};
  }
}

inline Vec3 sample_capsule(const ShapeParams& p, Rng& rng) {
  double r = p.a, h = p.b;
  double lateral = 2 * std::numbers::pi * r * 2 * h;
  double caps = 4 * std::numbers::pi * r * r;  // two hemispheres
  if (rng.uniform(0.0, lateral + caps) < lateral) {
    double phi = rng.uniform(0.0, 2 * std::numbers::pi);
    double z = rng.uniform(-h, h);
    return {float(r * std::cos(phi)), float(r * std::sin(phi)), float(z)};
  }
  auto v = rng.unit_vector();
  double z_off = v[2] >= 0 ? h : -h;
  return {float(r * v[0]), float(r * v[1]), float(r * v[2] + z_off)};
}

inline Vec3 sample_wedge(const ShapeParams& p, Rng& rng) {
  // Right-triangle cross-section with legs a (x) and b (y), extruded in z.
  double a = p.a, b = p.b, c = p.c;
  double hyp = std::sqrt(a * a + b * b);
  double tri = a * b / 2;
  double faces[5] = {tri, tri, a * 2 * c, b * 2 * c, hyp * 2 * c};
  double total = 0;
  for (double f : faces) total += f;
  double pick = rng.uniform(0.0, total);
  int face = 0;
  for (; face < 4; ++face) {
    if (pick < faces[face]) break;
    pick -= faces[face];
  }
  auto tri_point = [&]() {
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1) {
      u = 1 - u;
      v = 1 - v;
    }
    return std::pair<double, double>(u * a, v * b);
  };
  switch (face) {
    case 0: {
      auto [x, y] = tri_point();
      return Vec3{float(x), float(y), float(-c)};
    }
    case 1: {
      auto [x, y] = tri_point();
      return Vec3{float(x), float(y), float(c)};
    }
    case 2:
      return Vec3{float(rng.uniform(0.0, a)), 0.0f, float(rng.uniform(-c, c))};
    case 3:
      return Vec3{0.0f, float(rng.uniform(0.0, b)), float(rng.uniform(-c, c))};
    default: {
      double t = rng.uniform();
      return Vec3{float(a * (1 - t)), float(b * t), float(rng.uniform(-c, c))};
    }
  }
}

inline Vec3 sample_surface(Category cat, const ShapeParams& p, Rng& rng) {
  switch (cat) {
    case Category::Sphere: return sample_sphere(rng);
    case Category::Box: return sample_box(p, rng);
    case Category::Cylinder: return sample_cylinder(p, rng);
    case Category::Cone: return sample_cone(p, rng);
    case Category::Torus: return sample_torus(p, rng);
    case Category::Capsule: return sample_capsule(p, rng);
    case Category::Wedge: return sample_wedge(p, rng);
  }
  throw config_error("unknown shape category id " + std::to_string(int(cat)));
}

// Density bias for the SRC_B signature: acceptance weight rises with the
// normalized |z| for the sphere (kept antipodal) and with z for the rest.
inline double bias_weight(Category cat, const ShapeParams& p, const Vec3& pt) {
  double lo = -1, hi = 1;
  switch (cat) {
    case Category::Sphere: return 0.15 + 0.85 * std::fabs(double(pt[2]));
    case Category::Box: lo = -p.c; hi = p.c; break;
    case Category::Cylinder: lo = -p.b; hi = p.b; break;
    case Category::Cone: lo = -p.b / 2; hi = p.b / 2; break;
    case Category::Torus: lo = -p.b; hi = p.b; break;
    case Category::Capsule: lo = -(p.b + p.a); hi = p.b + p.a; break;
    case Category::Wedge: lo = -p.c; hi = p.c; break;
  }
  double u = (double(pt[2]) - lo) / (hi - lo);
  return 0.15 + 0.85 * std::min(1.0, std::max(0.0, u));
}

}  // namespace detail

/// Deterministic surface sampling of a parametric family with a domain-style
/// signature. Source styles are clean (uniform or density-biased); target
/// styles additionally pass through corrupt().
inline PointCloud generate_shape(const ShapeSpec& spec) {
  if (int(spec.category) < 0 || int(spec.category) >= kCategoryCount)
    throw config_error("generate_shape: unknown category id " + std::to_string(int(spec.category)));
  if (int(spec.style) < 0 || int(spec.style) >= kDomainCount)
    throw config_error("generate_shape: unknown style id " + std::to_string(int(spec.style)));
  if (spec.point_count < 1) throw size_error("generate_shape: point_count must be >= 1");

  bool biased = spec.style == DomainStyle::SrcB || spec.style == DomainStyle::TgtB;
  Rng rng(derive_seed(spec.seed, uint64_t(spec.category) * 2 + (biased ? 1 : 0)));
  detail::ShapeParams params = detail::instance_params(spec.category, rng);

  PointCloud cloud;
  cloud.points.reserve(size_t(spec.point_count));
  if (spec.category == Category::Sphere) {
    // Antipodal pairs keep the sampled centroid exactly at the origin.
    while (int(cloud.points.size()) + 1 < spec.point_count) {
      Vec3 p = detail::sample_sphere(rng);
      if (biased && rng.uniform() > detail::bias_weight(spec.category, params, p)) continue;
      cloud.points.push_back(p);
      cloud.points.push_back({-p[0], -p[1], -p[2]});
    }
    if (int(cloud.points.size()) < spec.point_count) cloud.points.push_back({0, 0, 1});
  } else {
    while (int(cloud.points.size()) < spec.point_count) {
      Vec3 p = detail::sample_surface(spec.category, params, rng);
      if (biased && rng.uniform() > detail::bias_weight(spec.category, params, p)) continue;
      cloud.points.push_back(p);
    }
  }
  cloud.normalize();

  switch (spec.style) {
    case DomainStyle::SrcA:
    case DomainStyle::SrcB:
      return cloud;
    case DomainStyle::TgtA:
      return corrupt(cloud, 0.02, 1.0, derive_seed(spec.seed, 0xc0ull));
    case DomainStyle::TgtB:
      return corrupt(cloud, 0.03, 0.85, derive_seed(spec.seed, 0xc1ull));
  }
  throw config_error("generate_shape: unreachable style");
}

}  // namespace pcotta
