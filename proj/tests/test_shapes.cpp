#include <catch2/catch_amalgamated.hpp>

#include "pcotta/shapes.hpp"

using namespace pcotta;

TEST_CASE("sphere points sit at unit radius for every style", "[shapes]") {
  for (DomainStyle style : {DomainStyle::SrcA, DomainStyle::SrcB}) {
    ShapeSpec spec{Category::Sphere, style, 42, 256};
    auto cloud = generate_shape(spec);
    auto cen = cloud.centroid();
    for (const Vec3& p : cloud.points) {
      double r = std::sqrt(sqdist(p, cen));
      INFO(domain_name(style));
      CHECK(std::fabs(r - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("same spec generates the identical cloud", "[shapes]") {
  for (int cat = 0; cat < kCategoryCount; ++cat) {
    ShapeSpec spec{Category(cat), DomainStyle::TgtB, 7 + uint64_t(cat), 128};
    auto a = generate_shape(spec);
    auto b = generate_shape(spec);
    INFO(category_name(Category(cat)));
    CHECK(a.points == b.points);
  }
}

TEST_CASE("different seeds give different instances", "[shapes]") {
  ShapeSpec a{Category::Box, DomainStyle::SrcA, 1, 64};
  ShapeSpec b{Category::Box, DomainStyle::SrcA, 2, 64};
  CHECK(generate_shape(a).points != generate_shape(b).points);
}

TEST_CASE("TGT_B keeps the rounded fraction of points", "[shapes]") {
  ShapeSpec spec{Category::Torus, DomainStyle::TgtB, 9, 256};
  auto cloud = generate_shape(spec);
  CHECK(cloud.size() == 218);  // round(0.85 * 256)
}

TEST_CASE("TGT_A keeps every point and perturbs coordinates", "[shapes]") {
  ShapeSpec clean{Category::Capsule, DomainStyle::SrcA, 11, 128};
  ShapeSpec noisy{Category::Capsule, DomainStyle::TgtA, 11, 128};
  auto a = generate_shape(clean);
  auto b = generate_shape(noisy);
  REQUIRE(b.size() == a.size());
  CHECK(a.points != b.points);
  // jitter is small: no point moved far
  for (int i = 0; i < a.size(); ++i)
    CHECK(std::sqrt(sqdist(a.points[size_t(i)], b.points[size_t(i)])) < 0.2);
}

TEST_CASE("source styles are normalized: centroid zero, max radius one", "[shapes]") {
  for (int cat = 0; cat < kCategoryCount; ++cat) {
    ShapeSpec spec{Category(cat), DomainStyle::SrcB, 100 + uint64_t(cat), 200};
    auto cloud = generate_shape(spec);
    auto cen = cloud.centroid();
    INFO(category_name(Category(cat)));
    CHECK(std::fabs(cen[0]) < 1e-5);
    CHECK(std::fabs(cen[1]) < 1e-5);
    CHECK(std::fabs(cen[2]) < 1e-5);
    double max_r = 0;
    for (const Vec3& p : cloud.points) max_r = std::max(max_r, std::sqrt(sqdist(p, {0, 0, 0})));
    CHECK(max_r == Catch::Approx(1.0).margin(1e-5));
  }
}

TEST_CASE("density bias separates SRC_A from SRC_B", "[shapes]") {
  // same seed, same family: the biased style should concentrate points high
  // along z relative to the uniform style
  ShapeSpec ua{Category::Cylinder, DomainStyle::SrcA, 5, 512};
  ShapeSpec ub{Category::Cylinder, DomainStyle::SrcB, 5, 512};
  auto a = generate_shape(ua);
  auto b = generate_shape(ub);
  double za = 0, zb = 0;
  for (const Vec3& p : a.points) za += p[2];
  for (const Vec3& p : b.points) zb += p[2];
  // both clouds are re-centered, so compare upper-half point counts instead
  int ca = 0, cb = 0;
  for (const Vec3& p : a.points) ca += p[2] > 0.3f;
  for (const Vec3& p : b.points) cb += p[2] > 0.3f;
  CHECK(cb != ca);
}

TEST_CASE("point_count below one is rejected", "[shapes]") {
  ShapeSpec spec{Category::Sphere, DomainStyle::SrcA, 1, 0};
  CHECK_THROWS_AS(generate_shape(spec), size_error);
}

TEST_CASE("category and style parsing round-trips and rejects unknowns", "[shapes]") {
  for (int i = 0; i < kCategoryCount; ++i)
    CHECK(category_from_string(category_name(Category(i))) == Category(i));
  for (int i = 0; i < kDomainCount; ++i)
    CHECK(domain_from_string(domain_name(DomainStyle(i))) == DomainStyle(i));
  CHECK_THROWS_AS(category_from_string("pyramid"), config_error);
  CHECK_THROWS_AS(domain_from_string("SRC_C"), config_error);
}
