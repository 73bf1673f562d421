#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "pcotta/tasks.hpp"

using namespace pcotta;

TEST_CASE("reconstruction sample is a quarter-subset of its target", "[tasks]") {
  ShapeSpec spec{Category::Sphere, DomainStyle::SrcA, 3, 256};
  auto [input, target] = make_reconstruction_sample(spec, 3);
  CHECK(input.size() == 64);
  for (const Vec3& p : input.points) {
    bool found = false;
    for (const Vec3& q : target.points)
      if (p == q) {
        found = true;
        break;
      }
    CHECK(found);
  }
  CHECK(chamfer_distance(input, target) > 0.0);
}

TEST_CASE("denoising sample keeps counts and near-zero noise collapses CD", "[tasks]") {
  ShapeSpec spec{Category::Box, DomainStyle::SrcB, 4, 128};
  auto [input, target] = make_denoising_sample(spec, 0.02, 4);
  CHECK(input.size() == target.size());

  auto tiny = make_denoising_sample(spec, 1e-9, 4, /*outlier_rate=*/0.0);
  CHECK(chamfer_distance(tiny.input, tiny.target) < 1e-12);
}

TEST_CASE("denoising CD grows monotonically in sigma (Monte Carlo)", "[tasks]") {
  // averaged over 20 seeds per sigma; oracle is the CD estimate itself
  double mean_cd[3] = {0, 0, 0};
  double sigmas[3] = {0.01, 0.02, 0.04};
  for (int si = 0; si < 3; ++si) {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      ShapeSpec spec{Category::Cone, DomainStyle::SrcA, 50 + seed, 128};
      auto s = make_denoising_sample(spec, sigmas[si], 900 + seed, 0.0);
      mean_cd[si] += chamfer_distance(s.input, s.target) / 20.0;
    }
  }
  CHECK(mean_cd[0] < mean_cd[1]);
  CHECK(mean_cd[1] < mean_cd[2]);
}

TEST_CASE("registration sample counts match and rerun is deterministic", "[tasks]") {
  ShapeSpec spec{Category::Wedge, DomainStyle::SrcA, 5, 128};
  auto a = make_registration_sample(spec, 5);
  CHECK(a.input.size() == a.target.size());
  auto b = make_registration_sample(spec, 5);
  CHECK(a.input.points == b.input.points);
  CHECK(chamfer_distance(a.input, a.target) ==
        Catch::Approx(chamfer_distance(b.input, b.target)));
}

TEST_CASE("registration with zero max angle is the identity", "[tasks]") {
  ShapeSpec spec{Category::Sphere, DomainStyle::SrcA, 6, 64};
  auto s = make_registration_sample(spec, 6, /*max_angle_deg=*/0.0);
  CHECK(chamfer_distance(s.input, s.target) < 1e-10);
}

TEST_CASE("pretrain set is balanced and prompts cross domains", "[tasks]") {
  auto set = build_pretrain_set({DomainStyle::SrcA, DomainStyle::SrcB}, 200, 77,
                                {.points = 64});
  CHECK(set.size() == 400);

  std::map<std::pair<DomainStyle, TaskKind>, int> task_hist;
  for (const auto& s : set) {
    CHECK(s.query_domain != s.prompt_domain);
    CHECK(is_source_domain(s.query_domain));
    CHECK(is_source_domain(s.prompt_domain));
    task_hist[{s.query_domain, s.task}]++;
  }
  for (int d = 0; d < 2; ++d) {
    int lo = 1 << 30, hi = 0;
    for (int k = 0; k < kTaskCount; ++k) {
      int c = task_hist[{DomainStyle(d), TaskKind(k)}];
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("pretrain set rejects non-source domains", "[tasks]") {
  CHECK_THROWS_AS(build_pretrain_set({DomainStyle::SrcA, DomainStyle::TgtA}, 10, 1),
                  config_error);
}
