#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pcotta/common.hpp"
#include "pcotta/pointcloud.hpp"
#include "pcotta/rng.hpp"
#include "pcotta/shapes.hpp"

namespace pcotta {

enum class TaskKind { Reconstruction = 0, Denoising = 1, Registration = 2 };
inline constexpr int kTaskCount = 3;

inline const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Reconstruction: return "reconstruction";
    case TaskKind::Denoising: return "denoising";
    case TaskKind::Registration: return "registration";
  }
  return "?";
}

inline TaskKind task_from_string(const std::string& s) {
  for (int i = 0; i < kTaskCount; ++i)
    if (s == task_name(TaskKind(i))) return TaskKind(i);
  throw config_error("unknown task '" + s + "'");
}

/// Query/prompt context quadruple for one task.
struct TaskSample {
  TaskKind task = TaskKind::Reconstruction;
  PointCloud query_input, query_target;
  PointCloud prompt_input, prompt_target;
  DomainStyle query_domain = DomainStyle::SrcA;
  DomainStyle prompt_domain = DomainStyle::SrcB;
  Category category = Category::Sphere;
  uint64_t query_seed = 0, prompt_seed = 0;
};

struct TaskPair {
  PointCloud input, target;
};

/// Dense target, sparse input (a target/4 random subset).
inline TaskPair make_reconstruction_sample(const ShapeSpec& spec, uint64_t seed) {
  TaskPair out;
  out.target = generate_shape(spec);
  int n = out.target.size();
  int keep = n / 4;
  Rng rng(derive_seed(seed, 0x7e0));
  auto idx = rng.sample_indices(n, keep);
  std::sort(idx.begin(), idx.end());
  out.input.points.reserve(size_t(keep));
  for (int i : idx) out.input.points.push_back(out.target.points[size_t(i)]);
  return out;
}

/// Clean target; input jittered with `sigma` plus a fraction of points
/// replaced by uniform outliers inside the unit ball.
inline TaskPair make_denoising_sample(const ShapeSpec& spec, double sigma, uint64_t seed,
                                      double outlier_rate = 0.05) {
  if (sigma <= 0) throw contract_error("make_denoising_sample: sigma must be positive");
  TaskPair out;
  out.target = generate_shape(spec);
  out.input = out.target;
  Rng rng(derive_seed(seed, 0x7e1));
  for (Vec3& p : out.input.points)
    for (int d = 0; d < 3; ++d) p[d] += float(rng.normal(0.0, sigma));
  int n = out.input.size();
  int n_out = int(std::lround(outlier_rate * n));
  if (n_out > 0) {
    auto idx = rng.sample_indices(n, n_out);
    for (int i : idx) {
      // uniform in the unit ball by radius cube-root
      auto dir = rng.unit_vector();
      double r = std::cbrt(rng.uniform());
      out.input.points[size_t(i)] = {float(r * dir[0]), float(r * dir[1]), float(r * dir[2])};
    }
  }
  return out;
}

/// Canonical-pose target; input rotated by a random axis-angle (<= max_angle).
inline TaskPair make_registration_sample(const ShapeSpec& spec, uint64_t seed,
                                         double max_angle_deg = 45.0) {
  TaskPair out;
  out.target = generate_shape(spec);
  Rng rng(derive_seed(seed, 0x7e2));
  auto axis = rng.unit_vector();
  float angle = float(rng.uniform(0.0, max_angle_deg * std::numbers::pi / 180.0));
  RigidTransform rot = RigidTransform::rotation_axis_angle(
      {float(axis[0]), float(axis[1]), float(axis[2])}, angle);
  out.input = apply_transform(out.target, rot);
  return out;
}

inline TaskPair make_task_pair(TaskKind task, const ShapeSpec& spec, uint64_t seed,
                               double denoise_sigma = 0.03, double max_angle_deg = 45.0) {
  switch (task) {
    case TaskKind::Reconstruction: return make_reconstruction_sample(spec, seed);
    case TaskKind::Denoising: return make_denoising_sample(spec, denoise_sigma, seed);
    case TaskKind::Registration: return make_registration_sample(spec, seed, max_angle_deg);
  }
  throw config_error("make_task_pair: unknown task");
}

struct PretrainSetOptions {
  int points = 256;
  double denoise_sigma = 0.03;
  double max_angle_deg = 45.0;
};

/// Balanced (domain, category, task) grid; the prompt pair is drawn from the
/// other source domain with the same category and task.
inline std::vector<TaskSample> build_pretrain_set(const std::vector<DomainStyle>& source_domains,
                                                  int n_per_domain, uint64_t seed,
                                                  const PretrainSetOptions& opt = {}) {
  if (source_domains.size() != 2)
    throw config_error("build_pretrain_set: expected exactly 2 source domains, got " +
                       std::to_string(source_domains.size()));
  for (DomainStyle d : source_domains)
    if (!is_source_domain(d))
      throw config_error(std::string("build_pretrain_set: ") + domain_name(d) +
                         " is not a source domain");

  std::vector<TaskSample> out;
  out.reserve(size_t(n_per_domain) * source_domains.size());
  for (size_t di = 0; di < source_domains.size(); ++di) {
    DomainStyle qd = source_domains[di];
    DomainStyle pd = source_domains[1 - di];
    for (int i = 0; i < n_per_domain; ++i) {
      TaskSample s;
      s.task = TaskKind(i % kTaskCount);
      s.category = Category((i / kTaskCount) % kCategoryCount);
      s.query_domain = qd;
      s.prompt_domain = pd;
      s.query_seed = derive_seed(seed, (uint64_t(di) << 32) | uint64_t(i) << 1);
      s.prompt_seed = derive_seed(seed, (uint64_t(di) << 32) | (uint64_t(i) << 1) | 1u);

      ShapeSpec qs{s.category, qd, s.query_seed, opt.points};
      TaskPair q = make_task_pair(s.task, qs, s.query_seed, opt.denoise_sigma, opt.max_angle_deg);
      s.query_input = std::move(q.input);
      s.query_target = std::move(q.target);

      ShapeSpec ps{s.category, pd, s.prompt_seed, opt.points};
      TaskPair p = make_task_pair(s.task, ps, s.prompt_seed, opt.denoise_sigma, opt.max_angle_deg);
      s.prompt_input = std::move(p.input);
      s.prompt_target = std::move(p.target);
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace pcotta
