#pragma once

#include <random>

#include "crossmodal/mesh.hpp"

namespace crossmodal {

struct PointCloud {
  std::vector<Vec3> points;
  // Source face index per point, when sampled from a mesh. Carries part
  // labels through FPS.
  std::vector<int> source_faces;

  size_t size() const { return points.size(); }
};

// Uniform surface sampling: face chosen with probability proportional to its
// area, position by uniform barycentric sampling.
inline PointCloud surface_oversample(const TriangleMesh& mesh, int count,
                                     std::mt19937& rng) {
  CM_CHECK(count >= 1, "surface_oversample needs count >= 1");
  mesh.validate();
  std::vector<double> cdf(mesh.faces.size());
  double total = 0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cdf[f] = total;
  }
  CM_CHECK(total > 0, "degenerate mesh: zero total area");

  PointCloud cloud;
  cloud.points.reserve(static_cast<size_t>(count));
  cloud.source_faces.reserve(static_cast<size_t>(count));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    double r = uni(rng) * total;
    size_t f = static_cast<size_t>(
        std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;
    double u = uni(rng), v = uni(rng);
    if (u + v > 1.0) {  // reflect into the triangle
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const auto& t = mesh.faces[f];
    const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
    cloud.points.push_back(a + (b - a) * u + (c - a) * v);
    cloud.source_faces.push_back(static_cast<int>(f));
  }
  return cloud;
}

// Greedy farthest point sampling: each new point maximizes the minimum
// distance to the already-selected set; ties broken by lowest candidate index.
inline PointCloud farthest_point_sample(const PointCloud& candidates, int n,
                                        int start_index) {
  int m = static_cast<int>(candidates.size());
  CM_CHECK(n >= 1 && n <= m,
           "farthest_point_sample: n=" << n << " exceeds candidates=" << m);
  CM_CHECK(start_index >= 0 && start_index < m, "bad FPS start index");

  PointCloud out;
  out.points.reserve(static_cast<size_t>(n));
  bool has_faces = !candidates.source_faces.empty();
  std::vector<double> min_dist(static_cast<size_t>(m),
                               std::numeric_limits<double>::infinity());
  int current = start_index;
  for (int step = 0; step < n; ++step) {
    out.points.push_back(candidates.points[static_cast<size_t>(current)]);
    if (has_faces)
      out.source_faces.push_back(candidates.source_faces[static_cast<size_t>(current)]);
    const Vec3& sel = candidates.points[static_cast<size_t>(current)];
    int next = -1;
    double best = -1;
    for (int i = 0; i < m; ++i) {
      double d = (candidates.points[static_cast<size_t>(i)] - sel).norm();
      if (d < min_dist[static_cast<size_t>(i)]) min_dist[static_cast<size_t>(i)] = d;
      if (min_dist[static_cast<size_t>(i)] > best) {
        best = min_dist[static_cast<size_t>(i)];
        next = i;
      }
    }
    current = next;
  }
  return out;
}

// Centroid to origin, max norm to 1.
inline PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  CM_CHECK(!cloud.points.empty(), "normalize of empty cloud");
  Vec3 c;
  for (const auto& p : cloud.points) c += p;
  c = c * (1.0 / static_cast<double>(cloud.points.size()));
  double max_norm = 0;
  for (const auto& p : cloud.points)
    max_norm = std::max(max_norm, (p - c).norm());
  CM_CHECK(max_norm > 0, "degenerate cloud: all points coincide");
  PointCloud out = cloud;
  double inv = 1.0 / max_norm;
  for (auto& p : out.points) p = (p - c) * inv;
  return out;
}

struct CloudAugmentConfig {
  int up_axis = 1;  // 0=x, 1=y, 2=z; ModelNet conventions vary
  double jitter_sigma = 0.02;
  double jitter_clip = 0.05;
};

// Rotation by theta about the configured up-axis; theta = 0 is the identity.
inline PointCloud rotate_cloud(const PointCloud& cloud, double theta,
                               const CloudAugmentConfig& cfg = {}) {
  double ct = std::cos(theta), st = std::sin(theta);
  PointCloud out = cloud;
  for (auto& p : out.points) {
    Vec3 r;
    switch (cfg.up_axis) {
      case 0:
        r = {p.x, ct * p.y - st * p.z, st * p.y + ct * p.z};
        break;
      case 2:
        r = {ct * p.x - st * p.y, st * p.x + ct * p.y, p.z};
        break;
      default:
        r = {ct * p.x + st * p.z, p.y, -st * p.x + ct * p.z};
        break;
    }
    p = r;
  }
  return out;
}

// Random rotation about the up-axis, then clipped Gaussian jitter.
inline PointCloud augment_cloud(const PointCloud& cloud, std::mt19937& rng,
                                const CloudAugmentConfig& cfg = {}) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  PointCloud out = rotate_cloud(cloud, angle(rng), cfg);
  if (cfg.jitter_sigma > 0) {
    std::normal_distribution<double> noise(0.0, cfg.jitter_sigma);
    auto clipped = [&]() {
      return std::clamp(noise(rng), -cfg.jitter_clip, cfg.jitter_clip);
    };
    for (auto& p : out.points) {
      p.x += clipped();
      p.y += clipped();
      p.z += clipped();
    }
  }
  return out;
}

}  // namespace crossmodal
