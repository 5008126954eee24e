#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <random>

#include "crossmodal/mesh.hpp"

namespace crossmodal {

struct Camera {
  double azimuth_deg = 0;   // in [10, 340]
  double polar_deg = 90;    // in [10, 165], measured from the up axis
  double radius = 2.5;      // > 1 for a fit_to_view mesh
  Vec3 look_at{0, 0, 0};
  double fov_y_deg = 35;
  Vec3 up{0, 1, 0};

  Vec3 position() const {
    double az = azimuth_deg * M_PI / 180.0;
    double pol = polar_deg * M_PI / 180.0;
    return look_at + Vec3{radius * std::sin(pol) * std::cos(az),
                          radius * std::cos(pol),
                          radius * std::sin(pol) * std::sin(az)};
  }
};

struct PointLight {
  Vec3 position_cam{0, 0, 3};  // camera coordinates, rotated with the camera
  double diffuse = 1.0;
  double specular = 1.0;
};

struct RenderConfig {
  int width = 224;
  int height = 224;
  int view_count = 180;
  double radius = 2.5;
  double fov_y_deg = 35;
  // Two lights facing each other along the view axis, object in between, so
  // no sampled view renders all-dark.
  std::array<PointLight, 2> lights{PointLight{{0, 0, 3}, 1.0, 1.0},
                                   PointLight{{0, 0, -3}, 1.0, 1.0}};
  double ambient_coeff = 0.1;
  double diffuse_coeff = 0.6;
  double specular_coeff = 0.3;
  double shininess = 32;
  double ambient_intensity = 1.0;
  double background = 0.0;

  void validate() const {
    CM_CHECK(width >= 8 && height >= 8, "render resolution below 8x8");
    CM_CHECK(view_count >= 2, "view_count must be >= 2");
    CM_CHECK(ambient_coeff >= 0 && diffuse_coeff >= 0 && specular_coeff >= 0,
             "negative Phong coefficient");
  }
};

// Single-channel intensities in [0,1], row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  float at(int x, int y) const { return pixels[static_cast<size_t>(y * width + x)]; }
  float& at(int x, int y) { return pixels[static_cast<size_t>(y * width + x)]; }
};

// Random cameras on the view sphere: azimuth ~ U[10,340] deg, polar ~
// U[10,165] deg, pointing at the origin of a pre-centered mesh.
inline std::vector<Camera> sample_viewpoints(int count,
                                             const RenderConfig& config,
                                             std::mt19937& rng) {
  CM_CHECK(count >= 1, "sample_viewpoints needs count >= 1");
  std::uniform_real_distribution<double> az(10.0, 340.0);
  std::uniform_real_distribution<double> pol(10.0, 165.0);
  std::vector<Camera> cams(static_cast<size_t>(count));
  for (auto& cam : cams) {
    cam.azimuth_deg = az(rng);
    cam.polar_deg = pol(rng);
    cam.radius = config.radius;
    cam.fov_y_deg = config.fov_y_deg;
    cam.look_at = {0, 0, 0};
  }
  return cams;
}

namespace detail {

struct CameraBasis {
  Vec3 pos, forward, right, up;
};

inline CameraBasis camera_basis(const Camera& cam) {
  CameraBasis b;
  b.pos = cam.position();
  b.forward = (cam.look_at - b.pos).normalized();
  Vec3 r = b.forward.cross(cam.up);
  CM_CHECK(r.norm() > 1e-9, "degenerate camera: view direction parallel to up");
  b.right = r.normalized();
  b.up = b.right.cross(b.forward);
  return b;
}

}  // namespace detail

// Depth-buffered perspective rasterizer with Gouraud-interpolated per-vertex
// Phong intensities and two point lights expressed in camera coordinates.
inline Image render_view(const TriangleMesh& mesh, const Camera& cam,
                         const RenderConfig& config) {
  auto basis = detail::camera_basis(cam);

  // Vertex normals: normalized sum of adjacent unit face normals.
  std::vector<Vec3> vnormals(mesh.vertices.size());
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    Vec3 fn = mesh.face_normal(f);
    for (int idx : mesh.faces[f]) vnormals[static_cast<size_t>(idx)] += fn;
  }
  for (auto& n : vnormals) n = n.normalized();

  // Lights from camera coordinates to world.
  std::array<Vec3, 2> light_pos;
  for (int l = 0; l < 2; ++l) {
    const Vec3& lc = config.lights[static_cast<size_t>(l)].position_cam;
    light_pos[static_cast<size_t>(l)] =
        basis.pos + basis.right * lc.x + basis.up * lc.y + basis.forward * lc.z;
  }

  // Per-vertex Phong intensity.
  std::vector<double> intensity(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    const Vec3& n = vnormals[i];
    Vec3 view_dir = (basis.pos - v).normalized();
    double total = config.ambient_coeff * config.ambient_intensity;
    for (int l = 0; l < 2; ++l) {
      const auto& light = config.lights[static_cast<size_t>(l)];
      Vec3 ldir = (light_pos[static_cast<size_t>(l)] - v).normalized();
      double ln = ldir.dot(n);
      total += config.diffuse_coeff * std::max(ln, 0.0) * light.diffuse;
      Vec3 refl = n * (2.0 * ln) - ldir;
      double rv = std::max(refl.dot(view_dir), 0.0);
      if (config.specular_coeff > 0 && rv > 0)
        total += config.specular_coeff * std::pow(rv, config.shininess) *
                 light.specular;
    }
    intensity[i] = total;
  }

  // Project vertices to screen space.
  const int w = config.width, h = config.height;
  double tan_half = std::tan(cam.fov_y_deg * M_PI / 360.0);
  double aspect = static_cast<double>(w) / h;
  struct Projected {
    double x, y, z;
    bool valid;
  };
  std::vector<Projected> proj(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    Vec3 d = mesh.vertices[i] - basis.pos;
    double zc = d.dot(basis.forward);
    if (zc <= 1e-6) {
      proj[i] = {0, 0, 0, false};
      continue;
    }
    double xc = d.dot(basis.right), yc = d.dot(basis.up);
    double sx = xc / (zc * tan_half * aspect);
    double sy = yc / (zc * tan_half);
    proj[i] = {(sx * 0.5 + 0.5) * w, (0.5 - sy * 0.5) * h, zc, true};
  }

  Image img;
  img.width = w;
  img.height = h;
  img.pixels.assign(static_cast<size_t>(w * h),
                    static_cast<float>(config.background));
  std::vector<double> depth(static_cast<size_t>(w * h),
                            std::numeric_limits<double>::infinity());

  for (const auto& face : mesh.faces) {
    const Projected& a = proj[static_cast<size_t>(face[0])];
    const Projected& b = proj[static_cast<size_t>(face[1])];
    const Projected& c = proj[static_cast<size_t>(face[2])];
    if (!a.valid || !b.valid || !c.valid) continue;
    double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (std::abs(det) < 1e-12) continue;
    int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
    int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
    int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
    int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
    double ia = intensity[static_cast<size_t>(face[0])];
    double ib = intensity[static_cast<size_t>(face[1])];
    double ic = intensity[static_cast<size_t>(face[2])];
    for (int y = y0; y <= y1; ++y) {
      double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        double px = x + 0.5;
        double wb = ((px - a.x) * (c.y - a.y) - (c.x - a.x) * (py - a.y)) / det;
        double wc = ((b.x - a.x) * (py - a.y) - (px - a.x) * (b.y - a.y)) / det;
        double wa = 1.0 - wb - wc;
        if (wa < 0 || wb < 0 || wc < 0) continue;
        double z = wa * a.z + wb * b.z + wc * c.z;
        size_t pix = static_cast<size_t>(y * w + x);
        if (z >= depth[pix]) continue;
        depth[pix] = z;
        double val = wa * ia + wb * ib + wc * ic;
        img.pixels[pix] = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
  return img;
}

// Crop from the image padded by (pad_x, pad_y) per side with edge
// replication; (ox, oy) index the crop origin in the padded frame, so
// ox == pad_x, oy == pad_y, flip == false is the identity.
inline Image apply_image_augment(const Image& image, int ox, int oy,
                                 bool flip) {
  int w = image.width, h = image.height;
  int pad_x = std::max(1, w / 8), pad_y = std::max(1, h / 8);
  CM_CHECK(ox >= 0 && ox <= 2 * pad_x && oy >= 0 && oy <= 2 * pad_y,
           "crop offset out of padded range");
  Image out;
  out.width = w;
  out.height = h;
  out.pixels.resize(static_cast<size_t>(w * h));
  for (int y = 0; y < h; ++y) {
    int sy = std::clamp(y + oy - pad_y, 0, h - 1);
    for (int x = 0; x < w; ++x) {
      int sx = std::clamp(x + ox - pad_x, 0, w - 1);
      int dx = flip ? (w - 1 - x) : x;
      out.at(dx, y) = image.at(sx, sy);
    }
  }
  return out;
}

// Pad 12.5% per side with edge replication, random crop back to the original
// size, then mirror horizontally with probability 0.5.
inline Image augment_image(const Image& image, std::mt19937& rng) {
  int pad_x = std::max(1, image.width / 8);
  int pad_y = std::max(1, image.height / 8);
  std::uniform_int_distribution<int> ox_dist(0, 2 * pad_x);
  std::uniform_int_distribution<int> oy_dist(0, 2 * pad_y);
  std::uniform_int_distribution<int> coin(0, 1);
  int ox = ox_dist(rng), oy = oy_dist(rng);
  bool flip = coin(rng) == 1;
  return apply_image_augment(image, ox, oy, flip);
}

}  // namespace crossmodal
