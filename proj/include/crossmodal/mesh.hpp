#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "crossmodal/tensor.hpp"  // CM_CHECK

namespace crossmodal {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 0};
  }
};

// Indexed triangle soup; the source of both the rendered and sampled
// modalities.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::optional<std::string> label;

  double face_area(size_t f) const {
    const auto& t = faces[f];
    Vec3 e1 = vertices[static_cast<size_t>(t[1])] - vertices[static_cast<size_t>(t[0])];
    Vec3 e2 = vertices[static_cast<size_t>(t[2])] - vertices[static_cast<size_t>(t[0])];
    return 0.5 * e1.cross(e2).norm();
  }
  Vec3 face_center(size_t f) const {
    const auto& t = faces[f];
    return (vertices[static_cast<size_t>(t[0])] + vertices[static_cast<size_t>(t[1])] +
            vertices[static_cast<size_t>(t[2])]) *
           (1.0 / 3.0);
  }
  Vec3 face_normal(size_t f) const {
    const auto& t = faces[f];
    Vec3 e1 = vertices[static_cast<size_t>(t[1])] - vertices[static_cast<size_t>(t[0])];
    Vec3 e2 = vertices[static_cast<size_t>(t[2])] - vertices[static_cast<size_t>(t[0])];
    return e1.cross(e2).normalized();
  }

  void validate() const {
    CM_CHECK(!vertices.empty() && !faces.empty(), "mesh has no geometry");
    for (const auto& f : faces)
      for (int idx : f)
        CM_CHECK(idx >= 0 && idx < static_cast<int>(vertices.size()),
                 "face index " << idx << " out of range (vertices="
                               << vertices.size() << ")");
    for (const auto& v : vertices)
      CM_CHECK(std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z),
               "non-finite vertex coordinate");
    bool any_area = false;
    for (size_t f = 0; f < faces.size(); ++f)
      if (face_area(f) > 0) {
        any_area = true;
        break;
      }
    CM_CHECK(any_area, "mesh has no face with positive area");
  }
};

struct MeshDataset {
  std::vector<TriangleMesh> meshes;
  std::string split;
  size_t size() const { return meshes.size(); }
};

namespace detail {

// Token stream over OFF text that skips comments.
class OffTokens {
 public:
  explicit OffTokens(const std::string& text) : text_(text) {}
  bool next(std::string& tok) {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ >= text_.size()) return false;
    size_t start = pos_;
    while (pos_ < text_.size() &&
           !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '#')
      ++pos_;
    tok = text_.substr(start, pos_ - start);
    return true;
  }

 private:
  const std::string& text_;
  size_t pos_ = 0;
};

inline double off_number(OffTokens& ts, const char* what) {
  std::string tok;
  CM_CHECK(ts.next(tok), "OFF truncated while reading " << what);
  try {
    size_t used = 0;
    double v = std::stod(tok, &used);
    CM_CHECK(used == tok.size(), "bad OFF number '" << tok << "' for " << what);
    return v;
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("bad OFF number '" + tok + "'");
  }
}

}  // namespace detail

// Parses ASCII OFF. Polygon faces with n > 3 vertices are fan-triangulated
// from the first vertex. ModelNet files sometimes glue the counts to the
// header ("OFF490 518 0"); that variant is accepted too.
inline TriangleMesh parse_off(const std::string& text) {
  detail::OffTokens ts(text);
  std::string header;
  CM_CHECK(ts.next(header), "empty OFF input");
  long nv = -1;
  if (header == "OFF") {
    nv = static_cast<long>(detail::off_number(ts, "vertex count"));
  } else if (header.rfind("OFF", 0) == 0 && header.size() > 3) {
    nv = std::stol(header.substr(3));
  } else {
    throw std::runtime_error("missing OFF header (got '" + header + "')");
  }
  long nf = static_cast<long>(detail::off_number(ts, "face count"));
  detail::off_number(ts, "edge count");
  CM_CHECK(nv >= 0 && nf >= 0, "negative OFF counts");

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    double x = detail::off_number(ts, "vertex x");
    double y = detail::off_number(ts, "vertex y");
    double z = detail::off_number(ts, "vertex z");
    mesh.vertices.emplace_back(x, y, z);
  }
  for (long f = 0; f < nf; ++f) {
    long arity = static_cast<long>(detail::off_number(ts, "face arity"));
    CM_CHECK(arity >= 3, "face with fewer than 3 vertices");
    std::vector<int> poly(static_cast<size_t>(arity));
    for (long j = 0; j < arity; ++j) {
      long idx = static_cast<long>(detail::off_number(ts, "face index"));
      CM_CHECK(idx >= 0 && idx < nv,
               "face index " << idx << " out of range (vertices=" << nv << ")");
      poly[static_cast<size_t>(j)] = static_cast<int>(idx);
    }
    for (long j = 1; j + 1 < arity; ++j)
      mesh.faces.push_back({poly[0], poly[static_cast<size_t>(j)],
                            poly[static_cast<size_t>(j + 1)]});
  }
  mesh.validate();
  return mesh;
}

// Bit-exact writer: "OFF", "V F 0", vertex lines, "3 i j k" face lines.
inline std::string serialize_off(const TriangleMesh& mesh) {
  std::ostringstream out;
  out << "OFF\n" << mesh.vertices.size() << " " << mesh.faces.size() << " 0\n";
  char buf[96];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& f : mesh.faces)
    out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
  return out.str();
}

// Area-weighted centroid of the face centers; zero-area slivers contribute
// nothing (ModelNet meshes contain them).
inline Vec3 mesh_centroid(const TriangleMesh& mesh) {
  Vec3 acc;
  double total = 0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    double a = mesh.face_area(f);
    if (a <= 0) continue;
    acc += mesh.face_center(f) * a;
    total += a;
  }
  CM_CHECK(total > 0, "degenerate mesh: total surface area is zero");
  return acc * (1.0 / total);
}

// Centers the mesh at its area-weighted centroid, then uniformly scales so
// the farthest vertex sits at distance 1.
inline TriangleMesh fit_to_view(const TriangleMesh& mesh) {
  Vec3 c = mesh_centroid(mesh);
  double max_norm = 0;
  for (const auto& v : mesh.vertices)
    max_norm = std::max(max_norm, (v - c).norm());
  CM_CHECK(max_norm > 0, "degenerate mesh: all vertices coincide");
  TriangleMesh out = mesh;
  double inv = 1.0 / max_norm;
  for (auto& v : out.vertices) v = (v - c) * inv;
  return out;
}

}  // namespace crossmodal
