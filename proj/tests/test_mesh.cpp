#include <doctest.h>

#include <random>

#include "crossmodal/mesh.hpp"
#include "crossmodal/pointcloud.hpp"
#include "test_helpers.hpp"

using namespace crossmodal;

TEST_CASE("parse_off smallest valid file") {
  auto m = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  CHECK(m.vertices.size() == 3);
  CHECK(m.faces.size() == 1);
  CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("parse_off fan-triangulates a quad") {
  auto m = parse_off(
      "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
  REQUIRE(m.faces.size() == 2);
  CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
  CHECK(m.faces[1] == std::array<int, 3>{0, 2, 3});
}

TEST_CASE("parse_off error cases") {
  CHECK_THROWS_WITH_AS(parse_off("NOFF\n3 1 0\n"), doctest::Contains("OFF"),
                       std::runtime_error);
  // Declares 4 vertices, provides 3.
  CHECK_THROWS_AS(parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"),
                  std::runtime_error);
  // Face index out of range.
  CHECK_THROWS_AS(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n"),
                  std::runtime_error);
}

TEST_CASE("parse_off accepts header glued to counts") {
  auto m = parse_off("OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  CHECK(m.faces.size() == 1);
}

TEST_CASE("OFF round trip is exact") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  TriangleMesh m;
  for (int i = 0; i < 30; ++i)
    m.vertices.emplace_back(coord(rng), coord(rng), coord(rng));
  std::uniform_int_distribution<int> vidx(0, 29);
  for (int f = 0; f < 40; ++f) {
    int a = vidx(rng), b = vidx(rng), c = vidx(rng);
    if (a == b || b == c || a == c) continue;
    m.faces.push_back({a, b, c});
  }
  auto again = parse_off(serialize_off(m));
  REQUIRE(again.vertices.size() == m.vertices.size());
  REQUIRE(again.faces.size() == m.faces.size());
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    CHECK(again.vertices[i].x == m.vertices[i].x);
    CHECK(again.vertices[i].y == m.vertices[i].y);
    CHECK(again.vertices[i].z == m.vertices[i].z);
  }
  CHECK(again.faces == m.faces);
}

TEST_CASE("mesh_centroid single face") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  Vec3 c = mesh_centroid(m);
  CHECK(c.x == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(c.y == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(c.z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mesh_centroid of a symmetric cube is the origin") {
  // Axis-aligned unit cube centered at origin, 12 triangles.
  TriangleMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.emplace_back((i & 1) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5,
                            (i & 4) ? 0.5 : -0.5);
  auto quad = [&](int a, int b, int c, int d) {
    m.faces.push_back({a, b, c});
    m.faces.push_back({a, c, d});
  };
  quad(0, 1, 3, 2);  // z = -0.5
  quad(4, 6, 7, 5);  // z = +0.5
  quad(0, 4, 5, 1);  // y = -0.5
  quad(2, 3, 7, 6);  // y = +0.5
  quad(0, 2, 6, 4);  // x = -0.5
  quad(1, 5, 7, 3);  // x = +0.5
  Vec3 c = mesh_centroid(m);
  CHECK(std::abs(c.x) < 1e-12);
  CHECK(std::abs(c.y) < 1e-12);
  CHECK(std::abs(c.z) < 1e-12);
}

TEST_CASE("mesh_centroid area weighting against Monte-Carlo oracle") {
  // Triangle A (area 2) plus smaller triangle B (area 0.5) one unit up.
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 2, 0},
                {0, 0, 1}, {1, 0, 1}, {0, 1, 1}};
  m.faces = {{0, 1, 2}, {3, 4, 5}};
  Vec3 c = mesh_centroid(m);
  CHECK(c.x == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(c.y == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(c.z == doctest::Approx(0.2).epsilon(1e-12));

  // Independent oracle: mean of uniform surface samples.
  std::mt19937 rng(7);
  auto cloud = surface_oversample(m, 200000, rng);
  Vec3 mc;
  for (const auto& p : cloud.points) mc += p;
  mc = mc * (1.0 / static_cast<double>(cloud.size()));
  CHECK(std::abs(mc.x - c.x) < 1e-2);
  CHECK(std::abs(mc.y - c.y) < 1e-2);
  CHECK(std::abs(mc.z - c.z) < 1e-2);
}

TEST_CASE("mesh_centroid invariant under face reordering") {
  std::mt19937 rng(3);
  auto tm = make_toy_mesh_for_tests(rng);
  Vec3 before = mesh_centroid(tm);
  std::reverse(tm.faces.begin(), tm.faces.end());
  Vec3 after = mesh_centroid(tm);
  CHECK(before.x == doctest::Approx(after.x).epsilon(1e-12));
  CHECK(before.y == doctest::Approx(after.y).epsilon(1e-12));
  CHECK(before.z == doctest::Approx(after.z).epsilon(1e-12));
}

TEST_CASE("mesh_centroid rejects zero total area") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  m.faces = {{0, 1, 2}};
  CHECK_THROWS_AS(mesh_centroid(m), std::runtime_error);
}

TEST_CASE("fit_to_view normalizes, is idempotent, similarity invariant") {
  std::mt19937 rng(5);
  auto m = make_toy_mesh_for_tests(rng);
  auto fitted = fit_to_view(m);

  double max_norm = 0;
  for (const auto& v : fitted.vertices) max_norm = std::max(max_norm, v.norm());
  CHECK(max_norm == doctest::Approx(1.0).epsilon(1e-9));

  auto twice = fit_to_view(fitted);
  for (size_t i = 0; i < fitted.vertices.size(); ++i)
    CHECK((twice.vertices[i] - fitted.vertices[i]).norm() < 1e-12);

  TriangleMesh moved = m;
  for (auto& v : moved.vertices) v = v * 5.0 + Vec3{3, 3, 3};
  auto fitted2 = fit_to_view(moved);
  for (size_t i = 0; i < fitted.vertices.size(); ++i)
    CHECK((fitted2.vertices[i] - fitted.vertices[i]).norm() < 1e-9);
}
