#pragma once

#include <filesystem>
#include <random>

#include "crossmodal/datasets.hpp"

namespace crossmodal {

// A random valid closed mesh for geometry property tests.
inline TriangleMesh make_toy_mesh_for_tests(std::mt19937& rng) {
  return make_toy_mesh("sphere", rng).mesh;
}

// Generates a small on-disk data store once per process and reuses it.
// 2 classes x 10 objects, 8 views at 32x32, 64-point clouds: large enough for
// eval pair construction (test split of 4 needs 20 distinct image/cloud
// positives, i.e. at least 5 views) yet fast to build.
inline const DataStore& tiny_store() {
  static DataStore store = [] {
    namespace fs = std::filesystem;
    std::string root =
        (fs::temp_directory_path() / "crossmodal_test_store").string();
    std::vector<std::string> classes{"sphere", "box"};
    std::mt19937 rng(99);
    auto meshes = generate_toy_dataset(classes, 10, rng);
    auto splits = assign_splits(meshes.size(), 0.2, rng);
    GenConfig gen;
    gen.views = 8;
    gen.width = 32;
    gen.height = 32;
    gen.cloud_points = 64;
    gen.seed = 99;
    gen.workers = 4;
    int failed = generate_dataset(meshes, splits, classes, root, gen, RenderConfig{});
    CM_CHECK(failed == 0, failed << " objects failed to generate");
    DataStore ds = DataStore::open(root);
    ds.load_payloads();
    return ds;
  }();
  return store;
}

}  // namespace crossmodal
