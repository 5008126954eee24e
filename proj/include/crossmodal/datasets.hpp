#pragma once

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

#include "crossmodal/io.hpp"
#include "crossmodal/mesh.hpp"
#include "crossmodal/pointcloud.hpp"
#include "crossmodal/render.hpp"

namespace crossmodal {

// ---------------------------------------------------------------------------
// Part catalog: fixed part sets per toy class, global label ids assigned by
// class order.
// ---------------------------------------------------------------------------

struct PartCatalog {
  std::vector<std::string> classes;
  std::vector<std::vector<std::string>> part_names;
  std::vector<int> offsets;
  int total_parts = 0;

  static const std::vector<std::string>& parts_for(const std::string& cls) {
    static const std::vector<std::string> sphere{"upper", "lower"};
    static const std::vector<std::string> box{"top", "sides", "bottom"};
    static const std::vector<std::string> cylinder{"caps", "body"};
    static const std::vector<std::string> cone{"base", "lateral"};
    if (cls == "sphere") return sphere;
    if (cls == "box") return box;
    if (cls == "cylinder") return cylinder;
    if (cls == "cone") return cone;
    throw std::runtime_error("unknown toy class: " + cls);
  }

  static PartCatalog for_classes(const std::vector<std::string>& cls) {
    PartCatalog cat;
    cat.classes = cls;
    for (const auto& c : cls) {
      cat.offsets.push_back(cat.total_parts);
      cat.part_names.push_back(parts_for(c));
      cat.total_parts += static_cast<int>(cat.part_names.back().size());
    }
    return cat;
  }

  int class_id(const std::string& cls) const {
    for (size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == cls) return static_cast<int>(i);
    throw std::runtime_error("class not in catalog: " + cls);
  }
  int global_part(int class_idx, int local_part) const {
    return offsets[static_cast<size_t>(class_idx)] + local_part;
  }
  // Global part ids belonging to one class.
  std::vector<int> class_parts(int class_idx) const {
    std::vector<int> out;
    int off = offsets[static_cast<size_t>(class_idx)];
    for (size_t p = 0; p < part_names[static_cast<size_t>(class_idx)].size(); ++p)
      out.push_back(off + static_cast<int>(p));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Procedural toy meshes
// ---------------------------------------------------------------------------

struct ToyMesh {
  TriangleMesh mesh;
  std::vector<uint8_t> face_parts;  // local part id per face
  std::string cls;
};

namespace detail {

inline double aspect_jitter(std::mt19937& rng) {
  std::uniform_real_distribution<double> d(0.6, 1.4);
  return d(rng);
}

inline ToyMesh make_sphere(std::mt19937& rng) {
  std::uniform_int_distribution<int> rings_d(8, 14), segs_d(12, 20);
  int rings = rings_d(rng), segs = segs_d(rng);
  double sx = aspect_jitter(rng), sy = aspect_jitter(rng), sz = aspect_jitter(rng);
  ToyMesh out;
  out.cls = "sphere";
  auto& m = out.mesh;
  m.vertices.emplace_back(0, sy, 0);  // north pole
  for (int r = 1; r < rings; ++r) {
    double pol = M_PI * r / rings;
    for (int s = 0; s < segs; ++s) {
      double az = 2 * M_PI * s / segs;
      m.vertices.emplace_back(sx * std::sin(pol) * std::cos(az),
                              sy * std::cos(pol),
                              sz * std::sin(pol) * std::sin(az));
    }
  }
  m.vertices.emplace_back(0, -sy, 0);  // south pole
  int south = static_cast<int>(m.vertices.size()) - 1;
  auto ring_v = [segs](int r, int s) { return 1 + (r - 1) * segs + (s % segs); };
  for (int s = 0; s < segs; ++s)
    m.faces.push_back({0, ring_v(1, s + 1), ring_v(1, s)});
  for (int r = 1; r + 1 < rings; ++r)
    for (int s = 0; s < segs; ++s) {
      m.faces.push_back({ring_v(r, s), ring_v(r, s + 1), ring_v(r + 1, s)});
      m.faces.push_back({ring_v(r, s + 1), ring_v(r + 1, s + 1), ring_v(r + 1, s)});
    }
  for (int s = 0; s < segs; ++s)
    m.faces.push_back({south, ring_v(rings - 1, s), ring_v(rings - 1, s + 1)});
  out.face_parts.resize(m.faces.size());
  for (size_t f = 0; f < m.faces.size(); ++f)
    out.face_parts[f] = m.face_center(f).y > 0 ? 0 : 1;  // upper / lower
  return out;
}

inline ToyMesh make_box(std::mt19937& rng) {
  double dx = aspect_jitter(rng), dy = aspect_jitter(rng), dz = aspect_jitter(rng);
  std::uniform_int_distribution<int> div_d(2, 5);
  int div = div_d(rng);
  ToyMesh out;
  out.cls = "box";
  auto& m = out.mesh;
  // Each face is an independent div x div grid (vertices duplicated at edges,
  // harmless for rendering and sampling).
  auto add_face = [&](Vec3 origin, Vec3 eu, Vec3 ev, uint8_t part) {
    int base = static_cast<int>(m.vertices.size());
    for (int i = 0; i <= div; ++i)
      for (int j = 0; j <= div; ++j)
        m.vertices.push_back(origin + eu * (static_cast<double>(i) / div) +
                             ev * (static_cast<double>(j) / div));
    for (int i = 0; i < div; ++i)
      for (int j = 0; j < div; ++j) {
        int a = base + i * (div + 1) + j;
        int b = a + div + 1;
        m.faces.push_back({a, b, a + 1});
        m.faces.push_back({a + 1, b, b + 1});
        out.face_parts.push_back(part);
        out.face_parts.push_back(part);
      }
  };
  double hx = dx / 2, hy = dy / 2, hz = dz / 2;
  add_face({-hx, hy, -hz}, {2 * hx, 0, 0}, {0, 0, 2 * hz}, 0);    // top
  add_face({-hx, -hy, -hz}, {2 * hx, 0, 0}, {0, 0, 2 * hz}, 2);   // bottom
  add_face({-hx, -hy, -hz}, {2 * hx, 0, 0}, {0, 2 * hy, 0}, 1);   // sides
  add_face({-hx, -hy, hz}, {2 * hx, 0, 0}, {0, 2 * hy, 0}, 1);
  add_face({-hx, -hy, -hz}, {0, 0, 2 * hz}, {0, 2 * hy, 0}, 1);
  add_face({hx, -hy, -hz}, {0, 0, 2 * hz}, {0, 2 * hy, 0}, 1);
  return out;
}

inline ToyMesh make_cylinder(std::mt19937& rng) {
  double r = 0.5 * aspect_jitter(rng), h = aspect_jitter(rng);
  std::uniform_int_distribution<int> segs_d(12, 24), rings_d(2, 4);
  int segs = segs_d(rng), rings = rings_d(rng);
  ToyMesh out;
  out.cls = "cylinder";
  auto& m = out.mesh;
  for (int ring = 0; ring <= rings; ++ring) {
    double y = -h / 2 + h * ring / rings;
    for (int s = 0; s < segs; ++s) {
      double az = 2 * M_PI * s / segs;
      m.vertices.emplace_back(r * std::cos(az), y, r * std::sin(az));
    }
  }
  auto rv = [segs](int ring, int s) { return ring * segs + (s % segs); };
  for (int ring = 0; ring < rings; ++ring)
    for (int s = 0; s < segs; ++s) {
      m.faces.push_back({rv(ring, s), rv(ring, s + 1), rv(ring + 1, s)});
      m.faces.push_back({rv(ring, s + 1), rv(ring + 1, s + 1), rv(ring + 1, s)});
      out.face_parts.push_back(1);  // body
      out.face_parts.push_back(1);
    }
  int bottom_c = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0, -h / 2, 0);
  int top_c = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0, h / 2, 0);
  for (int s = 0; s < segs; ++s) {
    m.faces.push_back({bottom_c, rv(0, s), rv(0, s + 1)});
    out.face_parts.push_back(0);  // caps
    m.faces.push_back({top_c, rv(rings, s + 1), rv(rings, s)});
    out.face_parts.push_back(0);
  }
  return out;
}

inline ToyMesh make_cone(std::mt19937& rng) {
  double r = 0.5 * aspect_jitter(rng), h = aspect_jitter(rng);
  std::uniform_int_distribution<int> segs_d(12, 24);
  int segs = segs_d(rng);
  ToyMesh out;
  out.cls = "cone";
  auto& m = out.mesh;
  for (int s = 0; s < segs; ++s) {
    double az = 2 * M_PI * s / segs;
    m.vertices.emplace_back(r * std::cos(az), -h / 2, r * std::sin(az));
  }
  int apex = segs;
  m.vertices.emplace_back(0, h / 2, 0);
  int center = segs + 1;
  m.vertices.emplace_back(0, -h / 2, 0);
  for (int s = 0; s < segs; ++s) {
    m.faces.push_back({apex, (s + 1) % segs, s});
    out.face_parts.push_back(1);  // lateral
    m.faces.push_back({center, s, (s + 1) % segs});
    out.face_parts.push_back(0);  // base
  }
  return out;
}

}  // namespace detail

inline ToyMesh make_toy_mesh(const std::string& cls, std::mt19937& rng) {
  if (cls == "sphere") return detail::make_sphere(rng);
  if (cls == "box") return detail::make_box(rng);
  if (cls == "cylinder") return detail::make_cylinder(rng);
  if (cls == "cone") return detail::make_cone(rng);
  throw std::runtime_error("unknown toy class: " + cls);
}

inline std::vector<ToyMesh> generate_toy_dataset(
    const std::vector<std::string>& classes, int per_class, std::mt19937& rng) {
  CM_CHECK(per_class >= 1, "per_class must be >= 1");
  std::vector<ToyMesh> out;
  for (const auto& cls : classes)
    for (int i = 0; i < per_class; ++i) {
      out.push_back(make_toy_mesh(cls, rng));
      out.back().mesh.validate();
    }
  return out;
}

// ModelNet-style loader: root/<class>/<split>/*.off. Unreadable meshes are
// skipped with a warning count.
inline std::vector<std::pair<ToyMesh, std::string>> load_off_directory(
    const std::string& root, int* skipped = nullptr) {
  namespace fs = std::filesystem;
  std::vector<std::pair<ToyMesh, std::string>> out;  // (mesh, split)
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  for (const auto& cdir : class_dirs) {
    for (const char* split : {"train", "test"}) {
      fs::path sdir = cdir / split;
      if (!fs::exists(sdir)) continue;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(sdir))
        if (e.path().extension() == ".off") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        try {
          ToyMesh tm;
          tm.mesh = parse_off(read_text_file(f.string()));
          tm.cls = cdir.filename().string();
          out.emplace_back(std::move(tm), split);
        } catch (const std::exception& e) {
          if (skipped) ++*skipped;
          std::fprintf(stderr, "skipping %s: %s\n", f.string().c_str(), e.what());
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generated-data store
// ---------------------------------------------------------------------------

struct StoredObject {
  int id = 0;
  std::string cls;
  int cls_id = 0;
  std::string split;
  std::string cloud_path;
  std::string seg_path;
  std::vector<std::string> view_paths;
};

struct GenConfig {
  int views = 8;
  int width = 32;
  int height = 32;
  int cloud_points = 256;
  int oversample_factor = 8;
  double test_fraction = 0.2;
  uint64_t seed = 0;
  bool write_png = false;
  int workers = static_cast<int>(std::thread::hardware_concurrency());
};

class DataStore {
 public:
  std::string root;
  PartCatalog catalog;
  std::vector<StoredObject> objects;
  std::vector<int> train_indices, test_indices;

  // Payload caches, filled by load_payloads.
  std::vector<PointCloud> clouds;
  std::vector<std::vector<uint8_t>> point_labels;
  std::vector<std::vector<Image>> views;

  static DataStore open(const std::string& root) {
    DataStore ds;
    ds.root = root;
    std::istringstream cls_in(read_text_file(root + "/classes.txt"));
    std::vector<std::string> classes;
    std::string line;
    while (std::getline(cls_in, line))
      if (!line.empty()) classes.push_back(line);
    ds.catalog = PartCatalog::for_classes(classes);

    std::istringstream man(read_text_file(root + "/manifest.txt"));
    while (std::getline(man, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      StoredObject obj;
      ls >> obj.id >> obj.cls >> obj.split >> obj.cloud_path >> obj.seg_path;
      std::string vp;
      while (ls >> vp) obj.view_paths.push_back(vp);
      CM_CHECK(!obj.view_paths.empty(), "manifest object " << obj.id
                                                           << " has no views");
      obj.cls_id = ds.catalog.class_id(obj.cls);
      ds.objects.push_back(std::move(obj));
    }
    for (size_t i = 0; i < ds.objects.size(); ++i)
      (ds.objects[i].split == "test" ? ds.test_indices : ds.train_indices)
          .push_back(static_cast<int>(i));
    return ds;
  }

  void load_payloads() {
    clouds.resize(objects.size());
    point_labels.resize(objects.size());
    views.resize(objects.size());
    for (size_t i = 0; i < objects.size(); ++i) {
      clouds[i] = read_cloud(root + "/" + objects[i].cloud_path);
      if (!objects[i].seg_path.empty() && objects[i].seg_path != "-")
        point_labels[i] = read_labels(root + "/" + objects[i].seg_path);
      for (const auto& vp : objects[i].view_paths)
        views[i].push_back(read_image_f32(root + "/" + vp));
    }
  }

  int view_count() const {
    return objects.empty() ? 0 : static_cast<int>(objects[0].view_paths.size());
  }
};

// Renders V views and samples one cloud per mesh, writing the store layout.
// Parallel across objects; per-object rng streams keep output independent of
// the worker count. Already-complete objects are skipped (resumable).
inline int generate_dataset(const std::vector<ToyMesh>& meshes,
                            const std::vector<std::string>& splits,
                            const std::vector<std::string>& classes,
                            const std::string& out_root, const GenConfig& gen,
                            RenderConfig render_cfg) {
  namespace fs = std::filesystem;
  CM_CHECK(meshes.size() == splits.size(), "mesh/split count mismatch");
  CM_CHECK(gen.views >= 2, "need at least 2 views per object");
  render_cfg.width = gen.width;
  render_cfg.height = gen.height;
  render_cfg.view_count = gen.views;
  render_cfg.validate();
  fs::create_directories(out_root);

  PartCatalog catalog = PartCatalog::for_classes(classes);
  std::atomic<int> failed{0};

  auto process = [&](size_t i) {
    char dirbuf[32];
    std::snprintf(dirbuf, sizeof(dirbuf), "obj_%05zu", i);
    fs::path obj_dir = fs::path(out_root) / dirbuf;
    fs::create_directories(obj_dir);

    bool complete = fs::exists(obj_dir / "cloud.pcf") &&
                    (meshes[i].face_parts.empty() || fs::exists(obj_dir / "parts.seg"));
    for (int v = 0; complete && v < gen.views; ++v) {
      char vb[32];
      std::snprintf(vb, sizeof(vb), "view_%03d.bin", v);
      complete = fs::exists(obj_dir / vb);
    }
    if (complete) return;

    try {
      std::mt19937 rng(static_cast<uint32_t>(gen.seed * 7919 + i));
      const ToyMesh& tm = meshes[i];
      TriangleMesh fitted = fit_to_view(tm.mesh);

      auto cams = sample_viewpoints(gen.views, render_cfg, rng);
      std::ostringstream lines;
      for (int v = 0; v < gen.views; ++v) {
        Image img = render_view(fitted, cams[static_cast<size_t>(v)], render_cfg);
        char vb[32];
        std::snprintf(vb, sizeof(vb), "view_%03d.bin", v);
        write_image_f32((obj_dir / vb).string(), img);
        if (gen.write_png) {
          char pb[32];
          std::snprintf(pb, sizeof(pb), "view_%03d.png", v);
          write_png_gray((obj_dir / pb).string(), img);
        }
        lines << i << " " << v << " " << cams[static_cast<size_t>(v)].azimuth_deg
              << " " << cams[static_cast<size_t>(v)].polar_deg << " "
              << dirbuf << "/" << vb << "\n";
      }
      write_text_file((obj_dir / "render_manifest.txt").string(), lines.str());

      auto candidates = surface_oversample(
          fitted, gen.cloud_points * gen.oversample_factor, rng);
      std::uniform_int_distribution<int> start_d(
          0, static_cast<int>(candidates.size()) - 1);
      auto cloud = farthest_point_sample(candidates, gen.cloud_points, start_d(rng));
      auto normalized = normalize_unit_sphere(cloud);
      write_cloud((obj_dir / "cloud.pcf").string(), normalized);
      write_cloud_csv((obj_dir / "cloud.csv").string(), normalized);

      if (!tm.face_parts.empty()) {
        int cls_id = catalog.class_id(tm.cls);
        std::vector<uint8_t> labels(cloud.source_faces.size());
        for (size_t p = 0; p < labels.size(); ++p)
          labels[p] = static_cast<uint8_t>(catalog.global_part(
              cls_id, tm.face_parts[static_cast<size_t>(cloud.source_faces[p])]));
        write_labels((obj_dir / "parts.seg").string(), labels);
      }
    } catch (const std::exception& e) {
      std::fprintf(stderr, "object %zu failed: %s\n", i, e.what());
      ++failed;
    }
  };

  int workers = std::max(1, gen.workers);
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (size_t i = next++; i < meshes.size(); i = next++) process(i);
    });
  for (auto& t : pool) t.join();

  // Manifest and class list written last so a complete store implies a
  // complete manifest.
  std::ostringstream cls_out;
  for (const auto& c : classes) cls_out << c << "\n";
  write_text_file(out_root + "/classes.txt", cls_out.str());

  std::ostringstream man;
  std::ostringstream render_man;
  for (size_t i = 0; i < meshes.size(); ++i) {
    char dirbuf[32];
    std::snprintf(dirbuf, sizeof(dirbuf), "obj_%05zu", i);
    std::string seg =
        meshes[i].face_parts.empty() ? "-" : std::string(dirbuf) + "/parts.seg";
    man << i << " " << meshes[i].cls << " " << splits[i] << " " << dirbuf
        << "/cloud.pcf " << seg;
    for (int v = 0; v < gen.views; ++v) {
      char vb[32];
      std::snprintf(vb, sizeof(vb), "view_%03d.bin", v);
      man << " " << dirbuf << "/" << vb;
    }
    man << "\n";
    fs::path rm = fs::path(out_root) / dirbuf / "render_manifest.txt";
    if (fs::exists(rm)) render_man << read_text_file(rm.string());
  }
  write_text_file(out_root + "/manifest.txt", man.str());
  write_text_file(out_root + "/render_manifest.txt", render_man.str());
  return failed.load();
}

// Round-robin class assignment + deterministic train/test split.
inline std::vector<std::string> assign_splits(size_t count, double test_fraction,
                                              std::mt19937& rng) {
  std::vector<std::string> splits(count, "train");
  std::vector<size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_test = static_cast<size_t>(std::llround(test_fraction * count));
  for (size_t i = 0; i < n_test; ++i) splits[order[i]] = "test";
  return splits;
}

// ---------------------------------------------------------------------------
// Training samples and evaluation pairs
// ---------------------------------------------------------------------------

struct TrainingSample {
  std::vector<float> cloud;  // n x 3
  std::array<Image, 3> images;
  std::array<int, 3> labels{1, 1, 0};
  int object_index = 0;
  int negative_object = 0;
};

struct SampleOptions {
  bool augment = true;
  CloudAugmentConfig cloud_aug;
};

// One training sample: two distinct views of the anchor object, one view of a
// uniformly random different object, plus the anchor's point cloud.
inline TrainingSample assemble_sample(const DataStore& store, int object_index,
                                      std::mt19937& rng,
                                      const SampleOptions& opts = {}) {
  CM_CHECK(!store.views.empty(), "store payloads not loaded");
  const auto& pool = store.objects[static_cast<size_t>(object_index)].split == "test"
                         ? store.test_indices
                         : store.train_indices;
  CM_CHECK(pool.size() >= 2, "need at least 2 objects to draw a negative");
  int v_count = static_cast<int>(store.views[static_cast<size_t>(object_index)].size());
  CM_CHECK(v_count >= 2, "object " << object_index << " has fewer than 2 views");

  std::uniform_int_distribution<int> view_d(0, v_count - 1);
  int v1 = view_d(rng);
  int v2 = view_d(rng);
  while (v2 == v1) v2 = view_d(rng);

  std::uniform_int_distribution<int> obj_d(0, static_cast<int>(pool.size()) - 1);
  int neg = pool[static_cast<size_t>(obj_d(rng))];
  while (neg == object_index) neg = pool[static_cast<size_t>(obj_d(rng))];
  int neg_views = static_cast<int>(store.views[static_cast<size_t>(neg)].size());
  std::uniform_int_distribution<int> nview_d(0, neg_views - 1);
  int v3 = nview_d(rng);

  TrainingSample s;
  s.object_index = object_index;
  s.negative_object = neg;
  PointCloud cloud = store.clouds[static_cast<size_t>(object_index)];
  if (opts.augment) cloud = augment_cloud(cloud, rng, opts.cloud_aug);
  s.cloud.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) {
    s.cloud.push_back(static_cast<float>(p.x));
    s.cloud.push_back(static_cast<float>(p.y));
    s.cloud.push_back(static_cast<float>(p.z));
  }
  const Image& i1 = store.views[static_cast<size_t>(object_index)][static_cast<size_t>(v1)];
  const Image& i2 = store.views[static_cast<size_t>(object_index)][static_cast<size_t>(v2)];
  const Image& i3 = store.views[static_cast<size_t>(neg)][static_cast<size_t>(v3)];
  if (opts.augment) {
    s.images = {augment_image(i1, rng), augment_image(i2, rng),
                augment_image(i3, rng)};
  } else {
    s.images = {i1, i2, i3};
  }
  return s;
}

struct EvalPair {
  int obj_a = 0;
  int view_a = 0;
  int obj_b = 0;
  int view_b = 0;  // -1 marks the point cloud side of a 2D-3D pair
  int same = 0;
};

struct EvalPairSet {
  std::vector<EvalPair> pairs;
  std::string kind;  // "2d2d" or "2d3d"
};

// 10x test-split size, exactly half positive; pairs deduplicated.
inline EvalPairSet build_eval_pairs(const DataStore& store,
                                    const std::string& kind,
                                    std::mt19937& rng) {
  CM_CHECK(kind == "2d2d" || kind == "2d3d", "pair kind must be 2d2d or 2d3d");
  const auto& test = store.test_indices;
  CM_CHECK(test.size() >= 2, "test split too small for pairs");
  int target = 10 * static_cast<int>(test.size());
  int per_class = target / 2;
  int v_count = store.view_count();

  EvalPairSet out;
  out.kind = kind;
  std::set<std::tuple<int, int, int, int>> seen;
  std::uniform_int_distribution<int> obj_d(0, static_cast<int>(test.size()) - 1);
  std::uniform_int_distribution<int> view_d(0, v_count - 1);

  auto emit = [&](int positives_wanted, int same) {
    int made = 0, guard = 0;
    while (made < positives_wanted) {
      CM_CHECK(++guard < positives_wanted * 1000,
               "could not build enough distinct pairs");
      int a = test[static_cast<size_t>(obj_d(rng))];
      int b = same ? a : test[static_cast<size_t>(obj_d(rng))];
      if (!same) {
        while (b == a) b = test[static_cast<size_t>(obj_d(rng))];
      }
      EvalPair p;
      p.obj_a = a;
      p.view_a = view_d(rng);
      p.obj_b = b;
      p.same = same;
      if (kind == "2d3d") {
        p.view_b = -1;
      } else {
        p.view_b = view_d(rng);
        if (same && p.view_b == p.view_a) continue;  // two distinct views
      }
      if (!seen.insert({p.obj_a, p.view_a, p.obj_b, p.view_b}).second) continue;
      out.pairs.push_back(p);
      ++made;
    }
  };
  emit(per_class, 1);
  emit(per_class, 0);
  return out;
}

}  // namespace crossmodal
