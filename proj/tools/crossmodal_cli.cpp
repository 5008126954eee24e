// Command-line front end: data generation, self-supervised pretraining, and
// the evaluation protocols (probe / retrieve / pairs / segment).

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "crossmodal/config.hpp"
#include "crossmodal/datasets.hpp"
#include "crossmodal/evalkit.hpp"
#include "crossmodal/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crossmodal;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_report(const std::string& out_dir, const std::string& name,
                  const json& report) {
  std::string text = report.dump(2) + "\n";
  std::ostringstream header, row;
  bool first = true;
  for (auto it = report.begin(); it != report.end(); ++it) {
    if (!first) {
      header << ",";
      row << ",";
    }
    first = false;
    header << it.key();
    if (it.value().is_string())
      row << it.value().get<std::string>();
    else
      row << it.value().dump();
  }
  std::cout << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/" + name + ".json", text);
    write_text_file(out_dir + "/" + name + ".csv",
                    header.str() + "\n" + row.str() + "\n");
  }
}

EncoderConfig profile_config(const std::string& profile) {
  if (profile == "toy") return EncoderConfig::toy();
  if (profile == "full") return EncoderConfig::full();
  throw std::runtime_error("unknown profile '" + profile + "' (toy|full)");
}

Encoders<float> make_encoders(const DataStore& store,
                              const std::string& profile, uint64_t seed) {
  EncoderConfig cfg = profile_config(profile);
  cfg.num_parts = store.catalog.total_parts;
  return Encoders<float>(cfg, seed);
}

// ---------------------------------------------------------------------------

int cmd_toydata(const std::string& out, const std::string& classes_csv,
                int per_class, double test_fraction, uint64_t seed) {
  auto classes = split_list(classes_csv);
  std::mt19937 rng(static_cast<uint32_t>(seed));
  auto meshes = generate_toy_dataset(classes, per_class, rng);
  auto splits = assign_splits(meshes.size(), test_fraction, rng);
  for (size_t i = 0; i < meshes.size(); ++i) {
    fs::path dir = fs::path(out) / meshes[i].cls / splits[i];
    fs::create_directories(dir);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04zu.off", meshes[i].cls.c_str(), i);
    write_text_file((dir / buf).string(), serialize_off(meshes[i].mesh));
  }
  std::cout << "wrote " << meshes.size() << " meshes to " << out << "\n";
  return 0;
}

int cmd_gen_data(bool toy, const std::string& input, const std::string& out,
                 const std::string& classes_csv, int per_class,
                 GenConfig gen) {
  std::vector<ToyMesh> meshes;
  std::vector<std::string> splits;
  std::vector<std::string> classes;
  if (toy) {
    classes = split_list(classes_csv);
    std::mt19937 rng(static_cast<uint32_t>(gen.seed));
    meshes = generate_toy_dataset(classes, per_class, rng);
    splits = assign_splits(meshes.size(), gen.test_fraction, rng);
  } else {
    CM_CHECK(!input.empty(), "gen-data needs --toy or --input <off dir>");
    int skipped = 0;
    auto loaded = load_off_directory(input, &skipped);
    CM_CHECK(!loaded.empty(), "no readable meshes under " << input);
    std::set<std::string> cls_set;
    for (auto& [tm, split] : loaded) {
      cls_set.insert(tm.cls);
      meshes.push_back(std::move(tm));
      splits.push_back(split);
    }
    classes.assign(cls_set.begin(), cls_set.end());
    if (skipped > 0)
      std::cerr << "warning: skipped " << skipped << " unreadable meshes\n";
  }
  int failed = generate_dataset(meshes, splits, classes, out, gen, RenderConfig{});
  std::cout << "generated " << meshes.size() - static_cast<size_t>(failed)
            << "/" << meshes.size() << " objects (" << gen.views
            << " views each) in " << out << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_pretrain(const RunConfig& run, const std::string& data,
                 const std::string& out, const std::string& resume) {
  CM_CHECK(fs::exists(data + "/manifest.txt"),
           "no dataset manifest under " << data << "; run gen-data first");
  auto store = DataStore::open(data);
  store.load_payloads();

  uint64_t seed = run.seed();
  auto enc = make_encoders(store, run.str("profile"), seed);
  if (!resume.empty()) enc.store.load(resume);

  TrainConfig cfg;
  cfg.batch_size = static_cast<int>(run.integer("batch"));
  cfg.total_iterations = static_cast<int>(run.integer("iters"));
  cfg.lr0 = run.number("lr0");
  cfg.momentum = run.number("momentum");
  cfg.weight_decay = run.number("weight_decay");
  cfg.lr_decay_every = static_cast<int>(run.integer("lr_decay_every"));
  cfg.lr_decay_factor = run.number("lr_decay_factor");
  cfg.margin = run.number("margin");
  cfg.beta = run.number("beta");
  cfg.augment = run.flag("augment");
  cfg.checkpoint_every = static_cast<int>(run.integer("checkpoint_every"));
  cfg.deterministic = run.flag("deterministic");
  cfg.seed = seed;
  cfg.out_dir = out;

  fs::create_directories(out);
  run.echo_to(out);
  auto trace = pretrain(enc, store, cfg);

  json report;
  report["iterations"] = trace.empty() ? 0 : trace.back().iteration + 1;
  report["final_l_self"] = trace.empty() ? 0.0 : trace.back().l_self;
  report["final_l_triplet"] = trace.empty() ? 0.0 : trace.back().l_triplet;
  report["final_l_cross"] = trace.empty() ? 0.0 : trace.back().l_cross;
  report["checkpoint"] = out + "/checkpoint_final.ckpt";
  write_report(out, "pretrain_report", report);
  return 0;
}

int cmd_eval(const std::string& protocol, const RunConfig& run,
             const std::string& data, const std::string& checkpoint,
             const std::string& out) {
  auto store = DataStore::open(data);
  store.load_payloads();
  uint64_t seed = run.seed();
  auto enc = make_encoders(store, run.str("profile"), seed);
  if (!checkpoint.empty()) enc.store.load(checkpoint);

  json report;
  report["protocol"] = protocol;
  report["seed"] = seed;

  if (protocol == "probe") {
    int v = static_cast<int>(run.integer("views"));
    CM_CHECK(v >= 1 && v <= store.view_count(),
             "--views must be in [1," << store.view_count() << "]");
    report["views"] = v;
    report["probe_2d_accuracy"] = recognition_probe(enc, store, "2d", v);
    report["probe_3d_accuracy"] = recognition_probe(enc, store, "3d", v);
  } else if (protocol == "retrieve") {
    std::vector<int> k_list;
    for (const auto& k : split_list(run.str("top_k")))
      k_list.push_back(std::stoi(k));
    std::vector<float> pnt_feats, img_feats;
    std::vector<int> labels;
    int v = static_cast<int>(run.integer("views"));
    for (int obj : store.test_indices) {
      auto fp = point_feature(enc, store, obj);
      pnt_feats.insert(pnt_feats.end(), fp.begin(), fp.end());
      auto fi = multiview_feature(image_features(enc, store, obj, v));
      img_feats.insert(img_feats.end(), fi.begin(), fi.end());
      labels.push_back(store.objects[static_cast<size_t>(obj)].cls_id);
    }
    int dim = static_cast<int>(enc.config.embed_dim);
    for (auto [k, acc] : retrieval_topk(pnt_feats, labels, dim, k_list))
      report["retrieval_3d_top" + std::to_string(k)] = acc;
    for (auto [k, acc] : retrieval_topk(img_feats, labels, dim, k_list))
      report["retrieval_2d_top" + std::to_string(k)] = acc;
  } else if (protocol == "pairs") {
    std::mt19937 rng(static_cast<uint32_t>(seed));
    auto stats = pair_distance_stats(enc, store,
                                     build_eval_pairs(store, "2d2d", rng));
    report["positive_mpd"] = stats.positive_mpd;
    report["positive_std"] = stats.positive_std;
    report["negative_mpd"] = stats.negative_mpd;
    report["negative_std"] = stats.negative_std;
    report["cross_modality_accuracy"] = cross_modality_accuracy(
        enc, store, build_eval_pairs(store, "2d3d", rng),
        run.number("threshold"));
  } else if (protocol == "segment") {
    std::string regime = run.str("regime");
    CM_CHECK(regime == "frozen" || regime == "unfrozen" || regime == "scratch",
             "--regime must be frozen|unfrozen|scratch");
    CM_CHECK(regime == "scratch" || !checkpoint.empty(),
             "regime '" << regime << "' needs --checkpoint");
    if (regime == "scratch") {
      // Fresh random weights, everything trainable.
      enc = make_encoders(store, run.str("profile"), seed);
    }
    SegTrainConfig seg_cfg;
    seg_cfg.epochs = static_cast<int>(run.integer("epochs"));
    seg_cfg.train_fraction = run.number("fraction");
    seg_cfg.freeze_base = regime == "frozen";
    seg_cfg.seed = seed;
    finetune_segmentation(enc, store, seg_cfg);
    auto m = evaluate_segmentation(enc, store);
    report["regime"] = regime;
    report["fraction"] = seg_cfg.train_fraction;
    report["overall_accuracy"] = m.overall_accuracy;
    report["class_miou"] = m.class_miou;
    report["instance_miou"] = m.instance_miou;
  } else {
    CM_CHECK(false, "unknown eval protocol '" << protocol << "'");
  }

  if (!out.empty()) {
    fs::create_directories(out);
    run.echo_to(out);
  }
  write_report(out, "eval_" + protocol + "_report", report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised joint 2D/3D feature learning pipeline"};
  app.require_subcommand(1);

  // toydata -----------------------------------------------------------------
  auto* toydata = app.add_subcommand("toydata", "write procedural OFF meshes");
  std::string td_out = "toy_meshes", td_classes = "sphere,box,cylinder";
  int td_per_class = 100;
  double td_test_fraction = 0.2;
  uint64_t td_seed = 0;
  toydata->add_option("--out", td_out, "output directory");
  toydata->add_option("--classes", td_classes, "comma-separated class list");
  toydata->add_option("--per-class", td_per_class, "objects per class");
  toydata->add_option("--test-fraction", td_test_fraction, "test split size");
  toydata->add_option("--seed", td_seed, "rng seed");

  // gen-data ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "render views and sample clouds");
  bool gd_toy = false;
  std::string gd_input, gd_out = "data", gd_classes = "sphere,box,cylinder";
  int gd_per_class = 100;
  GenConfig gd_cfg;
  gen->add_flag("--toy", gd_toy, "use procedural toy meshes");
  gen->add_option("--input", gd_input, "directory of class/split/*.off");
  gen->add_option("--out", gd_out, "output directory");
  gen->add_option("--classes", gd_classes, "toy classes (with --toy)");
  gen->add_option("--per-class", gd_per_class, "objects per class (with --toy)");
  gen->add_option("--views", gd_cfg.views, "views per object");
  gen->add_option("--width", gd_cfg.width, "render width");
  gen->add_option("--height", gd_cfg.height, "render height");
  gen->add_option("--points", gd_cfg.cloud_points, "cloud size");
  gen->add_option("--test-fraction", gd_cfg.test_fraction, "test split size");
  gen->add_option("--seed", gd_cfg.seed, "rng seed");
  gen->add_option("--workers", gd_cfg.workers, "parallel workers");
  gen->add_flag("--png", gd_cfg.write_png, "also write PNG previews");

  // pretrain ----------------------------------------------------------------
  auto* pre = app.add_subcommand("pretrain", "joint self-supervised training");
  std::string pt_data = "data", pt_out = "runs/pretrain", pt_config, pt_resume;
  std::string pt_profile, pt_seed, pt_iters, pt_batch, pt_lr, pt_beta,
      pt_margin;
  bool pt_deterministic = false;
  pre->add_option("--data", pt_data, "generated dataset directory");
  pre->add_option("--out", pt_out, "run output directory");
  pre->add_option("--config", pt_config, "key=value config file");
  pre->add_option("--resume", pt_resume, "checkpoint to resume from");
  pre->add_option("--profile", pt_profile, "toy|full");
  pre->add_option("--seed", pt_seed, "root seed");
  pre->add_option("--iters", pt_iters, "total iterations");
  pre->add_option("--batch", pt_batch, "batch size");
  pre->add_option("--lr", pt_lr, "initial learning rate");
  pre->add_option("--beta", pt_beta, "cross-modality loss weight");
  pre->add_option("--margin", pt_margin, "triplet margin alpha");
  pre->add_flag("--deterministic", pt_deterministic, "deterministic mode");

  // eval --------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "run an evaluation protocol");
  std::string ev_protocol, ev_data = "data", ev_ckpt, ev_out = "runs/eval";
  std::string ev_config, ev_views, ev_regime, ev_fraction, ev_seed, ev_epochs;
  ev->add_option("protocol", ev_protocol, "probe|retrieve|pairs|segment")
      ->required();
  ev->add_option("--data", ev_data, "generated dataset directory");
  ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint");
  ev->add_option("--out", ev_out, "report output directory");
  ev->add_option("--config", ev_config, "key=value config file");
  ev->add_option("--views", ev_views, "test views v (probe/retrieve)");
  ev->add_option("--regime", ev_regime, "frozen|unfrozen|scratch (segment)");
  ev->add_option("--fraction", ev_fraction, "training fraction (segment)");
  ev->add_option("--epochs", ev_epochs, "fine-tune epochs (segment)");
  ev->add_option("--seed", ev_seed, "root seed");
  std::string ev_profile;
  ev->add_option("--profile", ev_profile, "toy|full");

  CLI11_PARSE(app, argc, argv);

  try {
    if (toydata->parsed())
      return cmd_toydata(td_out, td_classes, td_per_class, td_test_fraction,
                         td_seed);
    if (gen->parsed())
      return cmd_gen_data(gd_toy, gd_input, gd_out, gd_classes, gd_per_class,
                          gd_cfg);
    if (pre->parsed()) {
      // Profile comes from the flag so profile-dependent defaults are fixed
      // before the config file is read; file keys then override them.
      std::string profile = pt_profile.empty() ? "toy" : pt_profile;
      bool full = profile == "full";
      RunConfig run;
      run.declare("profile", profile);
      run.declare("seed", "");
      run.declare("iters", full ? "120000" : "2000");
      run.declare("batch", full ? "32" : "16");
      run.declare("lr0", full ? "0.001" : "0.004");
      run.declare("momentum", "0.9");
      run.declare("weight_decay", "0.0005");
      run.declare("lr_decay_every", "40000");
      run.declare("lr_decay_factor", "0.1");
      run.declare("margin", "1.0");
      run.declare("beta", "1.0");
      run.declare("augment", "true");
      run.declare("checkpoint_every", full ? "10000" : "500");
      run.declare("deterministic", "false");
      if (!pt_config.empty()) run.load_file(pt_config);
      if (!pt_seed.empty()) run.set("seed", pt_seed);
      if (!pt_iters.empty()) run.set("iters", pt_iters);
      if (!pt_batch.empty()) run.set("batch", pt_batch);
      if (!pt_lr.empty()) run.set("lr0", pt_lr);
      if (!pt_beta.empty()) run.set("beta", pt_beta);
      if (!pt_margin.empty()) run.set("margin", pt_margin);
      if (pt_deterministic) run.set("deterministic", "true");
      return cmd_pretrain(run, pt_data, pt_out, pt_resume);
    }
    if (ev->parsed()) {
      RunConfig run;
      run.declare("profile", "toy");
      run.declare("seed", "");
      run.declare("views", "1");
      run.declare("top_k", "1,5,10,20,50");
      run.declare("threshold", "0.5");
      run.declare("regime", "frozen");
      run.declare("fraction", "1.0");
      run.declare("epochs", "20");
      if (!ev_config.empty()) run.load_file(ev_config);
      if (!ev_profile.empty()) run.set("profile", ev_profile);
      if (!ev_seed.empty()) run.set("seed", ev_seed);
      if (!ev_views.empty()) run.set("views", ev_views);
      if (!ev_regime.empty()) run.set("regime", ev_regime);
      if (!ev_fraction.empty()) run.set("fraction", ev_fraction);
      if (!ev_epochs.empty()) run.set("epochs", ev_epochs);
      return cmd_eval(ev_protocol, run, ev_data, ev_ckpt, ev_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
