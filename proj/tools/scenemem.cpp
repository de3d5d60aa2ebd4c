// SPDX-License-Identifier: Apache-2.0
//
// scenemem: command line front end for retrieval, data synthesis, training,
// the benchmark harnesses, offline sessions and the HTTP server.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scenemem/evaluation.hpp"
#include "scenemem/gen/trainer.hpp"
#include "scenemem/io.hpp"
#include "scenemem/retrieval.hpp"
#include "scenemem/service.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace scenemem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

PointCloud read_cloud(const fs::path& p) {
  if (p.extension() == ".ply") return read_ply(p);
  return read_spcl(p);
}

// {"id", "cloud": path, "camera": CAMERA}; clouds are in camera coordinates.
std::vector<ViewCloud> read_views(const json& arr, const fs::path& base) {
  std::vector<ViewCloud> out;
  for (const json& v : arr) {
    ViewCloud vc;
    vc.id = v.at("id").get<int>();
    vc.cloud = read_cloud(base / v.at("cloud").get<std::string>());
    vc.pose = trajectory_from_json(json::array({v.at("camera")}).dump()).front().pose;
    out.push_back(std::move(vc));
  }
  return out;
}

struct EvalArgs {
  std::string generator = "oracle";
  std::string checkpoint;
  bool no_refs = false;
  bool no_scene = false;
  int flow_steps = 20;
  int seeds = 20;
  uint64_t first_seed = 1000;
  int clips = 2;
  int width = 128, height = 128;
  double fov = 70.0;
  int patch = 16, radius = 24;
  std::string out = "eval";
  std::string session_config;
};

void add_eval_options(CLI::App* c, EvalArgs& a) {
  c->add_option("--generator", a.generator, "oracle or flow")->check(CLI::IsMember({"oracle", "flow"}));
  c->add_option("--checkpoint", a.checkpoint, "Flow checkpoint");
  c->add_flag("--no-refs", a.no_refs, "Drop reference frames");
  c->add_flag("--no-scene", a.no_scene, "Drop the scene projection");
  c->add_option("--flow-steps", a.flow_steps, "Euler steps");
  c->add_option("--seeds", a.seeds, "Number of scenarios");
  c->add_option("--first-seed", a.first_seed, "First scenario seed");
  c->add_option("--clips", a.clips, "Clips per run (even)");
  c->add_option("--width", a.width);
  c->add_option("--height", a.height);
  c->add_option("--fov", a.fov, "Horizontal field of view, degrees");
  c->add_option("--match-patch", a.patch);
  c->add_option("--match-radius", a.radius);
  c->add_option("--session-config", a.session_config, "Session config JSON");
  c->add_option("-o,--out", a.out, "Output prefix; writes <prefix>.csv and <prefix>.json");
}

SessionConfig load_session_config(const std::string& path) {
  return path.empty() ? SessionConfig{} : SessionConfig::from_json(slurp(path));
}

std::shared_ptr<const ClipGenerator> eval_generator(const EvalArgs& a, const Scenario& sc,
                                                     std::shared_ptr<const gen::Model>& model) {
  if (a.generator == "oracle") return std::make_shared<OracleGenerator>(generate_scene(sc.scene_seed, sc.scene));
  if (!model) {
    if (a.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required for the flow generator");
    model = std::make_shared<const gen::Model>(gen::load_checkpoint(a.checkpoint));
  }
  return std::make_shared<FlowGenerator>(model, FlowOptions{!a.no_refs, !a.no_scene, a.flow_steps, 3});
}

int run_eval(const EvalArgs& a, bool long_horizon) {
  const Intrinsics intr = Intrinsics::from_fov(a.width, a.height, a.fov);
  const SessionConfig base = load_session_config(a.session_config);
  const MatchParams match{a.patch, a.radius, 0.8};
  std::shared_ptr<const gen::Model> model;
  std::vector<MetricsRecord> rows;
  for (int i = 0; i < a.seeds; ++i) {
    const Scenario sc = make_scenario(a.first_seed + i, SceneParams{}, intr);
    auto g = eval_generator(a, sc, model);
    SessionConfig cfg = base;
    cfg.seed = sc.seed;
    Session s = scenario_session(sc, cfg);
    if (long_horizon) {
      for (MetricsRecord& r : long_horizon_eval(s, sc, a.clips, *g, match)) rows.push_back(std::move(r));
    } else {
      MetricsRecord r = closed_loop_eval(s, out_and_back(sc.start, intr, sc.sweep, a.clips, cfg.clip_len), *g, match);
      r.seed = sc.seed;
      rows.push_back(std::move(r));
    }
    const MetricsRecord& last = rows.back();
    std::cout << "seed " << sc.seed << " clips " << last.clip_count << " psnr_c " << last.psnr_c << " ssim_c "
              << last.ssim_c << " match " << last.match_acc << '\n';
  }
  write_metrics_csv(a.out + ".csv", rows);
  write_metrics_json(a.out + ".json", rows);
  return 0;
}

int run_density(int scenes, double base, int width, int height, double fov, int radius, const std::string& out) {
  const Intrinsics intr = Intrinsics::from_fov(width, height, fov);
  const std::vector<double> sides = {base, 3 * base, 5 * base, 7 * base};
  std::vector<DensityRow> all;
  json report = json::array();
  for (int i = 0; i < scenes; ++i) {
    const Scenario sc = make_scenario(2000 + i, SceneParams{}, intr);
    const auto rows = scenario_density(sc, sides, radius);
    json r = {{"scene_seed", sc.scene_seed}, {"psnr", json::array()}};
    for (const DensityRow& d : rows) {
      r["psnr"].push_back(d.psnr);
      all.push_back(d);
    }
    report.push_back(r);
    std::cout << "scene " << i;
    for (const DensityRow& d : rows) std::cout << ' ' << d.psnr;
    std::cout << '\n';
  }
  write_density_csv(out + ".csv", all);
  spill(out + ".json", report.dump(2) + "\n");
  return 0;
}

HttpServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenemem: spatial-memory video world model toolkit"};
  app.require_subcommand(1);

  // retrieve
  std::string manifest, retrieve_out;
  auto* retrieve = app.add_subcommand("retrieve", "Pick reference frames for a target trajectory");
  retrieve->add_option("manifest", manifest, "JSON manifest {config, targets, candidates}")->required();
  retrieve->add_option("-o,--out", retrieve_out, "Write the result here instead of stdout");

  // synth
  uint64_t synth_seed = 1;
  int synth_samples = 4, synth_len = 24, synth_size = 128;
  std::string synth_out = "samples";
  auto* synth = app.add_subcommand("synth", "Render synthetic training samples");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--samples", synth_samples);
  synth->add_option("--video-length", synth_len);
  synth->add_option("--size", synth_size, "Square frame size");
  synth->add_option("-o,--out", synth_out);

  // train
  std::string recipe_path, ckpt_out = "model.ckpt", loss_csv;
  bool toy = false;
  auto* train = app.add_subcommand("train", "Run a staged training recipe");
  train->add_option("--recipe", recipe_path, "Recipe JSON");
  train->add_flag("--toy", toy, "Use the built-in toy recipe");
  train->add_option("-o,--out", ckpt_out, "Checkpoint path");
  train->add_option("--loss-csv", loss_csv, "Loss curve CSV (all stages)");

  // eval
  auto* eval = app.add_subcommand("eval", "Benchmark harnesses");
  eval->require_subcommand(1);
  EvalArgs closed_args, long_args;
  long_args.clips = 6;
  auto* closed = eval->add_subcommand("closed-loop", "Out-and-back revisit consistency");
  add_eval_options(closed, closed_args);
  auto* longh = eval->add_subcommand("long-horizon", "Consistency after 2, 4, ... clips");
  add_eval_options(longh, long_args);
  int density_scenes = 20, dw = 128, dh = 128, dradius = 0;
  double density_base = 0.01, dfov = 70.0;
  std::string density_out = "density";
  auto* density = eval->add_subcommand("density", "Memory voxel size sweep");
  density->add_option("--scenes", density_scenes);
  density->add_option("--base", density_base, "Smallest cube side, meters");
  density->add_option("--width", dw);
  density->add_option("--height", dh);
  density->add_option("--fov", dfov);
  density->add_option("--splat-radius", dradius, "Projection splat radius; 0 draws each point on one pixel");
  density->add_option("-o,--out", density_out);

  // session
  auto* session = app.add_subcommand("session", "Offline sessions stored as bundle files");
  session->require_subcommand(1);
  std::string svc_config, create_doc, bundle, bundle_out, request, edit_doc, clips_dir, memory_out, data_dir;
  uint64_t scenario_seed = 0;
  auto* s_create = session->add_subcommand("create", "New session bundle");
  s_create->add_option("--config", svc_config, "Service config JSON (defaults and generator)");
  s_create->add_option("--doc", create_doc, "Creation document JSON");
  s_create->add_option("--scenario-seed", scenario_seed, "Shortcut for {\"scenario_seed\": n}");
  s_create->add_option("-o,--out", bundle_out, "Bundle path")->required();
  auto* s_step = session->add_subcommand("step", "Generate the next clip");
  s_step->add_option("bundle", bundle)->required();
  s_step->add_option("--request", request, "StepRequest JSON")->required();
  s_step->add_option("--config", svc_config, "Service config JSON (generator)");
  s_step->add_option("--clips", clips_dir, "Write the clip's frames as PNGs here");
  s_step->add_option("-o,--out", bundle_out, "Updated bundle (default: in place)");
  auto* s_edit = session->add_subcommand("edit", "Apply memory edits");
  s_edit->add_option("bundle", bundle)->required();
  s_edit->add_option("--edit", edit_doc, "Edit JSON (object or array)")->required();
  s_edit->add_option("-o,--out", bundle_out, "Updated bundle (default: in place)");
  auto* s_export = session->add_subcommand("export", "Write memory, clips and a summary from a bundle");
  s_export->add_option("bundle", bundle)->required();
  s_export->add_option("--memory", memory_out, "SPCL path for the memory snapshot");
  s_export->add_option("--clips", clips_dir, "Directory for clip strips clip_<k>.png");
  auto* s_import = session->add_subcommand("import", "Validate a bundle and register it in a data directory");
  s_import->add_option("bundle", bundle)->required();
  s_import->add_option("--config", svc_config, "Service config JSON");
  s_import->add_option("--data-dir", data_dir, "Overrides the config's data directory");

  // serve
  int port = -1;
  auto* serve = app.add_subcommand("serve", "HTTP API");
  serve->add_option("--config", svc_config, "Service config JSON");
  serve->add_option("--port", port, "Overrides config and SCENEMEM_PORT");
  serve->add_option("--data-dir", data_dir, "Overrides config and SCENEMEM_DATA_DIR");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*retrieve) {
      const json m = json::parse(slurp(manifest));
      const fs::path base = fs::path(manifest).parent_path();
      RetrievalConfig cfg;
      if (m.contains("config")) {
        const json& c = m["config"];
        cfg.max_refs = c.value("max_refs", cfg.max_refs);
        cfg.stride = c.value("stride", cfg.max_refs);
        cfg.epsilon = c.value("epsilon", cfg.epsilon);
        cfg.iou_cube_side = c.value("iou_cube_side", cfg.iou_cube_side);
      }
      const auto targets = read_views(m.at("targets"), base);
      const auto cands = read_views(m.at("candidates"), base);
      const RetrievalResult r = retrieve_references_detailed(targets, cands, cfg);
      json out = {{"ids", r.ids}, {"probes", json::array()}};
      for (std::size_t i = 0; i < r.probed_targets.size(); ++i) {
        out["probes"].push_back(
            {{"target", r.probed_targets[i]}, {"candidate", r.best_candidate[i]}, {"score", r.best_score[i]}});
      }
      if (retrieve_out.empty()) {
        std::cout << out.dump(2) << '\n';
      } else {
        spill(retrieve_out, out.dump(2) + "\n");
      }
    } else if (*synth) {
      std::mt19937_64 rng(synth_seed);
      const Intrinsics intr = Intrinsics::from_fov(synth_size, synth_size, 70.0);
      for (int i = 0; i < synth_samples; ++i) {
        const SceneSpec scene = generate_scene(rng());
        const Pose start = random_start_pose(scene, rng);
        const Trajectory traj = palindromic_sweep(start, intr, random_sweep(rng), synth_len);
        const TrainingSample s = assemble_sample(scene, traj, SampleConfig{}, rng);
        char name[32];
        std::snprintf(name, sizeof name, "sample_%04d", i);
        write_sample(fs::path(synth_out) / name, s);
        std::cout << name << ": " << s.scene_cloud.size() << " scene points, " << s.references.size()
                  << " references\n";
      }
    } else if (*train) {
      if (toy == !recipe_path.empty()) throw std::invalid_argument("give exactly one of --recipe and --toy");
      const gen::Recipe recipe = toy ? gen::Recipe::toy() : gen::Recipe::from_json(slurp(recipe_path));
      std::vector<double> losses;
      const gen::RecipeResult res = gen::run_recipe(recipe, [&](int stage, int step, double loss) {
        losses.push_back(loss);
        if (step % 50 == 0) std::cout << "stage " << stage << " step " << step << " loss " << loss << std::endl;
      });
      gen::save_checkpoint(ckpt_out, res.model, json{{"recipe", json::parse(recipe.to_json())}}.dump());
      if (!loss_csv.empty()) gen::write_loss_csv(loss_csv, losses);
      std::cout << "wrote " << ckpt_out << '\n';
    } else if (*eval) {
      if (*closed) return run_eval(closed_args, false);
      if (*longh) return run_eval(long_args, true);
      if (*density) return run_density(density_scenes, density_base, dw, dh, dfov, dradius, density_out);
    } else if (*session) {
      ServiceConfig cfg = ServiceConfig::load(svc_config);
      if (*s_create) {
        std::string doc = create_doc.empty() ? "" : slurp(create_doc);
        if (doc.empty()) doc = json{{"scenario_seed", scenario_seed}}.dump();
        const fs::path base = create_doc.empty() ? fs::current_path() : fs::path(create_doc).parent_path();
        const Session s = create_session(doc, cfg, base);
        spill(bundle_out, s.export_bundle());
        std::cout << "created " << bundle_out << " with " << s.memory().cell_count() << " cells\n";
      } else if (*s_step) {
        Session s = Session::import_bundle(slurp(bundle));
        const auto g = make_generator(cfg, s);
        const auto clip = s.step(parse_step_request(slurp(request)), *g);
        if (!clips_dir.empty()) {
          fs::create_directories(clips_dir);
          for (std::size_t i = 0; i < clip.size(); ++i) {
            char name[48];
            std::snprintf(name, sizeof name, "clip%03d_frame%03zu.png", s.clip_index(), i);
            write_png(fs::path(clips_dir) / name, clip[i]);
          }
        }
        spill(bundle_out.empty() ? bundle : bundle_out, s.export_bundle());
        std::cout << "clip " << s.clip_index() << ": " << clip.size() << " frames, " << s.memory().cell_count()
                  << " cells\n";
      } else if (*s_edit) {
        Session s = Session::import_bundle(slurp(bundle));
        const json j = json::parse(slurp(edit_doc));
        if (j.is_array()) {
          for (const json& e : j) s.edit(parse_edit(e.dump()));
        } else {
          s.edit(parse_edit(j.dump()));
        }
        spill(bundle_out.empty() ? bundle : bundle_out, s.export_bundle());
        std::cout << s.memory().cell_count() << " cells\n";
      } else if (*s_export) {
        const Session s = Session::import_bundle(slurp(bundle));
        if (!memory_out.empty()) write_spcl(fs::path(memory_out), s.memory().snapshot());
        if (!clips_dir.empty()) {
          fs::create_directories(clips_dir);
          for (int k = 0; k <= s.clip_index(); ++k) {
            write_png(fs::path(clips_dir) / ("clip_" + std::to_string(k) + ".png"), clip_strip(s, k));
          }
        }
        std::cout << json{{"clip_index", s.clip_index()},
                          {"cells", s.memory().cell_count()},
                          {"frames", s.archive().size()},
                          {"checksum", s.checksum()}}
                         .dump()
                  << '\n';
      } else if (*s_import) {
        cfg.apply_env();
        if (!data_dir.empty()) cfg.data_dir = data_dir;
        SessionStore store(cfg);
        std::cout << store.import_bundle(slurp(bundle)).to_json() << '\n';
      }
    } else if (*serve) {
      ServiceConfig cfg = ServiceConfig::load(svc_config);
      cfg.apply_env();
      if (port >= 0) cfg.port = port;
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      cfg.validate();
      SessionStore store(cfg);
      HttpServer server(store);
      const int bound = server.bind(cfg.host, cfg.port);
      std::cout << "listening on " << cfg.host << ':' << bound << ", data in " << cfg.data_dir << std::endl;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.serve();
      g_server = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "scenemem: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
