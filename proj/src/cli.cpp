// SPDX-License-Identifier: Apache-2.0
#include "gnelf/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "gnelf/ablate.hpp"
#include "gnelf/checkpoint.hpp"
#include "gnelf/config.hpp"
#include "gnelf/dataio.hpp"
#include "gnelf/error.hpp"
#include "gnelf/metrics.hpp"
#include "gnelf/serve.hpp"
#include "gnelf/train.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace gnelf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_seed_threads(CLI::App* app, Common& c, int default_threads) {
  c.threads = default_threads;
  app->add_option("--seed", c.seed, "Random seed (U64)");
  app->add_option("--threads", c.threads, "Worker threads; 1 is sequential and bit-reproducible")
      ->check(CLI::NonNegativeNumber);
}

void add_scale(CLI::App* app, int& scale) {
  app->add_option("--scale", scale, "Downscale factor")->check(CLI::IsMember({1, 2, 4, 8}));
}

LoadedCheckpoint open_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint " + path + " does not exist");
  return load_checkpoint(path);
}

bool is_camera_set(const std::string& data) {
  return fs::is_regular_file(data) && fs::path(data).extension() == ".json";
}

// A camera-set file has no splits; every split reads all of its frames.
dataio::SceneDataset open_split(const std::string& dir, dataio::Split split,
                                const dataio::BlenderOptions& opts) {
  if (is_camera_set(dir)) {
    try {
      return dataio::load_camera_set(dir, opts.downsample, opts.background);
    } catch (const LoadError& e) {
      throw UsageError(e.what());
    }
  }
  if (!fs::is_directory(dir)) throw UsageError("data directory " + dir + " does not exist");
  const auto file = fs::path(dir) / ("transforms_" + dataio::to_string(split) + ".json");
  if (!fs::exists(file)) {
    throw UsageError("split '" + dataio::to_string(split) + "' is absent (" + file.string() + ")");
  }
  try {
    return dataio::load_blender_dataset(dir, split, opts);
  } catch (const LoadError& e) {
    throw UsageError(e.what());
  }
}

dataio::BlenderOptions blender_options(const Model& model) {
  return {1, model.config.background, model.config.aabb};
}

geometry::Pose read_pose_file(const std::string& path) {
  const auto bytes = read_file(path);
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  for (const char* key : {"pose", "transform_matrix"}) {
    if (doc.is_object() && doc.contains(key)) {
      doc = doc[key];
      break;
    }
  }
  std::array<double, 16> rows{};
  try {
    if (doc.is_array() && doc.size() == 16) {
      for (int i = 0; i < 16; ++i) rows[i] = doc[i].get<double>();
    } else if (doc.is_array() && doc.size() == 4) {
      for (int r = 0; r < 4; ++r) {
        if (doc[r].size() != 4) throw UsageError(path + ": pose rows must hold 4 numbers");
        for (int c = 0; c < 4; ++c) rows[r * 4 + c] = doc[r][c].get<double>();
      }
    } else {
      throw UsageError(path + ": expected 16 numbers or a 4x4 matrix");
    }
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  auto pose = geometry::Pose::from_rows(rows);
  try {
    pose.validate();
  } catch (const InputDomainError& e) {
    throw UsageError(path + ": " + e.what());
  }
  return pose;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  const auto bytes = read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data;
  std::string out;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path config_path = a.common.config;
  PresetConfig cfg;
  try {
    cfg = resolve_config(a.common.config.empty() ? nullptr : &config_path, a.common.sets);
    if (a.common.seed) apply_setting(cfg, "seed", std::to_string(*a.common.seed));
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (is_camera_set(a.data) && !cfg.is_explicit("scene.mode")) cfg.mode = SceneMode::ndc_forward;
  auto train = open_split(a.data, dataio::Split::train, {cfg.downsample, cfg.background, cfg.aabb});
  if (!cfg.is_explicit("scene.aabb_min") && !cfg.is_explicit("scene.aabb_max")) cfg.aabb = train.aabb;
  if (!cfg.is_explicit("scene.background")) cfg.background = train.background;
  if (cfg.mode == SceneMode::ndc_forward && !cfg.is_explicit("scene.near") && train.near > 0.0) {
    cfg.near = train.near;
  }
  cfg.finalize();
  const dataio::BlenderOptions val_opts{cfg.downsample, cfg.background, cfg.aabb};
  std::optional<dataio::SceneDataset> val;
  for (auto split : {dataio::Split::val, dataio::Split::test}) {
    if (fs::exists(fs::path(a.data) / ("transforms_" + dataio::to_string(split) + ".json"))) {
      val = open_split(a.data, split, val_opts);
      break;
    }
  }

  const fs::path out_dir = a.out;
  const fs::path ckpt_path = out_dir / "checkpoint.gnlf";
  const fs::path log_path = out_dir / "train_log.jsonl";
  fs::create_directories(out_dir);

  std::optional<LoadedCheckpoint> resumed;
  std::vector<std::string> log_lines;
  Model model = Model::create(cfg, train.intrinsics);
  if (a.resume) {
    if (!fs::exists(ckpt_path)) throw UsageError("--resume: no checkpoint at " + ckpt_path.string());
    resumed = load_checkpoint(ckpt_path);
    if (!resumed->optimizer) throw UsageError("--resume: checkpoint carries no optimizer state");
    try {
      model = resume_model(*resumed, cfg);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    const auto done = resumed->optimizer->step;
    for (const auto& line : read_lines(log_path)) {
      const auto j = json::parse(line, nullptr, false);
      if (j.is_discarded()) continue;
      if (!j.contains("step") || j["step"].get<std::uint64_t>() <= done) log_lines.push_back(line);
    }
    log_lines.push_back(json{{"resume_from", done}}.dump());
  } else {
    log_lines.push_back(json{{"seed", cfg.seed},
                             {"preset", cfg.name},
                             {"config", json::parse(config_to_text(cfg))}}
                            .dump());
  }

  Trainer trainer(std::move(model), train, val ? &*val : nullptr, a.common.threads);
  if (resumed) trainer.restore(*resumed->optimizer);
  const auto& tc = trainer.model().config.train;
  const auto total = static_cast<std::uint64_t>(tc.steps);

  auto save = [&] {
    const auto state = trainer.optimizer_state();
    save_checkpoint(trainer.model(), ckpt_path, Precision::f32, &state);
    write_file_atomic(log_path, join_lines(log_lines));
  };

  try {
    while (trainer.steps_done() < total) {
      const TrainRecord rec = trainer.step();
      const bool log_this = tc.log_every <= 1 || rec.step % tc.log_every == 0 || rec.step == total ||
                            rec.val_psnr.has_value();
      if (log_this) {
        log_lines.push_back(to_json_line(rec));
        err << "step " << rec.step << " loss " << std::setprecision(6) << rec.loss;
        if (rec.val_psnr) err << " val_psnr " << std::fixed << std::setprecision(2) << *rec.val_psnr << std::defaultfloat;
        err << "\n";
      }
      if (tc.checkpoint_every > 0 && rec.step % tc.checkpoint_every == 0) save();
    }
  } catch (const DivergenceError& e) {
    save();
    err << "error: training diverged: " << e.what() << "; last good state saved to "
        << ckpt_path.string() << "\n";
    return kExitFailure;
  }
  save();
  out << "trained " << trainer.steps_done() << " steps; checkpoint " << ckpt_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  Common common;
  std::string checkpoint;
  std::string out;
  std::string pose;
  double azimuth = 0.0;
  double elevation = 30.0;
  double radius = 4.0;
  int scale = 1;
};

int cmd_render(const RenderArgs& a, std::ostream& out, std::ostream&) {
  const auto ckpt = open_checkpoint(a.checkpoint);
  const geometry::Pose pose = a.pose.empty()
                                  ? geometry::orbit_pose({a.azimuth, a.elevation, a.radius, {}})
                                  : read_pose_file(a.pose);
  const auto& cam = ckpt.model.intrinsics;
  if (cam.width % a.scale != 0 || cam.height % a.scale != 0) {
    throw UsageError("--scale " + std::to_string(a.scale) + " does not divide " +
                     std::to_string(cam.width) + "x" + std::to_string(cam.height));
  }
  RenderOptions opts;
  opts.threads = a.common.threads;
  const Image img = render_image(ckpt.model, cam, pose, a.scale, opts);
  write_png(img, a.out);
  out << "wrote " << a.out << " (" << img.width << "x" << img.height << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  int scale = 1;
  bool json_out = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  dataio::Split split;
  try {
    split = dataio::parse_split(a.split);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto ckpt = open_checkpoint(a.checkpoint);
  const auto data = open_split(a.data, split, blender_options(ckpt.model));
  if (data.frames.empty()) throw UsageError("split '" + a.split + "' is empty");
  RenderOptions opts;
  opts.threads = a.common.threads;
  EvalReport report;
  try {
    report = evaluate(ckpt.model, data, a.scale, opts);
  } catch (const InputDomainError& e) {
    throw UsageError(e.what());
  }
  if (a.json_out) {
    for (const auto& v : report.views) {
      out << json{{"view", v.index}, {"psnr", v.psnr}, {"ssim", v.ssim}}.dump() << "\n";
    }
    out << json{{"mean_psnr", report.mean_psnr}, {"mean_ssim", report.mean_ssim},
                {"views", report.views.size()}}
               .dump()
        << "\n";
  } else {
    out << std::fixed;
    for (const auto& v : report.views) {
      out << "view " << v.index << " psnr " << std::setprecision(4) << v.psnr << " ssim "
          << v.ssim << "\n";
    }
    out << "mean psnr " << report.mean_psnr << " ssim " << report.mean_ssim << " over "
        << report.views.size() << " views\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::vector<int> ks;
  int scale = 1;
  bool json_out = false;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream&) {
  dataio::Split split;
  try {
    split = dataio::parse_split(a.split);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto ckpt = open_checkpoint(a.checkpoint);
  const int levels = ckpt.model.config.grid.levels;
  std::vector<int> ks = a.ks.empty() ? std::vector<int>{0, levels / 2, levels} : a.ks;
  for (int k : ks) {
    if (k < 0 || k > levels) {
      throw UsageError("k = " + std::to_string(k) + " outside [0, " + std::to_string(levels) + "]");
    }
  }
  const auto data = open_split(a.data, split, blender_options(ckpt.model));
  if (data.frames.empty()) throw UsageError("split '" + a.split + "' is empty");
  RenderOptions opts;
  opts.threads = a.common.threads;
  const auto rows = ablate_masking(ckpt.model, data, ks, a.scale, opts);
  if (a.json_out) {
    for (const auto& r : rows) {
      out << json{{"k", r.k}, {"psnr", r.psnr}, {"similarity", r.similarity}}.dump() << "\n";
    }
    return kExitOk;
  }
  out << std::left << std::setw(12) << "mask" << std::setw(12) << "PSNR(dB)" << "similarity\n";
  out << std::fixed;
  for (const auto& r : rows) {
    const std::string label = r.k == 0 ? "w/o mask" : "top-" + std::to_string(r.k);
    out << std::setw(12) << label << std::setw(12) << std::setprecision(2) << r.psnr
        << std::setprecision(4) << r.similarity << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- gen-toy

struct GenToyArgs {
  Common common;
  std::string out;
  int primitives = 3;
  std::string kind = "mixed";
  int views = 20;
  int held_out = 4;
  int width = 64;
  int height = 64;
  std::vector<float> background{0.0f, 0.0f, 0.0f};
};

int cmd_gen_toy(const GenToyArgs& a, std::ostream& out, std::ostream&) {
  dataio::ToySceneSpec spec;
  spec.seed = a.common.seed.value_or(0);
  spec.primitive_count = a.primitives;
  if (a.kind == "box") spec.kind = dataio::PrimitiveKind::box;
  if (a.kind == "sphere") spec.kind = dataio::PrimitiveKind::sphere;
  spec.background = {a.background[0], a.background[1], a.background[2]};
  dataio::ToyViews tv;
  tv.count = a.views;
  tv.width = a.width;
  tv.height = a.height;
  tv.seed = detail::mix_seed(spec.seed, 100);
  try {
    dataio::write_blender_dataset(dataio::gen_toy_scene(spec, tv), a.out);
    if (a.held_out > 0) {
      for (auto [split, stream] : {std::pair{dataio::Split::val, 101}, std::pair{dataio::Split::test, 102}}) {
        dataio::ToyViews hv = tv;
        hv.count = a.held_out;
        hv.azimuth_phase = 0.5;
        hv.seed = detail::mix_seed(spec.seed, stream);
        hv.split = split;
        dataio::write_blender_dataset(dataio::gen_toy_scene(spec, hv), a.out);
      }
    }
  } catch (const InputDomainError& e) {
    throw UsageError(e.what());
  }
  out << "wrote toy scene to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- export

struct ExportArgs {
  Common common;
  std::string checkpoint;
  std::string out;
  std::string precision = "f16";
};

int cmd_export(const ExportArgs& a, std::ostream& out, std::ostream&) {
  const auto ckpt = open_checkpoint(a.checkpoint);
  const Precision p = a.precision == "f16" ? Precision::f16 : Precision::f32;
  save_checkpoint(ckpt.model, a.out, p);
  out << "wrote " << a.out << " (" << fs::file_size(a.out) << " bytes, "
      << ckpt.model.parameter_count() << " parameters)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  Common common;
  std::string checkpoint;
  std::string host = "127.0.0.1";
  int port = 7860;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream&) {
  if (!fs::exists(a.checkpoint)) throw UsageError("checkpoint " + a.checkpoint + " does not exist");
  const auto bytes = read_file(a.checkpoint);
  auto ckpt = decode_checkpoint(bytes);
  ServeOptions opts;
  opts.host = a.host;
  opts.port = a.port;
  opts.threads = a.common.threads;
  RenderService service(std::move(ckpt.model), fnv1a_hex(bytes), opts);
  HttpServer server(service);
  const int port = server.bind(a.host, a.port);
  out << "serving " << service.model().config.name << " on http://" << a.host << ":" << port << "\n"
      << std::flush;
  server.run();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural light field trainer and renderer", "gnelf"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gnelf 0.1.0");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Fit a model to a Blender-format scene");
  t->add_option("--data", train.data, "Scene directory, or a camera-set JSON file")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--config", train.common.config, "JSON config file");
  t->add_option("--set", train.common.sets, "Override, key=value (repeatable)");
  t->add_flag("--resume", train.resume, "Continue from <out>/checkpoint.gnlf");
  add_seed_threads(t, train.common, 1);

  RenderArgs render;
  auto* r = app.add_subcommand("render", "Render one view to a PNG");
  r->add_option("--checkpoint", render.checkpoint)->required();
  r->add_option("--out", render.out, "PNG path")->required();
  auto* pose_opt = r->add_option("--pose", render.pose, "JSON file with a camera-to-world matrix");
  r->add_option("--azimuth", render.azimuth, "Orbit azimuth in degrees")->excludes(pose_opt);
  r->add_option("--elevation", render.elevation, "Orbit elevation in degrees")->excludes(pose_opt);
  r->add_option("--radius", render.radius, "Orbit radius")->excludes(pose_opt)->check(CLI::PositiveNumber);
  add_scale(r, render.scale);
  add_seed_threads(r, render.common, 0);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "PSNR and SSIM on a split");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--data", eval.data)->required();
  e->add_option("--split", eval.split, "train, val or test")->capture_default_str();
  e->add_flag("--json", eval.json_out, "One JSON record per view");
  add_scale(e, eval.scale);
  add_seed_threads(e, eval.common, 0);

  AblateArgs ablate;
  auto* b = app.add_subcommand("ablate", "Mask the finest grid levels and measure the damage");
  b->add_option("--checkpoint", ablate.checkpoint)->required();
  b->add_option("--data", ablate.data)->required();
  b->add_option("--split", ablate.split, "train, val or test")->capture_default_str();
  b->add_option("--ks", ablate.ks, "Mask depths, e.g. 0,4,8 (default 0,L/2,L)")->delimiter(',');
  b->add_flag("--json", ablate.json_out, "One JSON record per row");
  add_scale(b, ablate.scale);
  add_seed_threads(b, ablate.common, 0);

  GenToyArgs toy;
  auto* g = app.add_subcommand("gen-toy", "Write a procedural scene in the Blender layout");
  g->add_option("--out", toy.out, "Output directory")->required();
  g->add_option("--primitives", toy.primitives, "Primitive count")->capture_default_str()->check(CLI::NonNegativeNumber);
  g->add_option("--kind", toy.kind, "box, sphere or mixed")->capture_default_str()->check(CLI::IsMember({"box", "sphere", "mixed"}));
  g->add_option("--views", toy.views, "Training views")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--held-out", toy.held_out, "Views in each of val and test")->capture_default_str()->check(CLI::NonNegativeNumber);
  g->add_option("--width", toy.width, "Image width")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--height", toy.height, "Image height")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--background", toy.background, "Background r g b in [0,1]")->expected(3)->check(CLI::Range(0.0, 1.0));
  add_seed_threads(g, toy.common, 0);

  ExportArgs exp;
  auto* x = app.add_subcommand("export", "Re-encode a checkpoint, e.g. as f16 for deployment");
  x->add_option("--checkpoint", exp.checkpoint)->required();
  x->add_option("--out", exp.out)->required();
  x->add_option("--precision", exp.precision, "f16 or f32")->capture_default_str()->check(CLI::IsMember({"f16", "f32"}));
  add_seed_threads(x, exp.common, 0);

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "HTTP render service");
  s->add_option("--checkpoint", serve.checkpoint)->required();
  s->add_option("--port", serve.port, "TCP port")->capture_default_str()->check(CLI::Range(0, 65535));
  s->add_option("--host", serve.host, "Bind address")->capture_default_str();
  add_seed_threads(s, serve.common, 0);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train, out, err);
    if (r->parsed()) return cmd_render(render, out, err);
    if (e->parsed()) return cmd_eval(eval, out, err);
    if (b->parsed()) return cmd_ablate(ablate, out, err);
    if (g->parsed()) return cmd_gen_toy(toy, out, err);
    if (x->parsed()) return cmd_export(exp, out, err);
    if (s->parsed()) return cmd_serve(serve, out, err);
  } catch (const UsageError& ue) {
    err << "usage error: " << ue.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& ce) {
    err << "usage error: " << ce.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace gnelf
