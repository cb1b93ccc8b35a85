// Batch command-line front end for the rsfuse pipeline.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsfuse/error.hpp"
#include "rsfuse/fusion.hpp"
#include "rsfuse/gyro_field.hpp"
#include "rsfuse/homography_fit.hpp"
#include "rsfuse/io.hpp"
#include "rsfuse/metrics.hpp"
#include "rsfuse/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rsfuse;

namespace {

constexpr const char* kVersion = "rsfuse 0.1.0";
constexpr const char* kConfigEnv = "RSFUSE_CONFIG";

struct Global {
  std::string config_path;
  std::string out_dir = ".";
  int jobs = 1;
};

ProjectConfig require_config(const Global& g) {
  std::string path = g.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnv)) path = env;
  }
  if (path.empty())
    throw_validation("no config: pass --config or set " + std::string(kConfigEnv));
  return read_config(read_file_text(path));
}

void ensure_out_dir(const Global& g) {
  std::error_code ec;
  fs::create_directories(g.out_dir, ec);
  if (ec) throw_validation("cannot create output directory " + g.out_dir);
}

/// Writes manifest.json next to the outputs. `args` is the original command
/// line minus --jobs, so replaying it reproduces the outputs byte for byte.
void write_manifest(const Global& g, const std::string& subcommand,
                    const std::vector<std::string>& args, const json& inputs,
                    std::vector<std::string> outputs,
                    const std::string& fingerprint) {
  std::sort(outputs.begin(), outputs.end());
  json m;
  m["version"] = kVersion;
  m["subcommand"] = subcommand;
  m["args"] = args;
  m["config"] = g.config_path;
  m["config_fingerprint"] = fingerprint;
  m["out_dir"] = g.out_dir;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  write_file_text((fs::path(g.out_dir) / "manifest.json").string(),
                  m.dump(2) + "\n");
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  std::vector<std::thread> workers;
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (err) std::rethrow_exception(err);
}

std::vector<std::pair<int, int>> select_pairs(const FrameIndex& index,
                                              const std::vector<std::string>& specs) {
  std::vector<std::pair<int, int>> pairs;
  if (specs.empty()) {
    for (std::size_t i = 0; i + 1 < index.frames.size(); ++i)
      pairs.emplace_back(static_cast<int>(i), static_cast<int>(i + 1));
    return pairs;
  }
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
      throw_validation("bad --pair '" + s + "': expected A:B frame ids");
    const int ida = std::stoi(s.substr(0, colon));
    const int idb = std::stoi(s.substr(colon + 1));
    int ia = -1, ib = -1;
    for (std::size_t i = 0; i < index.frames.size(); ++i) {
      if (index.frames[i].id == ida) ia = static_cast<int>(i);
      if (index.frames[i].id == idb) ib = static_cast<int>(i);
    }
    if (ia < 0 || ib < 0 || ia == ib)
      throw_validation("bad --pair '" + s + "': ids not in frame index");
    pairs.emplace_back(ia, ib);
  }
  return pairs;
}

double pair_period_ns(const FrameIndex& index, int ia, int ib) {
  return static_cast<double>(index.frames[ib].timestamp_ns -
                             index.frames[ia].timestamp_ns) /
         (ib - ia);
}

HomographyArray gyro_array_for_pair(const ProjectConfig& cfg, const GyroLog& log,
                                    const FrameIndex& index, int ia, int ib,
                                    int width, int height) {
  CameraIntrinsics k = cfg.intrinsics;
  k.width = width;
  k.height = height;
  return row_patch_homographies(
      k, log.samples, index.frames[ia].timestamp_ns + cfg.time_offset_ns,
      index.frames[ib].timestamp_ns + cfg.time_offset_ns,
      pair_period_ns(index, ia, ib), cfg.rolling_shutter, cfg.axis_remap);
}

std::string pair_tag(const FrameIndex& index, int ia, int ib) {
  return std::to_string(index.frames[ia].id) + "_" +
         std::to_string(index.frames[ib].id);
}

Grid load_frame(const std::string& index_path, const FrameEntry& e) {
  fs::path p(e.path);
  if (p.is_relative()) p = fs::path(index_path).parent_path() / p;
  return load_image_gray(p.string());
}

// ---------------------------------------------------------------------------

int cmd_synth(const Global& g, const std::string& spec_path,
              const std::vector<std::string>& args) {
  const SynthSpec spec = read_synth_spec(read_file_text(spec_path));
  const SynthProject proj = synth_sequence(spec);
  ensure_out_dir(g);
  const fs::path out(g.out_dir);
  std::vector<std::string> outputs;
  auto emit = [&](const std::string& name) {
    outputs.push_back(name);
    return (out / name).string();
  };

  for (std::size_t f = 0; f < proj.images.size(); ++f)
    save_image_gray(emit(proj.frames.frames[f].path), proj.images[f]);
  write_file_text(emit("gyro.csv"), write_gyro_log(proj.gyro));
  write_file_text(emit("frames.csv"), write_frame_index(proj.frames));
  for (std::size_t i = 0; i + 1 < proj.images.size(); ++i) {
    const std::string tag = pair_tag(proj.frames, static_cast<int>(i),
                                     static_cast<int>(i + 1));
    write_file_bytes(emit("gt_flow_" + tag + ".flo"),
                     write_flo(proj.gt_flow[i]));
    write_file_text(emit("gt_pairs_" + tag + ".txt"),
                    write_correspondences(proj.gt_pairs[i]));
    write_file_text(emit("gt_homography_" + tag + ".json"),
                    write_homography_array(proj.gt_homography[i]));
  }
  write_file_text(emit("synth_spec.json"), write_synth_spec(spec));
  {
    // companion pipeline config so the project is directly consumable
    ProjectConfig cfg;
    cfg.intrinsics = spec.intrinsics;
    cfg.rolling_shutter = spec.rolling_shutter;
    write_file_text(emit("config.json"), write_config(cfg));
  }
  for (const auto& w : proj.warnings) std::cerr << "warning: " << w << "\n";

  write_manifest(g, "synth", args, {{"spec", spec_path}}, outputs, "");
  return 0;
}

int cmd_gyro2field(const Global& g, const std::string& gyro_path,
                   const std::string& frames_path,
                   const std::vector<std::string>& pair_specs,
                   const std::vector<std::string>& args) {
  const ProjectConfig cfg = require_config(g);
  const GyroLog log = parse_gyro_log(read_file_text(gyro_path));
  const FrameIndex index = parse_frame_index(read_file_text(frames_path));
  const auto pairs = select_pairs(index, pair_specs);
  ensure_out_dir(g);

  std::vector<std::string> outputs(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), g.jobs, [&](int i) {
    const auto [ia, ib] = pairs[i];
    const HomographyArray arr =
        gyro_array_for_pair(cfg, log, index, ia, ib, cfg.intrinsics.width,
                            cfg.intrinsics.height);
    const FlowField f = homography_array_to_field(arr, cfg.intrinsics,
                                                  cfg.intrinsics.width,
                                                  cfg.intrinsics.height);
    const std::string name = "gyro_" + pair_tag(index, ia, ib) + ".flo";
    write_file_bytes((fs::path(g.out_dir) / name).string(), write_flo(f));
    outputs[i] = name;
  });

  write_manifest(g, "gyro2field", args,
                 {{"gyro", gyro_path}, {"frames", frames_path}}, outputs,
                 config_fingerprint(cfg));
  return 0;
}

int cmd_fuse(const Global& g, const std::string& gyro_path,
             const std::string& frames_path,
             const std::vector<std::string>& pair_specs,
             const std::vector<std::string>& args) {
  const ProjectConfig cfg = require_config(g);
  const GyroLog log = parse_gyro_log(read_file_text(gyro_path));
  const FrameIndex index = parse_frame_index(read_file_text(frames_path));
  const auto pairs = select_pairs(index, pair_specs);
  ensure_out_dir(g);

  std::mutex outputs_mutex;
  std::vector<std::string> outputs;
  parallel_for(static_cast<int>(pairs.size()), g.jobs, [&](int i) {
    const auto [ia, ib] = pairs[i];
    Grid img_a = load_frame(frames_path, index.frames[ia]);
    Grid img_b = load_frame(frames_path, index.frames[ib]);
    const int w = static_cast<int>(img_a.cols());
    const int h = static_cast<int>(img_a.rows());
    if (img_b.cols() != w || img_b.rows() != h)
      throw_validation("fuse: frame pair " + pair_tag(index, ia, ib) +
                       " has mismatched dimensions");

    const int multiple = 1 << (cfg.pyramid_levels - 1);
    const bool padded = (w % multiple != 0) || (h % multiple != 0);
    if (padded) {
      img_a = pad_to_multiple(img_a, multiple);
      img_b = pad_to_multiple(img_b, multiple);
      std::cerr << "fuse: pair " << pair_tag(index, ia, ib) << " padded from "
                << w << "x" << h << " to " << img_a.cols() << "x"
                << img_a.rows() << "\n";
    }
    const int pw = static_cast<int>(img_a.cols());
    const int ph = static_cast<int>(img_a.rows());

    const HomographyArray arr =
        gyro_array_for_pair(cfg, log, index, ia, ib, pw, ph);
    CameraIntrinsics k = cfg.intrinsics;
    k.width = pw;
    k.height = ph;
    const PyramidResult res =
        run_fusion_pyramid(img_a, img_b, arr, k, cfg.beta, cfg.pyramid_levels,
                           cfg.residual_flow);

    const std::string tag = pair_tag(index, ia, ib);
    std::vector<std::string> local;
    const FlowField fused =
        padded ? crop_field(res.flow, w, h) : res.flow;
    local.push_back("fused_" + tag + ".flo");
    write_file_bytes((fs::path(g.out_dir) / local.back()).string(),
                     write_flo(fused));
    for (std::size_t l = 0; l < res.maps.size(); ++l) {
      local.push_back("map_" + tag + "_l" + std::to_string(l + 1) + ".pgm");
      save_image_gray((fs::path(g.out_dir) / local.back()).string(),
                      res.maps[l].m.min(1.0).max(0.0));
    }
    std::lock_guard<std::mutex> lock(outputs_mutex);
    outputs.insert(outputs.end(), local.begin(), local.end());
  });

  write_manifest(g, "fuse", args,
                 {{"gyro", gyro_path}, {"frames", frames_path}}, outputs,
                 config_fingerprint(cfg));
  return 0;
}

int cmd_fit_homo(const Global& g, const std::string& flow_path,
                 const std::string& map_path, const std::string& gyro_arr_path,
                 const std::vector<std::string>& args) {
  const ProjectConfig cfg = require_config(g);
  const FloData flo = read_flo(read_file_bytes(flow_path));
  const HomographyArray gyro =
      read_homography_array(read_file_text(gyro_arr_path));
  if (flo.flow.width() != gyro.width || flo.flow.height() != gyro.height)
    throw_validation("fit-homo: flow " + flow_path +
                     " and gyro array dimensions disagree");

  FusionMap m;
  m.m = load_image_gray(map_path);
  if (static_cast<int>(m.m.cols()) != flo.flow.width() ||
      static_cast<int>(m.m.rows()) != flo.flow.height())
    throw_validation("fit-homo: map " + map_path + " dimensions disagree");

  RsFitReport report;
  const HomographyArray fitted =
      fit_rs_homography_array(flo.flow, m, gyro, cfg.lambda, &report);
  if (report.inherited_patches > 0)
    std::cerr << "fit-homo: " << report.inherited_patches
              << " patch(es) had < 4 effective points and inherited the gyro "
                 "homography\n";

  ensure_out_dir(g);
  const std::string name = "fitted_homography.json";
  write_file_text((fs::path(g.out_dir) / name).string(),
                  write_homography_array(fitted));
  write_manifest(g, "fit-homo", args,
                 {{"flow", flow_path}, {"map", map_path}, {"gyro", gyro_arr_path}},
                 {name}, config_fingerprint(cfg));
  return 0;
}

int cmd_eval(const Global& g, const std::string& est_path,
             const std::string& gt_path, const std::string& est_homo_path,
             const std::string& gt_pairs_path,
             const std::vector<std::string>& args) {
  const FloData est = read_flo(read_file_bytes(est_path));
  const FloData gt = read_flo(read_file_bytes(gt_path));
  if (est.flow.width() != gt.flow.width() ||
      est.flow.height() != gt.flow.height())
    throw_validation("eval: " + est_path + " and " + gt_path +
                     " have mismatched dimensions");

  EvalReport report;
  const MaskGrid valid = est.valid && gt.valid;
  report.aepe = aepe(est.flow, gt.flow, valid);
  for (const double tau : {1.0, 3.0, 5.0})
    report.pck[tau] = pck(est.flow, gt.flow, valid, tau);
  report.count = valid.count();
  if (!est_homo_path.empty()) {
    if (gt_pairs_path.empty())
      throw_validation("eval: --est-homo requires --gt-pairs");
    const HomographyArray arr =
        read_homography_array(read_file_text(est_homo_path));
    const auto pairs = read_correspondences(read_file_text(gt_pairs_path));
    report.pme = pme(arr, pairs, &report.pme_excluded);
  }
  if (!g.config_path.empty() || std::getenv(kConfigEnv))
    report.config_fingerprint = config_fingerprint(require_config(g));

  ensure_out_dir(g);
  write_file_text((fs::path(g.out_dir) / "report.txt").string(),
                  write_report_text(report));
  write_file_text((fs::path(g.out_dir) / "report.json").string(),
                  write_report_json(report));
  std::cout << write_report_text(report);

  json inputs = {{"est", est_path}, {"gt", gt_path}};
  if (!est_homo_path.empty()) {
    inputs["est_homo"] = est_homo_path;
    inputs["gt_pairs"] = gt_pairs_path;
  }
  write_manifest(g, "eval", args, inputs, {"report.txt", "report.json"},
                 report.config_fingerprint);
  return 0;
}

int cmd_viz(const Global& g, const std::string& flow_path,
            const std::string& gt_path, const std::string& img_a_path,
            const std::string& img_b_path,
            const std::vector<std::string>& args) {
  const FloData flo = read_flo(read_file_bytes(flow_path));
  ensure_out_dir(g);
  std::vector<std::string> outputs;
  auto emit = [&](const std::string& name) {
    outputs.push_back(name);
    return (fs::path(g.out_dir) / name).string();
  };

  save_image_rgb(emit("flow_color.ppm"), flow_to_color(flo.flow));
  json inputs = {{"flow", flow_path}};

  if (!gt_path.empty()) {
    const FloData gt = read_flo(read_file_bytes(gt_path));
    if (gt.flow.width() != flo.flow.width() ||
        gt.flow.height() != flo.flow.height())
      throw_validation("viz: " + flow_path + " and " + gt_path +
                       " have mismatched dimensions");
    Grid err = error_heatmap(flo.flow, gt.flow);
    const double peak = err.maxCoeff();
    if (peak > 0) err /= peak;
    save_image_gray(emit("error_heatmap.pgm"), err);
    inputs["gt"] = gt_path;
  }

  if (!img_a_path.empty()) {
    if (img_b_path.empty()) throw_validation("viz: --image-a requires --image-b");
    const Grid img_a = load_image_gray(img_a_path);
    const Grid img_b = load_image_gray(img_b_path);
    if (img_a.cols() != flo.flow.width() || img_a.rows() != flo.flow.height() ||
        img_b.cols() != img_a.cols() || img_b.rows() != img_a.rows())
      throw_validation("viz: image dimensions do not match " + flow_path);
    // darker means better alignment
    const WarpResult warped = warp_image(img_b, flo.flow);
    save_image_gray(emit("warp_overlay.pgm"),
                    (warped.image - img_a).abs().min(1.0));
    inputs["image_a"] = img_a_path;
    inputs["image_b"] = img_b_path;
  }

  write_manifest(g, "viz", args, inputs, outputs, "");
  return 0;
}

/// Original argv with any --jobs setting stripped; replaying these arguments
/// must give identical bytes regardless of the worker count.
std::vector<std::string> manifest_args(int argc, char** argv) {
  std::vector<std::string> out;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--jobs" || a == "-j") {
      ++i;
      continue;
    }
    if (a.rfind("--jobs=", 0) == 0) continue;
    out.push_back(a);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gyro-guided rolling-shutter flow toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Global g;
  app.add_option("--config", g.config_path,
                 "Project config path (default: $" + std::string(kConfigEnv) + ")");
  app.add_option("--jobs,-j", g.jobs, "Worker threads across frame pairs")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", g.out_dir, "Output directory");

  std::string spec_path, gyro_path, frames_path;
  std::string flow_path, map_path, gyro_arr_path;
  std::string est_path, gt_path, est_homo_path, gt_pairs_path;
  std::string img_a_path, img_b_path;
  std::vector<std::string> pair_specs;

  CLI::App* synth = app.add_subcommand("synth", "Render a synthetic project");
  synth->fallthrough();
  synth->add_option("spec", spec_path, "Synth spec JSON")->required();

  CLI::App* g2f = app.add_subcommand("gyro2field", "Rasterize gyro flow fields");
  g2f->fallthrough();
  g2f->add_option("--gyro", gyro_path, "Gyro log")->required();
  g2f->add_option("--frames", frames_path, "Frame index")->required();
  g2f->add_option("--pair", pair_specs, "Frame id pair A:B (default: consecutive)");

  CLI::App* fuse_cmd = app.add_subcommand("fuse", "Fused flow via the pyramid");
  fuse_cmd->fallthrough();
  fuse_cmd->add_option("--gyro", gyro_path, "Gyro log")->required();
  fuse_cmd->add_option("--frames", frames_path, "Frame index")->required();
  fuse_cmd->add_option("--pair", pair_specs, "Frame id pair A:B (default: consecutive)");

  CLI::App* fit = app.add_subcommand("fit-homo", "Fit a homography array to flow");
  fit->fallthrough();
  fit->add_option("--flow", flow_path, "Fused flow (.flo)")->required();
  fit->add_option("--map", map_path, "Fusion map (.pgm)")->required();
  fit->add_option("--gyro-array", gyro_arr_path, "Gyro homography array (.json)")
      ->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate flow against GT");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--est", est_path, "Estimated flow (.flo)")->required();
  eval_cmd->add_option("--gt", gt_path, "Ground-truth flow (.flo)")->required();
  eval_cmd->add_option("--est-homo", est_homo_path,
                       "Estimated homography array (.json)");
  eval_cmd->add_option("--gt-pairs", gt_pairs_path,
                       "Ground-truth correspondences (.txt)");

  CLI::App* viz = app.add_subcommand("viz", "Render flow visualizations");
  viz->fallthrough();
  viz->add_option("--flow", flow_path, "Flow (.flo)")->required();
  viz->add_option("--gt", gt_path, "Ground-truth flow for the error heatmap");
  viz->add_option("--image-a", img_a_path, "First frame");
  viz->add_option("--image-b", img_b_path, "Second frame");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::vector<std::string> args = manifest_args(argc, argv);
  try {
    if (synth->parsed()) return cmd_synth(g, spec_path, args);
    if (g2f->parsed())
      return cmd_gyro2field(g, gyro_path, frames_path, pair_specs, args);
    if (fuse_cmd->parsed())
      return cmd_fuse(g, gyro_path, frames_path, pair_specs, args);
    if (fit->parsed())
      return cmd_fit_homo(g, flow_path, map_path, gyro_arr_path, args);
    if (eval_cmd->parsed())
      return cmd_eval(g, est_path, gt_path, est_homo_path, gt_pairs_path, args);
    if (viz->parsed())
      return cmd_viz(g, flow_path, gt_path, img_a_path, img_b_path, args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Validation ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
