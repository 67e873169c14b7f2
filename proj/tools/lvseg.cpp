// lvseg: generate phantoms, train the localizer/segmenter networks, segment,
// evaluate and render.
//
// Exit codes: 0 ok, 2 configuration, 3 I/O, 4 localization failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lvseg/error.hpp"
#include "lvseg/localizer.hpp"
#include "lvseg/metaimage.hpp"
#include "lvseg/metrics.hpp"
#include "lvseg/nn/spec.hpp"
#include "lvseg/nn/train.hpp"
#include "lvseg/nn/weights.hpp"
#include "lvseg/phantom.hpp"
#include "lvseg/render.hpp"
#include "lvseg/segmenter.hpp"
#include "lvseg/trainer.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace lvseg;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kLocalization = 4 };

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Json box_json(const BoundingBox3D& b) { return {b.lo[0], b.lo[1], b.lo[2], b.hi[0], b.hi[1], b.hi[2]}; }

std::string box_line(const BoundingBox3D& b) {
  return std::to_string(b.lo[0]) + " " + std::to_string(b.lo[1]) + " " + std::to_string(b.lo[2]) + " " +
         std::to_string(b.hi[0]) + " " + std::to_string(b.hi[1]) + " " + std::to_string(b.hi[2]) + "\n";
}

BoundingBox3D read_box(const fs::path& path) {
  std::istringstream in(read_text(path));
  BoundingBox3D b;
  for (int a = 0; a < 3; ++a) in >> b.lo[a];
  for (int a = 0; a < 3; ++a) in >> b.hi[a];
  if (!in) throw FormatError(path.string() + ": expected 6 box integers");
  return b;
}

// ---- generate ----

struct GenerateArgs {
  fs::path out;
  int n = 5;
  std::uint64_t seed = 1;
  PhantomConfig phantom;
  std::vector<int> dims{96, 96, 96};
  std::vector<double> spacing{0.9, 0.9, 0.9};
  std::vector<double> epi{17.0, 21.0}, endo{9.0, 12.0}, distractor_axes{5.0, 12.0}, lung_axes{14.0, 28.0};
  std::string label_mode = "shell";
};

void add_generate(CLI::App& app, GenerateArgs& a) {
  PhantomConfig& p = a.phantom;
  app.add_option("--out", a.out, "Output directory")->required();
  app.add_option("--n", a.n, "Number of phantoms")->capture_default_str();
  app.add_option("--seed", a.seed, "First phantom seed")->capture_default_str();
  app.add_option("--dims", a.dims, "Grid size nx,ny,nz")->expected(3)->delimiter(',')->capture_default_str();
  app.add_option("--spacing", a.spacing, "Voxel spacing in mm")->expected(3)->delimiter(',')->capture_default_str();
  app.add_option("--background", p.background)->capture_default_str();
  app.add_option("--lung", p.lung)->capture_default_str();
  app.add_option("--cavity", p.cavity)->capture_default_str();
  app.add_option("--myocardium", p.myocardium)->capture_default_str();
  app.add_option("--distractor", p.distractor)->capture_default_str();
  app.add_option("--noise_sigma", p.noise_sigma)->capture_default_str();
  app.add_option("--epi_semi_axis", a.epi, "lo,hi in mm")->expected(2)->delimiter(',')->capture_default_str();
  app.add_option("--endo_semi_axis", a.endo, "lo,hi in mm")->expected(2)->delimiter(',')->capture_default_str();
  app.add_option("--max_rotation_deg", p.max_rotation_deg)->capture_default_str();
  app.add_option("--distractors_min", p.distractors_min)->capture_default_str();
  app.add_option("--distractors_max", p.distractors_max)->capture_default_str();
  app.add_option("--distractor_semi_axis", a.distractor_axes)->expected(2)->delimiter(',')->capture_default_str();
  app.add_option("--lungs_min", p.lungs_min)->capture_default_str();
  app.add_option("--lungs_max", p.lungs_max)->capture_default_str();
  app.add_option("--lung_semi_axis", a.lung_axes)->expected(2)->delimiter(',')->capture_default_str();
  app.add_option("--label_mode", a.label_mode, "shell or shell_and_cavity")->capture_default_str();
}

int run_generate(GenerateArgs& a) {
  PhantomConfig& p = a.phantom;
  p.dims = {a.dims[0], a.dims[1], a.dims[2]};
  p.spacing = {a.spacing[0], a.spacing[1], a.spacing[2]};
  p.epi_semi_axis = {a.epi[0], a.epi[1]};
  p.endo_semi_axis = {a.endo[0], a.endo[1]};
  p.distractor_semi_axis = {a.distractor_axes[0], a.distractor_axes[1]};
  p.lung_semi_axis = {a.lung_axes[0], a.lung_axes[1]};
  p.label_mode = parse_label_mode(a.label_mode);
  if (a.n < 1) throw ConfigError("n must be >= 1");
  const fs::path manifest = generate_dataset(p, a.n, a.seed, a.out);
  std::cout << manifest.string() << "\n";
  return kOk;
}

// ---- train ----

struct TrainArgs {
  std::string role;
  fs::path manifest;
  fs::path out;
  fs::path loss_log;
  nn::TrainConfig cfg;
  int scans = 5;
  int patches_per_class = 20000;
  double window_lo = -200.0, window_hi = 800.0;
  bool augment_flips = true;
  std::string precision = "f32";
};

void add_train(CLI::App& app, TrainArgs& a) {
  app.add_option("--role", a.role, "localizer-axial | localizer-coronal | localizer-sagittal | segmenter")
      ->required()
      ->check(CLI::IsMember({"localizer-axial", "localizer-coronal", "localizer-sagittal", "segmenter"}));
  app.add_option("--manifest", a.manifest, "Dataset manifest")->required();
  app.add_option("--out", a.out, "Weight file")->required();
  app.add_option("--loss_log", a.loss_log, "CSV loss log (default: <out>.loss.csv)");
  app.add_option("--epochs", a.cfg.epochs)->capture_default_str();
  app.add_option("--batch_size", a.cfg.batch_size)->capture_default_str();
  app.add_option("--learning_rate", a.cfg.learning_rate)->capture_default_str();
  app.add_option("--momentum", a.cfg.momentum)->capture_default_str();
  app.add_option("--dropout_rate", a.cfg.dropout_rate)->capture_default_str();
  app.add_option("--seed", a.cfg.seed)->capture_default_str();
  app.add_option("--scans", a.scans, "Use the first N manifest rows (0 = all)")->capture_default_str();
  app.add_option("--patches_per_class", a.patches_per_class, "Segmenter patches per class, all scans")
      ->capture_default_str();
  app.add_option("--window_lo", a.window_lo)->capture_default_str();
  app.add_option("--window_hi", a.window_hi)->capture_default_str();
  app.add_option("--augment_flips", a.augment_flips, "Mirror localizer slices")->capture_default_str();
  app.add_option("--precision", a.precision, "f32 or f64 forward/backward arithmetic")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
}

int run_train(TrainArgs& a) {
  a.cfg.precision = a.precision == "f64" ? nn::Precision::f64 : nn::Precision::f32;
  a.cfg.validate();
  const NormalizationWindow window{a.window_lo, a.window_hi};
  window.validate();
  const auto scans = load_training_scans(a.manifest, a.scans, window);
  const fs::path log = a.loss_log.empty() ? fs::path(a.out.string() + ".loss.csv") : a.loss_log;

  std::string csv = "epoch,loss\n";
  auto on_epoch = [&](int epoch, double loss) {
    char line[64];
    std::snprintf(line, sizeof(line), "%d,%.17g\n", epoch + 1, loss);
    csv += line;
    std::cerr << a.role << " epoch " << epoch + 1 << "/" << a.cfg.epochs << " loss " << loss << "\n";
  };

  nn::TrainResult result;
  if (a.role == "segmenter") {
    const nn::NetworkSpec spec = nn::segmenter_spec(kPatchSize);
    const PatchSampleSet samples = segmenter_samples(scans, a.patches_per_class, kPatchSize, a.cfg.seed);
    std::cerr << "segmenter: " << samples.positives() << " positive and " << samples.size() - samples.positives()
              << " negative patches from " << scans.size() << " scans\n";
    result = nn::train(spec, samples, a.cfg, on_epoch);
  } else {
    const Axis axis = parse_axis(a.role.substr(std::string("localizer-").size()));
    const nn::NetworkSpec spec = nn::localizer_spec(kLocalizerInputSize);
    const auto samples = localizer_samples(scans, axis, kLocalizerInputSize, a.augment_flips);
    result = nn::train(spec, samples, a.cfg, on_epoch);
  }
  nn::save_weights(result.weights, a.out);
  write_text(log, csv);
  std::cout << a.out.string() << "\n";
  return kOk;
}

// ---- segment ----

struct SegmentArgs {
  fs::path image;
  fs::path localizer_axial, localizer_coronal, localizer_sagittal, segmenter;
  fs::path out;
  PipelineParams params;
  std::string precision = "f32";
};

void add_segment(CLI::App& app, SegmentArgs& a) {
  PipelineParams& p = a.params;
  app.add_option("--image", a.image, "Input volume (.mhd)")->required();
  app.add_option("--localizer_axial", a.localizer_axial)->required();
  app.add_option("--localizer_coronal", a.localizer_coronal)->required();
  app.add_option("--localizer_sagittal", a.localizer_sagittal)->required();
  app.add_option("--segmenter", a.segmenter)->required();
  app.add_option("--out", a.out, "Output directory")->required();
  app.add_option("--window_lo", p.window.lo)->capture_default_str();
  app.add_option("--window_hi", p.window.hi)->capture_default_str();
  app.add_option("--prob_threshold", p.fusion.prob_threshold)->capture_default_str();
  app.add_option("--smooth_window", p.fusion.smooth_window)->capture_default_str();
  app.add_option("--margin_fraction", p.fusion.margin_fraction)->capture_default_str();
  app.add_option("--sigma_mm", p.post.sigma_mm)->capture_default_str();
  app.add_option("--threshold", p.post.threshold)->capture_default_str();
  app.add_option("--connectivity", p.post.connectivity)->capture_default_str();
  app.add_option("--stride", p.classify.stride, "Voxel stride (1 = every voxel)")->capture_default_str();
  app.add_option("--batch_size", p.classify.batch_size)->capture_default_str();
  app.add_option("--precision", a.precision, "f32 or f64 inference")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
}

int run_segment(SegmentArgs& a) {
  const auto t0 = Clock::now();
  a.params.classify.precision = a.precision == "f64" ? Precision::f64 : Precision::f32;
  a.params.validate();
  PipelineModels models;
  models.localizer_spec = nn::localizer_spec(kLocalizerInputSize);
  models.segmenter_spec = nn::segmenter_spec(kPatchSize);
  models.localizer[0] = nn::load_weights(a.localizer_axial, models.localizer_spec);
  models.localizer[1] = nn::load_weights(a.localizer_coronal, models.localizer_spec);
  models.localizer[2] = nn::load_weights(a.localizer_sagittal, models.localizer_spec);
  models.segmenter = nn::load_weights(a.segmenter, models.segmenter_spec);
  const Volume3D image = read_volume(a.image);
  fs::create_directories(a.out);

  Json summary;
  summary["image"] = a.image.generic_string();
  SegmentationResult r;
  try {
    r = segment(image, models, a.params);
  } catch (const LocalizationError& e) {
    summary["status"] = "localization_failure";
    summary["failed_axis"] = e.axis();
    summary["message"] = e.what();
    write_text(a.out / "summary.json", summary.dump(2) + "\n");
    Json timing;
    timing["wall_seconds"] = seconds_since(t0);
    write_text(a.out / "timing.json", timing.dump(2) + "\n");
    throw;
  }
  write_label(r.mask, a.out / "mask.mhd");
  write_volume(r.probabilities.to_volume(), a.out / "probabilities.mhd", ElementType::met_float);
  write_text(a.out / "box.txt", box_line(r.box));

  std::size_t mask_voxels = 0;
  for (auto v : r.mask.voxels()) mask_voxels += v;
  summary["status"] = r.empty ? "empty_segmentation" : "ok";
  summary["box"] = box_json(r.box);
  summary["box_voxels"] = r.box.voxel_count();
  summary["mask_voxels"] = mask_voxels;
  summary["empty"] = r.empty;
  write_text(a.out / "summary.json", summary.dump(2) + "\n");
  Json timing;
  timing["wall_seconds"] = seconds_since(t0);
  write_text(a.out / "timing.json", timing.dump(2) + "\n");
  std::cout << "box " << r.box.to_string() << " mask_voxels " << mask_voxels << "\n";
  return kOk;
}

// ---- evaluate ----

struct EvaluateArgs {
  std::vector<fs::path> runs, preds, refs, box_files;
  std::vector<std::string> ids;
  fs::path out;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  app.add_option("--run", a.runs, "Segment output directories (mask.mhd + box.txt)");
  app.add_option("--pred", a.preds, "Predicted masks");
  app.add_option("--box_file", a.box_files, "Box files matching --pred");
  app.add_option("--ref", a.refs, "Reference labels")->required();
  app.add_option("--id", a.ids, "Scan identifiers");
  app.add_option("--out", a.out, "JSON report")->required();
}

int run_evaluate(EvaluateArgs& a) {
  std::vector<fs::path> preds = a.preds, boxes = a.box_files;
  for (const auto& r : a.runs) {
    preds.push_back(r / "mask.mhd");
    boxes.push_back(r / "box.txt");
  }
  if (preds.size() != a.refs.size() || boxes.size() != preds.size())
    throw ConfigError("got " + std::to_string(preds.size()) + " predictions, " + std::to_string(boxes.size()) +
                      " boxes and " + std::to_string(a.refs.size()) + " references");
  if (!a.ids.empty() && a.ids.size() != preds.size()) throw ConfigError("--id count does not match the scans");
  std::vector<LabelVolume> p, r;
  std::vector<BoundingBox3D> b;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p.push_back(read_label(preds[i]));
    r.push_back(read_label(a.refs[i]));
    b.push_back(read_box(boxes[i]));
    ids.push_back(a.ids.empty() ? preds[i].parent_path().filename().string() + "/" + preds[i].filename().string()
                                : a.ids[i]);
  }
  const EvaluationReport report = evaluate_dataset(p, r, b, ids);
  write_report(report, a.out);
  const auto& g = report.aggregate;
  auto fmt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("undefined"); };
  std::cout << "scans " << g.scan_count << " dice " << g.dice << " mad_mm " << fmt(g.mad_mm) << " sensitivity "
            << fmt(g.sensitivity) << " specificity " << fmt(g.specificity) << "\n";
  return kOk;
}

// ---- render ----

struct RenderArgs {
  fs::path image, mask, out;
  std::string axis = "axial";
  std::vector<int> indices;
  double window_lo = -200.0, window_hi = 800.0;
};

void add_render(CLI::App& app, RenderArgs& a) {
  app.add_option("--image", a.image, "Volume (.mhd)")->required();
  app.add_option("--mask", a.mask, "Optional mask drawn as a contour");
  app.add_option("--axis", a.axis)->check(CLI::IsMember({"axial", "coronal", "sagittal"}))->capture_default_str();
  app.add_option("--index", a.indices, "Slice index (repeatable)")->required();
  app.add_option("--out", a.out, "Output file (.pgm, or .ppm with a mask)")->required();
  app.add_option("--window_lo", a.window_lo)->capture_default_str();
  app.add_option("--window_hi", a.window_hi)->capture_default_str();
}

int run_render(RenderArgs& a) {
  const NormalizationWindow window{a.window_lo, a.window_hi};
  window.validate();
  const Volume3D image = read_volume(a.image);
  std::optional<LabelVolume> mask;
  if (!a.mask.empty()) {
    mask = read_label(a.mask);
    if (mask->dims() != image.dims()) throw ConfigError("mask grid differs from image grid");
  }
  const Axis axis = parse_axis(a.axis);
  for (int index : a.indices) {
    const int extent = image.dims()[fixed_axis(axis)];
    if (index < 0 || index >= extent)
      throw ConfigError("index " + std::to_string(index) + " out of range [0," + std::to_string(extent - 1) + "]");
  }
  for (int index : a.indices) {
    fs::path path = a.out;
    if (a.indices.size() > 1)
      path = a.out.parent_path() /
             (a.out.stem().string() + "_" + a.axis + "_" + std::to_string(index) + a.out.extension().string());
    const RgbImage img = render_slice(image, axis, index, window, mask ? &*mask : nullptr);
    if (mask)
      write_ppm(img, path);
    else
      write_pgm(img, path);
    std::cout << path.string() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage left-ventricle segmentation on synthetic cardiac phantoms"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file with [generate]/[train]/[segment]/[evaluate]/[render] sections");
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenerateArgs gen;
  TrainArgs train;
  SegmentArgs seg;
  EvaluateArgs eval;
  RenderArgs render;
  CLI::App* c_gen = app.add_subcommand("generate", "Write a phantom dataset and its manifest");
  CLI::App* c_train = app.add_subcommand("train", "Train one network role from a manifest");
  CLI::App* c_seg = app.add_subcommand("segment", "Segment one volume");
  CLI::App* c_eval = app.add_subcommand("evaluate", "Score predictions against references");
  CLI::App* c_render = app.add_subcommand("render", "Render slices with an optional mask contour");
  add_generate(*c_gen, gen);
  add_train(*c_train, train);
  add_segment(*c_seg, seg);
  add_evaluate(*c_eval, eval);
  add_render(*c_render, render);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }

  try {
    if (c_gen->parsed()) return run_generate(gen);
    if (c_train->parsed()) return run_train(train);
    if (c_seg->parsed()) return run_segment(seg);
    if (c_eval->parsed()) return run_evaluate(eval);
    if (c_render->parsed()) return run_render(render);
  } catch (const LocalizationError& e) {
    std::cerr << "localization failed (" << e.axis() << "): " << e.what() << "\n";
    return kLocalization;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const IncompatibleError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const BoundsError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const GridError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
