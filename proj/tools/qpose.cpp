// qpose: dataset generation, 1D training, and pose-landscape analysis.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "qp/analysis.hpp"
#include "qp/checkpoint.hpp"
#include "qp/csv.hpp"
#include "qp/image_io.hpp"
#include "qp/scene1d.hpp"
#include "qp/scene3d.hpp"
#include "qp/train1d.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kBadArgument = 3,
  kIo = 4,
  kFormat = 5,
  kNumeric = 6,
  kValidation = 7,
};

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success, all artifacts written and validated\n"
    "  1  internal error\n"
    "  2  usage error (unknown flag, missing or malformed flag value)\n"
    "  3  invalid argument (value out of range, inconsistent settings)\n"
    "  4  file cannot be opened, read or written\n"
    "  5  malformed input file (bad magic, truncated, bad CSV)\n"
    "  6  non-finite value during computation\n"
    "  7  written artifact failed validation\n";

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Artifact { dataset, checkpoint, csv, ppm, pgm, pbm, mimg, text };

// Re-reads an artifact and checks its format magic / structure.
void validate_artifact(const fs::path& p, Artifact kind) {
  try {
    switch (kind) {
      case Artifact::dataset: qp::load_dataset(p); break;
      case Artifact::checkpoint: qp::ad::load_checkpoint(p); break;
      case Artifact::csv: qp::csv::read(p); break;
      case Artifact::ppm: qp::read_ppm(p); break;
      case Artifact::pgm: qp::read_pgm(p); break;
      case Artifact::pbm: qp::read_pbm(p, nullptr, nullptr); break;
      case Artifact::mimg: qp::load_mimg(p); break;
      case Artifact::text:
        if (!fs::is_regular_file(p)) throw qp::IoError("missing");
        break;
    }
  } catch (const qp::Error& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

// Collects outputs and writes the run manifest.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)),
        start_(std::chrono::steady_clock::now()) {}

  void add_output(const fs::path& p, Artifact kind) {
    outputs_.push_back(p.string());
    kinds_.push_back(kind);
  }
  void add_seed(std::uint64_t s) { seeds_.push_back(s); }
  void record_flags(const CLI::App& sub) {
    for (const CLI::Option* opt : sub.get_options()) {
      if (opt->get_name() == "--help") continue;
      const auto& res = opt->results();
      flags_[opt->get_name()] = res.empty() ? opt->get_default_str() : CLI::detail::join(res, " ");
    }
  }

  void write(const fs::path& path) const {
    json j;
    j["tool"] = "qpose";
    j["version"] = kVersion;
    j["command"] = command_;
    j["argv"] = argv_;
    j["flags"] = flags_;
    j["seeds"] = seeds_;
    j["outputs"] = outputs_;
    j["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw qp::IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw qp::IoError("failed writing " + path.string());
  }

  void validate() const {
    for (std::size_t i = 0; i < outputs_.size(); ++i) validate_artifact(outputs_[i], kinds_[i]);
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::map<std::string, std::string> flags_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::string> outputs_;
  std::vector<Artifact> kinds_;
  std::chrono::steady_clock::time_point start_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw qp::IoError("cannot create directory " + dir.string());
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw qp::IoError("no such file: " + p.string());
}

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(qp::csv::parse_number(cell));
    } catch (const qp::FormatError&) {
      throw qp::InvalidArgument("expected a comma-separated list of numbers, got '" + text + "'");
    }
  }
  if (out.empty()) throw qp::InvalidArgument("empty list '" + text + "'");
  return out;
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_reals(text)) {
    if (v < 0 || v != std::floor(v)) throw qp::InvalidArgument("expected non-negative integers in '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// "3..7" (inclusive) or "1,4,9".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  const auto dots = text.find("..");
  std::vector<std::uint64_t> out;
  if (dots != std::string::npos) {
    const auto lo = parse_counts(text.substr(0, dots));
    const auto hi = parse_counts(text.substr(dots + 2));
    if (lo.size() != 1 || hi.size() != 1 || hi[0] < lo[0]) {
      throw qp::InvalidArgument("bad seed range '" + text + "'");
    }
    for (std::size_t s = lo[0]; s <= hi[0]; ++s) out.push_back(s);
  } else {
    for (std::size_t s : parse_counts(text)) out.push_back(s);
  }
  return out;
}

std::string zero_pad(std::size_t i, int width) {
  std::string s = std::to_string(i);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

qp::Camera camera_with(std::size_t resolution) {
  qp::Camera cam;
  cam.resolution = resolution;
  return cam;
}

double to_rad(double deg) { return deg * qp::kPi / 180.0; }

// ---- subcommand state -------------------------------------------------------

struct Options {
  int jobs = 1;

  // gen1d
  std::uint64_t seed = 0;
  std::size_t n = 256;
  std::string out;

  // train1d
  std::string data;
  std::string mode = "full";
  int n_order = 2;
  std::size_t steps = 30000;
  double lr = 1e-4;
  std::size_t batch = 256;
  double final_lr_fraction = 1.0;

  // ablate1d
  std::string seeds = "0..9";
  std::string modes = "full,explicit,l2,free";

  // gen3d / 3d analysis
  int k = 2;
  std::size_t views = 116;
  std::size_t resolution = 64;
  bool raw = false;

  // ssm
  std::vector<std::string> scene;
  std::string ref = "0";
  std::string bins = "256";

  // roa
  std::string map;
  int order = 1;

  // difficulty
  std::string n_orders = "1,2,3,4";
  std::size_t refs = 64;

  // descent
  double start = 0.0;
  double step = 1e-5;
  std::size_t max_iters = 400;

  // replay
  std::string manifest;
};

void run_gen1d(const Options& o, Manifest& m) {
  m.add_seed(o.seed);
  if (o.n < 1) throw qp::InvalidArgument("--n must be >= 1");
  const qp::CropDataset1D data = qp::generate_dataset(qp::sample_function(o.seed), o.n, o.seed);
  const fs::path out = o.out;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  qp::save_dataset(out, data);
  m.add_output(out, Artifact::dataset);
}

void run_train1d(const Options& o, Manifest& m) {
  m.add_seed(o.seed);
  require_file(o.data);
  const qp::CropDataset1D data = qp::load_dataset(o.data);
  qp::TrainConfig cfg;
  cfg.mode = qp::parse_mode(o.mode);
  cfg.order = o.n_order;
  cfg.steps = o.steps;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.final_lr_fraction = o.final_lr_fraction;
  cfg.seed = o.seed;
  qp::TrainResult res = qp::train(data, cfg);

  const fs::path dir = o.out;
  ensure_dir(dir);
  const fs::path ckpt = dir / "checkpoint.mln";
  const fs::path report = dir / "report.csv";
  qp::ad::save_checkpoint(ckpt, res.models.state());
  {
    std::ofstream f(report, std::ios::binary);
    if (!f) throw qp::IoError("cannot open " + report.string());
    res.report.write_csv(f);
  }
  m.add_output(ckpt, Artifact::checkpoint);
  m.add_output(report, Artifact::csv);
  std::cout << "angular_error_deg " << res.report.angular_error * 180.0 / qp::kPi
            << "\nreconstruction_error " << res.report.reconstruction_error << '\n';
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

void run_ablate1d(const Options& o, Manifest& m) {
  const auto seeds = parse_seeds(o.seeds);
  std::vector<qp::AblationMode> modes;
  for (const std::string& name : split_list(o.modes)) modes.push_back(qp::parse_mode(name));
  if (modes.empty()) throw qp::InvalidArgument("--modes is empty");

  const fs::path dir = o.out;
  ensure_dir(dir);
  struct Row {
    std::uint64_t seed;
    qp::AblationMode mode;
    double angular, recon, loss;
  };
  std::vector<Row> rows;
  for (std::uint64_t s : seeds) {
    m.add_seed(s);
    const qp::CropDataset1D data = qp::generate_dataset(qp::sample_function(s), o.n, s);
    for (qp::AblationMode mode : modes) {
      qp::TrainConfig cfg;
      cfg.mode = mode;
      cfg.order = o.n_order;
      cfg.steps = o.steps;
      cfg.learning_rate = o.lr;
      cfg.batch_size = o.batch;
      cfg.final_lr_fraction = o.final_lr_fraction;
      cfg.seed = s;
      const qp::TrainResult res = qp::train(data, cfg);
      const auto& h = res.report.loss_history;
      rows.push_back({s, mode, res.report.angular_error, res.report.reconstruction_error,
                      h.empty() ? 0.0 : h.back()});
      std::cerr << "seed " << s << " " << qp::to_string(mode) << " angular_error_deg "
                << res.report.angular_error * 180.0 / qp::kPi << " reconstruction_error "
                << res.report.reconstruction_error << '\n';
    }
  }

  const fs::path runs = dir / "runs.csv";
  {
    std::ofstream f(runs, std::ios::binary);
    if (!f) throw qp::IoError("cannot open " + runs.string());
    f << "seed,mode,angular_error_rad,reconstruction_error,final_loss\n";
    for (const Row& r : rows) {
      f << r.seed << ',' << qp::to_string(r.mode) << ',' << qp::csv::number(r.angular) << ','
        << qp::csv::number(r.recon) << ',' << qp::csv::number(r.loss) << '\n';
    }
  }
  const fs::path summary = dir / "summary.csv";
  {
    std::ofstream f(summary, std::ios::binary);
    if (!f) throw qp::IoError("cannot open " + summary.string());
    f << "mode,metric,min,mean,median,max,runs\n";
    for (qp::AblationMode mode : modes) {
      for (int metric = 0; metric < 2; ++metric) {
        std::vector<double> v;
        for (const Row& r : rows)
          if (r.mode == mode) v.push_back(metric == 0 ? r.angular : r.recon);
        std::sort(v.begin(), v.end());
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        const std::size_t h = v.size() / 2;
        const double median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
        f << qp::to_string(mode) << ',' << (metric == 0 ? "angular_error_rad" : "reconstruction_error")
          << ',' << qp::csv::number(v.front()) << ',' << qp::csv::number(mean) << ','
          << qp::csv::number(median) << ',' << qp::csv::number(v.back()) << ',' << v.size() << '\n';
      }
    }
  }
  m.add_output(runs, Artifact::csv);
  m.add_output(summary, Artifact::csv);
}

void run_gen3d(const Options& o, Manifest& m) {
  m.add_seed(o.seed);
  const qp::PosedImageSet set = qp::generate_sphere_views(o.k, o.views, o.seed, camera_with(o.resolution));
  const fs::path dir = o.out;
  ensure_dir(dir);
  const fs::path poses = dir / "poses.csv";
  qp::write_pose_csv(poses, set);
  m.add_output(poses, Artifact::csv);
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const std::string stem =
        std::string(i < set.train_count ? "train_" : "test_") + zero_pad(i, 3);
    const fs::path ppm = dir / (stem + ".ppm");
    qp::write_ppm(ppm, set.images[i]);
    m.add_output(ppm, Artifact::ppm);
    if (o.raw) {
      const fs::path raw = dir / (stem + ".mimg");
      qp::save_mimg(raw, set.images[i]);
      m.add_output(raw, Artifact::mimg);
    }
  }
}

void run_ssm(const Options& o, Manifest& m) {
  if (o.scene.size() != 2) throw qp::InvalidArgument("--scene expects '1d FILE' or '3d K'");
  std::unique_ptr<qp::PoseRenderer> renderer;
  if (o.scene[0] == "1d") {
    require_file(o.scene[1]);
    const qp::CropDataset1D data = qp::load_dataset(o.scene[1]);
    m.add_seed(data.function_seed);
    renderer = std::make_unique<qp::CropRenderer>(qp::sample_function(data.function_seed));
  } else if (o.scene[0] == "3d") {
    const double k = qp::csv::parse_number(o.scene[1]);
    if (k != std::floor(k) || k < 1 || k > 64) throw qp::InvalidArgument("3d scene K must be an integer >= 1");
    renderer = std::make_unique<qp::SphereRenderer>(qp::SphereScene::reference(static_cast<int>(k)),
                                                    camera_with(o.resolution));
  } else {
    throw qp::InvalidArgument("--scene kind must be 1d or 3d");
  }
  const auto ref = parse_reals(o.ref);
  const auto bins = parse_counts(o.bins);
  if (ref.size() > 2 || bins.size() > 2) throw qp::InvalidArgument("--ref and --bins take at most two values");
  const qp::GridSpec grid{bins[0], bins.size() > 1 ? bins[1] : 1};
  const qp::PoseSO3 z_ref(ref[0], ref.size() > 1 ? ref[1] : 0.0, 0.0);
  const qp::SelfSimilarityMap map = qp::ssm_grid(*renderer, z_ref, grid);

  const fs::path dir = o.out;
  ensure_dir(dir);
  const fs::path csv_path = dir / "ssm.csv";
  const fs::path pgm_path = dir / "ssm.pgm";
  qp::write_map_csv(csv_path, map);
  qp::write_map_heatmap(pgm_path, map);
  m.add_output(csv_path, Artifact::csv);
  m.add_output(pgm_path, Artifact::pgm);
  m.add_output(dir / "ssm.pgm.txt", Artifact::text);
}

void run_roa(const Options& o, Manifest& m) {
  require_file(o.map);
  qp::SelfSimilarityMap map = qp::read_map_csv(o.map);
  if (o.order > 1) map = qp::quotient_ssm(map, o.order);
  const qp::RegionOfAttraction roa = qp::region_of_attraction(map);
  const fs::path dir = o.out;
  ensure_dir(dir);
  const fs::path pbm = dir / "region.pbm";
  qp::write_region_pbm(pbm, roa);
  const fs::path summary = dir / "region.csv";
  {
    std::ofstream f(summary, std::ios::binary);
    if (!f) throw qp::IoError("cannot open " + summary.string());
    f << "azimuth_bins,elevation_bins,order,seed_node,members,coverage,degenerate\n";
    std::size_t members = 0;
    for (bool b : roa.members) members += b ? 1 : 0;
    f << roa.grid.azimuth_bins << ',' << roa.grid.elevation_bins << ',' << o.order << ','
      << roa.seed_node << ',' << members << ',' << qp::csv::number(roa.coverage) << ','
      << (roa.degenerate ? 1 : 0) << '\n';
  }
  m.add_output(pbm, Artifact::pbm);
  m.add_output(summary, Artifact::csv);
  std::cout << "coverage " << qp::csv::number(roa.coverage) << (roa.degenerate ? " (degenerate)" : "")
            << '\n';
}

void run_difficulty(const Options& o, Manifest& m) {
  m.add_seed(o.seed);
  std::vector<int> orders;
  for (std::size_t n : parse_counts(o.n_orders)) orders.push_back(static_cast<int>(n));
  const auto bins = parse_counts(o.bins);
  if (bins.size() != 1) throw qp::InvalidArgument("difficulty uses an equator grid: --bins A");
  const qp::SphereRenderer renderer(qp::SphereScene::reference(o.k), camera_with(o.resolution));
  auto rows = qp::difficulty(renderer, orders, o.refs, qp::GridSpec{bins[0], 1}, o.seed);
  for (auto& r : rows) r.symmetry_order = o.k;
  const fs::path out = o.out;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  qp::write_difficulty_csv(out, rows);
  m.add_output(out, Artifact::csv);
  for (const auto& r : rows) {
    std::cout << "K " << r.symmetry_order << " N " << r.order << " D " << qp::csv::number(r.estimate)
              << " stderr " << qp::csv::number(r.standard_error) << '\n';
  }
}

void run_descent(const Options& o, Manifest& m) {
  const auto bins = parse_counts(o.bins);
  if (bins.size() != 1 || bins[0] < 8) throw qp::InvalidArgument("descent needs --bins A with A >= 8");
  const qp::SphereRenderer renderer(qp::SphereScene::reference(o.k), camera_with(o.resolution));
  const auto ref = parse_reals(o.ref);
  if (ref.size() != 1) throw qp::InvalidArgument("descent is azimuth-only: --ref θ");
  qp::DescentOptions opt;
  opt.step = o.step;
  opt.max_iters = o.max_iters;
  opt.grid_spacing = qp::kTwoPi / static_cast<double>(bins[0]);
  const qp::DescentResult res = qp::pose_descent(renderer, qp::PoseSO3(ref[0], 0.0, 0.0),
                                                 qp::PoseSO3(o.start, 0.0, 0.0), opt,
                                                 qp::EquivalenceRelation(o.order));
  const fs::path out = o.out;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  qp::write_trajectory_csv(out, res);
  m.add_output(out, Artifact::csv);
  std::cout << (res.converged ? "converged" : "not converged") << " after "
            << res.trajectory.size() - 1 << " steps, distance "
            << res.final_distance * 180.0 / qp::kPi << " deg\n";
}

int run(const std::vector<std::string>& args);

int run_replay(const Options& o) {
  require_file(o.manifest);
  json j;
  try {
    std::ifstream in(o.manifest);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw qp::FormatError(o.manifest + ": " + e.what());
  }
  if (!j.contains("argv") || !j["argv"].is_array()) throw qp::FormatError("manifest has no argv");
  std::vector<std::string> args = j["argv"].get<std::vector<std::string>>();
  if (!args.empty() && args[0] == "replay") throw qp::InvalidArgument("refusing to replay a replay");
  return run(args);
}

fs::path manifest_path(const std::string& command, const Options& o) {
  // Directory outputs keep the manifest inside; file outputs get a sibling.
  if (command == "gen1d" || command == "difficulty" || command == "descent") {
    return fs::path(o.out + ".manifest.json");
  }
  return fs::path(o.out) / "manifest.json";
}

int run(const std::vector<std::string>& args) {
  Options o;
  CLI::App app{"Pose-landscape and 1D modulo-loss toolkit.", "qpose"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.add_option("--jobs,-j", o.jobs, "Worker threads for parallel stages; results do not depend on it")
      ->capture_default_str()
      ->check(CLI::Range(1, 1024));

  auto* gen1d = app.add_subcommand("gen1d", "Generate a 1D crop dataset (.m1d)");
  gen1d->add_option("--seed", o.seed, "Seed for the function and the crop angles")->capture_default_str();
  gen1d->add_option("--n", o.n, "Number of crops")->capture_default_str();
  gen1d->add_option("--out", o.out, "Output dataset file")->required();

  auto* train1d = app.add_subcommand("train1d", "Train encoder and field on a 1D dataset");
  train1d->add_option("--data", o.data, "Dataset file from gen1d")->required();
  train1d->add_option("--mode", o.mode, "full|explicit|l2|free")->capture_default_str();
  train1d->add_option("--n-order", o.n_order, "Replication order N")->capture_default_str();
  train1d->add_option("--steps", o.steps, "Optimizer steps")->capture_default_str();
  train1d->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  train1d->add_option("--batch", o.batch, "Crops per batch")->capture_default_str();
  train1d->add_option("--final-lr-fraction", o.final_lr_fraction,
                      "Cosine-decay the rate to lr times this fraction (1 = constant)")
      ->capture_default_str();
  train1d->add_option("--seed", o.seed, "Training seed")->capture_default_str();
  train1d->add_option("--out", o.out, "Output directory")->required();

  auto* ablate = app.add_subcommand("ablate1d", "Train every ablation mode on several seeded datasets");
  ablate->add_option("--seeds", o.seeds, "Range A..B (inclusive) or list a,b,c")->capture_default_str();
  ablate->add_option("--modes", o.modes, "Comma-separated modes")->capture_default_str();
  ablate->add_option("--n", o.n, "Crops per dataset")->capture_default_str();
  ablate->add_option("--n-order", o.n_order, "Replication order N")->capture_default_str();
  ablate->add_option("--steps", o.steps, "Optimizer steps per run")->capture_default_str();
  ablate->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  ablate->add_option("--batch", o.batch, "Crops per batch")->capture_default_str();
  ablate->add_option("--final-lr-fraction", o.final_lr_fraction, "Cosine decay floor")->capture_default_str();
  ablate->add_option("--out", o.out, "Output directory")->required();

  auto* gen3d = app.add_subcommand("gen3d", "Render posed views of the textured sphere");
  gen3d->add_option("--k", o.k, "Symmetry order K")->capture_default_str()->check(CLI::Range(1, 64));
  gen3d->add_option("--views", o.views, "Number of views")->capture_default_str();
  gen3d->add_option("--seed", o.seed, "Pose seed")->capture_default_str();
  gen3d->add_option("--resolution", o.resolution, "Image side in pixels")->capture_default_str();
  gen3d->add_flag("--raw", o.raw, "Also write lossless .mimg planes");
  gen3d->add_option("--out", o.out, "Output directory")->required();

  auto* ssm = app.add_subcommand("ssm", "Self-similarity map on an azimuth (x elevation) grid");
  ssm->add_option("--scene", o.scene, "'1d FILE' or '3d K'")->required()->expected(2);
  ssm->add_option("--ref", o.ref, "Reference pose 'θ[,φ]' in radians")->capture_default_str();
  ssm->add_option("--bins", o.bins, "Grid 'A[,E]'")->capture_default_str();
  ssm->add_option("--resolution", o.resolution, "Image side for 3d scenes")->capture_default_str();
  ssm->add_option("--out", o.out, "Output directory")->required();

  auto* roa = app.add_subcommand("roa", "Region of attraction of a map CSV");
  roa->add_option("--map", o.map, "Map CSV from ssm")->required();
  roa->add_option("--order", o.order, "Quotient by R_N before filling")->capture_default_str()
      ->check(CLI::Range(1, 1024));
  roa->add_option("--out", o.out, "Output directory")->required();

  auto* diff = app.add_subcommand("difficulty", "Mean quotient region coverage on the sphere scene");
  diff->add_option("--k", o.k, "Symmetry order K")->capture_default_str()->check(CLI::Range(1, 64));
  diff->add_option("--n-orders", o.n_orders, "Replication orders, comma-separated")->capture_default_str();
  diff->add_option("--refs", o.refs, "Reference poses")->capture_default_str();
  diff->add_option("--bins", o.bins, "Azimuth bins")->capture_default_str();
  diff->add_option("--resolution", o.resolution, "Image side in pixels")->capture_default_str();
  diff->add_option("--seed", o.seed, "Seed for the reference poses")->capture_default_str();
  diff->add_option("--out", o.out, "Output CSV")->required();

  auto* descent = app.add_subcommand("descent", "Finite-difference gradient descent on the azimuth");
  descent->add_option("--k", o.k, "Symmetry order K")->capture_default_str()->check(CLI::Range(1, 64));
  descent->add_option("--ref", o.ref, "Reference azimuth θ (rad)")->capture_default_str();
  descent->add_option("--start", o.start, "Start azimuth θ0 (rad)")->capture_default_str();
  descent->add_option("--step", o.step, "Step size γ")->capture_default_str();
  descent->add_option("--max-iters", o.max_iters, "Iteration cap")->capture_default_str();
  descent->add_option("--bins", o.bins, "Grid bins defining the spacing")->capture_default_str();
  descent->add_option("--order", o.order, "Success is measured against the R_N orbit")
      ->capture_default_str()->check(CLI::Range(1, 1024));
  descent->add_option("--resolution", o.resolution, "Image side in pixels")->capture_default_str();
  descent->add_option("--out", o.out, "Output trajectory CSV")->required();

  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("--manifest", o.manifest, "manifest JSON")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help, --version
      app.exit(e, std::cout, std::cerr);
      return kOk;
    }
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kUsage;
  }

  qp::set_jobs(o.jobs);
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  if (command == "replay") return run_replay(o);

  Manifest manifest(command, args);
  manifest.record_flags(*sub);
  if (command == "gen1d") run_gen1d(o, manifest);
  else if (command == "train1d") run_train1d(o, manifest);
  else if (command == "ablate1d") run_ablate1d(o, manifest);
  else if (command == "gen3d") run_gen3d(o, manifest);
  else if (command == "ssm") run_ssm(o, manifest);
  else if (command == "roa") run_roa(o, manifest);
  else if (command == "difficulty") run_difficulty(o, manifest);
  else if (command == "descent") run_descent(o, manifest);

  manifest.validate();
  manifest.write(manifest_path(command, o));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Tensors are large and short-lived; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  const std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const ValidationError& e) {
    std::cerr << "error: artifact validation failed: " << e.what() << '\n';
    return kValidation;
  } catch (const qp::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const qp::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const qp::NonFiniteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const qp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArgument;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}
