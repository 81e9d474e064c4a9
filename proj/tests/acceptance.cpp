// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Criteria can be selected by number:
//   acceptance            all nine
//   acceptance 5 6        only criteria 5 and 6
#include <sys/wait.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qp/analysis.hpp"
#include "qp/model1d.hpp"
#include "qp/optim.hpp"
#include "qp/rng.hpp"
#include "qp/scene3d.hpp"
#include "qp/train1d.hpp"

namespace {

namespace fs = std::filesystem;
using namespace qp;

constexpr double kDeg = kPi / 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- 1: gradients -----------------------------------------------------------

// The field MLP at a few random angles and the encoder head on one random
// crop, each differentiated w.r.t. all of its parameter tensors.
Outcome gradient_correctness() {
  constexpr int kInstances = 20;
  const ad::GradCheckOptions options{1e-5, 12};
  double worst_field = 0.0, worst_encoder = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const auto seed = static_cast<std::uint64_t>(i);
    NeuralField1D field(seed);
    Rng rng(3000 + seed);
    std::vector<double> thetas(4);
    for (double& t : thetas) t = rng.uniform(0.0, kTwoPi);
    worst_field = std::max(worst_field, ad::finite_difference_check(field.parameters(), [&](ad::Tape& tape) {
      const ad::Var y = field.forward(tape, tape.constant(ad::Tensor(ad::Shape{thetas.size()}, thetas)));
      return ad::mean(ad::mul(y, y));
    }, options));

    const CropDataset1D data = generate_dataset(sample_function(1000 + seed), 1, 2000 + seed);
    Encoder1D encoder(seed);
    worst_encoder = std::max(worst_encoder, ad::finite_difference_check(encoder.parameters(), [&](ad::Tape& tape) {
      const ad::Var h = encoder.head(tape, data.crops, 1);
      return ad::mean(ad::mul(h, h));
    }, options));
  }
  const double worst = std::max(worst_field, worst_encoder);
  return {worst < 1e-4, "max relative error: field " + fmt(worst_field) + ", encoder " + fmt(worst_encoder) +
                            " over " + std::to_string(kInstances) + " instances each"};
}

// ---- 2: modulo loss lower bound ------------------------------------------

Outcome modulo_lower_bound() {
  constexpr int kFields = 40, kPerField = 250;
  std::size_t violations = 0, total = 0;
  Rng rng(17);
  for (int m = 0; m < kFields; ++m) {
    const auto f = sample_function(400 + static_cast<std::uint64_t>(m));
    const CropDataset1D data = generate_dataset(f, kPerField, 500 + static_cast<std::uint64_t>(m));
    NeuralField1D field(600 + static_cast<std::uint64_t>(m), dataset_affine(data));
    for (std::size_t i = 0; i < data.count; ++i) {
      const Angle angle(rng.uniform(0.0, kTwoPi));
      const int order = 1 + static_cast<int>(rng.below(4));
      const double modulo = modulo_loss(field, angle, data.crop(i), order).loss;
      const double plain = modulo_loss(field, angle, data.crop(i), 1).loss;
      if (!(modulo <= plain)) ++violations;
      ++total;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(total) + " tuples"};
}

// ---- 3, 4: 1D training -----------------------------------------------------

// Compute-budget schedule shared by all four modes.
TrainConfig budget_config(AblationMode mode, std::uint64_t seed) {
  TrainConfig c;
  c.mode = mode;
  c.order = 2;
  c.steps = 3000;
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  c.final_lr_fraction = 1.0;
  c.seed = seed;
  return c;
}

constexpr std::uint64_t kTrainSeeds = 10;

struct ModeRuns {
  std::vector<double> angular;  // degrees
  std::vector<double> recon;
  double seconds = 0.0;
};

std::map<AblationMode, ModeRuns>& training_runs() {
  static std::map<AblationMode, ModeRuns> runs;
  return runs;
}

const ModeRuns& runs_for(AblationMode mode) {
  auto& all = training_runs();
  auto it = all.find(mode);
  if (it != all.end()) return it->second;
  ModeRuns r;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t s = 0; s < kTrainSeeds; ++s) {
    const CropDataset1D data = generate_dataset(sample_function(s), 256, s);
    const TrainResult res = train(data, budget_config(mode, s));
    r.angular.push_back(res.report.angular_error / kDeg);
    r.recon.push_back(res.report.reconstruction_error);
    std::cerr << "  " << to_string(mode) << " seed " << s << ": " << fmt(r.angular.back())
              << " deg, recon " << fmt(r.recon.back()) << '\n';
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return all.emplace(mode, std::move(r)).first->second;
}

Outcome full_convergence() {
  const ModeRuns& r = runs_for(AblationMode::full);
  std::size_t good = 0;
  bool recon_ok = true;
  double worst_recon = 0.0;
  for (std::size_t i = 0; i < r.angular.size(); ++i) {
    if (r.angular[i] < 5.0) {
      ++good;
      worst_recon = std::max(worst_recon, r.recon[i]);
      recon_ok = recon_ok && r.recon[i] < 0.05;
    }
  }
  return {good >= 8 && recon_ok && r.seconds < 3600.0,
          std::to_string(good) + "/10 runs under 5 deg, worst recon among them " + fmt(worst_recon) +
              ", " + fmt(r.seconds / 60.0, 3) + " min"};
}

Outcome ablation_ordering() {
  const double full = median(runs_for(AblationMode::full).angular);
  const double expl = median(runs_for(AblationMode::explicit_field).angular);
  const double l2 = median(runs_for(AblationMode::l2_loss).angular);
  const double free = median(runs_for(AblationMode::free_angles).angular);
  const bool pass = full < l2 && full < free && full < expl && expl > 30.0;
  return {pass, "median deg: full " + fmt(full) + ", l2 " + fmt(l2) + ", free " + fmt(free) +
                    ", explicit " + fmt(expl)};
}

// ---- 5: difficulty pattern -------------------------------------------------

Outcome difficulty_pattern() {
  const GridSpec grid{256, 1};
  std::ostringstream detail;
  bool pass = true;
  for (int k : {2, 3, 4}) {
    const SphereRenderer renderer(SphereScene::reference(k));
    const auto rows = difficulty(renderer, {1, 2, 3, 4}, 64, grid, 7);
    std::map<int, double> d;
    for (const DifficultyEntry& e : rows) d[e.order] = e.estimate;
    for (int n = 1; n <= 4; ++n) {
      if (n % k == 0 && d[n] < 0.9) pass = false;
    }
    if (d[1] > 0.7 || d[k] - d[1] < 0.2) pass = false;
    detail << "K=" << k << " D=[" << fmt(d[1], 3) << ' ' << fmt(d[2], 3) << ' ' << fmt(d[3], 3) << ' '
           << fmt(d[4], 3) << "] ";
  }
  return {pass, detail.str()};
}

// ---- 6: basin / descent agreement -----------------------------------------

Outcome descent_agreement() {
  constexpr int kPairs = 200;
  const SphereRenderer renderer(SphereScene::reference(2));
  const GridSpec grid{256, 1};
  DescentOptions options;
  options.grid_spacing = grid.azimuth_spacing();
  Rng rng(99);
  int agree = 0, members = 0;
  for (int p = 0; p < kPairs; ++p) {
    const PoseSO3 ref(rng.uniform(0.0, kTwoPi), 0.0, 0.0);
    const PoseSO3 start(rng.uniform(0.0, kTwoPi), 0.0, 0.0);
    const RegionOfAttraction roa = region_of_attraction(ssm_grid(renderer, ref, grid));
    const std::size_t node =
        static_cast<std::size_t>(std::lround(start.azimuth.radians() / grid.azimuth_spacing())) %
        grid.azimuth_bins;
    const bool member = roa.members[node];
    const bool converged = pose_descent(renderer, ref, start, options).converged;
    members += member;
    agree += member == converged;
  }
  return {agree >= 180, std::to_string(agree) + "/" + std::to_string(kPairs) + " agree (" +
                            std::to_string(members) + " starts inside the region)"};
}

// ---- 7: flood fill vs path search -----------------------------------------

// Nodes reachable from the argmin along strictly increasing steps, found by
// iterating to a fixpoint over all edges.
std::vector<bool> path_oracle(const SelfSimilarityMap& map) {
  const std::size_t A = map.grid.azimuth_bins, E = map.grid.elevation_bins;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double margin = kMonotoneMargin * (*hi - *lo);
  std::vector<bool> in(map.values.size(), false);
  in[map.argmin()] = true;
  if (*hi == *lo) return std::vector<bool>(map.values.size(), true);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t a = 0; a < A; ++a) {
        const std::size_t u = e * A + a;
        if (!in[u]) continue;
        std::vector<std::size_t> nb{e * A + (a + 1) % A, e * A + (a + A - 1) % A};
        if (e > 0) nb.push_back(u - A);
        if (e + 1 < E) nb.push_back(u + A);
        for (std::size_t v : nb) {
          if (!in[v] && map.values[v] > map.values[u] + margin) {
            in[v] = true;
            changed = true;
          }
        }
      }
    }
  }
  return in;
}

Outcome flood_fill_oracle() {
  Rng rng(5);
  int matches = 0, total = 0;
  auto check = [&](std::size_t A, std::size_t E) {
    SelfSimilarityMap map;
    map.grid = GridSpec{A, E};
    map.values.resize(A * E);
    for (double& v : map.values) v = rng.uniform();
    matches += region_of_attraction(map).members == path_oracle(map);
    ++total;
  };
  for (int i = 0; i < 50; ++i) check(64, 1);
  for (int i = 0; i < 10; ++i) check(16, 16);
  return {matches == total, std::to_string(matches) + "/" + std::to_string(total) + " maps match"};
}

// ---- 8: renderer partition and symmetry -------------------------------------

Outcome renderer_checks() {
  Rng rng(8);
  double worst_partition = 0.0;
  int hits = 0;
  const SphereScene scene = SphereScene::reference(3);
  for (int i = 0; i < 1000; ++i) {
    Camera cam;
    cam.pose = PoseSO3(rng.uniform(0.0, kTwoPi), rng.uniform(-1.5, 1.5), rng.uniform(0.0, kTwoPi));
    const auto px = static_cast<std::size_t>(rng.below(cam.resolution));
    const auto py = static_cast<std::size_t>(rng.below(cam.resolution));
    const auto [tn, tf] = ray_bounds(scene, cam.distance);
    const RayTrace tr = trace_ray(scene, pixel_ray(cam, px, py), tn, tf);
    hits += !tr.weights.empty();
    double total = tr.residual;
    for (double w : tr.weights) total += w;
    worst_partition = std::max(worst_partition, std::abs(total - 1.0));
  }
  double worst_symmetry = 0.0;
  for (int k : {2, 3, 4}) {
    const SphereScene s = SphereScene::reference(k).without_patches();
    for (int i = 0; i < 3; ++i) {
      Camera a, b;
      const double az = rng.uniform(0.0, kTwoPi), el = rng.uniform(-0.8, 0.8), roll = rng.uniform(0.0, kTwoPi);
      a.pose = PoseSO3(az, el, roll);
      b.pose = PoseSO3(az + kTwoPi / k, el, roll);
      const ImageRGB ia = render_view(s, a), ib = render_view(s, b);
      for (std::size_t j = 0; j < ia.planes.size(); ++j)
        worst_symmetry = std::max(worst_symmetry, std::abs(ia.planes[j] - ib.planes[j]));
    }
  }
  return {worst_partition <= 1e-9 && worst_symmetry <= 1e-10,
          "partition error " + fmt(worst_partition) + " (" + std::to_string(hits) +
              " of 1000 rays hit the shell), symmetry error " + fmt(worst_symmetry)};
}

// ---- 9: CLI determinism -----------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const fs::path& dir, const std::string& args) {
  fs::create_directories(dir);
  const std::string cmd = "cd '" + dir.string() + "' && '" QPOSE_PATH "' " + args + " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every artifact except the captured streams and manifests, which record
// timings and the job count.
std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name == "stdout.txt" || name == "stderr.txt" || name.find("manifest.json") != std::string::npos) continue;
    files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

Outcome cli_determinism() {
  struct Command {
    std::string setup, args;
  };
  const std::string gen = "gen1d --seed 3 --n 64 --out d.m1d";
  const std::string ssm3 = "ssm --scene 3d 2 --ref 0.4 --bins 64 --resolution 32 --out s";
  const std::vector<Command> commands{
      {"", gen},
      {gen, "train1d --data d.m1d --steps 20 --batch 16 --lr 1e-3 --seed 5 --out run"},
      {"", "ablate1d --seeds 0..1 --n 32 --steps 5 --batch 16 --out abl"},
      {"", "gen3d --k 3 --views 8 --seed 2 --resolution 24 --out views"},
      {gen, "ssm --scene 1d d.m1d --ref 1.0 --bins 128 --out s1"},
      {"", ssm3},
      {"", "ssm --scene 3d 3 --ref 0.2,0.1 --bins 32,5 --resolution 16 --out s2"},
      {ssm3, "roa --map s/ssm.csv --order 2 --out r"},
      {"", "difficulty --k 2 --n-orders 1,2,3 --refs 4 --bins 48 --resolution 24 --out d.csv"},
      {"", "descent --k 2 --ref 0.3 --start 1.2 --resolution 32 --out t.csv"},
      {ssm3, "replay --manifest s/manifest.json"},
  };
  const fs::path root = fs::temp_directory_path() / "qp_acceptance_cli";
  int stable = 0;
  std::string failures;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::vector<std::map<std::string, std::string>> outputs;
    bool ok = true;
    for (const std::string jobs : {"-j 1", "-j 1", "-j 3"}) {
      const fs::path dir = root / std::to_string(outputs.size());
      fs::remove_all(dir);
      if (!commands[c].setup.empty()) ok = ok && run_cli(dir, commands[c].setup) == 0;
      ok = ok && run_cli(dir, jobs + " " + commands[c].args) == 0;
      outputs.push_back(artifacts(dir));
    }
    bool has_csv = false;
    for (const auto& [name, bytes] : outputs[0]) has_csv = has_csv || name.ends_with(".csv");
    if (!commands[c].args.starts_with("gen")) ok = ok && has_csv;
    ok = ok && !outputs[0].empty() && outputs[0] == outputs[1] && outputs[0] == outputs[2];
    if (ok) {
      ++stable;
    } else {
      failures += " [" + commands[c].args + "]";
    }
  }
  fs::remove_all(root);
  return {stable == static_cast<int>(commands.size()),
          std::to_string(stable) + "/" + std::to_string(commands.size()) + " commands byte-identical" + failures};
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"modulo loss lower bound", modulo_lower_bound},
      {"1D full-method convergence", full_convergence},
      {"1D ablation ordering", ablation_ordering},
      {"difficulty vs replication order", difficulty_pattern},
      {"descent agrees with region of attraction", descent_agreement},
      {"flood fill matches path search", flood_fill_oracle},
      {"renderer partition and symmetry", renderer_checks},
      {"CLI determinism", cli_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << number << ". " << criteria[i].first << ": " << o.detail
              << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  return all ? 0 : 1;
}
