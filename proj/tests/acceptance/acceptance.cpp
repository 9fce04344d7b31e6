// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cva/ablate.hpp"
#include "cva/box.hpp"
#include "cva/evaluation.hpp"
#include "cva/fusion.hpp"
#include "cva/matching.hpp"
#include "cva/model.hpp"
#include "cva/train.hpp"
#include "support/grad_cases.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace cva;

namespace {

constexpr double kAp50Threshold = 0.5;
constexpr double kAblationTolerance = 0.02;
constexpr double kAblationBudgetSeconds = 2.0 * 3600.0;
constexpr double kGradBudgetSeconds = 5.0 * 60.0;
const std::vector<std::uint64_t> kAblationSeeds{0, 1, 2};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

struct Context {
  fs::path workdir;
  fs::path grid_path;
  std::vector<RunConfig> grid;
  std::optional<Dataset> dataset;
  std::optional<AblationResult> ablation;

  const Dataset& data() {
    if (!dataset) dataset = generate_dataset(DatasetConfig{});
    return *dataset;
  }
  const RunConfig& grid_entry(const std::string& name) const {
    for (const auto& c : grid)
      if (c.name == name) return c;
    throw std::runtime_error("grid " + grid_path.string() + " has no run named '" + name + "'");
  }
};

Outcome gradient_integrity(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_case;
  std::size_t checks = 0, failures = 0;
  for (const auto& c : test::gradient_cases()) {
    for (std::uint64_t seed = 0; seed < test::kGradSeeds; ++seed) {
      const double err = c.run(seed);
      ++checks;
      if (!(err < test::kGradTolerance)) ++failures;
      if (!(err <= worst)) {
        worst = err;
        worst_case = c.name + " seed " + std::to_string(seed);
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {failures == 0 && secs < kGradBudgetSeconds,
          std::to_string(test::gradient_cases().size()) + " cases x " + std::to_string(test::kGradSeeds) +
              " seeds, " + std::to_string(failures) + " above 1e-4, worst " + fmt(worst) + " (" +
              worst_case + "), " + fmt(secs, 3) + " s"};
}

Outcome fusion_oracles(Context&) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    worst = std::max({worst, test::inter_oracle_deviation(seed), test::intra_oracle_deviation(seed)});
  }
  return {worst <= 1e-12, "100 inter + 100 intra cases, max deviation " + fmt(worst)};
}

Outcome attention_normalization(Context& ctx) {
  const bool previous = debug_checks();
  set_debug_checks(true);
  // The run-time assertion must reject a broken row.
  bool rejected = false;
  try {
    check_attention("probe", Tensor::matrix({{0.5, 0.6}}));
  } catch (const NumericError&) {
    rejected = true;
  }
  std::size_t matrices = 0;
  std::set<std::string> sites;
  double worst = 0.0;
  set_attention_observer([&](std::string_view site, const Tensor& a) {
    ++matrices;
    sites.emplace(site);
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += a.data()[r * cols + c];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  });
  std::string error;
  try {
    const auto& full = ctx.grid_entry("full");
    const VideoSample& v = *ctx.data().split(Split::test).front();
    CvaNet model(full.model_for(v.height(), v.width()), 7);
    const ShufflePlan plan = inference_plan(v);
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < v.frame_count(); k += 4) {
      const Clip clip = sample_clip(v, k, plan);
      model.forward(clip.frames, clip.shuffled);
    }
  } catch (const std::exception& e) {
    error = e.what();
  }
  set_attention_observer({});
  set_debug_checks(previous);
  if (!error.empty()) return {false, "forward failed: " + error};
  return {rejected && worst <= 1e-9 && matrices > 0,
          std::to_string(matrices) + " matrices at " + std::to_string(sites.size()) +
              " sites, max |row sum - 1| " + fmt(worst) +
              (rejected ? ", broken rows rejected" : ", broken rows NOT rejected")};
}

Outcome matching_oracle(Context&) {
  Rng rng(123);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const bool integral = trial % 2 == 0;
    const CostMatrix c = test::random_cost_matrix(rng, integral);
    const auto [best, arg] = test::brute_force_assignment(c);
    const auto m = hungarian_match(c);
    std::vector<std::size_t> sorted = m.assignment;
    std::sort(sorted.begin(), sorted.end());
    const bool injective = std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
    const bool same = test::assignment_cost(c, m.assignment) == best && (integral || m.assignment == arg);
    if (!injective || !same || m.assignment.size() != c.rows) ++mismatches;
  }
  return {mismatches == 0, "200 matrices, " + std::to_string(mismatches) + " differ from exhaustive search"};
}

Outcome metric_oracle(Context& ctx) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto scene = test::random_scene(seed);
    // Scene as a benign video with one frame per image, run through evaluate().
    VideoSample v;
    v.id = "scene";
    std::size_t images = 1;
    for (const auto& b : scene.gts) images = std::max(images, b.image + 1);
    for (const auto& b : scene.dets) images = std::max(images, b.image + 1);
    v.frames.assign(images, Image(100, 100));
    v.boxes.assign(images, {});
    for (const auto& g : scene.gts) v.boxes[g.image].push_back(g.box);
    std::vector<FramePrediction> preds(images);
    for (std::size_t f = 0; f < images; ++f) {
      preds[f].video_id = v.id;
      preds[f].frame = f;
    }
    for (const auto& d : scene.dets) {
      preds[d.image].boxes.push_back(d.box);
      preds[d.image].scores.push_back(d.score);
      preds[d.image].classes.push_back(LesionClass::benign);
    }
    const std::vector<const VideoSample*> videos{&v};
    const EvalReport r = evaluate(preds, videos);
    double mean = 0.0;
    const auto ts = iou_thresholds();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double want = test::brute_force_ap(scene.dets, scene.gts, ts[i]);
      mean += want;
      worst = std::max({worst, std::abs(r.thresholds[i].ap - want),
                        std::abs(average_precision(scene.dets, scene.gts, ts[i]).ap - want)});
    }
    mean /= static_cast<double>(ts.size());
    worst = std::max(worst, std::abs(r.ap - mean));
  }

  // Perfect and empty detectors on the synthetic test split.
  const auto test_videos = ctx.data().split(Split::test);
  std::vector<FramePrediction> perfect;
  for (const VideoSample* v : test_videos) {
    for (std::size_t f = 0; f < v->frame_count(); ++f) {
      FramePrediction p;
      p.video_id = v->id;
      p.frame = f;
      p.boxes = v->boxes[f];
      p.scores.assign(p.boxes.size(), 0.9);
      p.classes.assign(p.boxes.size(), v->label);
      perfect.push_back(std::move(p));
    }
  }
  const EvalReport good = evaluate(perfect, test_videos);
  const EvalReport none = evaluate(std::vector<FramePrediction>{}, test_videos);
  const bool perfect_ok = good.ap == 1.0 && good.ap50 == 1.0 && good.ap75 == 1.0;
  const bool empty_ok = none.ap == 0.0 && none.ap50 == 0.0 && none.ap75 == 0.0;
  return {worst <= 1e-9 && perfect_ok && empty_ok,
          "50 scenes x 10 thresholds, max |AP - oracle| " + fmt(worst) + ", perfect " + fmt(good.ap) + "/" +
              fmt(good.ap50) + "/" + fmt(good.ap75) + ", empty " + fmt(none.ap) + "/" + fmt(none.ap50) + "/" +
              fmt(none.ap75)};
}

Outcome giou_contract(Context&) {
  Rng rng(99);
  std::uniform_real_distribution<double> pos(-5.0, 5.0), size(0.01, 4.0);
  std::size_t violations = 0;
  const std::size_t pairs = 10000;
  for (std::size_t i = 0; i < pairs; ++i) {
    auto box = [&] {
      const double x = pos(rng), y = pos(rng);
      return Box{x, y, x + size(rng), y + size(rng)};
    };
    const Box a = box();
    const Box b = i % 10 == 0 ? a : box();
    const double g = giou(a, b);
    if (!(g > -1.0 && g <= 1.0) || g > iou(a, b) || g != giou(b, a)) ++violations;
  }
  const double hand = giou(Box{0, 0, 1, 1}, Box{2, 0, 3, 1});
  return {violations == 0 && hand == -1.0 / 3.0,
          std::to_string(pairs) + " pairs, " + std::to_string(violations) + " violations, hand case " +
              fmt(hand, 17)};
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(1) << '\n';
}

Outcome ablation_trend(Context& ctx) {
  const Dataset& ds = ctx.data();
  const auto train_split = ds.split(Split::train), test_split = ds.split(Split::test);
  const VideoSample& v0 = ds.videos.front();
  if (train_split.size() != 40 || test_split.size() != 10 || v0.height() != 96 || v0.width() != 96 ||
      v0.frame_count() != 24) {
    return {false, "default dataset is not 40/10 videos of 96x96x24"};
  }
  const double cpu0 = cpu_seconds();
  const auto wall0 = std::chrono::steady_clock::now();
  AblateHooks hooks;
  hooks.train.log = &std::cerr;
  hooks.on_run = [&](const RunRecord& r) {
    std::cerr << r.config.name << " seed " << r.config.seed << ": AP " << fmt(r.report.ap) << " AP50 "
              << fmt(r.report.ap50) << " AP75 " << fmt(r.report.ap75) << " (" << fmt(r.wall_clock_seconds, 4)
              << " s)\n";
    nlohmann::json j = r.to_json();
    if (r.config.variant == Variant::full) {
      j["acceptance"] = {{"criterion", "AP50 >= threshold for the full variant"},
                         {"ap50_threshold", kAp50Threshold}};
    }
    write_json(ctx.workdir / ("run_" + r.config.name + "_seed" + std::to_string(r.config.seed) + ".json"), j);
  };
  std::vector<RunConfig> grid;
  for (const char* name : {"basic", "basic+inter", "basic+intra", "full"}) grid.push_back(ctx.grid_entry(name));
  AblationResult result = ablate(grid, kAblationSeeds, ds, hooks);
  const double cpu = cpu_seconds() - cpu0;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  std::cerr << result.to_table();
  nlohmann::json summary = result.to_json();
  summary.erase("runs");
  summary["cpu_seconds"] = cpu;
  summary["wall_clock_seconds"] = wall;
  write_json(ctx.workdir / "ablation.json", summary);

  const double full = result.row("full").mean_ap, basic = result.row("basic").mean_ap;
  const double inter = result.row("basic+inter").mean_ap, intra = result.row("basic+intra").mean_ap;
  ctx.ablation = std::move(result);
  const bool trend = full >= basic && full >= std::max(inter, intra) - kAblationTolerance;
  return {trend && cpu <= kAblationBudgetSeconds,
          "mean AP basic " + fmt(basic) + ", +inter " + fmt(inter) + ", +intra " + fmt(intra) + ", full " +
              fmt(full) + "; " + fmt(cpu, 5) + " CPU s (wall " + fmt(wall, 5) + " s)"};
}

Outcome trainability(Context& ctx) {
  std::vector<double> ap50;
  if (ctx.ablation) {
    ap50 = ctx.ablation->row("full").ap50;
  } else {
    const RunConfig& full = ctx.grid_entry("full");
    for (std::uint64_t seed : kAblationSeeds) {
      RunConfig c = full;
      c.seed = seed;
      TrainHooks hooks;
      hooks.log = &std::cerr;
      ap50.push_back(train(c, ctx.data(), hooks).record.report.ap50);
    }
  }
  const std::size_t epochs = ctx.grid_entry("full").epochs;
  const double lowest = *std::min_element(ap50.begin(), ap50.end());
  std::string per_seed;
  for (double v : ap50) per_seed += (per_seed.empty() ? "" : ", ") + fmt(v);
  return {lowest >= kAp50Threshold && epochs <= 50,
          "full AP50 per seed [" + per_seed + "] after " + std::to_string(epochs) + " epochs, threshold " +
              fmt(kAp50Threshold)};
}

Outcome determinism(Context& ctx) {
  RunConfig c = ctx.grid_entry("full");
  c.max_steps = 24;
  const auto a = train(c, ctx.data());
  const auto b = train(c, ctx.data());
  const std::vector<double> la(a.record.step_losses.begin(), a.record.step_losses.begin() + 10);
  const std::vector<double> lb(b.record.step_losses.begin(), b.record.step_losses.begin() + 10);
  bool same_losses = la == lb;
  std::string extra;
  if (ctx.ablation) {
    // The seed-0 ablation run shares its first steps with the truncated run.
    for (const auto& rec : ctx.ablation->records) {
      if (rec.config.variant == Variant::full && rec.config.seed == c.seed) {
        const std::vector<double> lr(rec.step_losses.begin(), rec.step_losses.begin() + 10);
        same_losses = same_losses && lr == la;
        extra = ", matches ablation run";
      }
    }
  }
  const bool same_report = a.record.report == b.record.report;
  return {same_losses && same_report, std::string("first 10 losses ") + (same_losses ? "identical" : "DIFFER") +
                                          extra + ", final report " + (same_report ? "identical" : "DIFFERS")};
}

Outcome wiring(Context& ctx) {
  std::size_t checked = 0, broken = 0;
  RunConfig basic = ctx.grid_entry("basic");
  basic.max_steps = 5;
  TrainHooks hooks;
  hooks.on_forward = [&](std::size_t, const ClipForward& f) {
    for (std::size_t j = 0; j < 3; ++j)
      if (!f.inter[j].equals(f.local[j])) ++broken;
    if (!f.intra.equals(f.inter[1])) ++broken;
    ++checked;
  };
  train(basic, ctx.data(), hooks);

  RunConfig no_cla = ctx.grid_entry("full");
  no_cla.max_steps = 5;
  no_cla.use_video_classifier = false;
  no_cla.model.use_video_classifier = false;
  std::size_t steps = 0, nonzero = 0, video_outputs = 0;
  TrainHooks cla_hooks;
  cla_hooks.on_forward = [&](std::size_t, const ClipForward& f) { video_outputs += f.video.has_value(); };
  cla_hooks.after_backward = [&](std::size_t, const CvaNet& model) {
    for (const auto& name : model.video_classifier_parameters()) {
      const Tensor* t = model.params().find(name);
      if (!t) {
        ++nonzero;
        continue;
      }
      if (t->has_grad())
        for (double g : t->grad()) nonzero += g != 0.0;
    }
    ++steps;
  };
  train(no_cla, ctx.data(), cla_hooks);
  return {checked == 5 && broken == 0 && steps == 5 && nonzero == 0 && video_outputs == 0,
          "basic: " + std::to_string(checked) + " steps, " + std::to_string(broken) +
              " pass-through mismatches; w/o-cla: " + std::to_string(steps) + " steps, " +
              std::to_string(nonzero) + " nonzero classifier gradients"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  Context ctx;
  std::string workdir = "acceptance_runs";
  std::string grid = CVA_DEFAULT_GRID;
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Directory for run records");
  app.add_option("--grid", grid, "Ablation grid with runs named basic, basic+inter, basic+intra, full");
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  ctx.workdir = workdir;
  ctx.grid_path = grid;
  fs::create_directories(ctx.workdir);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"fusion oracle equivalence", fusion_oracles},
      {"attention normalization", attention_normalization},
      {"matching oracle", matching_oracle},
      {"metric oracle", metric_oracle},
      {"gIoU contract", giou_contract},
      {"ablation trend", ablation_trend},
      {"end-to-end trainability", trainability},
      {"determinism", determinism},
      {"ablation wiring", wiring},
  };

  bool all = true;
  try {
    ctx.grid = load_ablation_grid(ctx.grid_path);
  } catch (const std::exception& e) {
    std::cout << "cannot load grid: " << e.what() << std::endl;
    return 2;
  }
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
