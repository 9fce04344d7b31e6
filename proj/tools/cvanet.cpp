// cvanet: synthetic data, training, evaluation, ablation and rendering.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cva/ablate.hpp"
#include "cva/dataset.hpp"
#include "cva/evaluation.hpp"
#include "cva/predictions.hpp"
#include "cva/train.hpp"

namespace fs = std::filesystem;
using namespace cva;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Dataset dataset_for(const std::string& dir, const RunConfig* config) {
  std::string path = dir;
  if (path.empty() && config) path = config->dataset;
  if (path.empty()) {
    std::cerr << "no dataset given; generating the default synthetic dataset\n";
    return generate_dataset(DatasetConfig{});
  }
  return load_dataset(path);
}

std::vector<const VideoSample*> select(const Dataset& ds, const std::string& split) {
  if (split == "all") {
    std::vector<const VideoSample*> out;
    for (const auto& v : ds.videos) out.push_back(&v);
    return out;
  }
  return ds.split(split_from_string(split));
}

void paint_box(RgbImage& img, const Box& b, std::array<std::uint8_t, 3> color) {
  auto clampi = [](double v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp(std::lround(v), 0L, static_cast<long>(hi) - 1));
  };
  const std::size_t x1 = clampi(b.x1, img.width), x2 = clampi(b.x2 - 1, img.width);
  const std::size_t y1 = clampi(b.y1, img.height), y2 = clampi(b.y2 - 1, img.height);
  auto put = [&](std::size_t y, std::size_t x) {
    std::copy(color.begin(), color.end(), img.rgb.begin() + static_cast<long>((y * img.width + x) * 3));
  };
  for (std::size_t x = x1; x <= x2; ++x) put(y1, x), put(y2, x);
  for (std::size_t y = y1; y <= y2; ++y) put(y, x1), put(y, x2);
}

RgbImage to_rgb(const Image& frame) {
  RgbImage img{frame.height, frame.width, std::vector<std::uint8_t>(frame.pixels.size() * 3)};
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(frame.pixels[i], 0.0, 1.0) * 255.0));
    img.rgb[i * 3] = img.rgb[i * 3 + 1] = img.rgb[i * 3 + 2] = v;
  }
  return img;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CVA-Net lesion detection on ultrasound-like videos"};
  app.require_subcommand(1);

  // gen-data
  DatasetConfig gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset (PGM frames + manifest.json)");
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();
  gen_cmd->add_option("--videos", gen.videos, "Number of videos")->capture_default_str();
  gen_cmd->add_option("--frames", gen.frames, "Frames per video")->capture_default_str();
  std::vector<std::size_t> gen_res;
  gen_cmd->add_option("--res", gen_res, "Frame size H,W (default 96,96)")->delimiter(',')->expected(2);
  gen_cmd->add_option("--test-fraction", gen.test_fraction, "Share of videos in the test split")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();

  // train
  std::string train_config, train_data, train_out = "run";
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration and evaluate on the test split");
  train_cmd->add_option("--config", train_config, "Run configuration JSON")->required();
  train_cmd->add_option("--data", train_data, "Dataset directory (default: config.dataset or synthetic)");
  train_cmd->add_option("--out", train_out, "Output directory for model.ckpt and record.json")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_seed, "Override config.seed");

  // predict
  std::string pred_model, pred_data, pred_out = "predictions.jsonl", pred_split = "test";
  auto* pred_cmd = app.add_subcommand("predict", "Write per-frame detections as JSON lines");
  pred_cmd->add_option("--checkpoint,--model", pred_model, "Checkpoint")->required();
  pred_cmd->add_option("--data", pred_data, "Dataset directory")->required();
  pred_cmd->add_option("--out", pred_out, "Output JSONL file")->capture_default_str();
  pred_cmd->add_option("--split", pred_split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();

  // eval
  std::string eval_model, eval_preds, eval_data, eval_mode = "class-agnostic", eval_out, eval_split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or a predictions file");
  auto* eval_model_opt = eval_cmd->add_option("--checkpoint,--model", eval_model, "Checkpoint to run");
  eval_cmd->add_option("--predictions", eval_preds, "Predictions JSONL")->excludes(eval_model_opt);
  eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
  eval_cmd->add_option("--mode", eval_mode, "class-agnostic or class-aware")
      ->check(CLI::IsMember({"class-agnostic", "class-aware"}))
      ->capture_default_str();
  eval_cmd->add_option("--split", eval_split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--report,--out", eval_out, "Write the full report as JSON");

  // ablate
  std::string abl_grid, abl_data, abl_out = "ablation";
  std::vector<std::uint64_t> abl_seeds{0, 1, 2};
  auto* abl_cmd = app.add_subcommand("ablate", "Train every grid entry with every seed");
  abl_cmd->add_option("--grid", abl_grid, "Grid JSON {base, runs}")->required();
  abl_cmd->add_option("--data", abl_data, "Dataset directory (default: synthetic)");
  abl_cmd->add_option("--seeds", abl_seeds, "Seeds")->delimiter(',')->capture_default_str();
  abl_cmd->add_option("--out", abl_out, "Output directory")->capture_default_str();

  // render
  std::string ren_data, ren_video, ren_preds, ren_out = "render";
  auto* ren_cmd = app.add_subcommand("render", "Write PPM frames with ground truth (green) and the top detection (red)");
  ren_cmd->add_option("--data", ren_data, "Dataset directory")->required();
  ren_cmd->add_option("--video", ren_video, "Video id (default: every video in the predictions, else the test split)");
  ren_cmd->add_option("--preds,--predictions", ren_preds, "Predictions JSONL");
  ren_cmd->add_option("--out", ren_out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      if (!gen_res.empty()) {
        gen.height = gen_res[0];
        gen.width = gen_res[1];
      }
      const Dataset ds = generate_dataset(gen);
      save_dataset(ds, gen_out);
      std::cout << "wrote " << ds.videos.size() << " videos to " << gen_out << '\n';
    } else if (*train_cmd) {
      RunConfig config = load_run_config(train_config);
      if (train_seed) config.seed = *train_seed;
      const Dataset ds = dataset_for(train_data, &config);
      TrainHooks hooks;
      hooks.log = &std::cerr;
      TrainResult r = train(config, ds, hooks);
      fs::create_directories(train_out);
      save_model(fs::path(train_out) / "model.ckpt", *r.model, config);
      write_json(fs::path(train_out) / "record.json", r.record.to_json());
      std::cout << r.record.report.to_table(config.name.empty() ? to_string(config.variant) : config.name);
      if (r.record.report.classification_accuracy) {
        std::cout << "classification accuracy " << *r.record.report.classification_accuracy << '\n';
      }
      std::cout << "config " << r.record.config_hash << ", " << r.record.steps << " steps, "
                << r.record.wall_clock_seconds << " s\n";
    } else if (*pred_cmd) {
      const LoadedModel m = load_model(fs::path(pred_model));
      const Dataset ds = load_dataset(pred_data);
      const auto preds = predict(*m.model, select(ds, pred_split));
      write_predictions(pred_out, preds);
      std::cout << "wrote " << preds.size() << " frame records to " << pred_out << '\n';
    } else if (*eval_cmd) {
      if (eval_model.empty() == eval_preds.empty()) throw std::invalid_argument("give --checkpoint or --predictions");
      const Dataset ds = load_dataset(eval_data);
      const auto videos = select(ds, eval_split);
      std::vector<FramePrediction> preds;
      if (!eval_model.empty()) {
        const LoadedModel m = load_model(fs::path(eval_model));
        preds = predict(*m.model, videos);
      } else {
        preds = read_predictions(eval_preds);
      }
      const EvalReport report = evaluate(preds, videos, eval_mode_from_string(eval_mode));
      std::cout << report.to_table(eval_split);
      if (report.classification_accuracy) {
        std::cout << "classification accuracy " << *report.classification_accuracy << '\n';
      }
      if (!eval_out.empty()) write_json(eval_out, report.to_json());
    } else if (*abl_cmd) {
      const auto grid = load_ablation_grid(abl_grid);
      const Dataset ds = dataset_for(abl_data, nullptr);
      fs::create_directories(abl_out);
      AblateHooks hooks;
      hooks.train.log = &std::cerr;
      hooks.on_run = [&](const RunRecord& r) {
        const std::string name = r.config.name.empty() ? to_string(r.config.variant) : r.config.name;
        write_json(fs::path(abl_out) / ("run_" + name + "_seed" + std::to_string(r.config.seed) + ".json"),
                   r.to_json());
        std::cerr << name << " seed " << r.config.seed << ": AP " << r.report.ap << '\n';
      };
      const AblationResult result = ablate(grid, abl_seeds, ds, hooks);
      write_json(fs::path(abl_out) / "ablation.json", result.to_json());
      std::cout << result.to_table();
    } else if (*ren_cmd) {
      const Dataset ds = load_dataset(ren_data);
      std::map<std::string, std::map<std::size_t, FramePrediction>> by_video;
      if (!ren_preds.empty()) {
        for (auto& p : read_predictions(ren_preds)) by_video[p.video_id][p.frame] = std::move(p);
      }
      std::vector<const VideoSample*> videos;
      if (!ren_video.empty()) {
        videos.push_back(&ds.find(ren_video));
      } else if (!by_video.empty()) {
        for (const auto& [id, frames] : by_video) videos.push_back(&ds.find(id));
      } else {
        videos = ds.split(Split::test);
      }
      std::size_t written = 0;
      for (const VideoSample* v : videos) {
        const fs::path dir = fs::path(ren_out) / v->id;
        fs::create_directories(dir);
        const auto& frames = by_video[v->id];
        for (std::size_t k = 0; k < v->frame_count(); ++k) {
          RgbImage img = to_rgb(v->frames[k]);
          for (const auto& b : v->boxes[k]) paint_box(img, b, {0, 255, 0});
          if (auto it = frames.find(k); it != frames.end() && !it->second.boxes.empty()) {
            paint_box(img, it->second.boxes.front(), {255, 0, 0});
          }
          char name[32];
          std::snprintf(name, sizeof name, "frame_%04zu.ppm", k);
          write_ppm(dir / name, img);
          ++written;
        }
      }
      std::cout << "wrote " << written << " frames to " << ren_out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
