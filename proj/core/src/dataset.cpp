#include "cva/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cva/params.hpp"

namespace cva {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<const VideoSample*> Dataset::split(Split s) const {
  std::vector<const VideoSample*> out;
  for (const auto& v : videos)
    if (v.split == s) out.push_back(&v);
  return out;
}

const VideoSample& Dataset::find(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return v;
  throw DatasetError("unknown video id '" + id + "'");
}

std::string frame_filename(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.pgm", k);
  return buf;
}

Dataset generate_dataset(const DatasetConfig& config) {
  if (config.videos == 0) throw DatasetError("generate_dataset: need at least one video");
  Dataset ds;
  Rng seeds(config.seed);
  for (std::size_t i = 0; i < config.videos; ++i) {
    GeneratorConfig g;
    g.height = config.height;
    g.width = config.width;
    g.frames = config.frames;
    g.label = (i % 2 == 0) ? LesionClass::benign : LesionClass::malignant;
    auto v = generate_video(seeds(), g);
    char id[32];
    std::snprintf(id, sizeof id, "video_%03zu", i);
    v.id = id;
    ds.videos.push_back(std::move(v));
  }
  assign_split(ds, config.test_fraction, config.seed ^ 0x5eedULL);
  return ds;
}

void assign_split(Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction > 1.0) {
    throw DatasetError("test fraction must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<std::size_t> benign, malignant;
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    (ds.videos[i].label == LesionClass::benign ? benign : malignant).push_back(i);
  }
  std::shuffle(benign.begin(), benign.end(), rng);
  std::shuffle(malignant.begin(), malignant.end(), rng);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < std::max(benign.size(), malignant.size()); ++i) {
    if (i < benign.size()) order.push_back(benign[i]);
    if (i < malignant.size()) order.push_back(malignant[i]);
  }
  const auto n_test =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.videos.size())));
  for (auto& v : ds.videos) v.split = Split::train;
  for (std::size_t i = 0; i < n_test; ++i) ds.videos[order[i]].split = Split::test;
}

void write_pgm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::string bytes(img.pixels.size(), '\0');
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    bytes[i] = static_cast<char>(
        static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DatasetError("failed writing " + path.string());
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("missing frame file " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  if (!in || magic != "P5" || maxval != 255 || w == 0 || h == 0) {
    throw DatasetError("unsupported or malformed PGM " + path.string());
  }
  in.get();  // single whitespace after maxval
  std::string bytes(w * h, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw DatasetError("truncated PGM " + path.string());
  }
  Image img(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    img.pixels[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / 255.0;
  }
  return img;
}

void write_ppm(const fs::path& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw DatasetError("failed writing " + path.string());
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["videos"] = json::array();
  for (const auto& v : ds.videos) {
    validate(v);
    if (v.id.empty() || v.id.find('/') != std::string::npos || v.id == "." || v.id == "..") {
      throw DatasetError("video id '" + v.id + "' is not usable as a directory name");
    }
    json boxes = json::array();
    for (const auto& frame_boxes : v.boxes) {
      // Generated data carries one lesion per frame; more are stored as extra rows.
      json fb = json::array();
      for (const auto& b : frame_boxes) fb.push_back({b.x1, b.y1, b.x2, b.y2});
      boxes.push_back(frame_boxes.size() == 1 ? fb[0] : fb);
    }
    manifest["videos"].push_back({{"id", v.id},
                                  {"label", to_string(v.label)},
                                  {"frame_count", v.frame_count()},
                                  {"resolution", {v.height(), v.width()}},
                                  {"boxes", boxes},
                                  {"split", to_string(v.split)}});
    const fs::path vdir = dir / v.id;
    fs::create_directories(vdir);
    for (std::size_t k = 0; k < v.frames.size(); ++k) write_pgm(vdir / frame_filename(k), v.frames[k]);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DatasetError("cannot write manifest in " + dir.string());
  out << manifest.dump(1) << '\n';
}

namespace {

Box parse_box(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4 || !std::all_of(j.begin(), j.end(), [](const json& x) { return x.is_number(); })) {
    throw DatasetError(where + ": box must be [x1, y1, x2, y2]");
  }
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DatasetError("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest: " + std::string(e.what()));
  }
  if (!manifest.is_object() || !manifest.contains("videos") || !manifest["videos"].is_array()) {
    throw DatasetError("malformed manifest: expected {\"videos\": [...]}");
  }
  Dataset ds;
  for (const auto& jv : manifest["videos"]) {
    VideoSample v;
    std::size_t frame_count = 0, h = 0, w = 0;
    try {
      v.id = jv.at("id").get<std::string>();
      v.label = lesion_class_from_string(jv.at("label").get<std::string>());
      v.split = split_from_string(jv.at("split").get<std::string>());
      frame_count = jv.at("frame_count").get<std::size_t>();
      const auto& res = jv.at("resolution");
      if (!res.is_array() || res.size() != 2) throw DatasetError("resolution must be [h, w]");
      h = res[0].get<std::size_t>();
      w = res[1].get<std::size_t>();
      const auto& boxes = jv.at("boxes");
      if (!boxes.is_array() || boxes.size() != frame_count) {
        throw DatasetError("video '" + v.id + "' needs one box entry per frame");
      }
      for (std::size_t k = 0; k < frame_count; ++k) {
        const std::string where = "video '" + v.id + "' frame " + std::to_string(k);
        const auto& jb = boxes[k];
        std::vector<Box> fb;
        if (!jb.empty() && jb[0].is_array()) {
          for (const auto& b : jb) fb.push_back(parse_box(b, where));
        } else if (!jb.empty()) {
          fb.push_back(parse_box(jb, where));
        }
        v.boxes.push_back(std::move(fb));
      }
    } catch (const json::exception& e) {
      throw DatasetError("malformed manifest entry: " + std::string(e.what()));
    } catch (const InvalidVideoError& e) {
      throw DatasetError(std::string("malformed manifest entry: ") + e.what());
    }
    for (std::size_t k = 0; k < frame_count; ++k) {
      Image img = read_pgm(dir / v.id / frame_filename(k));
      if (img.height != h || img.width != w) {
        throw DatasetError("frame " + (dir / v.id / frame_filename(k)).string() +
                           " does not match manifest resolution");
      }
      v.frames.push_back(std::move(img));
    }
    validate(v);
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

}  // namespace cva
