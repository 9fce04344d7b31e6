#include "cva/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace cva {

using nlohmann::json;

void RunConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  try {
    loss_weights.validate();
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (model.backbone.stem_stride == 0) throw ConfigError("stem_stride must be positive");
}

AdamOptions RunConfig::adam() const {
  AdamOptions o;
  o.learning_rate = learning_rate;
  o.weight_decay = weight_decay;
  return o;
}

ModelConfig RunConfig::model_for(std::size_t height, std::size_t width) const {
  ModelConfig m = model;
  m.backbone.height = height;
  m.backbone.width = width;
  m.variant = variant;
  m.use_video_classifier = use_video_classifier;
  return m;
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
  }
}

bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

void read_size(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!is_count(j.at(key))) {
    throw ConfigError("'" + std::string(key) + "' in " + where + " must be a non-negative integer");
  }
  out = j.at(key).get<std::size_t>();
}

std::string similarity_name(InterSimilarity s) {
  return s == InterSimilarity::text ? "text" : "equation";
}

}  // namespace

json to_json(const RunConfig& c) {
  const auto& b = c.model.backbone;
  const auto& h = c.model.head;
  const auto& f = c.model.fusion;
  return json{
      {"name", c.name},
      {"variant", to_string(c.variant)},
      {"use_video_classifier", c.use_video_classifier},
      {"augmentation", to_string(c.augmentation)},
      {"sample_transforms", c.sample_transforms},
      {"epochs", c.epochs},
      {"learning_rate", c.learning_rate},
      {"weight_decay", c.weight_decay},
      {"warmup_steps", c.warmup_steps},
      {"grad_clip", c.grad_clip},
      {"seed", c.seed},
      {"max_steps", c.max_steps},
      {"dataset", c.dataset},
      {"eval_mode", to_string(c.eval_mode)},
      {"loss_weights",
       {{"cls", c.loss_weights.cls},
        {"l1", c.loss_weights.l1},
        {"giou", c.loss_weights.giou},
        {"video", c.loss_weights.video},
        {"no_object", c.loss_weights.no_object}}},
      {"model",
       {{"stem_channels", b.stem_channels},
        {"stem_stride", b.stem_stride},
        {"channels", b.channels},
        {"d_model", h.d_model},
        {"heads", h.heads},
        {"encoder_layers", h.encoder_layers},
        {"decoder_layers", h.decoder_layers},
        {"queries", h.queries},
        {"ffn_dim", h.ffn_dim},
        {"similarity", similarity_name(f.similarity)},
        {"residual", f.residual},
        {"scale_similarity", f.scale_similarity}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  const std::string top = "run config";
  reject_unknown(j,
                 {"name", "variant", "use_video_classifier", "augmentation", "sample_transforms",
                  "epochs", "learning_rate", "weight_decay", "warmup_steps", "grad_clip", "seed",
                  "max_steps", "dataset", "eval_mode", "loss_weights", "model"},
                 top);
  RunConfig c;
  read(j, "name", c.name, top);
  try {
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("augmentation"))
      c.augmentation = augment_kind_from_string(j.at("augmentation").get<std::string>());
    if (j.contains("eval_mode")) c.eval_mode = eval_mode_from_string(j.at("eval_mode").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad enum value in run config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  read(j, "use_video_classifier", c.use_video_classifier, top);
  read(j, "sample_transforms", c.sample_transforms, top);
  read_size(j, "epochs", c.epochs, top);
  read(j, "learning_rate", c.learning_rate, top);
  read(j, "weight_decay", c.weight_decay, top);
  read_size(j, "warmup_steps", c.warmup_steps, top);
  read(j, "grad_clip", c.grad_clip, top);
  if (j.contains("seed")) {
    if (!is_count(j.at("seed"))) throw ConfigError("'seed' must be a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  read_size(j, "max_steps", c.max_steps, top);
  read(j, "dataset", c.dataset, top);

  if (j.contains("loss_weights")) {
    const json& w = j.at("loss_weights");
    const std::string where = "loss_weights";
    reject_unknown(w, {"cls", "l1", "giou", "video", "no_object"}, where);
    read(w, "cls", c.loss_weights.cls, where);
    read(w, "l1", c.loss_weights.l1, where);
    read(w, "giou", c.loss_weights.giou, where);
    read(w, "video", c.loss_weights.video, where);
    read(w, "no_object", c.loss_weights.no_object, where);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    const std::string where = "model";
    reject_unknown(m,
                   {"stem_channels", "stem_stride", "channels", "d_model", "heads", "encoder_layers",
                    "decoder_layers", "queries", "ffn_dim", "similarity", "residual",
                    "scale_similarity"},
                   where);
    auto& b = c.model.backbone;
    auto& h = c.model.head;
    read_size(m, "stem_channels", b.stem_channels, where);
    read_size(m, "stem_stride", b.stem_stride, where);
    if (m.contains("channels")) {
      const json& ch = m.at("channels");
      if (!ch.is_array() || ch.size() != kPyramidLevels) {
        throw ConfigError("'channels' in model must list " + std::to_string(kPyramidLevels) + " widths");
      }
      for (std::size_t i = 0; i < kPyramidLevels; ++i) {
        if (!is_count(ch[i])) throw ConfigError("'channels' entries must be positive integers");
        b.channels[i] = ch[i].get<std::size_t>();
      }
    }
    read_size(m, "d_model", h.d_model, where);
    b.d_model = h.d_model;
    read_size(m, "heads", h.heads, where);
    read_size(m, "encoder_layers", h.encoder_layers, where);
    read_size(m, "decoder_layers", h.decoder_layers, where);
    read_size(m, "queries", h.queries, where);
    read_size(m, "ffn_dim", h.ffn_dim, where);
    if (m.contains("similarity")) {
      const json& v = m.at("similarity");
      if (v == "equation") {
        c.model.fusion.similarity = InterSimilarity::equation;
      } else if (v == "text") {
        c.model.fusion.similarity = InterSimilarity::text;
      } else {
        throw ConfigError("model.similarity must be \"equation\" or \"text\"");
      }
    }
    read(m, "residual", c.model.fusion.residual, where);
    read(m, "scale_similarity", c.model.fusion.scale_similarity, where);
  }
  c.model.variant = c.variant;
  c.model.use_video_classifier = c.use_video_classifier;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_hash(const RunConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cva
