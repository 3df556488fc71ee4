#include "ccfpse/config.hpp"

#include <fstream>
#include <set>

namespace ccfpse {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and reports whatever it did not consume.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(label() + " must be a JSON object");
  }

  template <typename V>
  void get(const std::string& key, V& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    const auto& v = doc_.at(key);
    try {
      if constexpr (std::is_same_v<V, bool>) {
        if (!v.is_boolean()) throw ConfigError(where(key) + " must be a boolean");
      } else if constexpr (std::is_integral_v<V>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
        if constexpr (std::is_unsigned_v<V>) {
          if (v.is_number_unsigned() == false && v.get<std::int64_t>() < 0) {
            throw ConfigError(where(key) + " must be non-negative");
          }
        }
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
      } else if constexpr (std::is_same_v<V, std::string>) {
        if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
      }
      out = v.get<V>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <typename E>
  void get_enum(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    std::string text;
    get(key, text);
    if (text.empty()) return;
    for (const auto& [name, value] : names) {
      if (text == name) {
        out = value;
        return;
      }
    }
    std::string options;
    for (const auto& [name, value] : names) options += std::string(options.empty() ? "" : ", ") + name;
    throw ConfigError(where(key) + ": unknown value '" + text + "' (expected one of " + options + ")");
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + where(key) + "'");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::initializer_list<std::pair<const char*, GeneratorVariant>> kGeneratorNames{
    {"cc", GeneratorVariant::kConditionalConv}, {"spade", GeneratorVariant::kModulation}};
const std::initializer_list<std::pair<const char*, PredictorKind>> kPredictorNames{
    {"fp", PredictorKind::kFeaturePyramid}, {"local", PredictorKind::kLocal}};
const std::initializer_list<std::pair<const char*, DiscriminatorVariant>> kDiscriminatorNames{
    {"fpse", DiscriminatorVariant::kFeaturePyramid}, {"ms-patch", DiscriminatorVariant::kMultiScalePatch}};
const std::initializer_list<std::pair<const char*, StageOrder>> kStageOrderNames{
    {"upsample-first", StageOrder::kUpsampleFirst}, {"blocks-first", StageOrder::kBlocksFirst}};

template <typename E>
std::string name_of(E value, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  return "?";
}

void read_palette(Section& s, std::vector<Color>& palette) {
  const json* node = s.child("palette");
  if (node == nullptr) return;
  if (!node->is_array()) throw ConfigError(s.where("palette") + " must be an array of [r,g,b]");
  palette.clear();
  for (const auto& c : *node) {
    if (!c.is_array() || c.size() != 3) throw ConfigError(s.where("palette") + " entries must be [r,g,b]");
    Color color{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!c[i].is_number()) throw ConfigError(s.where("palette") + " entries must be numeric");
      color[i] = c[i].get<float>();
    }
    palette.push_back(color);
  }
}

void read_int_list(Section& s, const std::string& key, std::vector<int>& out) {
  const json* node = s.child(key);
  if (node == nullptr) return;
  if (!node->is_array()) throw ConfigError(s.where(key) + " must be an array of integers");
  out.clear();
  for (const auto& v : *node) {
    if (!v.is_number_integer()) throw ConfigError(s.where(key) + " must be an array of integers");
    out.push_back(v.get<int>());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (lr_g < 0 || lr_d < 0) throw ConfigError("train: learning rates must be non-negative");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("train: Adam betas must be in [0,1)");
  if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  if (steps < 0) throw ConfigError("train.steps must be non-negative");
  if (lambda_p < 0 || lambda_fm < 0) throw ConfigError("train: loss weights must be non-negative");
  if (d_steps <= 0) throw ConfigError("train.d_steps must be positive");
  if (checkpoint_every < 0 || sample_every < 0) throw ConfigError("train: cadences must be non-negative");
}

GeneratorConfig ExperimentConfig::resolved_generator() const {
  auto g = generator;
  g.variant = train.generator;
  return g;
}

WeightNetConfig ExperimentConfig::resolved_weight_net() const {
  auto w = weight_net;
  w.predictor = train.predictor;
  return w;
}

DiscriminatorConfig ExperimentConfig::resolved_discriminator() const {
  auto d = discriminator;
  d.variant = train.discriminator;
  d.embeddings = train.embeddings;
  return d;
}

void ExperimentConfig::validate() const {
  try {
    data.task.validate();
    resolved_generator().validate();
    resolved_discriminator().validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  if (data.train_count <= 0 || data.eval_count <= 0 || data.count <= 0) {
    throw ConfigError("data: sample counts must be positive");
  }
  const auto g = resolved_generator();
  if (g.output_height() != data.task.height || g.output_width() != data.task.width) {
    throw ConfigError("generator output " + std::to_string(g.output_height()) + "x" +
                      std::to_string(g.output_width()) + " does not match data extents " +
                      std::to_string(data.task.height) + "x" + std::to_string(data.task.width));
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  json palette = json::array();
  for (const auto& col : c.data.task.palette) palette.push_back({col[0], col[1], col[2]});
  const auto& t = c.data.task;
  json doc;
  doc["data"] = {{"num_labels", t.num_labels},
                 {"height", t.height},
                 {"width", t.width},
                 {"palette", palette},
                 {"noise_amplitude", t.noise_amplitude},
                 {"min_shapes", t.min_shapes},
                 {"max_shapes", t.max_shapes},
                 {"min_extent", t.min_extent},
                 {"max_extent", t.max_extent},
                 {"train_count", c.data.train_count},
                 {"eval_count", c.data.eval_count},
                 {"count", c.data.count},
                 {"seed", c.data.seed},
                 {"eval_seed", c.data.eval_seed},
                 {"train_manifest", c.data.train_manifest},
                 {"eval_manifest", c.data.eval_manifest}};
  const auto& g = c.generator;
  doc["generator"] = {{"z_channels", g.z_channels},
                      {"widths", g.widths},
                      {"blocks_per_stage", g.blocks_per_stage},
                      {"kernel_size", g.kernel_size},
                      {"out_channels", g.out_channels},
                      {"base_height", g.base_height},
                      {"base_width", g.base_width},
                      {"bn_momentum", g.bn_momentum},
                      {"stage_order", to_string(g.stage_order)}};
  const auto& w = c.weight_net;
  doc["weight_net"] = {{"encoder_widths", w.encoder_widths},
                       {"decoder_width", w.decoder_width},
                       {"head_hidden", w.head_hidden},
                       {"bottleneck_convs", w.bottleneck_convs},
                       {"head_scale", w.head_scale}};
  const auto& d = c.discriminator;
  doc["discriminator"] = {{"widths", d.widths}, {"fpn_channels", d.fpn_channels}, {"patch_stages", d.patch_stages}};
  const auto& tr = c.train;
  doc["train"] = {{"lr_g", tr.lr_g},
                  {"lr_d", tr.lr_d},
                  {"beta1", tr.beta1},
                  {"beta2", tr.beta2},
                  {"batch_size", tr.batch_size},
                  {"steps", tr.steps},
                  {"seed", tr.seed},
                  {"lambda_p", tr.lambda_p},
                  {"lambda_fm", tr.lambda_fm},
                  {"d_steps", tr.d_steps},
                  {"generator", to_string(tr.generator)},
                  {"predictor", to_string(tr.predictor)},
                  {"discriminator", to_string(tr.discriminator)},
                  {"embeddings", tr.embeddings},
                  {"checkpoint_every", tr.checkpoint_every},
                  {"sample_every", tr.sample_every},
                  {"eval_running_stats", tr.eval_running_stats}};
  return doc;
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  Section root(doc, "");
  if (const json* node = root.child("data")) {
    Section s(*node, "data");
    auto& t = c.data.task;
    s.get("num_labels", t.num_labels);
    s.get("height", t.height);
    s.get("width", t.width);
    read_palette(s, t.palette);
    s.get("noise_amplitude", t.noise_amplitude);
    s.get("min_shapes", t.min_shapes);
    s.get("max_shapes", t.max_shapes);
    s.get("min_extent", t.min_extent);
    s.get("max_extent", t.max_extent);
    s.get("train_count", c.data.train_count);
    s.get("eval_count", c.data.eval_count);
    s.get("count", c.data.count);
    s.get("seed", c.data.seed);
    s.get("eval_seed", c.data.eval_seed);
    s.get("train_manifest", c.data.train_manifest);
    s.get("eval_manifest", c.data.eval_manifest);
    s.finish();
  }
  if (const json* node = root.child("generator")) {
    Section s(*node, "generator");
    auto& g = c.generator;
    s.get("z_channels", g.z_channels);
    read_int_list(s, "widths", g.widths);
    s.get("blocks_per_stage", g.blocks_per_stage);
    s.get("kernel_size", g.kernel_size);
    s.get("out_channels", g.out_channels);
    s.get("base_height", g.base_height);
    s.get("base_width", g.base_width);
    s.get("bn_momentum", g.bn_momentum);
    s.get_enum("stage_order", g.stage_order, kStageOrderNames);
    s.finish();
  }
  if (const json* node = root.child("weight_net")) {
    Section s(*node, "weight_net");
    auto& w = c.weight_net;
    read_int_list(s, "encoder_widths", w.encoder_widths);
    s.get("decoder_width", w.decoder_width);
    s.get("head_hidden", w.head_hidden);
    s.get("bottleneck_convs", w.bottleneck_convs);
    s.get("head_scale", w.head_scale);
    s.finish();
  }
  if (const json* node = root.child("discriminator")) {
    Section s(*node, "discriminator");
    auto& d = c.discriminator;
    read_int_list(s, "widths", d.widths);
    s.get("fpn_channels", d.fpn_channels);
    s.get("patch_stages", d.patch_stages);
    s.finish();
  }
  if (const json* node = root.child("train")) {
    Section s(*node, "train");
    auto& t = c.train;
    s.get("lr_g", t.lr_g);
    s.get("lr_d", t.lr_d);
    s.get("beta1", t.beta1);
    s.get("beta2", t.beta2);
    s.get("batch_size", t.batch_size);
    s.get("steps", t.steps);
    s.get("seed", t.seed);
    s.get("lambda_p", t.lambda_p);
    s.get("lambda_fm", t.lambda_fm);
    s.get("d_steps", t.d_steps);
    s.get_enum("generator", t.generator, kGeneratorNames);
    s.get_enum("predictor", t.predictor, kPredictorNames);
    s.get_enum("discriminator", t.discriminator, kDiscriminatorNames);
    s.get("embeddings", t.embeddings);
    s.get("checkpoint_every", t.checkpoint_every);
    s.get("sample_every", t.sample_every);
    s.get("eval_running_stats", t.eval_running_stats);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must be KEY=VALUE");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config " + path->string());
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(path->string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

std::string to_string(GeneratorVariant v) { return name_of(v, kGeneratorNames); }
std::string to_string(PredictorKind v) { return name_of(v, kPredictorNames); }
std::string to_string(DiscriminatorVariant v) { return name_of(v, kDiscriminatorNames); }
std::string to_string(StageOrder v) { return name_of(v, kStageOrderNames); }

}  // namespace ccfpse
