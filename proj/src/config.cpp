#include "fscn/config.hpp"

#include <fstream>
#include <set>

namespace fscn {
namespace {

using nlohmann::json;

// Reads optional keys from one JSON object and rejects anything unread.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be a JSON object");
  }

  template <typename V>
  void get(const std::string& key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const json::exception&) {
      throw ConfigError(key_path(key) + ": wrong type (" + it->type_name() + ")");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + key_path(item.key()) + "'");
    }
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  std::string where() const { return path_.empty() ? "config " : "'" + path_ + "' "; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void validated(const std::string& prefix, Fn&& check) {
  try {
    check();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(prefix + e.what());
  }
}

LossParams loss_from_json(const json& j, const std::string& path) {
  LossParams p;
  ObjectReader r(j, path);
  r.get("lambda", p.lambda);
  r.get("alpha", p.alpha);
  r.finish();
  validated(path + ".", [&] { p.validate(); });
  return p;
}

AdamWParams optimizer_from_json(const json& j, const std::string& path) {
  AdamWParams p;
  ObjectReader r(j, path);
  r.get("beta1", p.beta1);
  r.get("beta2", p.beta2);
  r.get("eps", p.eps);
  r.get("weight_decay", p.weight_decay);
  r.finish();
  validated(path + ".", [&] { p.validate(); });
  return p;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  ObjectReader r(j, "train");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr0", c.lr0);
  r.get("total_steps", c.total_steps);
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  if (const json* loss = r.child("loss")) c.loss = loss_from_json(*loss, "train.loss");
  if (const json* opt = r.child("optimizer")) c.optimizer = optimizer_from_json(*opt, "train.optimizer");
  r.finish();
  validated("train.", [&] { c.validate(); });
  return c;
}

AugmentConfig augment_from_json(const json& j) {
  AugmentConfig a;
  ObjectReader r(j, "data.augment");
  r.get("flip_p", a.flip_p);
  r.get("contrast_p", a.contrast_p);
  r.get("color_p", a.color_p);
  r.get("rot_lo_deg", a.rot_lo_deg);
  r.get("rot_hi_deg", a.rot_hi_deg);
  r.get("crop_h", a.crop_h);
  r.get("crop_w", a.crop_w);
  r.finish();
  validated("data.augment.", [&] { a.validate(); });
  return a;
}

SyntheticSpec synthetic_from_json(const json& j) {
  SyntheticSpec s;
  ObjectReader r(j, "data.synthetic");
  r.get("seed", s.seed);
  r.get("n_train", s.n_train);
  r.get("n_test", s.n_test);
  r.get("height", s.height);
  r.get("width", s.width);
  r.get("constant_depth", s.constant_depth);
  r.finish();
  if (s.n_train < 0 || s.n_test < 0) throw ConfigError("data.synthetic: sample counts must be >= 0");
  if (s.height <= 0 || s.height % 32 != 0) throw ConfigError("data.synthetic.height must be a positive multiple of 32");
  if (s.width <= 0 || s.width % 32 != 0) throw ConfigError("data.synthetic.width must be a positive multiple of 32");
  return s;
}

DataConfig data_from_json(const json& j) {
  DataConfig d;
  ObjectReader r(j, "data");
  if (const json* synth = r.child("synthetic")) {
    d.synthetic = synth->is_null() ? std::nullopt : std::optional(synthetic_from_json(*synth));
  }
  r.get("root", d.root);
  if (const json* aug = r.child("augment")) d.augment = augment_from_json(*aug);
  r.get("depth_cap_m", d.depth_cap_m);
  r.finish();
  if (d.synthetic && !d.root.empty()) throw ConfigError("data: set either 'synthetic' or 'root', not both");
  if (!d.synthetic && d.root.empty()) throw ConfigError("data: one of 'synthetic' or 'root' is required");
  if (!(d.depth_cap_m > 0.0)) throw ConfigError("data.depth_cap_m must be positive");
  return d;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"skip_mode", to_string(c.skip_mode)},
              {"base_channels", c.base_channels},
              {"channel_schedule", c.channel_schedule},
              {"use_concat_weights", c.use_concat_weights},
              {"use_se", c.use_se},
              {"se_reduction", c.se_reduction},
              {"max_depth_m", c.max_depth_m},
              {"input_h", c.input_h},
              {"input_w", c.input_w}};
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr0", c.lr0},
              {"total_steps", c.total_steps},
              {"seed", c.seed},
              {"checkpoint_every", c.checkpoint_every},
              {"loss", {{"lambda", c.loss.lambda}, {"alpha", c.loss.alpha}}},
              {"optimizer",
               {{"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"eps", c.optimizer.eps},
                {"weight_decay", c.optimizer.weight_decay}}}};
}

json to_json(const DataConfig& c) {
  json j;
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    j["synthetic"] = {{"seed", s.seed},         {"n_train", s.n_train}, {"n_test", s.n_test},
                      {"height", s.height},     {"width", s.width},
                      {"constant_depth", s.constant_depth}};
  } else {
    j["synthetic"] = nullptr;
  }
  j["root"] = c.root;
  const auto& a = c.augment;
  j["augment"] = {{"flip_p", a.flip_p},         {"contrast_p", a.contrast_p},
                  {"color_p", a.color_p},       {"rot_lo_deg", a.rot_lo_deg},
                  {"rot_hi_deg", a.rot_hi_deg}, {"crop_h", a.crop_h},
                  {"crop_w", a.crop_w}};
  j["depth_cap_m"] = c.depth_cap_m;
  return j;
}

json to_json(const RunConfig& c) {
  return json{{"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"data", to_json(c.data)},
              {"output_dir", c.output_dir}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  ObjectReader r(j, "model");
  std::string mode = to_string(c.skip_mode);
  r.get("skip_mode", mode);
  r.get("base_channels", c.base_channels);
  r.get("channel_schedule", c.channel_schedule);
  r.get("use_concat_weights", c.use_concat_weights);
  r.get("use_se", c.use_se);
  r.get("se_reduction", c.se_reduction);
  r.get("max_depth_m", c.max_depth_m);
  r.get("input_h", c.input_h);
  r.get("input_w", c.input_w);
  r.finish();
  validated("model.", [&] {
    try {
      c.skip_mode = skip_mode_from_string(mode);
      c.validate();
    } catch (const ConfigError& e) {
      throw std::invalid_argument(e.what());
    }
  });
  return c;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  ObjectReader r(j, "");
  if (const json* m = r.child("model")) c.model = model_config_from_json(*m);
  if (const json* t = r.child("train")) c.train = train_from_json(*t);
  if (const json* d = r.child("data")) c.data = data_from_json(*d);
  r.get("output_dir", c.output_dir);
  r.finish();
  if (c.data.augment.crop_h != c.model.input_h || c.data.augment.crop_w != c.model.input_w) {
    throw ConfigError("data.augment.crop_h/crop_w must equal model.input_h/input_w");
  }
  if (c.data.synthetic && (c.data.synthetic->height < c.model.input_h ||
                           c.data.synthetic->width < c.model.input_w)) {
    throw ConfigError("data.synthetic.height/width must be at least model.input_h/input_w");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

Datasets load_datasets(const DataConfig& data, const ModelConfig& model) {
  Datasets sets;
  if (data.synthetic) {
    const auto& s = *data.synthetic;
    SynthOptions options;
    options.constant_depth = s.constant_depth;
    sets.train = generate_synthetic(mix_seed(s.seed, 0), s.n_train, s.height, s.width,
                                    model.max_depth_m, options);
    sets.test = generate_synthetic(mix_seed(s.seed, 1), s.n_test, s.height, s.width,
                                   model.max_depth_m, options);
    return sets;
  }
  const std::filesystem::path root(data.root);
  sets.train = load_split(parse_split(root / "splits" / "train.txt"), root);
  sets.test = load_split(parse_split(root / "splits" / "test.txt"), root);
  return sets;
}

}  // namespace fscn
