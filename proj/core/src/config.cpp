#include "pathohr/model/config.hpp"

#include <cmath>
#include <string>

#include "json.hpp"

#include "pathohr/error.hpp"

namespace pathohr {

using Json = nlohmann::ordered_json;

std::string_view to_string(ModelKind kind) { return kind == ModelKind::pathohr ? "pathohr" : "tangle"; }

ModelKind parse_model_kind(std::string_view name) {
  if (name == "pathohr") return ModelKind::pathohr;
  if (name == "tangle") return ModelKind::tangle;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

std::string_view to_string(MergePlacement placement) {
  return placement == MergePlacement::post_loop ? "post_loop" : "per_iteration";
}

MergePlacement parse_merge_placement(std::string_view name) {
  if (name == "post_loop") return MergePlacement::post_loop;
  if (name == "per_iteration") return MergePlacement::per_iteration;
  throw ConfigError("unknown merge placement '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (d == 0) throw ConfigError("d must be positive");
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("d = " + std::to_string(d) + " is not divisible by heads = " + std::to_string(heads));
  }
  if (N < 1) throw ConfigError("N must be >= 1");
  if (J < 1) throw ConfigError("J must be >= 1");
  if (patch_size == 0) throw ConfigError("patch_size must be positive");
  if (pos_grid_rows == 0 || pos_grid_cols == 0) throw ConfigError("positional grid must be non-empty");
  if (attention_dim == 0) throw ConfigError("attention_dim must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!std::isfinite(temperature)) throw ConfigError("temperature must be finite");
  if (residual != merge.residual) throw ConfigError("residual and merge.residual disagree");
  merge.validate();
}

MergeConfig ModelConfig::effective_merge() const {
  MergeConfig m = merge;
  m.residual = residual;
  m.mode = method == SimilarityMethod::tome ? MergeMode::tome : MergeMode::atm;
  return m;
}

SimilarityConfig ModelConfig::similarity_config() const {
  SimilarityConfig s;
  s.method = method;
  s.temperature = temperature;
  return s;
}

std::string ModelConfig::to_json(int indent) const {
  Json j;
  j["model"] = std::string(to_string(model));
  j["patch_size"] = patch_size;
  j["input_dim"] = input_dim;
  j["d"] = d;
  j["N"] = N;
  j["J"] = J;
  j["heads"] = heads;
  j["method"] = std::string(to_string(method));
  j["temperature"] = temperature;
  j["merge"] = {{"merge_threshold", merge.merge_threshold},
                {"target_tokens", merge.target_tokens},
                {"tome_r", merge.tome_r},
                {"residual", merge.residual}};
  j["merge_placement"] = std::string(to_string(merge_placement));
  j["merge_enabled"] = merge_enabled;
  j["residual"] = residual;
  j["fpe"] = fpe;
  j["pos_grid_rows"] = pos_grid_rows;
  j["pos_grid_cols"] = pos_grid_cols;
  j["attention_dim"] = attention_dim;
  j["num_classes"] = num_classes;
  j["seed"] = seed;
  return j.dump(indent);
}

namespace {

template <typename T>
void read_field(const Json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      out = it->get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> known, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool found = false;
    for (auto k : known) found = found || it.key() == k;
    if (!found) throw ConfigError("unknown field '" + it.key() + "' in " + where);
  }
}

}  // namespace

ModelConfig ModelConfig::from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config JSON must be an object");
  reject_unknown(j,
                 {"model", "patch_size", "input_dim", "d", "N", "J", "heads", "method", "temperature", "merge",
                  "merge_placement", "merge_enabled", "residual", "fpe", "pos_grid_rows", "pos_grid_cols",
                  "attention_dim", "num_classes", "seed"},
                 "config");
  ModelConfig c;
  std::string name;
  if (j.contains("model")) {
    read_field(j, "model", name);
    c.model = parse_model_kind(name);
  }
  read_field(j, "patch_size", c.patch_size);
  read_field(j, "input_dim", c.input_dim);
  read_field(j, "d", c.d);
  read_field(j, "N", c.N);
  read_field(j, "J", c.J);
  read_field(j, "heads", c.heads);
  if (j.contains("method")) {
    read_field(j, "method", name);
    c.method = parse_similarity_method(name);
  }
  read_field(j, "temperature", c.temperature);
  if (j.contains("merge")) {
    const Json& m = j["merge"];
    if (!m.is_object()) throw ConfigError("config field 'merge' must be an object");
    reject_unknown(m, {"merge_threshold", "target_tokens", "tome_r", "residual"}, "merge");
    read_field(m, "merge_threshold", c.merge.merge_threshold);
    read_field(m, "target_tokens", c.merge.target_tokens);
    read_field(m, "tome_r", c.merge.tome_r);
    read_field(m, "residual", c.merge.residual);
  }
  if (j.contains("merge_placement")) {
    read_field(j, "merge_placement", name);
    c.merge_placement = parse_merge_placement(name);
  }
  read_field(j, "merge_enabled", c.merge_enabled);
  // Either spelling may be given alone; if both appear they must agree.
  const bool nested = j.contains("merge") && j["merge"].contains("residual");
  if (j.contains("residual")) {
    read_field(j, "residual", c.residual);
    if (nested && c.residual != c.merge.residual) throw ConfigError("residual and merge.residual disagree");
    c.merge.residual = c.residual;
  } else {
    c.residual = c.merge.residual;
  }
  read_field(j, "fpe", c.fpe);
  read_field(j, "pos_grid_rows", c.pos_grid_rows);
  read_field(j, "pos_grid_cols", c.pos_grid_cols);
  read_field(j, "attention_dim", c.attention_dim);
  read_field(j, "num_classes", c.num_classes);
  read_field(j, "seed", c.seed);
  c.validate();
  return c;
}

}  // namespace pathohr
