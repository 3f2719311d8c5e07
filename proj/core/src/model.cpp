#include "pathohr/model/model.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "pathohr/encoder/feature_file.hpp"
#include "pathohr/error.hpp"
#include "pathohr/model/aggregation_head.hpp"

namespace pathohr {

namespace {
constexpr char kCheckpointMagic[4] = {'P', 'H', 'C', '1'};
}

Model Model::init(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  m.params = config.model == ModelKind::pathohr ? init_encoder_params(config) : init_tangle_params(config);
  return m;
}

ad::Var Model::logits_var(const BoundParameters& bound, const TokenSet& embeddings, FuzzMode mode, RngStream& rng,
                          ForwardDiagnostics* diagnostics) const {
  if (config.model == ModelKind::pathohr) {
    return pathohr_forward_var(bound, embeddings, config, mode, rng, diagnostics);
  }
  if (diagnostics) {
    *diagnostics = ForwardDiagnostics{};
    diagnostics->patch_tokens = diagnostics->tokens_before_merge = diagnostics->tokens_after_merge =
        embeddings.count();
  }
  return tangle_forward_var(bound, embeddings, config);
}

ForwardResult Model::predict(const TokenSet& embeddings) const {
  ad::Tape tape;
  BoundParameters bound(tape, params);
  RngStream rng(config.seed);
  ForwardResult result;
  const Matrix& logits = logits_var(bound, embeddings, FuzzMode::inference, rng, &result.diagnostics).value();
  result.logits.assign(logits.data().begin(), logits.data().end());
  return result;
}

double positive_score(const std::vector<double>& logits) {
  if (logits.size() < 2) throw DimensionError("positive_score needs two logits");
  return logits[1] - logits[0];
}

int predicted_class(const std::vector<double>& logits) {
  if (logits.empty()) throw EmptyInputError("predicted_class of empty logits");
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

Matrix one_hot(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw IndexError("label " + std::to_string(label) + " outside " + std::to_string(classes) + " classes");
  }
  Matrix t(1, classes);
  t(0, static_cast<std::size_t>(label)) = 1.0;
  return t;
}

void save_checkpoint(std::ostream& out, const Model& model) {
  out.write(kCheckpointMagic, 4);
  const std::string json = model.config.to_json();
  binio::write_u32(out, static_cast<std::uint32_t>(json.size()));
  out.write(json.data(), static_cast<std::streamsize>(json.size()));
  binio::write_u32(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& e : model.params.entries()) {
    binio::write_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(e.value.rows()));
    binio::write_u32(out, static_cast<std::uint32_t>(e.value.cols()));
    for (double v : e.value.data()) binio::write_f64(out, v);
  }
  if (!out) throw FormatError("checkpoint write failed");
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  save_checkpoint(out, model);
}

namespace {

std::string read_bytes(std::istream& in, std::size_t n, const char* what) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(std::string("truncated checkpoint: ") + what);
  return s;
}

}  // namespace

Model load_checkpoint(std::istream& in) {
  if (read_bytes(in, 4, "magic") != std::string(kCheckpointMagic, 4)) throw FormatError("not a PHC1 checkpoint");
  Model model;
  model.config = ModelConfig::from_json(read_bytes(in, binio::read_u32(in, "config length"), "config"));
  const std::uint32_t count = binio::read_u32(in, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_bytes(in, binio::read_u32(in, "name length"), "name");
    const std::uint32_t rows = binio::read_u32(in, "rows");
    const std::uint32_t cols = binio::read_u32(in, "cols");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = binio::read_f64(in, "matrix data");
    model.params.add(std::move(name), std::move(m));
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace pathohr
