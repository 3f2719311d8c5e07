// Command-line front end: dataset generation, training runs, ablation
// grids, attention cost reports and gradient checks.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pathohr/data/synthetic.hpp"
#include "pathohr/error.hpp"
#include "pathohr/eval/experiment.hpp"
#include "pathohr/model/encoder_stack.hpp"
#include "pathohr/numeric/grad_check.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace pathohr;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kMissingInput = 2, kDiverged = 3 };

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// Flags shared by `run` and `ablate`. Without --config every model field
// comes from these flags; with --config only flags given explicitly
// override the file.
struct ExperimentFlags {
  std::string config_file;
  std::string model = "pathohr";
  std::string method = "cosine";
  std::size_t patch_size = 16;
  double tau_merge = 0.0;
  double temperature = 1.0;
  std::size_t n_blocks = 1;
  std::size_t j_iters = 1;
  std::size_t target_tokens = ModelConfig{}.merge.target_tokens;
  bool residual = false;
  std::string merge_placement = "post_loop";
  std::string fpe = "on";
  bool no_merge = false;
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t embed_dim = kDefaultEmbeddingDim;
  std::uint64_t seed = 0;

  std::string data_dir;
  std::string out_dir = ".";
  std::size_t epochs = 20;
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  std::uint64_t encoder_seed = 0;

  std::map<std::string, CLI::Option*> opts;

  void add_to(CLI::App& app) {
    opts["model"] = app.add_option("--model", model, "pathohr, or tangle for the gated-attention baseline")
                        ->check(CLI::IsMember({"pathohr", "tangle"}));
    opts["method"] = app.add_option("--method", method, "similarity method")
                         ->check(CLI::IsMember({"pooled_attention", "euclidean", "cosine", "attention_score",
                                                "semantic", "tome"}));
    opts["patch-size"] = app.add_option("--patch-size", patch_size, "patch side in pixels")->check(CLI::PositiveNumber);
    opts["tau-merge"] = app.add_option("--tau-merge", tau_merge, "merge threshold on similarity scores");
    opts["temperature"] = app.add_option("--temperature", temperature, "initial similarity temperature");
    opts["n-blocks"] =
        app.add_option("--n-blocks", n_blocks, "encoder blocks per iteration (N)")->check(CLI::PositiveNumber);
    opts["j-iters"] = app.add_option("--j-iters", j_iters, "outer iterations (J)")->check(CLI::PositiveNumber);
    opts["target-tokens"] =
        app.add_option("--target-tokens", target_tokens, "merge until at most this many patch tokens")
            ->check(CLI::PositiveNumber);
    opts["residual"] = app.add_flag("--residual,!--no-residual", residual, "residual path around the merge");
    opts["merge-placement"] = app.add_option("--merge-placement", merge_placement, "post_loop or per_iteration")
                                  ->check(CLI::IsMember({"post_loop", "per_iteration"}));
    opts["fpe"] =
        app.add_option("--fpe", fpe, "fuzzy positional encoding while training")->check(CLI::IsMember({"on", "off"}));
    opts["no-merge"] = app.add_flag("--no-merge", no_merge, "disable token merging");
    opts["d"] = app.add_option("--d", d, "token width")->check(CLI::PositiveNumber);
    opts["heads"] = app.add_option("--heads", heads, "attention heads")->check(CLI::PositiveNumber);
    opts["embed-dim"] = app.add_option("--embed-dim", embed_dim, "patch embedding width")->check(CLI::PositiveNumber);
    opts["seed"] = app.add_option("--seed", seed, "model and training seed");
    app.add_option("--config", config_file, "ModelConfig JSON to start from");
    app.add_option("--data-dir", data_dir, "directory holding manifest.csv and the slides")->required();
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--epochs", epochs, "training epochs")->check(CLI::PositiveNumber);
    app.add_option("--lr", lr, "learning rate")->check(CLI::NonNegativeNumber);
    app.add_option("--momentum", momentum, "SGD momentum")->check(CLI::Range(0.0, 0.999999));
    app.add_option("--batch-size", batch_size, "slides per step")->check(CLI::PositiveNumber);
    app.add_option("--encoder-seed", encoder_seed, "seed of the frozen patch encoder");
  }

  ModelConfig resolve() const {
    const bool from_file = !config_file.empty();
    ModelConfig c = from_file ? ModelConfig::from_json(read_text(config_file)) : ModelConfig{};
    auto use = [&](const char* name) { return !from_file || opts.at(name)->count() > 0; };
    if (use("model")) c.model = parse_model_kind(model);
    if (use("method")) c.method = parse_similarity_method(method);
    if (use("patch-size")) c.patch_size = patch_size;
    if (use("tau-merge")) c.merge.merge_threshold = tau_merge;
    if (use("temperature")) c.temperature = temperature;
    if (use("n-blocks")) c.N = n_blocks;
    if (use("j-iters")) c.J = j_iters;
    if (use("target-tokens")) c.merge.target_tokens = target_tokens;
    if (use("residual")) c.residual = c.merge.residual = residual;
    if (use("merge-placement")) c.merge_placement = parse_merge_placement(merge_placement);
    if (use("fpe")) c.fpe = fpe == "on";
    if (use("no-merge")) c.merge_enabled = !no_merge;
    if (use("d")) c.d = d;
    if (use("heads")) c.heads = heads;
    if (use("embed-dim")) c.input_dim = embed_dim;
    if (use("seed")) c.seed = seed;
    c.validate();
    return c;
  }

  TrainConfig train_config(std::uint64_t model_seed) const {
    TrainConfig t;
    t.epochs = epochs;
    t.learning_rate = lr;
    t.momentum = momentum;
    t.batch_size = batch_size;
    t.seed = model_seed;
    return t;
  }

  EmbeddingOptions embedding(const ModelConfig& c) const {
    EmbeddingOptions e;
    e.patch_size = static_cast<int>(c.patch_size);
    e.encoder_seed = encoder_seed;
    e.embedding_dim = c.input_dim;
    return e;
  }

  Json run_json(const ModelConfig& c, const TrainConfig& t) const {
    Json j;
    j["model"] = Json::parse(c.to_json());
    j["train"] = {{"epochs", t.epochs},
                  {"learning_rate", t.learning_rate},
                  {"momentum", t.momentum},
                  {"batch_size", t.batch_size},
                  {"seed", t.seed}};
    const EmbeddingOptions e = embedding(c);
    j["embedding"] = {{"patch_size", e.patch_size},
                      {"encoder_seed", e.encoder_seed},
                      {"hidden_dim", e.hidden_dim},
                      {"embedding_dim", e.embedding_dim},
                      {"min_tissue_fraction", e.min_tissue_fraction}};
    return j;
  }
};

PreparedDataset load_dataset(const fs::path& dir, const EmbeddingOptions& options) {
  const fs::path manifest = dir / kManifestName;
  if (!fs::is_regular_file(manifest)) throw MissingInput("no " + std::string(kManifestName) + " in " + dir.string());
  const auto entries = read_manifest(manifest);
  if (entries.empty()) throw MissingInput("manifest lists no slides");
  std::vector<SlideImage> images;
  std::vector<int> labels;
  std::vector<Split> splits;
  for (const auto& e : entries) {
    const fs::path file = dir / e.filename;
    if (!fs::is_regular_file(file)) throw MissingInput("missing slide " + file.string());
    images.push_back(read_pgm(file));
    labels.push_back(e.label);
    splits.push_back(e.split);
  }
  return prepare_dataset(images, labels, splits, options);
}

int cmd_gen_data(const std::string& out_dir, std::size_t n, double balance, std::uint64_t seed,
                 const SyntheticParams& params) {
  const SyntheticDataset ds = gen_dataset(n, balance, seed, params);
  write_dataset(out_dir, ds);
  std::size_t counts[3] = {0, 0, 0};
  for (Split s : ds.splits) ++counts[static_cast<int>(s)];
  Json j;
  j["n_slides"] = n;
  j["class_balance"] = balance;
  j["seed"] = seed;
  j["width"] = params.width;
  j["height"] = params.height;
  j["signal_fraction"] = params.signal_fraction;
  j["signal_block"] = params.signal_block;
  j["splits"] = {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}};
  write_text(fs::path(out_dir) / "dataset.json", j.dump(2) + "\n");
  std::cout << "wrote " << n << " slides to " << out_dir << " (train " << counts[0] << ", val " << counts[1]
            << ", test " << counts[2] << ")\n";
  return kOk;
}

int cmd_run(const ExperimentFlags& flags) {
  const ModelConfig cfg = flags.resolve();
  const TrainConfig tc = flags.train_config(cfg.seed);
  const PreparedDataset data = load_dataset(flags.data_dir, flags.embedding(cfg));
  const ExperimentResult result = run_experiment(cfg, tc, data);

  const fs::path out(flags.out_dir);
  fs::create_directories(out);
  Json metrics;
  metrics["run"] = flags.run_json(cfg, tc);
  metrics["best_epoch"] = result.training.best_epoch;
  metrics["metrics"] = Json::parse(report_to_json(result.report));
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
  write_text(out / "metrics.csv", reports_to_csv({result.report}));
  std::string curve = "epoch,train_loss,val_loss\n";
  for (const auto& e : result.training.history)
    curve += std::to_string(e.epoch) + ',' + fixed(e.train_loss, 8) + ',' + fixed(e.val_loss, 8) + '\n';
  write_text(out / "loss_curve.csv", curve);
  write_text(out / "run_config.json", flags.run_json(cfg, tc).dump(2) + "\n");
  save_checkpoint(out / "model.phc", result.training.model);
  const MetricsReport& r = result.report;
  std::cout << "test auc " << fixed(r.auc, 4) << "  acc " << fixed(r.acc, 4) << "  f1 " << fixed(r.f1, 4)
            << "  mac_ratio " << fixed(r.attention_mac_ratio, 4) << "\n";
  return kOk;
}

int cmd_ablate(const ExperimentFlags& flags, const std::vector<std::string>& methods,
               const std::vector<std::uint64_t>& seeds_in) {
  const ModelConfig base = flags.resolve();
  std::vector<SimilarityMethod> ms;
  for (const auto& m : methods) ms.push_back(parse_similarity_method(m));
  if (ms.empty()) ms.assign(kAllSimilarityMethods.begin(), kAllSimilarityMethods.end());
  const std::vector<std::uint64_t> seeds = seeds_in.empty() ? std::vector<std::uint64_t>{base.seed} : seeds_in;
  const TrainConfig tc = flags.train_config(base.seed);
  const PreparedDataset data = load_dataset(flags.data_dir, flags.embedding(base));
  const auto grid = ablation_grid(base, ms);
  const auto rows = ablation_harness(grid, data, tc, seeds);

  const fs::path out(flags.out_dir);
  fs::create_directories(out);
  write_text(out / "ablation.csv", reports_to_csv(rows));
  write_text(out / "ablation.json", reports_to_json(rows) + "\n");
  Json run_json = flags.run_json(base, tc);
  run_json["seeds"] = seeds;
  write_text(out / "run_config.json", run_json.dump(2) + "\n");
  std::cout << reports_to_csv(rows);
  return kOk;
}

int cmd_bench(const std::string& out_dir, std::size_t d, std::size_t heads, std::uint64_t seed, bool timing) {
  const std::vector<std::size_t> sizes = {256, 1024, 4096};
  std::string csv = "n,d,heads,macs_unmerged,macs_merged,mac_ratio,wall_ms_unmerged,wall_ms_merged\n";
  ParameterSet params;
  RngStream rng(seed);
  add_mqa_params(params, "", d, heads, rng);
  auto time_ms = [&](std::size_t n) {
    if (!timing) return 0.0;
    Matrix x(n, d);
    RngStream data(seed, n);
    for (double& v : x.data()) v = data.uniform(-1.0, 1.0);
    const TokenSet tokens = TokenSet::from_features(std::move(x));
    const auto start = std::chrono::steady_clock::now();
    (void)multi_query_attention(tokens, params, "", heads);
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  for (std::size_t n : sizes) {
    const std::uint64_t full = count_attention_macs(n, d, heads);
    const std::uint64_t merged = count_attention_macs(n / 2, d, heads);
    const double t_full = time_ms(n);
    const double t_merged = time_ms(n / 2);
    csv += std::to_string(n) + ',' + std::to_string(d) + ',' + std::to_string(heads) + ',' + std::to_string(full) +
           ',' + std::to_string(merged) + ',' + fixed(static_cast<double>(merged) / static_cast<double>(full), 6) +
           ',' + fixed(t_full, 3) + ',' + fixed(t_merged, 3) + '\n';
  }
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "bench.csv", csv);
  Json j = {{"command", "bench"}, {"d", d}, {"heads", heads}, {"seed", seed}, {"n", sizes}, {"timing", timing}};
  write_text(fs::path(out_dir) / "bench_config.json", j.dump(2) + "\n");
  std::cout << csv;
  return kOk;
}

int cmd_grad_check(const std::string& method, std::size_t tokens, std::size_t d, std::uint64_t seed,
                   double tolerance, const std::string& out_dir) {
  ModelConfig cfg;
  cfg.method = parse_similarity_method(method);
  cfg.input_dim = 6;
  cfg.d = d;
  cfg.heads = 2;
  cfg.attention_dim = 4;
  cfg.pos_grid_rows = cfg.pos_grid_cols = 4;
  cfg.merge.target_tokens = 2;
  cfg.merge.merge_threshold = -1e9;
  cfg.merge_placement = MergePlacement::per_iteration;
  cfg.seed = seed;
  const Model model = Model::init(cfg);
  LabeledSlide slide;
  Matrix x(tokens, cfg.input_dim);
  RngStream rng(seed, 99);
  for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
  slide.tokens = TokenSet::from_features(std::move(x));
  for (std::size_t i = 0; i < tokens; ++i)
    slide.tokens.positions.push_back({static_cast<int>(i / 3), static_cast<int>(i % 3)});
  slide.label = 1;
  const GradCheckReport rep = grad_check_report(model_loss_function(model, slide), model.params.flatten());
  Json j = {{"command", "grad-check"},
            {"config", Json::parse(cfg.to_json())},
            {"tokens", tokens},
            {"parameters", model.params.scalar_count()},
            {"max_relative_error", rep.max_relative_error},
            {"tolerance", tolerance},
            {"pass", rep.max_relative_error <= tolerance}};
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "gradcheck.json", j.dump(2) + "\n");
  }
  std::cout << "max relative error " << rep.max_relative_error << " over " << model.params.scalar_count()
            << " parameters (tolerance " << tolerance << ")\n";
  return rep.max_relative_error <= tolerance ? kOk : kDiverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathohr: token-merging transformer pipeline for slide-level classification"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic slide dataset");
  std::string gen_out = "data";
  std::size_t gen_n = 200;
  double gen_balance = 0.5;
  std::uint64_t gen_seed = 0;
  SyntheticParams gen_params;
  gen->add_option("--out-dir,--data-dir", gen_out, "output directory");
  gen->add_option("--n-slides", gen_n, "number of slides")->check(CLI::Range(10, 1000000));
  gen->add_option("--class-balance", gen_balance, "fraction of label-1 slides");
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--width", gen_params.width, "slide width")->check(CLI::PositiveNumber);
  gen->add_option("--height", gen_params.height, "slide height")->check(CLI::PositiveNumber);
  gen->add_option("--signal-fraction", gen_params.signal_fraction, "tissue fraction carrying the signal");

  auto* run = app.add_subcommand("run", "train on the train split and report test metrics");
  ExperimentFlags run_flags;
  run_flags.add_to(*run);

  auto* ablate = app.add_subcommand("ablate", "similarity method x residual ablation grid");
  ExperimentFlags ablate_flags;
  ablate_flags.add_to(*ablate);
  std::vector<std::string> ablate_methods;
  std::vector<std::uint64_t> ablate_seeds;
  ablate->add_option("--methods", ablate_methods, "methods to include (default: all six)")->delimiter(',');
  ablate->add_option("--seeds", ablate_seeds, "seeds averaged per cell (default: --seed)")->delimiter(',');

  auto* bench = app.add_subcommand("bench", "analytic and measured attention cost, merged vs unmerged");
  std::string bench_out = ".";
  std::size_t bench_d = 64;
  std::size_t bench_heads = 4;
  std::uint64_t bench_seed = 0;
  bool bench_no_timing = false;
  bench->add_option("--out-dir", bench_out, "output directory");
  bench->add_option("--d", bench_d, "token width")->check(CLI::PositiveNumber);
  bench->add_option("--heads", bench_heads, "attention heads")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed, "seed for the random tokens and weights");
  bench->add_flag("--no-timing", bench_no_timing, "skip wall-time measurement");

  auto* gcheck = app.add_subcommand("grad-check", "finite-difference check of full-pipeline gradients");
  std::string gc_method = "cosine";
  std::size_t gc_tokens = 5;
  std::size_t gc_d = 8;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  std::string gc_out;
  gcheck->add_option("--method", gc_method, "similarity method")
      ->check(CLI::IsMember({"pooled_attention", "euclidean", "cosine", "attention_score", "semantic", "tome"}));
  gcheck->add_option("--tokens", gc_tokens, "patch tokens")->check(CLI::Range(1, 64));
  gcheck->add_option("--d", gc_d, "token width (even)")->check(CLI::PositiveNumber);
  gcheck->add_option("--seed", gc_seed, "seed");
  gcheck->add_option("--tolerance", gc_tol, "maximum relative error");
  gcheck->add_option("--out-dir", gc_out, "write gradcheck.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gen_out, gen_n, gen_balance, gen_seed, gen_params);
    if (*run) return cmd_run(run_flags);
    if (*ablate) return cmd_ablate(ablate_flags, ablate_methods, ablate_seeds);
    if (*bench) return cmd_bench(bench_out, bench_d, bench_heads, bench_seed, !bench_no_timing);
    if (*gcheck) return cmd_grad_check(gc_method, gc_tokens, gc_d, gc_seed, gc_tol, gc_out);
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingInput;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric divergence: " << e.what() << "\n";
    return kDiverged;
  } catch (const FormatError& e) {
    std::cerr << "error: bad input: " << e.what() << "\n";
    return kMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
