// pointgrow: batch entry point for every pipeline stage, the ablation sweeps
// and the annotation service.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pointgrow/error.hpp"
#include "pointgrow/loss.hpp"
#include "pointgrow/parallel.hpp"
#include "pointgrow/pipeline.hpp"
#include "pointgrow/png_io.hpp"
#include "pointgrow/service.hpp"

namespace fs = std::filesystem;
using namespace pointgrow;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// Writes to the file when a path is given, otherwise to stdout.
void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
  return value;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError("expected true or false, got '" + text + "'");
}

SuperpixelBackend parse_backend(const std::string& name) {
  if (name == "agglomerative") return SuperpixelBackend::kAgglomerative;
  if (name == "slic") return SuperpixelBackend::kSlic;
  throw UsageError("unknown superpixel backend '" + name + "'");
}

// Options shared by several subcommands, bound once per subcommand.
struct Common {
  std::string config;
  std::uint64_t seed = 0;
  int classes = kNumClasses;
  int threads = default_thread_count();
  int points = 50;
  int k = 100;
  std::string edge = "false";
  std::string strategy = "balanced";
  std::string policy = "ignore";
  std::string backend = "agglomerative";
  double sigma = 10.0;
  double beta = 0.5;
  double lr = 1e-4;
  int batch = 8;
  int epochs = 100;
  int patience = 10;
  double factor = 0.1;

  PipelineConfig pipeline() const {
    PipelineConfig c;
    c.points = points;
    c.k = k;
    c.edge = parse_bool(edge);
    c.strategy = parse_point_source(strategy);
    c.policy = parse_background_policy(policy);
    c.seed = seed;
    c.num_classes = classes;
    c.superpixel.backend = parse_backend(backend);
    c.superpixel.sigma = sigma;
    c.superpixel.beta = beta;
    c.train.lr = lr;
    c.train.batch_size = batch;
    c.train.epochs = epochs;
    c.train.patience = patience;
    c.train.factor = factor;
    c.train.threads = threads;
    return c;
  }
};

void add_config(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON file of option values (flags override)");
  app->add_option("--seed", c.seed, "Seed for all randomness");
  app->add_option("--classes", c.classes, "Number of classes");
  app->add_option("--threads", c.threads, "Worker threads (POINTGROW_THREADS caps the default)");
}
void add_superpixel(CLI::App* app, Common& c) {
  app->add_option("--k", c.k, "Superpixel count");
  app->add_option("--edge", c.edge, "Use edge-aware affinities (true|false)");
  app->add_option("--backend", c.backend, "agglomerative|slic");
  app->add_option("--sigma", c.sigma, "Merge score scale");
  app->add_option("--beta", c.beta, "Region size exponent");
}
void add_sampling(CLI::App* app, Common& c) {
  app->add_option("--points", c.points, "Points per image");
  app->add_option("--strategy", c.strategy, "balanced|random");
}
void add_training(CLI::App* app, Common& c) {
  app->add_option("--lr", c.lr, "Initial learning rate");
  app->add_option("--batch", c.batch, "Batch size");
  app->add_option("--epochs", c.epochs, "Epochs");
  app->add_option("--patience", c.patience, "Plateau patience in epochs");
  app->add_option("--factor", c.factor, "Plateau decay factor");
}

// Fills options that were not given on the command line from a JSON object.
void apply_config(CLI::App* app, const std::string& path) {
  if (path.empty()) return;
  const Bytes bytes = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& ex) {
    throw UsageError("malformed config " + path + ": " + ex.what());
  }
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") throw UsageError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    std::vector<std::string> inputs;
    const auto as_text = [](const nlohmann::json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + as_text(v);
      inputs.push_back(joined);
    } else {
      inputs.push_back(as_text(value));
    }
    for (const std::string& in : inputs) opt->add_result(in);
    opt->run_callback();
  }
}

template <class T>
std::vector<T> parse_list(const std::string& text, T (*convert)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(convert(item));
  }
  return out;
}

int to_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("expected an integer, got '" + s + "'");
}
std::uint64_t to_u64(const std::string& s) { return static_cast<std::uint64_t>(to_int(s)); }

struct Samples {
  std::vector<RasterImage> images;
  std::vector<ClassMask> masks;
  std::vector<std::string> stems;
};

Samples load_split(const fs::path& manifest_path, const DatasetManifest& manifest, Split split,
                   int classes) {
  Samples s;
  for (const ManifestEntry& e : manifest.split(split)) {
    s.images.push_back(read_image(resolve_entry_path(manifest_path, e.image)));
    s.masks.push_back(read_mask(resolve_entry_path(manifest_path, e.mask), classes));
    s.stems.push_back(entry_stem(e));
  }
  return s;
}

std::vector<EvalSample> eval_samples(const Samples& s) {
  std::vector<EvalSample> out;
  for (std::size_t i = 0; i < s.images.size(); ++i) out.push_back({&s.images[i], &s.masks[i]});
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Point-supervised segmentation toolkit"};
  app.require_subcommand(1);
  Common c;
  std::string out, image, mask, points_csv, manifest, weights, checkpoint, map_png, hierarchy_in,
      hierarchy_out, report, pseudo_dir, split = "test", addr = "127.0.0.1:8080", static_dir,
      persist_dir;
  std::string points_list, k_list, edge_list, loss_list, seeds_list = "0,1,2";
  std::vector<std::string> pseudo_stems;
  int count = 200, size = 64, index = -1, max_side = 2048;
  std::uint64_t first_seed = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a manifest");
  add_config(synth, c);
  synth->add_option("--out", out, "Output directory");
  synth->add_option("--count", count, "Number of scenes");
  synth->add_option("--size", size, "Scene width and height");
  synth->add_option("--first-seed", first_seed, "Seed of the first scene");

  auto* superpixels = app.add_subcommand("superpixels", "Superpixel map PNG (and hierarchy)");
  add_config(superpixels, c);
  add_superpixel(superpixels, c);
  superpixels->add_option("--image", image, "Input RGB PNG");
  superpixels->add_option("--out", out, "Output 16-bit map PNG");
  superpixels->add_option("--hierarchy-out", hierarchy_out, "Write the merge hierarchy");
  superpixels->add_option("--hierarchy-in", hierarchy_in, "Reuse a saved merge hierarchy");

  auto* sample = app.add_subcommand("sample", "Sample query points from a ground-truth mask");
  add_config(sample, c);
  add_sampling(sample, c);
  sample->add_option("--mask", mask, "Ground-truth class PNG");
  sample->add_option("--index", index, "Manifest index; derives the seed the way pipeline does");
  sample->add_option("--out", out, "Output points CSV (sidecar JSON written alongside)");

  auto* propagate_cmd = app.add_subcommand("propagate", "Propagate points into a pseudo-mask");
  add_config(propagate_cmd, c);
  add_superpixel(propagate_cmd, c);
  propagate_cmd->add_option("--image", image, "Input RGB PNG (superpixels computed)");
  propagate_cmd->add_option("--superpixels", map_png, "Precomputed superpixel map PNG");
  propagate_cmd->add_option("--points", points_csv, "Points CSV");
  propagate_cmd->add_option("--policy", c.policy, "ignore|supervise");
  propagate_cmd->add_option("--out", out, "Output stem for .labels.png and .mask.png");
  propagate_cmd->add_option("--report", report, "Coverage JSON (default stdout)");

  auto* weights_cmd = app.add_subcommand("weights", "Class weights from pseudo-masks");
  add_config(weights_cmd, c);
  weights_cmd->add_option("--pseudo", pseudo_stems, "Pseudo-mask stems");
  weights_cmd->add_option("--pseudo-dir", pseudo_dir, "Directory of *.labels.png pseudo-masks");
  weights_cmd->add_option("--out", out, "Output JSON (default stdout)");

  auto* train_cmd = app.add_subcommand("train", "Train the toy network on pseudo-masks");
  add_config(train_cmd, c);
  add_training(train_cmd, c);
  train_cmd->add_option("--manifest", manifest, "Dataset manifest");
  train_cmd->add_option("--pseudo-dir", pseudo_dir, "Pseudo-masks named by manifest stem");
  train_cmd->add_option("--weights", weights, "Class weights JSON (computed when absent)");
  train_cmd->add_option("--out", out, "Output directory");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  add_config(eval_cmd, c);
  eval_cmd->add_option("--manifest", manifest, "Dataset manifest");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file");
  eval_cmd->add_option("--split", split, "train|val|test");
  eval_cmd->add_option("--out", out, "Metrics JSON (default stdout)");

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  add_config(pipeline, c);
  add_superpixel(pipeline, c);
  add_sampling(pipeline, c);
  add_training(pipeline, c);
  pipeline->add_option("--policy", c.policy, "ignore|supervise");
  pipeline->add_option("--manifest", manifest, "Dataset manifest (synthetic data when absent)");
  pipeline->add_option("--count", count, "Synthetic scenes when no manifest is given");
  pipeline->add_option("--size", size, "Synthetic scene size");
  pipeline->add_option("--out", out, "Output directory");

  auto* ablate = app.add_subcommand("ablate", "Sweep ablation axes on the synthetic benchmark");
  add_config(ablate, c);
  add_training(ablate, c);
  ablate->add_option("--strategy", c.strategy, "balanced|random");
  ablate->add_option("--backend", c.backend, "agglomerative|slic");
  ablate->add_option("--sigma", c.sigma, "Merge score scale");
  ablate->add_option("--beta", c.beta, "Region size exponent");
  ablate->add_option("--points", points_list, "Point counts to sweep, e.g. 10,50");
  ablate->add_option("--k", k_list, "Superpixel counts to sweep, e.g. 50,100,200");
  ablate->add_option("--edge", edge_list, "Edge flags to sweep, e.g. true,false");
  ablate->add_option("--loss", loss_list, "Loss variants: masked,background,full");
  ablate->add_option("--seeds", seeds_list, "Run seeds");
  ablate->add_option("--count", count, "Benchmark scenes");
  ablate->add_option("--size", size, "Scene size");
  ablate->add_option("--out", out, "Report JSON (default stdout)");

  auto* serve = app.add_subcommand("serve", "Start the annotation service");
  add_config(serve, c);
  add_superpixel(serve, c);
  serve->add_option("--addr", addr, "host:port");
  serve->add_option("--static", static_dir, "Static asset directory served at /");
  serve->add_option("--persist", persist_dir, "Write-through directory for sessions");
  serve->add_option("--max-side", max_side, "Upload size limit per side");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  apply_config(cmd, c.config);
  if (c.threads < 1) c.threads = 1;
  // Bad enum names in flags are usage errors, not data errors.
  try {
    (void)c.pipeline();
    (void)parse_list<LossVariant>(loss_list, parse_loss_variant);
    (void)parse_split(split);
  } catch (const Error& ex) {
    throw UsageError(ex.what());
  }

  if (cmd == synth) {
    write_synthetic_dataset(require(out, "--out"), count, size, first_seed, c.seed);
    return 0;
  }

  if (cmd == superpixels) {
    const RasterImage img = read_image(require(image, "--image"));
    SuperpixelConfig config = c.pipeline().superpixel_config();
    SuperpixelMap map;
    if (config.backend == SuperpixelBackend::kSlic) {
      map = slic(img, config);
    } else {
      const MergeHierarchy tree = hierarchy_in.empty()
                                      ? build_hierarchy(img, config)
                                      : deserialize_hierarchy(read_file(hierarchy_in));
      if (!hierarchy_out.empty()) write_file(hierarchy_out, serialize_hierarchy(tree));
      map = extract_k(tree, config.k, img.width, img.height);
    }
    write_file(require(out, "--out"), encode_superpixel_png(map));
    return 0;
  }

  if (cmd == sample) {
    const ClassMask gt = read_mask(require(mask, "--mask"), c.classes);
    const std::uint64_t seed = index >= 0 ? point_seed(c.seed, index) : c.seed;
    save_points(sample_points(gt, parse_point_source(c.strategy), c.points, seed),
                require(out, "--out"));
    return 0;
  }

  if (cmd == propagate_cmd) {
    const PipelineConfig config = c.pipeline();
    SuperpixelMap map;
    if (!map_png.empty()) {
      map = decode_superpixel_png(read_file(map_png));
    } else {
      map = compute_superpixels(read_image(require(image, "--image or --superpixels")),
                                config.superpixel_config());
    }
    const PointSet points = load_points(require(points_csv, "--points"));
    const PseudoMask pm = propagate(points, map, PropagationConfig{config.policy}, c.classes);
    save_pseudo_mask(pm, require(out, "--out"));
    ordered_json doc{{"coverage", coverage(pm)},
                     {"k", map.k},
                     {"policy", to_string(config.policy)},
                     {"points", points.points.size()}};
    emit(report, doc.dump(2) + "\n");
    return 0;
  }

  if (cmd == weights_cmd) {
    std::vector<fs::path> stems(pseudo_stems.begin(), pseudo_stems.end());
    if (!pseudo_dir.empty()) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(pseudo_dir)) {
        const std::string name = e.path().filename().string();
        const std::string suffix = ".labels.png";
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
          found.push_back(e.path().parent_path() / name.substr(0, name.size() - suffix.size()));
        }
      }
      std::sort(found.begin(), found.end());
      stems.insert(stems.end(), found.begin(), found.end());
    }
    if (stems.empty()) throw UsageError("--pseudo or --pseudo-dir is required");
    std::vector<PseudoMask> masks;
    for (const fs::path& s : stems) masks.push_back(load_pseudo_mask(s, c.classes));
    emit(out, class_weights_json(class_weights(masks, c.classes)));
    return 0;
  }

  if (cmd == train_cmd) {
    const fs::path manifest_path = require(manifest, "--manifest");
    const DatasetManifest m = load_manifest(manifest_path);
    const Samples tr = load_split(manifest_path, m, Split::kTrain, c.classes);
    const Samples val = load_split(manifest_path, m, Split::kVal, c.classes);
    std::vector<PseudoMask> targets;
    for (const std::string& stem : tr.stems) {
      targets.push_back(load_pseudo_mask(fs::path(require(pseudo_dir, "--pseudo-dir")) / stem,
                                         c.classes));
    }
    ClassWeights w;
    if (weights.empty()) {
      w = class_weights(targets, c.classes);
    } else {
      const Bytes text = read_file(weights);
      w = class_weights_from_json(std::string(text.begin(), text.end()));
    }
    std::vector<TrainSample> set;
    for (std::size_t i = 0; i < targets.size(); ++i) set.push_back({&tr.images[i], &targets[i]});
    TrainConfig tc = c.pipeline().train;
    tc.seed = derive_seed(c.seed, 2);
    const fs::path dir = require(out, "--out");
    const TrainResult result = train(ToyNet::initialized(c.classes, derive_seed(c.seed, 1)), set,
                                     eval_samples(val), w, tc, [](const EpochLog& e) {
                                       std::cerr << "epoch " << e.epoch << " loss " << e.train_loss
                                                 << " val_miou " << e.val_miou << '\n';
                                     });
    write_text(dir / "train_log.jsonl", epoch_log_jsonl(result.log));
    save_checkpoint(result.best_state, dir / "best.ckpt");
    save_checkpoint(result.final_state, dir / "final.ckpt");
    return 0;
  }

  if (cmd == eval_cmd) {
    const fs::path manifest_path = require(manifest, "--manifest");
    const Samples s =
        load_split(manifest_path, load_manifest(manifest_path), parse_split(split), c.classes);
    const TrainingState state = load_checkpoint(require(checkpoint, "--checkpoint"));
    emit(out, metrics_json(evaluate(state.net, eval_samples(s), 8, c.threads), 0));
    return 0;
  }

  if (cmd == pipeline) {
    const fs::path dir = require(out, "--out");
    fs::path manifest_path = manifest;
    if (manifest_path.empty()) {
      write_synthetic_dataset(dir / "data", count, size, 0, c.seed);
      manifest_path = dir / "data" / "manifest.json";
    }
    const PipelineReport r = run_pipeline(manifest_path, dir, c.pipeline());
    std::cerr << "coverage " << r.coverage_mean << " pseudo_miou " << r.pseudo_miou_mean
              << " best_val_miou " << r.best_val_miou << " test_miou " << r.test_miou << '\n';
    return 0;
  }

  if (cmd == ablate) {
    const PipelineConfig base = c.pipeline();
    AblationRequest req;
    req.losses = parse_list<LossVariant>(loss_list, parse_loss_variant);
    req.points = parse_list<int>(points_list, to_int);
    req.ks = parse_list<int>(k_list, to_int);
    req.edges = parse_list<bool>(edge_list, parse_bool);
    req.seeds = parse_list<std::uint64_t>(seeds_list, to_u64);
    req.epochs = c.epochs;
    req.threads = c.threads;
    if (req.losses.empty() && req.points.empty() && req.ks.empty() && req.edges.empty()) {
      throw UsageError("ablate needs at least one of --loss, --points, --k, --edge");
    }
    Benchmark bench = make_benchmark(count, size, 0, c.seed);
    emit(out, run_ablation(bench, base, req));
    return 0;
  }

  if (cmd == serve) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw UsageError("--addr must be host:port");
    ServiceOptions options;
    options.max_side = max_side;
    options.num_classes = c.classes;
    options.superpixel = c.pipeline().superpixel_config();
    options.static_dir = static_dir;
    options.persist_dir = persist_dir;
    AnnotationService service(options);
    const int port = service.bind(addr.substr(0, colon), to_int(addr.substr(colon + 1)));
    std::cerr << "listening on " << addr.substr(0, colon) << ':' << port << '\n';
    service.listen();
    return 0;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return ex.code() == ErrorCode::kNonFinite ? kExitNumeric : kExitData;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitData;
  }
}
