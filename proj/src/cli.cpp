#include "cxrnet/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "cxrnet/arch.hpp"
#include "cxrnet/augment.hpp"
#include "cxrnet/config.hpp"
#include "cxrnet/data.hpp"
#include "cxrnet/errors.hpp"
#include "cxrnet/image_io.hpp"
#include "cxrnet/metrics.hpp"
#include "cxrnet/model.hpp"
#include "cxrnet/report.hpp"
#include "cxrnet/trainer.hpp"

namespace fs = std::filesystem;

namespace cxr {

namespace {

std::string with_commas(std::size_t v) {
  std::string s = std::to_string(v);
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string with_commas_signed(long long v) {
  return (v < 0 ? "-" : "") + with_commas(static_cast<std::size_t>(v < 0 ? -v : v));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw InputError("cannot write " + p.string());
  out << text;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

std::pair<std::size_t, std::size_t> parse_hw(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw ConfigError("expected HxW, got '" + text + "'");
  try {
    return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw ConfigError("expected HxW, got '" + text + "'");
  }
}

RunConfig config_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1), fs::current_path());
  }
  return cfg;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
};

int cmd_synth(Context& ctx, const fs::path& root, std::size_t n, std::size_t size, std::uint64_t seed) {
  const Dataset ds = synth_dataset(root, n, size, seed);
  const auto& c = ds.class_counts();
  ctx.out << "wrote " << ds.size() << " images to " << root.string() << " (covid19=" << c[0]
          << ", no_finding=" << c[1] << ", other_pneumonia=" << c[2] << ")\n";
  return kExitOk;
}

int cmd_params(Context& ctx, const std::string& arch, const std::string& input, std::size_t classes, double dropout,
               long long compare, bool have_compare) {
  const auto [h, w] = parse_hw(input);
  ArchitectureSpec spec;
  if (is_named_spec(arch)) {
    spec = named_spec(arch, classes, dropout, h, w);
  } else {
    spec = load_spec_file(arch);
    spec.height = h;
    spec.width = w;
  }
  validate_spec(spec);
  const ParamCount pc = count_params(spec);
  std::size_t conv_total = 0;
  ctx.out << std::left << std::setw(16) << "Layer" << std::setw(11) << "Kind" << std::setw(18) << "Output shape"
          << std::right << std::setw(14) << "Params" << '\n';
  for (const auto& l : pc.layers) {
    ctx.out << std::left << std::setw(16) << l.name << std::setw(11) << l.kind << std::setw(18)
            << shape_str(l.output_shape) << std::right << std::setw(14) << with_commas(l.total()) << '\n';
    if (l.kind == "conv") conv_total += l.total();
  }
  ctx.out << "Total params: " << with_commas(pc.total()) << '\n'
          << "Trainable params: " << with_commas(pc.trainable) << '\n'
          << "Non-trainable params: " << with_commas(pc.non_trainable) << '\n'
          << "Convolutional params: " << with_commas(conv_total) << '\n';
  if (have_compare) {
    const auto diff = static_cast<long long>(pc.total()) - compare;
    ctx.out << "Claimed total: " << with_commas_signed(compare) << '\n'
            << "Computed total: " << with_commas(pc.total()) << '\n'
            << "Difference (computed - claimed): " << with_commas_signed(diff) << '\n';
  }
  return kExitOk;
}

void write_run_header(const fs::path& dir, const RunConfig& cfg) {
  write_file(dir / "config.snapshot", format_config(cfg));
  write_file(dir / "arch.txt", format_spec(cfg.architecture()));
}

int cmd_train(Context& ctx, const RunConfig& cfg, const fs::path& out_override, bool force) {
  cfg.validate();
  const fs::path dir = out_override.empty() ? cfg.out : out_override;
  if (dir.empty()) throw ConfigError("no output directory (set 'out' or pass --out)");
  if (fs::exists(dir / "checkpoint") && !force) {
    throw ConfigError("output " + dir.string() + " already holds a checkpoint; pass --force to overwrite");
  }
  const Dataset ds = load_dataset(cfg.data);
  const ImageSet all = load_images(ds, cfg.image_size);
  fs::create_directories(dir);
  write_run_header(dir, cfg);
  CrossValHooks hooks;
  hooks.on_epoch = [&](std::size_t, std::size_t epoch, double loss) {
    ctx.err << "epoch " << epoch << " loss " << loss << '\n';
  };
  FoldTraining trained = train_one_fold(all, cfg, 0, &hooks);
  trained.model.save_checkpoint(dir / "checkpoint");
  write_stats_json(dir / "stats.json", trained.stats);
  write_losses_csv(dir / "losses.csv", trained.epoch_losses);
  const EvalResult r = evaluate_set(trained.model, all, trained.stats, cfg.batch_size);
  ctx.out << eval_json(r) << '\n';
  return kExitOk;
}

int cmd_crossval(Context& ctx, const RunConfig& cfg, const std::string& out_root_flag, const std::string& run_name,
                 bool force, std::size_t parallel) {
  cfg.validate();
  fs::path root = out_root_flag;
  if (root.empty()) root = cfg.out;
  if (root.empty()) {
    const char* env = std::getenv(kOutRootEnv);
    root = env && *env ? fs::path(env) : fs::path("runs");
  }
  const fs::path dir = root / (run_name.empty() ? utc_timestamp() : run_name);
  if (fs::exists(dir)) {
    if (!force) throw ConfigError("run directory " + dir.string() + " exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  const Dataset ds = load_dataset(cfg.data);
  fs::create_directories(dir);
  write_run_header(dir, cfg);

  CrossValHooks hooks;
  hooks.on_epoch = [&](std::size_t fold, std::size_t epoch, double loss) {
    ctx.err << "fold " << fold << " epoch " << epoch << " loss " << loss << '\n';
  };
  hooks.on_fold_done = [&](std::size_t fold, const FoldTraining& t, const FoldEval& ev) {
    const fs::path fdir = dir / ("fold" + std::to_string(fold));
    fs::create_directories(fdir);
    t.model.save_checkpoint(fdir / "checkpoint");
    write_stats_json(fdir / "stats.json", t.stats);
    write_losses_csv(fdir / "losses.csv", t.epoch_losses);
    ctx.err << "fold " << fold << " train acc " << ev.train.accuracy << " test acc " << ev.test.accuracy << '\n';
  };
  const CrossValResult result = cross_validate(ds, cfg, hooks, parallel);
  write_file(dir / "summary.json", summary_json(result.summary));
  write_file(dir / "summary.csv", summary_csv(result.summary));
  ctx.out << render_summary_table(result.summary) << "run directory: " << dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(Context& ctx, const fs::path& run, const std::string& data_override, const std::string& config_path) {
  fs::path cfg_path = config_path;
  if (cfg_path.empty()) {
    cfg_path = fs::exists(run / "config.snapshot") ? run / "config.snapshot" : run.parent_path() / "config.snapshot";
  }
  if (!fs::exists(cfg_path)) throw InputError("no config.snapshot found for " + run.string());
  if (!fs::exists(run / "checkpoint") || !fs::exists(run / "stats.json")) {
    throw InputError(run.string() + " lacks checkpoint or stats.json");
  }
  RunConfig cfg = load_config(cfg_path);
  if (!data_override.empty()) cfg.data = data_override;
  Rng rng(cfg.seed, "eval");
  Model model = Model::build(cfg.architecture(), rng);
  model.load_checkpoint(run / "checkpoint");
  const ChannelStats stats = read_stats_json(run / "stats.json");
  const Dataset ds = load_dataset(cfg.data);
  const ImageSet set = load_images(ds, cfg.image_size);
  ctx.out << eval_json(evaluate_set(model, set, stats, cfg.batch_size)) << '\n';
  return kExitOk;
}

int cmd_augment_preview(Context& ctx, const std::string& image, const std::string& data, const std::string& config,
                        std::size_t n, const fs::path& out_dir, std::uint64_t seed, std::size_t size) {
  AugmentConfig aug = config.empty() ? AugmentConfig{} : load_config(config).augmentation;
  aug.validate();
  std::vector<fs::path> sources;
  if (!image.empty()) {
    sources.push_back(image);
  } else if (!data.empty()) {
    const Dataset ds = load_dataset(data);
    for (const auto& item : ds.items()) sources.push_back(item.path);
  } else {
    throw ConfigError("augment-preview needs --image or --data");
  }
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < n; ++i) {
    const fs::path& src = sources[i % sources.size()];
    Tensor img = load_resized(src.string(), size);
    Rng rng(seed, "preview/" + std::to_string(i));
    const Tensor t = random_transform(img, aug, rng);
    char name[48];
    std::snprintf(name, sizeof name, "preview_%03zu.png", i);
    write_png((out_dir / name).string(), from_tensor(t));
    ctx.out << (out_dir / name).string() << '\n';
  }
  return kExitOk;
}

int cmd_report(Context& ctx, const std::vector<std::string>& runs, const std::string& plot_csv) {
  std::vector<std::pair<std::string, CVSummary>> loaded;
  for (const auto& r : runs) {
    const fs::path p = fs::path(r) / "summary.json";
    if (!fs::exists(p)) throw InputError("missing " + p.string());
    std::string name = fs::path(r).lexically_normal().filename().string();
    if (name.empty()) name = fs::path(r).lexically_normal().parent_path().filename().string();
    loaded.emplace_back(name, summary_from_json(read_file(p)));
  }
  if (loaded.size() == 1) ctx.out << render_summary_table(loaded.front().second);
  else ctx.out << render_comparison_table(loaded);
  if (!plot_csv.empty()) write_file(plot_csv, render_plot_csv(loaded));
  return kExitOk;
}

const char* status_name(int code) {
  switch (code) {
    case kExitOk: return "ok";
    case kExitConfig: return "config_error";
    case kExitDataset: return "dataset_error";
    case kExitNumeric: return "numeric_error";
    default: return "internal_error";
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{out, err};
  CLI::App app{"cxrnet: chest X-ray CNN training and cross-validation"};
  app.require_subcommand(1);

  std::string config_path, run_name, out_root, data_dir, image_path, plot_csv, arch, input = "182x182";
  std::vector<std::string> sets, run_dirs;
  fs::path out_dir;
  std::size_t n_per_class = 10, synth_size = 32, classes = 3, n_preview = 8, preview_size = kDefaultImageSize;
  std::size_t parallel = 1, epochs_override = 0;
  std::uint64_t seed = 0;
  double dropout = 0.3;
  long long compare = 0;
  bool force = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic three-class dataset");
  synth->add_option("--out", out_dir, "Dataset root to create")->required();
  synth->add_option("--n-per-class", n_per_class, "Images per class");
  synth->add_option("--size", synth_size, "Image side length");
  synth->add_option("--seed", seed, "Random seed");

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run config file (key = value)");
    cmd->add_option("--set", sets, "Override a config key (key=value), repeatable");
    cmd->add_option("--epochs", epochs_override, "Override the epoch count");
    cmd->add_flag("--force", force, "Overwrite existing outputs");
  };
  auto* train = app.add_subcommand("train", "Train one model on the full dataset");
  add_run_flags(train);
  train->add_option("--out", out_dir, "Output directory (defaults to the config's 'out')");

  auto* crossval = app.add_subcommand("crossval", "Stratified k-fold cross-validation");
  add_run_flags(crossval);
  crossval->add_option("--out-root", out_root, "Parent directory for the run");
  crossval->add_option("--run-name", run_name, "Run directory name (default: UTC timestamp)");
  crossval->add_option("--parallel-folds", parallel, "Folds trained concurrently");

  auto* eval = app.add_subcommand("eval", "Evaluate a trained checkpoint on a dataset");
  eval->add_option("--run", out_dir, "Directory with checkpoint and stats.json")->required();
  eval->add_option("--data", data_dir, "Dataset root (defaults to the run's config)");
  eval->add_option("--config", config_path, "Config file (defaults to the run's config.snapshot)");

  auto* params = app.add_subcommand("params", "Per-layer parameter counts");
  params->add_option("arch", arch, "vgg16, vgg19, mini-vgg or a spec file")->required();
  params->add_option("--input", input, "Input size HxW");
  params->add_option("--classes", classes, "Output classes");
  params->add_option("--dropout", dropout, "Dropout probability");
  auto* compare_opt = params->add_option("--compare", compare, "Claimed total to compare against");

  auto* preview = app.add_subcommand("augment-preview", "Write augmented sample images");
  preview->add_option("--image", image_path, "Source image");
  preview->add_option("--data", data_dir, "Dataset root to sample from");
  preview->add_option("--config", config_path, "Config file supplying augmentation ranges");
  preview->add_option("--n", n_preview, "Number of previews");
  preview->add_option("--out", out_dir, "Output directory")->required();
  preview->add_option("--seed", seed, "Random seed");
  preview->add_option("--size", preview_size, "Resize side length");

  auto* report = app.add_subcommand("report", "Render tables from completed runs");
  report->add_option("runs", run_dirs, "Run directories")->required();
  report->add_option("--plot-csv", plot_csv, "Also write long-format CSV for plotting");

  int code = kExitOk;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(reversed);

    auto run_config = [&] {
      RunConfig cfg = config_with_overrides(config_path, sets);
      if (epochs_override != 0 || train->count("--epochs") + crossval->count("--epochs") > 0) {
        cfg.epochs = epochs_override;
      }
      return cfg;
    };
    if (*synth) code = cmd_synth(ctx, out_dir, n_per_class, synth_size, seed);
    else if (*train) code = cmd_train(ctx, run_config(), out_dir, force);
    else if (*crossval) code = cmd_crossval(ctx, run_config(), out_root, run_name, force, parallel);
    else if (*eval) code = cmd_eval(ctx, out_dir, data_dir, config_path);
    else if (*params) code = cmd_params(ctx, arch, input, classes, dropout, compare, compare_opt->count() > 0);
    else if (*preview)
      code = cmd_augment_preview(ctx, image_path, data_dir, config_path, n_preview, out_dir, seed, preview_size);
    else if (*report) code = cmd_report(ctx, run_dirs, plot_csv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    code = kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    code = kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    code = kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    code = kExitConfig;
  } catch (const SpecError& e) {
    err << "architecture error: " << e.what() << '\n';
    code = kExitConfig;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << '\n';
    code = kExitDataset;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    code = kExitDataset;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    code = kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitInternal;
  }
  err << "status=" << status_name(code) << " exit=" << code << '\n';
  return code;
}

}  // namespace cxr
