#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <map>
#include <ostream>

#include "stcm/datasets.hpp"
#include "stcm/errors.hpp"
#include "stcm/retrieval.hpp"
#include "stcm/tensor_io.hpp"
#include "stcm/training.hpp"

namespace stcm::cli {

namespace {

namespace fs = std::filesystem;

// Flags that mirror config keys ("--learning-rate" <-> "learning_rate"). Only flags the
// user actually passed end up in collect(), so they override the config file.
class KeyFlags {
 public:
  explicit KeyFlags(CLI::App* app) : app_(app) {}

  void add(const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app_->add_option(flag, values_[key], help);
    flags_.emplace_back(key, flag);
  }

  Config collect() const {
    Config c;
    for (const auto& [key, flag] : flags_) {
      if (app_->count(flag) > 0) c.set(key, values_.at(key));
    }
    return c;
  }

 private:
  CLI::App* app_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, std::string>> flags_;
};

void add_training_flags(KeyFlags& f) {
  f.add("preset", "layer1 | layer2 | layer2_stage | fc_toy | fc_patch");
  f.add("objective", "slowness | group-sparsity | drlim");
  f.add("alpha", "L1 / group-sparsity weight");
  f.add("beta", "slowness weight");
  f.add("margin", "DrLIM margin");
  f.add("distance_order", "DrLIM distance norm p");
  f.add("learning_rate", "SGD step size");
  f.add("momentum", "classical momentum in [0, 1)");
  f.add("batch_size", "samples (pairs) per batch");
  f.add("negative_ratio", "DrLIM negatives per positive");
  f.add("epochs", "training epochs");
  f.add("seed", "RNG seed");
  f.add("toy_hidden", "fc_toy hidden width");
  f.add("pool_epsilon", "pooling stabilizer");
}

bool is_conv(Preset p) { return p == Preset::layer1 || p == Preset::layer2 || p == Preset::layer2_stage; }

struct TrainSetup {
  Preset preset;
  PresetOptions options;
  TrainingConfig training;
  Config echo;  // resolved settings, written next to every checkpoint
};

TrainSetup resolve_training(const Config& cfg, const FrameDataset& data) {
  TrainSetup s;
  const auto preset = cfg.find("preset");
  if (!preset) throw ConfigError("missing 'preset' (flag --preset or config key)");
  s.preset = parse_preset(*preset);
  TrainingConfig defaults;
  defaults.learning_rate = is_conv(s.preset) ? 1e-5 : 1e-2;
  s.training = TrainingConfig::from_config(cfg, defaults);
  s.options.toy_hidden = cfg.get_int("toy_hidden", s.options.toy_hidden);
  s.options.pool_epsilon = cfg.get_double("pool_epsilon", s.options.pool_epsilon);
  cfg.require_all_consumed();

  const Shape fs = data.frame_shape();
  if (fs.size() == 3) {
    s.options.toy_resolution = fs[1];
    s.options.patch_size = fs[1];
  }
  s.echo = s.training.to_config();
  s.echo.set("preset", preset_name(s.preset));
  s.echo.set("toy_hidden", std::to_string(s.options.toy_hidden));
  s.echo.set("pool_epsilon", format_number(s.options.pool_epsilon));
  return s;
}

Model fresh_model(Preset preset, const PresetOptions& options, std::uint64_t seed, std::uint64_t stream) {
  Model m = build_paper_architecture(preset, options);
  Rng rng = Rng::stream(seed, stream);
  init_weights(m, rng);
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---- gen ------------------------------------------------------------------------

struct GenArgs {
  std::string kind;
  std::string out;
  std::uint64_t seed = 0;
  Index resolution = 0;  // 0: kind default (toy 96, video 32)
  double step = 1.0;
  Index scenes = 60;
  Index min_len = 8;
  Index max_len = 20;
  Index channels = 3;
  std::string video_kind = "mixed";
  double speed = 1.0;
  double rotation_speed = 4.0;
  std::string source;
  Index patch_size = 20;
  Index count = 1000;
  std::string split = "train";
  double threshold_k = 3.0;
  Index seg_min = 2;
  Index seg_max = 40;
  bool whiten = false;
  double lambda = 1e-5;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  Config manifest;
  manifest.set("kind", a.kind);
  manifest.set("seed", std::to_string(a.seed));
  FrameDataset data;
  Rng rng(a.seed);
  auto need_source = [&] {
    if (a.source.empty()) throw ConfigError("--kind " + a.kind + " needs --source");
  };

  if (a.kind == "toy") {
    const Index r = a.resolution > 0 ? a.resolution : 96;
    data = gen_toy_rotation(r, a.step);
    manifest.set("resolution", std::to_string(r));
    manifest.set("step", format_number(a.step));
  } else if (a.kind == "video") {
    VideoOptions o;
    o.kind = parse_video_kind(a.video_kind);
    o.num_scenes = a.scenes;
    o.min_scene_len = a.min_len;
    o.max_scene_len = a.max_len;
    o.resolution = a.resolution > 0 ? a.resolution : 32;
    o.channels = a.channels;
    o.speed = a.speed;
    o.rotation_speed = a.rotation_speed;
    data = gen_synthetic_video(o, rng);
    manifest.set("video_kind", video_kind_name(o.kind));
    manifest.set("num_scenes", std::to_string(o.num_scenes));
    manifest.set("min_scene_len", std::to_string(o.min_scene_len));
    manifest.set("max_scene_len", std::to_string(o.max_scene_len));
    manifest.set("resolution", std::to_string(o.resolution));
    manifest.set("channels", std::to_string(o.channels));
    manifest.set("speed", format_number(o.speed));
    manifest.set("rotation_speed", format_number(o.rotation_speed));
  } else if (a.kind == "patches") {
    need_source();
    data = extract_patches(load_dataset(a.source), a.patch_size, a.count, rng);
    manifest.set("source", a.source);
    manifest.set("patch_size", std::to_string(a.patch_size));
    manifest.set("count", std::to_string(a.count));
  } else if (a.kind == "cifar") {
    need_source();
    data = load_cifar10(a.source, a.split == "test" ? CifarSplit::test : CifarSplit::train);
    manifest.set("source", a.source);
    manifest.set("split", a.split);
  } else if (a.kind == "ingest") {
    need_source();
    data.frames = read_tensor(a.source);
    if (data.frames.rank() != 4) throw ShapeError("ingest: frames must be [N,C,H,W]");
    data.scenes = segment_scenes(data.frames, a.threshold_k, a.seg_min, a.seg_max);
    manifest.set("source", a.source);
    manifest.set("threshold_k", format_number(a.threshold_k));
    manifest.set("min_len", std::to_string(a.seg_min));
    manifest.set("max_len", std::to_string(a.seg_max));
  } else {
    throw ConfigError("unknown --kind '" + a.kind + "'");
  }

  manifest.set("whiten", a.whiten ? "true" : "false");
  if (a.whiten) {
    const ZcaTransform zca = zca_fit(data.frames, a.lambda);
    data.frames = zca_apply(zca, data.frames);
    manifest.set("zca_lambda", format_number(a.lambda));
    fs::create_directories(a.out);
    write_tensor(fs::path(a.out) / "zca_mean.stcm", zca.mean);
    write_tensor(fs::path(a.out) / "zca_matrix.stcm", zca.matrix);
  }
  save_dataset(data, a.out, manifest);
  out << "wrote " << data.size() << " frames, " << data.scenes.scenes.size() << " scenes to " << a.out << '\n';
  return kOk;
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
};

int cmd_train(const TrainArgs& a, const Config& flags, std::ostream& out) {
  Config cfg = a.config.empty() ? Config{} : Config::load(a.config);
  cfg.merge(flags);
  const FrameDataset data = load_dataset(a.data);
  TrainSetup s = resolve_training(cfg, data);
  const fs::path dir = a.out;
  fs::create_directories(dir);

  Model final_model;
  std::vector<RunRecord> records;
  if (s.preset == Preset::layer2 && s.training.objective != Objective::drlim) {
    // Greedy: layer1 on the frames, then layer2_stage on frozen layer1 codes.
    std::vector<StageConfig> stages;
    stages.push_back({fresh_model(Preset::layer1, s.options, s.training.seed, 0), s.training});
    stages.push_back({fresh_model(Preset::layer2_stage, s.options, s.training.seed, 2), s.training});
    GreedyResult g = train_greedy_stack(std::move(stages), data);
    for (std::size_t k = 0; k < g.stages.size(); ++k) {
      Config extra = s.echo;
      extra.set("stage", std::to_string(k));
      write_run_directory(dir / ("stage" + std::to_string(k)), g.stages[k], g.records[k], extra);
    }
    final_model = stack_models(g.stages, "layer2");
    records = g.records;
  } else {
    final_model = fresh_model(s.preset, s.options, s.training.seed, 0);
    records.push_back(s.training.objective == Objective::drlim ? train_drlim_joint(final_model, data, s.training)
                                                                : train(final_model, data, s.training));
  }
  write_text(dir / "config.txt", s.echo.to_text());
  write_losses_csv(dir / "losses.csv", records);
  save_checkpoint(final_model, dir / "checkpoint", s.echo);

  const RunRecord& last = records.back();
  if (!last.epochs.empty()) out << "final loss = " << format_number(last.epochs.back().mean.total()) << '\n';
  out << "wrote " << (dir / "checkpoint").string() << '\n';
  return kOk;
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string train_data;
  std::string checkpoint;
  std::string space = "code";
  std::string out;
  Index k_max = 40;
  double lambda = 1e-5;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const FrameDataset data = load_dataset(a.data);
  std::optional<FrameDataset> train_set;
  if (!a.train_data.empty()) train_set = load_dataset(a.train_data);

  Model model;
  std::optional<ZcaTransform> zca;
  if (a.space == "code") {
    if (a.checkpoint.empty()) throw ConfigError("--space code needs --checkpoint");
    model = load_checkpoint(a.checkpoint);
  } else if (a.space == "zca") {
    zca = zca_fit(train_set ? train_set->frames : data.frames, a.lambda);
  } else if (a.space != "pixel") {
    throw ConfigError("unknown --space '" + a.space + "' (code|pixel|zca)");
  }
  auto features = [&](const FrameDataset& d) -> Tensor {
    if (a.space == "code") {
      try {
        return encode_dataset(model, d.frames);
      } catch (const ShapeError& e) {
        throw ConfigError(std::string("checkpoint does not fit the data: ") + e.what());
      }
    }
    if (zca) return zca_apply(*zca, d.frames);
    return d.frames;
  };

  fs::create_directories(a.out);
  const Tensor feats = features(data);
  bool any = false;
  if (!data.scenes.scenes.empty()) {
    const PRCurve curve = temporal_pr(feats, data.scenes, a.k_max);
    write_pr_csv(fs::path(a.out) / "temporal_pr.csv", curve);
    out << "auc = " << format_number(curve.auc) << '\n';
    any = true;
  }
  if (train_set) {
    if (data.labels.empty() || train_set->labels.empty()) throw DataError("class evaluation needs labels on both sets");
    const PRCurve curve = class_pr(feats, data.labels, features(*train_set), train_set->labels, a.k_max);
    write_pr_csv(fs::path(a.out) / "class_pr.csv", curve);
    out << (any ? "class_auc = " : "auc = ") << format_number(curve.auc) << '\n';
    any = true;
  }
  if (!any) throw DataError("nothing to evaluate: dataset has no scenes and no --train-data was given");
  return kOk;
}

// ---- export-filters ---------------------------------------------------------------

struct ExportArgs {
  std::string checkpoint;
  std::string out;
  std::string source = "decoder";
  Index layer = 0;
  Index groups_per_row = 16;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const Model model = load_checkpoint(a.checkpoint);
  if (a.layer < 0 || a.layer >= static_cast<Index>(model.encoder.layers.size())) {
    throw ConfigError("--layer " + std::to_string(a.layer) + " out of range (model has " +
                      std::to_string(model.encoder.layers.size()) + " layers)");
  }
  FilterSource src;
  if (a.source == "decoder") src = FilterSource::decoder;
  else if (a.source == "encoder") src = FilterSource::encoder;
  else throw ConfigError("--source must be decoder or encoder");
  const FilterImage img = render_filters(model, static_cast<std::size_t>(a.layer), src, a.groups_per_row);
  write_text(a.out, encode_netpbm(img));
  out << "wrote " << img.width << "x" << img.height << (img.channels == 3 ? " PPM " : " PGM ") << a.out << '\n';
  return kOk;
}

// ---- grid-search ------------------------------------------------------------------

struct GridArgs {
  std::string data;
  std::string validation;
  std::string out;
  std::string config;
  Index k_max = 40;
};

int cmd_grid(const GridArgs& a, const Config& flags, std::ostream& out) {
  Config cfg = a.config.empty() ? Config{} : Config::load(a.config);
  cfg.merge(flags);
  const FrameDataset train_data = load_dataset(a.data);
  const FrameDataset validation = load_dataset(a.validation);

  // List-valued keys span the grid; the remaining keys are shared by every row.
  const std::vector<std::string> axes = {"alpha", "beta", "learning_rate", "margin", "momentum"};
  std::map<std::string, std::vector<double>> values;
  for (const auto& k : axes) {
    if (cfg.contains(k)) values[k] = cfg.get_doubles(k, {});
  }
  // Resolve the shared keys once (strict) with placeholder axis values.
  Config probe;
  for (const auto& [k, v] : cfg.entries()) {
    if (std::find(axes.begin(), axes.end(), k) == axes.end()) probe.set(k, v);
  }
  TrainSetup s = resolve_training(probe, train_data);

  std::vector<TrainingConfig> grid{s.training};
  for (const auto& k : axes) {
    const auto it = values.find(k);
    if (it == values.end()) continue;
    if (it->second.empty()) throw ConfigError("grid axis '" + k + "' is empty");
    std::vector<TrainingConfig> next;
    for (const TrainingConfig& g : grid) {
      for (double v : it->second) {
        TrainingConfig t = g;
        if (k == "alpha") t.alpha = v;
        if (k == "beta") t.beta = v;
        if (k == "learning_rate") t.learning_rate = v;
        if (k == "margin") t.margin = v;
        if (k == "momentum") t.momentum = v;
        t.validate();
        next.push_back(t);
      }
    }
    grid = std::move(next);
  }

  const GridResult r = grid_search(s.preset, s.options, grid, train_data, validation, a.k_max);
  fs::create_directories(a.out);
  std::string table = "index,alpha,beta,learning_rate,margin,momentum,auc,final_loss\n";
  for (std::size_t i = 0; i < r.table.size(); ++i) {
    const GridRow& row = r.table[i];
    table += std::to_string(i) + ',' + format_number(row.config.alpha) + ',' + format_number(row.config.beta) + ',' +
             format_number(row.config.learning_rate) + ',' + format_number(row.config.margin) + ',' +
             format_number(row.config.momentum) + ',' + format_number(row.auc) + ',' + format_number(row.final_loss) +
             '\n';
  }
  write_text(fs::path(a.out) / "grid.csv", table);
  Config best = r.table[r.best].config.to_config();
  best.set("preset", preset_name(s.preset));
  write_text(fs::path(a.out) / "best.txt", best.to_text());
  out << "best = " << r.best << '\n' << "auc = " << format_number(r.table[r.best].auc) << '\n';
  return kOk;
}

}  // namespace

// ---- filter rendering -------------------------------------------------------------

FilterImage render_filters(const Model& model, std::size_t layer, FilterSource source, Index groups_per_row) {
  if (layer >= model.encoder.layers.size()) throw ConfigError("filter export: layer index out of range");
  if (groups_per_row < 1) throw ConfigError("filter export: groups per row must be >= 1");
  const Layer& L = model.encoder.layers[layer];
  if (source == FilterSource::decoder && !model.has_decoder()) source = FilterSource::encoder;
  const Tensor& W = source == FilterSource::decoder ? model.decoder.weights[layer] : L.weight;

  // Each filter as a C x fh x fw block, read through `at(filter, c, y, x)`.
  Index count, C, fh, fw;
  std::function<double(Index, Index, Index, Index)> at;
  if (L.spec.kind == LayerKind::convolutional) {
    count = W.extent(0);
    C = W.extent(1);
    fh = W.extent(2);
    fw = W.extent(3);
    at = [&W](Index f, Index c, Index y, Index x) { return W(f, c, y, x); };
  } else {
    const Shape in = model.encoder.layer_input_shape(layer);
    const Index dim = shape_product(in);
    if (in.size() == 3) {
      C = in[0], fh = in[1], fw = in[2];
    } else {
      const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(dim))));
      C = 1;
      fh = side * side == dim ? side : 1;
      fw = side * side == dim ? side : dim;
    }
    count = L.spec.out_dim;
    const bool dec = source == FilterSource::decoder;  // decoder weight is [in, out]
    at = [&W, dec, count, dim, fh, fw](Index f, Index c, Index y, Index x) {
      const Index i = (c * fh + y) * fw + x;
      return dec ? W[i * count + f] : W[f * dim + i];
    };
  }
  if (C != 1 && C != 3) {
    throw ConfigError("filter export: " + std::to_string(C) + "-channel filters cannot be drawn as PGM/PPM");
  }

  const Index fg = L.spec.pool ? L.spec.pool->feature_group : 1;
  const Index groups = count / fg;
  const Index cols = std::min(groups_per_row, groups);
  const Index rows = (groups + cols - 1) / cols;
  FilterImage img;
  img.channels = C;
  img.width = cols * fg * fw + (cols - 1);
  img.height = rows * fh + (rows - 1);
  img.pixels.assign(static_cast<std::size_t>(img.width * img.height * C), 0);

  for (Index f = 0; f < count; ++f) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Index c = 0; c < C; ++c)
      for (Index y = 0; y < fh; ++y)
        for (Index x = 0; x < fw; ++x) {
          lo = std::min(lo, at(f, c, y, x));
          hi = std::max(hi, at(f, c, y, x));
        }
    const Index g = f / fg, member = f % fg;
    const Index ox = (g % cols) * (fg * fw + 1) + member * fw;
    const Index oy = (g / cols) * (fh + 1);
    for (Index c = 0; c < C; ++c)
      for (Index y = 0; y < fh; ++y)
        for (Index x = 0; x < fw; ++x) {
          const double v = hi > lo ? 255.0 * (at(f, c, y, x) - lo) / (hi - lo) : 128.0;
          const auto px = static_cast<std::size_t>(((oy + y) * img.width + ox + x) * C + c);
          img.pixels[px] = static_cast<unsigned char>(std::lround(v));
        }
  }
  return img;
}

std::string encode_netpbm(const FilterImage& image) {
  std::string s = (image.channels == 3 ? "P6\n" : "P5\n") + std::to_string(image.width) + " " +
                  std::to_string(image.height) + "\n255\n";
  s.append(image.pixels.begin(), image.pixels.end());
  return s;
}

// ---- dispatch -----------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"stcm: temporal-coherence feature learning"};
  app.name("stcm");
  app.require_subcommand(1);

  GenArgs g;
  CLI::App* gen = app.add_subcommand("gen", "generate or ingest a dataset directory");
  gen->add_option("--kind", g.kind, "toy | video | patches | cifar | ingest")->required();
  gen->add_option("--out", g.out, "output directory")->required();
  gen->add_option("--seed", g.seed, "RNG seed");
  gen->add_option("--resolution", g.resolution, "frame side (toy 96, video 32 by default)");
  gen->add_option("--step", g.step, "toy angle step in degrees");
  gen->add_option("--scenes", g.scenes, "video: number of scenes");
  gen->add_option("--min-len", g.min_len, "video: shortest scene");
  gen->add_option("--max-len", g.max_len, "video: longest scene");
  gen->add_option("--channels", g.channels, "video: 1 or 3");
  gen->add_option("--video-kind", g.video_kind, "translating | rotating | mixed");
  gen->add_option("--speed", g.speed, "video: pixels per frame");
  gen->add_option("--rotation-speed", g.rotation_speed, "video: degrees per frame");
  gen->add_option("--source", g.source, "patches: dataset dir; cifar: batch file or dir; ingest: frames .stcm");
  gen->add_option("--patch-size", g.patch_size, "patches: crop side");
  gen->add_option("--count", g.count, "patches: number of crop pairs");
  gen->add_option("--split", g.split, "cifar: train | test");
  gen->add_option("--threshold-k", g.threshold_k, "ingest: cut threshold in standard deviations");
  gen->add_option("--seg-min", g.seg_min, "ingest: shortest kept scene");
  gen->add_option("--seg-max", g.seg_max, "ingest: longest scene");
  gen->add_flag("--whiten", g.whiten, "ZCA-whiten the frames");
  gen->add_option("--lambda", g.lambda, "ZCA regularizer (relative to the mean eigenvalue)");

  TrainArgs t;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model into a run directory");
  train_cmd->add_option("--data", t.data, "dataset directory")->required();
  train_cmd->add_option("--out", t.out, "run directory")->required();
  train_cmd->add_option("--config", t.config, "key = value file; flags override it");
  KeyFlags train_flags(train_cmd);
  add_training_flags(train_flags);

  EvalArgs e;
  CLI::App* eval = app.add_subcommand("eval", "precision-recall evaluation");
  eval->add_option("--data", e.data, "dataset to evaluate (queries)")->required();
  eval->add_option("--out", e.out, "directory for the PR CSVs")->required();
  eval->add_option("--checkpoint", e.checkpoint, "checkpoint directory (for --space code)");
  eval->add_option("--space", e.space, "code | pixel | zca");
  eval->add_option("--train-data", e.train_data, "labeled database for class-based precision");
  eval->add_option("--k-max", e.k_max, "neighbor budget");
  eval->add_option("--lambda", e.lambda, "ZCA regularizer for --space zca");

  ExportArgs x;
  CLI::App* exp = app.add_subcommand("export-filters", "write a layer's filters as PGM/PPM");
  exp->add_option("--checkpoint", x.checkpoint, "checkpoint directory")->required();
  exp->add_option("--out", x.out, "output image")->required();
  exp->add_option("--layer", x.layer, "encoder layer index");
  exp->add_option("--source", x.source, "decoder | encoder");
  exp->add_option("--groups-per-row", x.groups_per_row, "pool groups per grid row");

  GridArgs gr;
  CLI::App* grid = app.add_subcommand("grid-search", "train one model per grid point, keep the best");
  grid->add_option("--data", gr.data, "training dataset")->required();
  grid->add_option("--validation", gr.validation, "validation dataset (scored by temporal AUC)")->required();
  grid->add_option("--out", gr.out, "output directory")->required();
  grid->add_option("--config", gr.config, "key = value file; list values span the grid");
  grid->add_option("--k-max", gr.k_max, "neighbor budget");
  KeyFlags grid_flags(grid);
  add_training_flags(grid_flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(g, out);
    if (*train_cmd) return cmd_train(t, train_flags.collect(), out);
    if (*eval) return cmd_eval(e, out);
    if (*exp) return cmd_export(x, out);
    if (*grid) return cmd_grid(gr, grid_flags.collect(), out);
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << '\n';
    return kNumeric;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kUsage;
  } catch (const ArgumentError& ex) {
    err << "invalid argument: " << ex.what() << '\n';
    return kUsage;
  } catch (const ShapeError& ex) {
    err << "shape error: " << ex.what() << '\n';
    return kUsage;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kUsage;
  } catch (const FormatError& ex) {
    err << "format error: " << ex.what() << '\n';
    return kUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace stcm::cli
