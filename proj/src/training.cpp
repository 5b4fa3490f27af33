#include "stcm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "stcm/errors.hpp"
#include "stcm/retrieval.hpp"

namespace stcm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Rows `ids` of `frames`, reshaped to [n, input_shape...] (flattens images for FC models).
Tensor batch_input(const Model& model, const Tensor& frames, const std::vector<Index>& ids) {
  Tensor rows = gather_rows(frames, ids);
  Shape s{static_cast<Index>(ids.size())};
  s.insert(s.end(), model.encoder.input_shape.begin(), model.encoder.input_shape.end());
  if (shape_product(s) != rows.size()) {
    throw ConfigError("model input " + shape_to_string(model.encoder.input_shape) + " does not fit frames " +
                      shape_to_string(frames.shape()));
  }
  return rows.reshaped(s);
}

Index positives_per_batch(Index batch_size, Index negative_ratio) {
  return std::max<Index>(1, batch_size / (negative_ratio + 1));
}

}  // namespace

Objective parse_objective(const std::string& name) {
  if (name == "slowness" || name == "slowness-l1") return Objective::slowness;
  if (name == "group_sparsity" || name == "group-sparsity") return Objective::group_sparsity;
  if (name == "drlim") return Objective::drlim;
  throw ConfigError("unknown objective '" + name + "' (slowness|group-sparsity|drlim)");
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::slowness: return "slowness";
    case Objective::group_sparsity: return "group-sparsity";
    case Objective::drlim: return "drlim";
  }
  return "?";
}

void TrainingConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("training config: " + msg); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) fail("beta must be >= 0");
  if (!(margin > 0.0) || !std::isfinite(margin)) fail("margin must be > 0");
  if (!(distance_order >= 1.0) || !std::isfinite(distance_order)) fail("distance_order must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (negative_ratio < 1) fail("negative_ratio must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
}

Config TrainingConfig::to_config() const {
  Config c;
  c.set("objective", objective_name(objective));
  c.set("alpha", format_number(alpha));
  c.set("beta", format_number(beta));
  c.set("margin", format_number(margin));
  c.set("distance_order", format_number(distance_order));
  c.set("learning_rate", format_number(learning_rate));
  c.set("momentum", format_number(momentum));
  c.set("batch_size", std::to_string(batch_size));
  c.set("negative_ratio", std::to_string(negative_ratio));
  c.set("epochs", std::to_string(epochs));
  c.set("seed", std::to_string(seed));
  return c;
}

TrainingConfig TrainingConfig::from_config(const Config& cfg, const TrainingConfig& d) {
  TrainingConfig t = d;
  t.objective = parse_objective(cfg.get_string("objective", objective_name(d.objective)));
  t.alpha = cfg.get_double("alpha", d.alpha);
  t.beta = cfg.get_double("beta", d.beta);
  t.margin = cfg.get_double("margin", d.margin);
  t.distance_order = cfg.get_double("distance_order", d.distance_order);
  t.learning_rate = cfg.get_double("learning_rate", d.learning_rate);
  t.momentum = cfg.get_double("momentum", d.momentum);
  t.batch_size = cfg.get_int("batch_size", d.batch_size);
  t.negative_ratio = cfg.get_int("negative_ratio", d.negative_ratio);
  t.epochs = cfg.get_int("epochs", d.epochs);
  const long long seed = cfg.get_int("seed", static_cast<long long>(d.seed));
  if (seed < 0) throw ConfigError("training config: seed must be >= 0");
  t.seed = static_cast<std::uint64_t>(seed);
  t.validate();
  return t;
}

TrainingConfig TrainingConfig::from_config(const Config& cfg) { return from_config(cfg, TrainingConfig{}); }

// ---- pair sampling ---------------------------------------------------------------

std::vector<SamplePair> adjacent_pairs(const SceneIndex& index) {
  std::vector<SamplePair> out;
  for (const Scene& s : index.scenes) {
    for (Index t = s.start; t + 1 < s.end(); ++t) out.push_back({t, t + 1, PairRelation::temporal_neighbor});
  }
  return out;
}

std::vector<SamplePair> sample_pairs(const SceneIndex& index, Rng& rng, Index batch_size, Index negative_ratio) {
  if (batch_size < 1 || negative_ratio < 0) throw ArgumentError("sample_pairs: bad batch size or ratio");
  const Index total_pairs = index.adjacent_pairs();
  if (total_pairs == 0) throw DataError("sample_pairs: no scene of length >= 2");

  std::vector<Index> prefix;  // prefix[i] = adjacent pairs in scenes before i
  std::vector<Index> frames;  // covered frames
  Index acc = 0;
  for (const Scene& s : index.scenes) {
    prefix.push_back(acc);
    acc += std::max<Index>(0, s.length - 1);
    for (Index t = s.start; t < s.end(); ++t) frames.push_back(t);
  }

  const Index positives = positives_per_batch(batch_size, negative_ratio);
  std::vector<SamplePair> out;
  for (Index i = 0; i < positives; ++i) {
    const auto r = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(total_pairs)));
    const auto it = std::upper_bound(prefix.begin(), prefix.end(), r) - 1;
    const Scene& s = index.scenes[static_cast<std::size_t>(it - prefix.begin())];
    const Index t = s.start + (r - *it);
    out.push_back({t, t + 1, PairRelation::temporal_neighbor});
  }

  if (negative_ratio > 0) {
    // A valid negative needs two covered frames more than one apart or in different scenes.
    const bool possible = index.scenes.size() >= 2 || (index.scenes.size() == 1 && index.scenes[0].length >= 3);
    if (!possible) throw DataError("sample_pairs: no non-adjacent frame pair exists");
    const auto n = static_cast<std::uint64_t>(frames.size());
    for (Index i = 0; i < positives * negative_ratio; ++i) {
      for (;;) {
        const Index a = frames[rng.uniform_index(n)];
        const Index b = frames[rng.uniform_index(n)];
        const bool cross = index.scene_of(a) != index.scene_of(b);
        if (cross || std::abs(a - b) > 1) {
          out.push_back({a, b, PairRelation::non_neighbor});
          break;
        }
      }
    }
  }
  return out;
}

// ---- trainer ---------------------------------------------------------------------

Trainer::Trainer(Model& model, const TrainingConfig& config)
    : model_(model), config_(config), rng_(Rng::stream(config.seed, 1)), velocity_(zero_gradients(model)) {
  config_.validate();
  if (config_.objective != Objective::drlim && !model_.has_decoder()) {
    throw ConfigError(objective_name(config_.objective) + " needs a model with a decoder");
  }
  if (!parameters_finite(model_)) throw NumericError("trainer: initial parameters are not finite");
}

ObjectiveResult Trainer::evaluate(const FrameDataset& data, const std::vector<SamplePair>& pairs,
                                  const std::vector<Index>& frames) const {
  switch (config_.objective) {
    case Objective::group_sparsity:
      return group_sparsity_loss(model_, batch_input(model_, data.frames, frames), config_.alpha);
    case Objective::slowness:
    case Objective::drlim: {
      std::vector<Index> ia, ib;
      std::vector<PairRelation> rel;
      for (const SamplePair& p : pairs) {
        ia.push_back(p.a);
        ib.push_back(p.b);
        rel.push_back(p.relation);
      }
      const Tensor xa = batch_input(model_, data.frames, ia);
      const Tensor xb = batch_input(model_, data.frames, ib);
      if (config_.objective == Objective::slowness) {
        return slowness_ae_loss(model_, xa, xb, config_.alpha, config_.beta);
      }
      return drlim_objective(model_, xa, xb, rel, config_.margin, config_.distance_order);
    }
  }
  throw ArgumentError("unknown objective");
}

void Trainer::step(const Gradients& grads, Index count) {
  auto params = parameters(model_);
  const double scale = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto v = velocity_[i].vec();
    v = config_.momentum * v - (config_.learning_rate * scale) * grads[i].vec();
    params[i].second->vec() += v;
  }
}

EpochRecord Trainer::train_epoch(const FrameDataset& data) {
  const auto t0 = Clock::now();
  EpochRecord rec;
  rec.epoch = epoch_;
  LossTerms sum;
  Index samples = 0;

  auto run_batch = [&](const std::vector<SamplePair>& pairs, const std::vector<Index>& frames) {
    const Index count = config_.objective == Objective::group_sparsity ? static_cast<Index>(frames.size())
                                                                        : static_cast<Index>(pairs.size());
    ObjectiveResult r = evaluate(data, pairs, frames);
    if (!std::isfinite(r.terms.total()) || !all_finite(r.grads)) {
      throw NumericError("non-finite loss or gradient at epoch " + std::to_string(epoch_) + ", batch " +
                         std::to_string(rec.batches));
    }
    step(r.grads, count);
    if (!parameters_finite(model_)) {
      throw NumericError("non-finite parameters after epoch " + std::to_string(epoch_) + ", batch " +
                         std::to_string(rec.batches));
    }
    sum += r.terms;
    samples += count;
    ++rec.batches;
  };

  const auto bs = static_cast<std::size_t>(config_.batch_size);
  switch (config_.objective) {
    case Objective::slowness: {
      std::vector<SamplePair> all = adjacent_pairs(data.scenes);
      if (all.empty()) throw DataError("slowness training needs a scene of length >= 2");
      rng_.shuffle(all.begin(), all.end());
      for (std::size_t i = 0; i < all.size(); i += bs) {
        run_batch({all.begin() + i, all.begin() + std::min(all.size(), i + bs)}, {});
      }
      break;
    }
    case Objective::group_sparsity: {
      std::vector<Index> all;
      for (const Scene& s : data.scenes.scenes) {
        for (Index t = s.start; t < s.end(); ++t) all.push_back(t);
      }
      if (all.empty()) {
        for (Index t = 0; t < data.size(); ++t) all.push_back(t);
      }
      rng_.shuffle(all.begin(), all.end());
      for (std::size_t i = 0; i < all.size(); i += bs) {
        run_batch({}, {all.begin() + i, all.begin() + std::min(all.size(), i + bs)});
      }
      break;
    }
    case Objective::drlim: {
      const Index positives = positives_per_batch(config_.batch_size, config_.negative_ratio);
      const Index total = data.scenes.adjacent_pairs();
      const Index batches = (total + positives - 1) / positives;
      for (Index b = 0; b < batches; ++b) {
        run_batch(sample_pairs(data.scenes, rng_, config_.batch_size, config_.negative_ratio), {});
      }
      break;
    }
  }
  rec.mean = samples > 0 ? sum.scaled(1.0 / static_cast<double>(samples)) : sum;
  rec.seconds = seconds_since(t0);
  ++epoch_;
  return rec;
}

RunRecord train(Model& model, const FrameDataset& data, const TrainingConfig& config) {
  const auto t0 = Clock::now();
  RunRecord run;
  run.config = config;
  Trainer trainer(model, config);
  for (Index e = 0; e < config.epochs; ++e) run.epochs.push_back(trainer.train_epoch(data));
  run.seconds = seconds_since(t0);
  return run;
}

Model train_fresh(Preset preset, const PresetOptions& options, const FrameDataset& data, const TrainingConfig& config,
                  RunRecord* record) {
  Model model = build_paper_architecture(preset, options);
  Rng init = Rng::stream(config.seed, 0);
  init_weights(model, init);
  RunRecord run = train(model, data, config);
  if (record) *record = std::move(run);
  return model;
}

Tensor encode_dataset(const Model& model, const Tensor& frames, Index batch) {
  const Index n = frames.extent(0);
  Shape out_shape{n};
  const Shape code = model.encoder.code_shape();
  out_shape.insert(out_shape.end(), code.begin(), code.end());
  Tensor out(out_shape);
  const Index per = shape_product(code);
  for (Index start = 0; start < n; start += batch) {
    std::vector<Index> ids;
    for (Index i = start; i < std::min(n, start + batch); ++i) ids.push_back(i);
    const Encoding enc = encode(model, batch_input(model, frames, ids));
    out.vec().segment(start * per, enc.code.size()) = enc.code.vec();
  }
  return out;
}

GreedyResult train_greedy_stack(std::vector<StageConfig> stages, const FrameDataset& data) {
  GreedyResult result;
  FrameDataset current = data;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    StageConfig& st = stages[k];
    if (k > 0) {
      const Shape prev = result.stages.back().encoder.code_shape();
      if (prev != st.model.encoder.input_shape) {
        throw ConfigError("stage " + std::to_string(k) + " expects input " +
                          shape_to_string(st.model.encoder.input_shape) + " but stage " + std::to_string(k - 1) +
                          " emits " + shape_to_string(prev));
      }
      current = with_frames(current, encode_dataset(result.stages.back(), current.frames));
    }
    result.inputs.push_back(current);
    result.records.push_back(train(st.model, current, st.training));
    result.stages.push_back(std::move(st.model));
  }
  return result;
}

RunRecord train_drlim_joint(Model& model, const FrameDataset& data, const TrainingConfig& config) {
  TrainingConfig c = config;
  c.objective = Objective::drlim;
  return train(model, data, c);
}

GridResult grid_search(Preset preset, const PresetOptions& options, const std::vector<TrainingConfig>& grid,
                       const FrameDataset& train_data, const FrameDataset& validation, Index k_max,
                       std::vector<Model>* models) {
  if (grid.empty()) throw ConfigError("grid_search: empty grid");
  GridResult result;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    try {
      RunRecord run;
      const Model model = train_fresh(preset, options, train_data, grid[i], &run);
      const Tensor codes = encode_dataset(model, validation.frames);
      GridRow row;
      row.config = grid[i];
      row.auc = temporal_pr(codes, validation.scenes, k_max).auc;
      row.final_loss = run.epochs.empty() ? 0.0 : run.epochs.back().mean.total();
      result.table.push_back(row);
      if (models) models->push_back(model);
      if (row.auc > result.table[result.best].auc) result.best = i;
    } catch (const ConfigError& e) {
      throw ConfigError("grid config " + std::to_string(i) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("grid config " + std::to_string(i) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("grid config " + std::to_string(i) + ": " + e.what());
    }
  }
  return result;
}

void write_losses_csv(const std::filesystem::path& path, const std::vector<RunRecord>& stages) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "stage,epoch,batches,total,reconstruction,l1,slowness,group_sparsity,contrastive_positive,"
         "contrastive_negative\n";
  for (std::size_t stage = 0; stage < stages.size(); ++stage) {
    for (const EpochRecord& e : stages[stage].epochs) {
      const LossTerms& m = e.mean;
      out << stage << ',' << e.epoch << ',' << e.batches << ',' << format_number(m.total()) << ','
          << format_number(m.reconstruction) << ',' << format_number(m.l1) << ',' << format_number(m.slowness) << ','
          << format_number(m.group_sparsity) << ',' << format_number(m.contrastive_positive) << ','
          << format_number(m.contrastive_negative) << '\n';
    }
  }
}

void write_run_directory(const std::filesystem::path& dir, const Model& model, RunRecord& record,
                         const Config& extra) {
  std::filesystem::create_directories(dir);
  Config echo = record.config.to_config();
  echo.merge(extra);
  {
    std::ofstream out(dir / "config.txt", std::ios::trunc);
    out << echo.to_text();
  }
  write_losses_csv(dir / "losses.csv", {record});
  record.checkpoint = dir / "checkpoint";
  save_checkpoint(model, record.checkpoint, echo);
  // Wall-clock lives apart from the deterministic artifacts.
  std::ofstream timing(dir / "timing.txt", std::ios::trunc);
  timing << "seconds = " << record.seconds << '\n';
  for (const EpochRecord& e : record.epochs) timing << "epoch." << e.epoch << " = " << e.seconds << '\n';
}

}  // namespace stcm
