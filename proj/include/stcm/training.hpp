#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stcm/config.hpp"
#include "stcm/datasets.hpp"
#include "stcm/models.hpp"
#include "stcm/objectives.hpp"

namespace stcm {

enum class Objective { slowness, group_sparsity, drlim };

Objective parse_objective(const std::string& name);
std::string objective_name(Objective o);

struct TrainingConfig {
  Objective objective = Objective::slowness;
  double alpha = 0.0;
  double beta = 0.0;
  double margin = 1.0;
  double distance_order = 2.0;
  double learning_rate = 1e-2;
  double momentum = 0.0;
  Index batch_size = 32;
  Index negative_ratio = 5;
  Index epochs = 100;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  Config to_config() const;
  /// Reads the keys above (objective, alpha, beta, margin, distance_order, learning_rate,
  /// momentum, batch_size, negative_ratio, epochs, seed) on top of `defaults`.
  static TrainingConfig from_config(const Config& cfg, const TrainingConfig& defaults);
  static TrainingConfig from_config(const Config& cfg);
};

struct SamplePair {
  Index a = 0;
  Index b = 0;
  PairRelation relation = PairRelation::temporal_neighbor;
};

/// max(1, batch_size / (negative_ratio + 1)) positives, uniform over adjacent in-scene
/// pairs, followed by negative_ratio times as many negatives: uniform frame pairs from
/// covered frames that are in different scenes or more than one frame apart.
std::vector<SamplePair> sample_pairs(const SceneIndex& index, Rng& rng, Index batch_size, Index negative_ratio);

/// All adjacent in-scene pairs, in scene order.
std::vector<SamplePair> adjacent_pairs(const SceneIndex& index);

struct EpochRecord {
  Index epoch = 0;
  Index batches = 0;
  LossTerms mean;  // per-sample mean over the epoch
  double seconds = 0.0;
};

struct RunRecord {
  TrainingConfig config;
  std::vector<EpochRecord> epochs;
  double seconds = 0.0;
  std::filesystem::path checkpoint;  // empty unless written
};

/// SGD (optionally with classical momentum) on one model. Construct once per run; the
/// velocity and the sampling stream persist across epochs.
class Trainer {
 public:
  Trainer(Model& model, const TrainingConfig& config);

  /// One pass: slowness visits every adjacent pair, group sparsity every covered frame,
  /// DrLIM draws ceil(pairs / positives per batch) sampled batches. Updates use the batch
  /// mean gradient. Throws NumericError naming the epoch and batch on non-finite values.
  EpochRecord train_epoch(const FrameDataset& data);

  Index epochs_done() const { return epoch_; }

 private:
  ObjectiveResult evaluate(const FrameDataset& data, const std::vector<SamplePair>& pairs,
                           const std::vector<Index>& frames) const;
  void step(const Gradients& grads, Index count);

  Model& model_;
  TrainingConfig config_;
  Rng rng_;
  Gradients velocity_;
  Index epoch_ = 0;
};

/// Runs config.epochs epochs. Does not initialize weights.
RunRecord train(Model& model, const FrameDataset& data, const TrainingConfig& config);

/// Builds `preset`, initializes it from Rng::stream(seed, 0), and trains it.
Model train_fresh(Preset preset, const PresetOptions& options, const FrameDataset& data, const TrainingConfig& config,
                  RunRecord* record = nullptr);

struct StageConfig {
  Model model;  // initialized single-stage model
  TrainingConfig training;
};

struct GreedyResult {
  std::vector<Model> stages;
  std::vector<RunRecord> records;
  std::vector<FrameDataset> inputs;  // dataset each stage was trained on
};

/// Trains stage k on the codes of stages < k (frozen); scene index carried over.
/// Throws ConfigError when a stage's input shape does not match the previous code shape.
GreedyResult train_greedy_stack(std::vector<StageConfig> stages, const FrameDataset& data);

/// DrLIM through every layer of a multi-layer model.
RunRecord train_drlim_joint(Model& model, const FrameDataset& data, const TrainingConfig& config);

/// Encodes a whole dataset in batches; result is [N, code_shape...].
Tensor encode_dataset(const Model& model, const Tensor& frames, Index batch = 256);

struct GridRow {
  TrainingConfig config;
  double auc = 0.0;
  double final_loss = 0.0;
};

struct GridResult {
  std::size_t best = 0;
  std::vector<GridRow> table;
};

/// One run per config, each seeded by its own config.seed, scored by
/// temporal-coherence AUC on `validation`. Ties go to the lower index. Trained models are
/// appended to `models` when given.
GridResult grid_search(Preset preset, const PresetOptions& options, const std::vector<TrainingConfig>& grid,
                       const FrameDataset& train_data, const FrameDataset& validation, Index k_max = 40,
                       std::vector<Model>* models = nullptr);

// ---- run directory --------------------------------------------------------------

/// losses.csv: stage,epoch,batches,total,reconstruction,l1,slowness,group_sparsity,
/// contrastive_positive,contrastive_negative. Record i is written as stage i.
void write_losses_csv(const std::filesystem::path& path, const std::vector<RunRecord>& stages);

/// config.txt, losses.csv and checkpoint/ under `dir`.
void write_run_directory(const std::filesystem::path& dir, const Model& model, RunRecord& record,
                         const Config& extra = {});

}  // namespace stcm
