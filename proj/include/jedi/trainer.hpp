#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jedi/kvdoc.hpp"
#include "jedi/losses.hpp"
#include "jedi/metrics.hpp"
#include "jedi/models.hpp"
#include "jedi/optim.hpp"
#include "jedi/store.hpp"

namespace jedi {

enum class DistillScenario { none, single_dataset, external_pool, all_datasets };

std::string_view scenario_name(DistillScenario s);
DistillScenario parse_scenario(std::string_view name);

struct TrainConfig {
  LossWeights loss;
  AdamWConfig optim;
  std::size_t epochs = 500;
  std::size_t burn_in_epochs = 25;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  EnsembleInput ensemble_input = EnsembleInput::adjusted_features;
  DistillScenario scenario = DistillScenario::all_datasets;
  std::size_t external_pool_size = 20000;
  InitPolicy init;
  bool kd_into_teacher = false;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables
  double val_fraction = 0.15;        // applied by prepare_store when no val split exists

  void validate() const;
  static TrainConfig from_kv(const KvDoc& doc);
  void to_kv(KvDoc& doc) const;
  // FNV-1a of the canonical key-value form, without epochs and checkpoint cadence.
  std::uint64_t hash() const;
};

struct Task {
  enum class Kind { student_cls, teacher_cls, distill };
  Kind kind = Kind::student_cls;
  std::size_t model = 0;
  std::string scope;  // which samples feed the task
};

struct TaskSchedule {
  std::vector<Task> tasks;
};

// 3n tasks: n student, n teacher, n distillation, with data scopes.
TaskSchedule task_schedule(std::size_t num_experts, DistillScenario scenario);

struct Batch {
  std::size_t dataset = 0;  // home dataset of every record
  Split split = Split::train;
  std::vector<std::size_t> indices;  // into store.records(dataset, split)
  bool labeled = true;
  std::vector<bool> kd_models;  // distillation targets; all false means none
};

// One epoch of batches: every in-scope record appears once, batches never mix
// home datasets, and the batch order is a shuffle keyed by (seed, epoch).
std::vector<Batch> build_batches(const EmbeddingStore& store, const TrainConfig& config,
                                 std::size_t epoch);

// Frozen initial experts, either as linear heads or as logits cached in the store.
struct ExpertSource {
  std::vector<ExpertHead> heads;
};

// Metrics of students, teachers and experts on `split` (dropout off).
void evaluate_split(const ModelSet& models, const EmbeddingStore& store, const ExpertSource* experts,
                    Split split, MetricsSnapshot& out, bool include_models = true);

struct EpochStats {
  TermBreakdown terms;
  double loss = 0.0;
  std::size_t batches = 0;
  std::size_t skipped_samples = 0;
};

EpochStats train_epoch(ModelSet& models, const EmbeddingStore& store, const TrainConfig& config,
                       std::size_t epoch);

struct Checkpoint {
  std::size_t next_epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  ModelSet models;
  std::vector<ExpertHead> expert_heads;
  MetricsSnapshot initial;
  std::vector<MetricsSnapshot> history;
};

inline constexpr char kCheckpointMagic[4] = {'J', 'C', 'K', 'P'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct FitResult {
  ModelSet models;
  MetricsSnapshot initial;  // before any update, students and teachers included
  std::vector<MetricsSnapshot> history;  // one per epoch
  MetricsReport report;
  ExpertSource experts;
};

struct FitOptions {
  std::filesystem::path checkpoint_dir;  // empty disables checkpoint files
  const Checkpoint* resume = nullptr;
  // Called after every epoch; returning false stops training early.
  std::function<bool(const MetricsSnapshot&)> on_epoch;
};

// `experts` seeds the student heads and defines the expert baseline. When it
// is empty, experts are pretrained on the store's train splits.
FitResult fit(const EmbeddingStore& store, const TrainConfig& config,
              const std::vector<ExpertHead>& experts = {}, const FitOptions& options = {});

// Adds a validation split (config.val_fraction of train) when the store has none.
EmbeddingStore prepare_store(const EmbeddingStore& store, const TrainConfig& config);

// loss.dataset_sizes when given, else the manifest train sizes of the experts.
std::vector<std::uint64_t> effective_dataset_sizes(const EmbeddingStore& store,
                                                   const TrainConfig& config);

}  // namespace jedi
