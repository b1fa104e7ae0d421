#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <unistd.h>

#include "jedi/error.hpp"
#include "jedi/graph.hpp"
#include "jedi/synth.hpp"
#include "jedi/trainer.hpp"

using namespace jedi;
namespace fs = std::filesystem;

namespace {

WorldSpec tiny_world() {
  WorldSpec spec;
  spec.num_classes = {3, 2};
  spec.segment_dims = {5, 4};
  spec.train_counts = {30, 20};
  spec.val_counts = {6, 6};
  spec.test_counts = {12, 12};
  spec.unlabeled_pool = 15;
  spec.shared_latent_dim = 3;
  return spec;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 4;
  c.burn_in_epochs = 2;
  c.batch_size = 8;
  c.seed = 5;
  c.optim.lr = 1e-2;
  c.init.hidden_width = 2;
  c.external_pool_size = 10;
  return c;
}

const EmbeddingStore& tiny_store() {
  static const EmbeddingStore store = generate_world(tiny_world());
  return store;
}

const std::vector<ExpertHead>& tiny_experts() {
  static const std::vector<ExpertHead> heads = pretrain_experts(tiny_store()).heads;
  return heads;
}

void expect_same_params(const ModelSet& a, const ModelSet& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
    EXPECT_EQ(pa[i]->adam_m, pb[i]->adam_m) << pa[i]->name;
    EXPECT_EQ(pa[i]->step_count, pb[i]->step_count) << pa[i]->name;
  }
}

using BatchKey = std::tuple<std::size_t, Split, std::vector<std::size_t>, bool, std::vector<bool>>;

std::multiset<BatchKey> keys(const std::vector<Batch>& batches, bool labeled_only) {
  std::multiset<BatchKey> out;
  for (const Batch& b : batches) {
    if (labeled_only && !b.labeled) continue;
    out.insert({b.dataset, b.split, b.indices, b.labeled, b.kd_models});
  }
  return out;
}

}  // namespace

TEST(Scenario, NamesRoundTrip) {
  for (auto s : {DistillScenario::none, DistillScenario::single_dataset,
                 DistillScenario::external_pool, DistillScenario::all_datasets}) {
    EXPECT_EQ(parse_scenario(scenario_name(s)), s);
  }
  EXPECT_THROW(parse_scenario("kinetics"), ConfigError);
}

TEST(TaskSchedule, ThreeTasksPerExpert) {
  const TaskSchedule s = task_schedule(4, DistillScenario::all_datasets);
  ASSERT_EQ(s.tasks.size(), 12u);
  EXPECT_EQ(s.tasks[0].kind, Task::Kind::student_cls);
  EXPECT_EQ(s.tasks[4].kind, Task::Kind::teacher_cls);
  EXPECT_EQ(s.tasks[11].kind, Task::Kind::distill);
  EXPECT_EQ(s.tasks[11].model, 3u);
}

// Property: every in-scope record appears exactly once per epoch, batches are
// homogeneous, and the distillation targets follow the scenario.
TEST(Batches, CoverageAndScope) {
  const EmbeddingStore& store = tiny_store();
  for (auto scen : {DistillScenario::none, DistillScenario::single_dataset,
                    DistillScenario::external_pool, DistillScenario::all_datasets}) {
    TrainConfig c = tiny_config();
    c.scenario = scen;
    for (std::size_t epoch = 0; epoch < 3; ++epoch) {
      std::map<std::pair<std::size_t, Split>, std::vector<std::size_t>> seen;
      for (const Batch& b : build_batches(store, c, epoch)) {
        EXPECT_LE(b.indices.size(), c.batch_size);
        EXPECT_FALSE(b.indices.empty());
        auto& v = seen[{b.dataset, b.split}];
        v.insert(v.end(), b.indices.begin(), b.indices.end());
        ASSERT_EQ(b.kd_models.size(), 2u);
        if (b.labeled) {
          EXPECT_EQ(b.split, Split::train);
          for (std::size_t j = 0; j < 2; ++j) {
            const bool want = scen == DistillScenario::all_datasets ||
                              (scen == DistillScenario::single_dataset && j == b.dataset);
            EXPECT_EQ(b.kd_models[j], want);
          }
        } else {
          EXPECT_EQ(scen, DistillScenario::external_pool);
          EXPECT_EQ(b.split, Split::unlabeled);
          EXPECT_EQ(b.kd_models, (std::vector<bool>{true, true}));
        }
      }
      for (std::size_t ds = 0; ds < 2; ++ds) {
        auto v = seen[{ds, Split::train}];
        std::sort(v.begin(), v.end());
        ASSERT_EQ(v.size(), store.count(ds, Split::train));
        for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], i);
      }
      auto pool = seen[{2, Split::unlabeled}];
      EXPECT_EQ(pool.size(), scen == DistillScenario::external_pool ? 10u : 0u);
    }
  }
}

TEST(Batches, DeterministicPerEpoch) {
  const TrainConfig c = tiny_config();
  const auto a = build_batches(tiny_store(), c, 3), b = build_batches(tiny_store(), c, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].indices, b[i].indices);
  const auto other = build_batches(tiny_store(), c, 4);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].indices != other[i].indices;
  EXPECT_TRUE(differs);
}

TEST(Batches, PoolOnlyAddsDistillationBatches) {
  TrainConfig none = tiny_config();
  none.scenario = DistillScenario::none;
  TrainConfig pool = none;
  pool.scenario = DistillScenario::external_pool;
  const auto a = build_batches(tiny_store(), none, 1), b = build_batches(tiny_store(), pool, 1);
  EXPECT_EQ(keys(a, true), keys(b, true));
  for (const Batch& batch : b) {
    if (!batch.labeled) {
      EXPECT_EQ(batch.split, Split::unlabeled);
    }
  }
  EXPECT_GT(b.size(), a.size());
}

TEST(Batches, PoolScenarioNeedsPool) {
  EmbeddingStore store({{0, "a", 2, 1, 0}});
  SampleRecord r;
  r.features = {1.0f};
  r.label = 0;
  store.add(r);
  TrainConfig c = tiny_config();
  c.scenario = DistillScenario::external_pool;
  EXPECT_THROW(build_batches(store, c, 0), ConfigError);
}

TEST(TrainEpoch, SingleBatchMatchesHandComposition) {
  // One expert, one batch: the epoch is one forward, loss, backward and AdamW step.
  WorldSpec spec;
  spec.num_classes = {3};
  spec.segment_dims = {4};
  spec.train_counts = {10};
  spec.val_counts = {0};
  spec.test_counts = {0};
  spec.unlabeled_pool = 0;
  spec.cross_signal_strength = 0.0;
  const EmbeddingStore store = generate_world(spec);
  TrainConfig c = tiny_config();
  c.batch_size = 64;
  c.burn_in_epochs = 0;
  c.init.adjust_dropout = 0.5;
  c.loss.dataset_sizes = {10};
  ModelSet models = init_models(store.manifest(), 1, c.init, c.ensemble_input);
  ModelSet hand = models;

  train_epoch(models, store, c, 0);

  const std::vector<Batch> batches = build_batches(store, c, 0);
  ASSERT_EQ(batches.size(), 1u);
  Tensor2 x(batches[0].indices.size(), store.total_dim());
  std::vector<SampleTerms> terms;
  for (std::size_t r = 0; r < batches[0].indices.size(); ++r) {
    const SampleRecord& rec = store.records(0, Split::train)[batches[0].indices[r]];
    for (std::size_t k = 0; k < store.total_dim(); ++k) x(r, k) = rec.features[k];
    terms.push_back({0, rec.label, true, batches[0].kd_models});
  }
  const Rng dropout = Rng::stream(c.seed, "dropout", {0, 0});
  const ForwardPass pass = forward(hand, x, true, &dropout);
  const BatchLoss loss = combined_loss_batch(pass, terms, c.loss);
  backward(hand, pass, loss.grads);
  for (ParamTensor* p : hand.parameters()) {
    if (p->touched) adamw_step(*p, c.optim);
  }
  expect_same_params(models, hand);
}

TEST(TrainEpoch, NonFiniteLossNamesBatch) {
  TrainConfig c = tiny_config();
  c.loss.dataset_sizes = {30, 20};
  ModelSet models = init_models(tiny_store().manifest(), 1, c.init, c.ensemble_input);
  models.teachers[0].meta_w.value(0, 0) = std::numeric_limits<double>::infinity();
  try {
    train_epoch(models, tiny_store(), c, 0);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0, batch"), std::string::npos);
  }
}

TEST(Fit, DeterministicHistory) {
  const TrainConfig c = tiny_config();
  const FitResult a = fit(tiny_store(), c, tiny_experts());
  const FitResult b = fit(tiny_store(), c, tiny_experts());
  EXPECT_EQ(a.history, b.history);
  expect_same_params(a.models, b.models);
  ASSERT_EQ(a.history.size(), 4u);
  EXPECT_EQ(a.initial.epoch, -1);
}

TEST(Fit, BurnInGatesDistillation) {
  TrainConfig c = tiny_config();
  c.epochs = 5;
  c.burn_in_epochs = 3;
  const FitResult r = fit(tiny_store(), c, tiny_experts());
  for (const MetricsSnapshot& s : r.history) {
    const double kd = s.kd[0] + s.kd[1];
    if (s.epoch < 3) {
      EXPECT_EQ(kd, 0.0) << "epoch " << s.epoch;
    } else {
      EXPECT_GT(kd, 0.0) << "epoch " << s.epoch;
    }
  }
}

TEST(Fit, GammaZeroEqualsNoDistillation) {
  TrainConfig zero = tiny_config();
  zero.loss.gamma = 0.0;
  TrainConfig none = tiny_config();
  none.scenario = DistillScenario::none;
  const FitResult a = fit(tiny_store(), zero, tiny_experts());
  const FitResult b = fit(tiny_store(), none, tiny_experts());
  expect_same_params(a.models, b.models);
}

TEST(Fit, DistillationRecordedOnlyWhenScheduled) {
  TrainConfig c = tiny_config();
  c.scenario = DistillScenario::single_dataset;
  c.burn_in_epochs = 0;
  c.epochs = 1;
  const FitResult r = fit(tiny_store(), c, tiny_experts());
  EXPECT_GT(r.history[0].kd[0], 0.0);
  EXPECT_GT(r.history[0].kd[1], 0.0);
  TrainConfig none = c;
  none.scenario = DistillScenario::none;
  EXPECT_EQ(fit(tiny_store(), none, tiny_experts()).history[0].kd[0], 0.0);
}

TEST(Fit, ZeroEpochsReportsExpertsOnly) {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  const FitResult r = fit(tiny_store(), c, tiny_experts());
  EXPECT_TRUE(r.history.empty());
  EXPECT_NE(r.report.find("expert", 0, "test"), nullptr);
  EXPECT_EQ(r.report.find("student", 0, "test"), nullptr);
  EXPECT_EQ(r.report.find("teacher", 1, "test"), nullptr);
}

TEST(Fit, InitialSnapshotMatchesExpertsWhenWarmStarted) {
  const FitResult r = fit(tiny_store(), tiny_config(), tiny_experts());
  for (std::size_t ds = 0; ds < 2; ++ds) {
    EXPECT_EQ(r.initial.values.at({"student", ds, "test"}),
              r.initial.values.at({"expert", ds, "test"}));
  }
}

TEST(Fit, ResumeIsBitwiseIdentical) {
  const fs::path dir = fs::temp_directory_path() / ("jedi_resume_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  TrainConfig c = tiny_config();
  c.epochs = 6;
  const FitResult full = fit(tiny_store(), c, tiny_experts());

  TrainConfig partial = c;
  partial.epochs = 3;
  partial.checkpoint_every = 3;
  FitOptions opts;
  opts.checkpoint_dir = dir;
  fit(tiny_store(), partial, tiny_experts(), opts);
  const Checkpoint ck = load_checkpoint(dir / "checkpoint.jckp");
  EXPECT_EQ(ck.next_epoch, 3u);
  FitOptions resume;
  resume.resume = &ck;
  const FitResult resumed = fit(tiny_store(), c, ck.expert_heads, resume);
  EXPECT_EQ(resumed.history, full.history);
  expect_same_params(resumed.models, full.models);

  TrainConfig changed = c;
  changed.loss.gamma = 0.3;
  EXPECT_THROW(fit(tiny_store(), changed, ck.expert_heads, resume), ConfigError);
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptFileRejected) {
  const fs::path file = fs::temp_directory_path() / ("jedi_ck_" + std::to_string(::getpid()));
  {
    std::ofstream out(file, std::ios::binary);
    out << "JCKPgarbage";
  }
  EXPECT_THROW(load_checkpoint(file), StoreError);
  fs::remove(file);
}

TEST(Config, KvRoundTripAndHash) {
  TrainConfig c = tiny_config();
  c.scenario = DistillScenario::external_pool;
  c.ensemble_input = EnsembleInput::predictions;
  c.loss.weighting = Weighting::by_source;
  KvDoc doc;
  c.to_kv(doc);
  const TrainConfig back = TrainConfig::from_kv(doc);
  EXPECT_EQ(back.hash(), c.hash());
  TrainConfig longer = c;
  longer.epochs = 900;
  EXPECT_EQ(longer.hash(), c.hash());
  TrainConfig other = c;
  other.seed = 99;
  EXPECT_NE(other.hash(), c.hash());
}

TEST(Config, InvalidValuesNameField) {
  KvDoc doc;
  doc.set("loss.gamma", "-1");
  try {
    TrainConfig::from_kv(doc).validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "loss.gamma");
  }
  TrainConfig c;
  c.epochs = 10;
  c.burn_in_epochs = 11;
  EXPECT_THROW(c.validate(), ConfigError);
  c.epochs = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(PrepareStore, SplitsValidationOnce) {
  WorldSpec spec = tiny_world();
  spec.val_counts = {0, 0};
  const EmbeddingStore raw = generate_world(spec);
  const EmbeddingStore prepared = prepare_store(raw, tiny_config());
  EXPECT_EQ(prepared.count(0, Split::val), 5u);
  EXPECT_EQ(prepared.count(0, Split::train), 25u);
  EXPECT_EQ(prepare_store(prepared, tiny_config()), prepared);
}
