#include "jedi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "jedi/error.hpp"
#include "jedi/graph.hpp"
#include "jedi/rng.hpp"
#include "jedi/synth.hpp"

namespace jedi {

std::string_view scenario_name(DistillScenario s) {
  switch (s) {
    case DistillScenario::none: return "none";
    case DistillScenario::single_dataset: return "single_dataset";
    case DistillScenario::external_pool: return "external_pool";
    case DistillScenario::all_datasets: return "all_datasets";
  }
  return "?";
}

DistillScenario parse_scenario(std::string_view name) {
  for (DistillScenario s : {DistillScenario::none, DistillScenario::single_dataset,
                            DistillScenario::external_pool, DistillScenario::all_datasets}) {
    if (scenario_name(s) == name) return s;
  }
  throw ConfigError("train.scenario", "unknown scenario '" + std::string(name) +
                                          "' (valid: none, single_dataset, external_pool, "
                                          "all_datasets)");
}

void TrainConfig::validate() const {
  loss.validate();
  if (!(optim.lr > 0.0) || !std::isfinite(optim.lr)) throw ConfigError("train.lr", "must be positive");
  if (!(optim.weight_decay >= 0.0)) throw ConfigError("train.weight_decay", "must be >= 0");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0)) throw ConfigError("train.beta1", "must lie in [0, 1)");
  if (!(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) throw ConfigError("train.beta2", "must lie in [0, 1)");
  if (!(optim.eps > 0.0)) throw ConfigError("train.eps", "must be positive");
  // epochs == 0 only evaluates the experts, so burn-in is moot there.
  if (epochs > 0 && burn_in_epochs > epochs) {
    throw ConfigError("train.burn_in_epochs", "must not exceed train.epochs (" +
                                                  std::to_string(epochs) + ")");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (init.hidden_width == 0) throw ConfigError("model.hidden_width", "must be positive");
  if (!(init.adjust_dropout >= 0.0 && init.adjust_dropout < 1.0)) {
    throw ConfigError("model.adjust_dropout", "must lie in [0, 1)");
  }
  if (scenario == DistillScenario::external_pool && external_pool_size == 0) {
    throw ConfigError("train.external_pool_size", "must be positive for external_pool");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("train.val_fraction", "must lie in [0, 1)");
  }
}

namespace {

std::size_t get_count(const KvDoc& doc, const char* key, std::size_t fallback) {
  const std::int64_t v = doc.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError(key, "must be >= 0");
  return static_cast<std::size_t>(v);
}

}  // namespace

TrainConfig TrainConfig::from_kv(const KvDoc& doc) {
  TrainConfig c;
  c.loss.alpha = doc.get_double("loss.alpha", c.loss.alpha);
  c.loss.beta = doc.get_double("loss.beta", c.loss.beta);
  c.loss.gamma = doc.get_double("loss.gamma", c.loss.gamma);
  c.loss.temperature = doc.get_double("loss.temperature", c.loss.temperature);
  c.loss.k = doc.get_double("loss.k", c.loss.k);
  c.loss.weighting = parse_weighting(doc.get_string("loss.weighting", "as_printed"));
  for (std::int64_t s : doc.get_int_list("loss.dataset_sizes", {})) {
    if (s <= 0) throw ConfigError("loss.dataset_sizes", "every size must be positive");
    c.loss.dataset_sizes.push_back(static_cast<std::uint64_t>(s));
  }
  c.optim.lr = doc.get_double("train.lr", c.optim.lr);
  c.optim.weight_decay = doc.get_double("train.weight_decay", c.optim.weight_decay);
  c.optim.beta1 = doc.get_double("train.beta1", c.optim.beta1);
  c.optim.beta2 = doc.get_double("train.beta2", c.optim.beta2);
  c.optim.eps = doc.get_double("train.eps", c.optim.eps);
  c.epochs = get_count(doc, "train.epochs", c.epochs);
  c.burn_in_epochs = get_count(doc, "train.burn_in_epochs", c.burn_in_epochs);
  c.batch_size = get_count(doc, "train.batch_size", c.batch_size);
  c.seed = static_cast<std::uint64_t>(doc.get_int("train.seed", 0));
  c.scenario = parse_scenario(doc.get_string("train.scenario", "all_datasets"));
  c.external_pool_size = get_count(doc, "train.external_pool_size", c.external_pool_size);
  c.kd_into_teacher = doc.get_bool("train.kd_into_teacher", false);
  c.checkpoint_every = get_count(doc, "train.checkpoint_every", 0);
  c.val_fraction = doc.get_double("train.val_fraction", c.val_fraction);
  c.ensemble_input = parse_ensemble_input(doc.get_string("model.ensemble_input", "adjusted_features"));
  c.init.hidden_width = get_count(doc, "model.hidden_width", c.init.hidden_width);
  c.init.adjust_dropout = doc.get_double("model.adjust_dropout", c.init.adjust_dropout);
  c.init.warm_start = doc.get_bool("model.warm_start", c.init.warm_start);
  c.init.teacher_k = c.loss.k;
  c.validate();
  return c;
}

void TrainConfig::to_kv(KvDoc& doc) const {
  doc.set("loss.alpha", format_double(loss.alpha));
  doc.set("loss.beta", format_double(loss.beta));
  doc.set("loss.gamma", format_double(loss.gamma));
  doc.set("loss.temperature", format_double(loss.temperature));
  doc.set("loss.k", format_double(loss.k));
  doc.set("loss.weighting", std::string(weighting_name(loss.weighting)));
  std::string sizes;
  for (std::size_t i = 0; i < loss.dataset_sizes.size(); ++i) {
    sizes += (i ? "," : "") + std::to_string(loss.dataset_sizes[i]);
  }
  doc.set("loss.dataset_sizes", sizes);
  doc.set("train.lr", format_double(optim.lr));
  doc.set("train.weight_decay", format_double(optim.weight_decay));
  doc.set("train.beta1", format_double(optim.beta1));
  doc.set("train.beta2", format_double(optim.beta2));
  doc.set("train.eps", format_double(optim.eps));
  doc.set("train.epochs", std::to_string(epochs));
  doc.set("train.burn_in_epochs", std::to_string(burn_in_epochs));
  doc.set("train.batch_size", std::to_string(batch_size));
  doc.set("train.seed", std::to_string(seed));
  doc.set("train.scenario", std::string(scenario_name(scenario)));
  doc.set("train.external_pool_size", std::to_string(external_pool_size));
  doc.set("train.kd_into_teacher", kd_into_teacher ? "true" : "false");
  doc.set("train.checkpoint_every", std::to_string(checkpoint_every));
  doc.set("train.val_fraction", format_double(val_fraction));
  doc.set("model.ensemble_input", std::string(ensemble_input_name(ensemble_input)));
  doc.set("model.hidden_width", std::to_string(init.hidden_width));
  doc.set("model.adjust_dropout", format_double(init.adjust_dropout));
  doc.set("model.warm_start", init.warm_start ? "true" : "false");
}

std::uint64_t TrainConfig::hash() const {
  KvDoc doc;
  to_kv(doc);
  doc.erase("train.epochs");
  doc.erase("train.checkpoint_every");
  return hash_name(doc.to_string());
}

TaskSchedule task_schedule(std::size_t num_experts, DistillScenario scenario) {
  TaskSchedule s;
  const char* kd_scope = "";
  switch (scenario) {
    case DistillScenario::none: kd_scope = "none"; break;
    case DistillScenario::single_dataset: kd_scope = "home train split"; break;
    case DistillScenario::external_pool: kd_scope = "unlabeled pool"; break;
    case DistillScenario::all_datasets: kd_scope = "train splits of all datasets"; break;
  }
  for (std::size_t i = 0; i < num_experts; ++i) {
    s.tasks.push_back({Task::Kind::student_cls, i, "home train split"});
  }
  for (std::size_t i = 0; i < num_experts; ++i) {
    s.tasks.push_back({Task::Kind::teacher_cls, i, "home train split"});
  }
  for (std::size_t i = 0; i < num_experts; ++i) {
    s.tasks.push_back({Task::Kind::distill, i, kd_scope});
  }
  return s;
}

std::vector<Batch> build_batches(const EmbeddingStore& store, const TrainConfig& config,
                                 std::size_t epoch) {
  const std::size_t n = store.num_experts();
  std::vector<Batch> out;
  auto chunk = [&](std::size_t ds, Split split, std::vector<std::size_t> idx, bool labeled,
                   const std::vector<bool>& kd) {
    Rng rng = Rng::stream(config.seed, "shuffle", {epoch, ds});
    rng.shuffle(idx);
    for (std::size_t begin = 0; begin < idx.size(); begin += config.batch_size) {
      const std::size_t end = std::min(idx.size(), begin + config.batch_size);
      out.push_back({ds, split, {idx.begin() + begin, idx.begin() + end}, labeled, kd});
    }
  };
  for (std::size_t ds = 0; ds < n; ++ds) {
    const std::size_t count = store.count(ds, Split::train);
    if (count == 0) continue;
    std::vector<bool> kd(n, false);
    if (config.scenario == DistillScenario::single_dataset) kd[ds] = true;
    if (config.scenario == DistillScenario::all_datasets) kd.assign(n, true);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    chunk(ds, Split::train, std::move(idx), true, kd);
  }
  if (config.scenario == DistillScenario::external_pool) {
    std::size_t budget = config.external_pool_size;
    for (std::size_t ds = n; ds < store.num_datasets() && budget > 0; ++ds) {
      const std::size_t take = std::min(budget, store.count(ds, Split::unlabeled));
      budget -= take;
      if (take == 0) continue;
      std::vector<std::size_t> idx(take);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      chunk(ds, Split::unlabeled, std::move(idx), false, std::vector<bool>(n, true));
    }
    if (budget == config.external_pool_size) {
      throw ConfigError("train.scenario", "external_pool needs unlabeled records in a pool dataset");
    }
  }
  if (out.empty()) throw ConfigError("train", "no training samples in scope");
  Rng order = Rng::stream(config.seed, "shuffle", {epoch, std::uint64_t{1} << 32});
  order.shuffle(out);
  return out;
}

namespace {

Tensor2 gather_features(const std::vector<SampleRecord>& records,
                        std::span<const std::size_t> indices, std::size_t width) {
  Tensor2 x(indices.size(), width);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& f = records[indices[r]].features;
    std::copy(f.begin(), f.end(), x.row(r).begin());
  }
  return x;
}

std::string provenance(const Batch& batch, const EmbeddingStore& store, std::size_t epoch,
                       std::size_t index) {
  const auto& recs = store.records(batch.dataset, batch.split);
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(index) + " (dataset '" +
         store.manifest()[batch.dataset].name + "', split " +
         std::string(split_name(batch.split)) + ", first sample '" +
         recs[batch.indices.front()].sample_id + "')";
}

}  // namespace

EpochStats train_epoch(ModelSet& models, const EmbeddingStore& store, const TrainConfig& config,
                       std::size_t epoch) {
  const std::size_t n = models.num_experts();
  if (n != store.num_experts()) throw DimensionError("train_epoch: model/store expert count");
  const std::vector<Batch> batches = build_batches(store, config, epoch);
  const bool kd_enabled = epoch >= config.burn_in_epochs;
  EpochStats stats;
  stats.terms = TermBreakdown(n);
  const auto params = models.parameters();

  for (std::size_t b = 0; b < batches.size(); ++b) {
    const Batch& batch = batches[b];
    const auto& recs = store.records(batch.dataset, batch.split);
    Tensor2 x = gather_features(recs, batch.indices, store.total_dim());
    std::vector<SampleTerms> terms(batch.indices.size());
    for (std::size_t r = 0; r < terms.size(); ++r) {
      terms[r].home = batch.dataset;
      if (batch.labeled) terms[r].label = recs[batch.indices[r]].label;
      terms[r].kd_enabled = kd_enabled;
      terms[r].kd_models = batch.kd_models;
    }
    const Rng dropout = Rng::stream(config.seed, "dropout", {epoch, b});
    ForwardPass pass = forward(models, x, true, &dropout);
    BatchLoss loss = combined_loss_batch(pass, terms, config.loss, config.kd_into_teacher);
    if (!std::isfinite(loss.value)) {
      throw TrainingError("non-finite loss at " + provenance(batch, store, epoch, b));
    }
    stats.terms.add(loss.terms);
    stats.loss += loss.value;
    stats.skipped_samples += loss.skipped;
    ++stats.batches;
    if (loss.skipped == terms.size()) continue;

    backward(models, pass, loss.grads);
    try {
      for (ParamTensor* p : params) {
        if (p->touched) adamw_step(*p, config.optim);
      }
    } catch (const OptimizerError& e) {
      throw TrainingError(std::string(e.what()) + " at " + provenance(batch, store, epoch, b));
    }
  }
  if (stats.batches > 0) {
    const double inv = 1.0 / static_cast<double>(stats.batches);
    stats.terms.scale(inv);
    stats.loss *= inv;
  }
  return stats;
}

void evaluate_split(const ModelSet& models, const EmbeddingStore& store, const ExpertSource* experts,
                    Split split, MetricsSnapshot& out, bool include_models) {
  const std::string split_label(split_name(split));
  for (std::size_t ds = 0; ds < store.num_experts(); ++ds) {
    const auto& recs = store.records(ds, split);
    std::vector<std::size_t> idx;
    std::vector<int> labels;
    for (std::size_t r = 0; r < recs.size(); ++r) {
      if (!recs[r].label) continue;
      idx.push_back(r);
      labels.push_back(*recs[r].label);
    }
    if (idx.empty()) continue;
    Tensor2 x = gather_features(recs, idx, store.total_dim());
    if (include_models) {
      ForwardPass pass = forward(models, x, false, nullptr);
      out.values[{"student", ds, split_label}] = evaluate_logits(pass.student_logits[ds], labels);
      out.values[{"teacher", ds, split_label}] = evaluate_logits(pass.teacher_logits[ds], labels);
    }
    if (!experts) continue;
    Tensor2 logits;
    if (ds < experts->heads.size()) {
      const ExpertHead& h = experts->heads[ds];
      ParamTensor w("w", h.weight), b("b", h.bias);
      const std::size_t begin = store.offsets()[ds];
      logits = affine(slice_cols(x, begin, begin + store.manifest()[ds].feature_dim), w, b);
    } else {
      const auto classes = static_cast<std::size_t>(store.manifest()[ds].num_classes);
      logits = Tensor2(idx.size(), classes);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& cached = recs[idx[r]].expert_logits;
        if (!cached || (*cached)[ds].size() != classes) {
          throw ConfigError("experts", "no expert head and no cached logits for '" +
                                           recs[idx[r]].sample_id + "'");
        }
        std::copy((*cached)[ds].begin(), (*cached)[ds].end(), logits.row(r).begin());
      }
    }
    out.values[{"expert", ds, split_label}] = evaluate_logits(logits, labels);
  }
}

std::vector<std::uint64_t> effective_dataset_sizes(const EmbeddingStore& store,
                                                   const TrainConfig& config) {
  const std::size_t n = store.num_experts();
  if (!config.loss.dataset_sizes.empty()) {
    if (config.loss.dataset_sizes.size() != n) {
      throw ConfigError("loss.dataset_sizes", "has " +
                                                  std::to_string(config.loss.dataset_sizes.size()) +
                                                  " entries for " + std::to_string(n) + " experts");
    }
    return config.loss.dataset_sizes;
  }
  std::vector<std::uint64_t> sizes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t declared = store.manifest()[i].train_size;
    const std::uint64_t s = declared > 0 ? declared : store.count(i, Split::train);
    if (s == 0) {
      throw ConfigError("loss.dataset_sizes", "dataset '" + store.manifest()[i].name +
                                                  "' has no train records");
    }
    sizes.push_back(s);
  }
  return sizes;
}

EmbeddingStore prepare_store(const EmbeddingStore& store, const TrainConfig& config) {
  if (config.val_fraction == 0.0) return store;
  for (std::size_t i = 0; i < store.num_experts(); ++i) {
    if (store.count(i, Split::val) > 0) return store;
  }
  return split_train_val(store, config.val_fraction, config.seed);
}

FitResult fit(const EmbeddingStore& store, const TrainConfig& user_config,
              const std::vector<ExpertHead>& experts, const FitOptions& options) {
  TrainConfig config = user_config;
  config.loss.dataset_sizes = effective_dataset_sizes(store, user_config);
  config.init.teacher_k = config.loss.k;
  config.validate();
  const std::uint64_t hash = config.hash();
  const std::size_t n = store.num_experts();
  if (n == 0) throw ConfigError("store", "has no expert datasets");

  FitResult result;
  result.experts.heads =
      experts.empty() ? pretrain_experts(store, {}, &std::cerr).heads : experts;
  if (result.experts.heads.size() != n) {
    throw ConfigError("experts", std::to_string(result.experts.heads.size()) + " heads for " +
                                     std::to_string(n) + " expert datasets");
  }
  std::vector<DatasetSpec> specs(store.manifest().begin(), store.manifest().begin() + n);

  MetricsSnapshot expert_only;
  expert_only.config_hash = hash;
  for (Split s : {Split::val, Split::test}) {
    evaluate_split(result.models, store, &result.experts, s, expert_only, false);
  }

  std::size_t start = 0;
  if (options.resume) {
    const Checkpoint& ck = *options.resume;
    if (ck.config_hash != hash) {
      throw ConfigError("resume", "checkpoint config hash " + std::to_string(ck.config_hash) +
                                      " does not match " + std::to_string(hash));
    }
    result.models = ck.models;
    result.initial = ck.initial;
    result.history = ck.history;
    start = ck.next_epoch;
  } else {
    result.models = init_models(specs, config.seed, config.init, config.ensemble_input,
                                &result.experts.heads);
    result.initial = expert_only;
    for (Split s : {Split::val, Split::test}) {
      evaluate_split(result.models, store, nullptr, s, result.initial);
    }
  }

  for (std::size_t epoch = start; epoch < config.epochs; ++epoch) {
    EpochStats stats = train_epoch(result.models, store, config, epoch);
    MetricsSnapshot snap = expert_only;
    snap.epoch = static_cast<int>(epoch);
    for (Split s : {Split::val, Split::test}) {
      evaluate_split(result.models, store, nullptr, s, snap);
    }
    snap.student_cls = stats.terms.student_cls;
    snap.teacher_cls = stats.terms.teacher_cls;
    snap.kd = stats.terms.kd;
    snap.loss = stats.loss;
    snap.skipped_samples = stats.skipped_samples;
    result.history.push_back(snap);

    const bool due = config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0;
    if (due && !options.checkpoint_dir.empty()) {
      Checkpoint ck{epoch + 1, config.seed, hash, result.models, result.experts.heads,
                    result.initial, result.history};
      save_checkpoint(ck, options.checkpoint_dir / "checkpoint.jckp");
    }
    if (options.on_epoch && !options.on_epoch(snap)) break;
  }

  std::vector<std::string> names;
  for (const DatasetSpec& d : specs) names.push_back(d.name);
  result.report = assemble_report(
      result.history.empty() ? std::vector<MetricsSnapshot>{expert_only} : result.history,
      std::move(names));
  return result;
}

}  // namespace jedi
