#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "jedi/ablation.hpp"
#include "jedi/error.hpp"
#include "jedi/ingest.hpp"
#include "jedi/kvdoc.hpp"
#include "jedi/report.hpp"
#include "jedi/store.hpp"
#include "jedi/synth.hpp"
#include "jedi/trainer.hpp"

namespace fs = std::filesystem;
using namespace jedi;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("-c,--config", c.config_path, "key = value configuration document");
  cmd->add_option("--set", c.overrides, "override a configuration key (key=value)");
  auto* out = cmd->add_option("-o,--out", c.out_dir, "output directory");
  if (needs_out) out->required();
}

KvDoc load_config(const Common& c) {
  KvDoc doc = c.config_path.empty() ? KvDoc{} : KvDoc::load(c.config_path);
  for (const std::string& o : c.overrides) doc.apply_override(o);
  return doc;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Every command records what it ran with next to its outputs.
void write_resolved(const fs::path& dir, KvDoc doc, std::uint64_t seed) {
  fs::create_directories(dir);
  doc.save(dir / "resolved_config.kv");
  write_file(dir / "seed", std::to_string(seed) + "\n");
}

// Resolves --store against data.store and records the choice in `doc`.
EmbeddingStore load_store(KvDoc& doc, const std::string& flag) {
  const std::string path = flag.empty() ? doc.get_string("data.store", "") : flag;
  if (path.empty()) throw ConfigError("data.store", "no store given (use --store)");
  doc.set("data.store", path);
  return read_store(path);
}

int run_ingest(const std::string& dump, const std::string& manifest_path, const std::string& out,
               std::size_t dataset, const std::string& split_label,
               const std::vector<std::string>& extra) {
  const KvDoc manifest_doc = KvDoc::load(manifest_path);
  std::vector<DumpInput> inputs{{dataset, parse_split(split_label), dump}};
  for (const std::string& e : extra) inputs.push_back(parse_dump_input(e));
  EmbeddingStore store = ingest_dumps(parse_manifest(manifest_doc, manifest_path), inputs);
  fs::create_directories(out);
  write_store(store, out);
  KvDoc resolved;
  resolved.set("ingest.manifest", manifest_path);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    resolved.set("ingest.input." + std::to_string(i),
                 std::to_string(inputs[i].dataset) + ":" +
                     std::string(split_name(inputs[i].split)) + ":" + inputs[i].path.string());
  }
  write_resolved(out, resolved, 0);
  std::cout << store_summary(store);
  return kOk;
}

int run_gen_world(const Common& c) {
  KvDoc doc = load_config(c);
  WorldSpec spec = WorldSpec::from_kv(doc);
  EmbeddingStore store = generate_world(spec);
  fs::create_directories(c.out_dir);
  write_store(store, c.out_dir);
  spec.to_kv(doc);
  write_resolved(c.out_dir, doc, spec.seed);
  std::cout << store_summary(store);
  return kOk;
}

int run_train(const Common& c, const std::string& store_flag, const std::string& resume) {
  KvDoc doc = load_config(c);
  TrainConfig config = TrainConfig::from_kv(doc);
  config.validate();
  EmbeddingStore store = prepare_store(load_store(doc, store_flag), config);
  const fs::path out = c.out_dir;
  config.to_kv(doc);
  write_resolved(out, doc, config.seed);

  Checkpoint ck;
  FitOptions options;
  options.checkpoint_dir = out;
  if (!resume.empty()) {
    ck = load_checkpoint(resume);
    options.resume = &ck;
  }
  FitResult result = fit(store, config, resume.empty() ? std::vector<ExpertHead>{} : ck.expert_heads,
                         options);
  const auto rows = curve_rows(
      result.history.empty() ? std::vector<MetricsSnapshot>{result.report.final_snapshot}
                             : result.history,
      result.report.dataset_names);
  write_curves_csv(out / "curves.csv", rows);
  write_run_report(out, rows);
  save_checkpoint({result.history.size(), config.seed, result.report.config_hash, result.models,
                   result.experts.heads, result.initial, result.history},
                  out / "final.jckp");
  std::cout << render_table(final_table(rows));
  return kOk;
}

int run_eval(const Common& c, const std::string& store_flag, const std::string& ckpt_path,
             const std::string& split_label) {
  KvDoc doc = load_config(c);
  EmbeddingStore store = load_store(doc, store_flag);
  Checkpoint ck = load_checkpoint(ckpt_path);
  if (ck.models.total_width() != store.total_dim()) {
    throw ConfigError("store", "checkpoint expects width " + std::to_string(ck.models.total_width()) +
                                   ", store has " + std::to_string(store.total_dim()));
  }
  MetricsSnapshot snap;
  snap.epoch = static_cast<int>(ck.next_epoch) - 1;
  ExpertSource experts{ck.expert_heads};
  evaluate_split(ck.models, store, &experts, parse_split(split_label), snap);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < store.num_experts(); ++i) names.push_back(store.manifest()[i].name);
  const auto rows = curve_rows({snap}, names);
  const std::string table = render_table(final_table(rows), split_label);
  if (!c.out_dir.empty()) {
    write_resolved(c.out_dir, doc, ck.seed);
    write_curves_csv(fs::path(c.out_dir) / "eval.csv", rows);
    write_file(fs::path(c.out_dir) / "eval.txt", table);
  }
  std::cout << table;
  return kOk;
}

int run_ablate(const Common& c, const std::string& store_flag, std::string grid) {
  KvDoc doc = load_config(c);
  if (grid.empty()) grid = doc.get_string("ablate.grid", "");
  std::vector<AblationCell> cells;
  if (grid.empty()) {
    cells = ablation_cells();
  } else {
    for (const std::string& name : split(grid, ',')) cells.push_back(parse_ablation_cell(trim(name)));
  }
  TrainConfig config = TrainConfig::from_kv(doc);
  config.validate();
  EmbeddingStore store = prepare_store(load_store(doc, store_flag), config);
  config.to_kv(doc);
  std::string names;
  for (const AblationCell& cell : cells) names += (names.empty() ? "" : ",") + cell.name;
  doc.set("ablate.grid", names);
  write_resolved(c.out_dir, doc, config.seed);

  AblationTable table = run_ablation_grid(store, config, cells);
  const std::string text = render_ablation_table(table);
  write_file(fs::path(c.out_dir) / "ablation.txt", text);
  KvDoc kv;
  for (std::size_t ds = 0; ds < table.dataset_names.size(); ++ds) {
    kv.set("expert." + table.dataset_names[ds] + ".acc1", format_double(table.expert_acc1[ds]));
  }
  for (const AblationRow& row : table.rows) {
    for (std::size_t ds = 0; ds < table.dataset_names.size(); ++ds) {
      const std::string p = row.cell.name + "." + table.dataset_names[ds] + ".";
      kv.set(p + "teacher_acc1", format_double(row.teacher_acc1[ds]));
      kv.set(p + "student_acc1", format_double(row.student_acc1[ds]));
    }
  }
  kv.save(fs::path(c.out_dir) / "ablation.kv");
  std::cout << text;
  return kOk;
}

int run_report(const std::string& run_dir) {
  const fs::path dir = run_dir;
  const fs::path curves = dir / "curves.csv";
  if (!fs::exists(curves)) throw ReportError("missing file " + curves.string());
  const auto rows = read_curves_csv(curves);
  write_run_report(dir, rows);
  std::cout << render_table(final_table(rows));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint expert distillation over cached embeddings"};
  app.require_subcommand(1);

  std::string dump, manifest, ingest_out, ingest_split = "train";
  std::size_t ingest_dataset = 0;
  std::vector<std::string> ingest_inputs;
  auto* ingest = app.add_subcommand("ingest", "convert a text dump into a binary store");
  ingest->add_option("dump", dump, "text dump (id,label,features...)")->required();
  ingest->add_option("manifest", manifest, "manifest document")->required();
  ingest->add_option("out", ingest_out, "store directory")->required();
  ingest->add_option("--dataset", ingest_dataset, "dataset index of the positional dump");
  ingest->add_option("--split", ingest_split, "split of the positional dump");
  ingest->add_option("--input", ingest_inputs, "additional dump as dataset:split:path");

  Common gen_c;
  auto* gen = app.add_subcommand("gen-world", "generate a synthetic multi-dataset store");
  add_common(gen, gen_c, true);

  Common train_c;
  std::string train_store, resume;
  auto* train = app.add_subcommand("train", "joint training run");
  add_common(train, train_c, true);
  train->add_option("--store", train_store, "store directory (overrides data.store)");
  train->add_option("--resume", resume, "checkpoint to continue from");

  Common eval_c;
  std::string eval_store, eval_ckpt, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a store");
  add_common(eval, eval_c, false);
  eval->add_option("--store", eval_store, "store directory (overrides data.store)");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "split to evaluate");

  Common ablate_c;
  std::string ablate_store, grid;
  auto* ablate = app.add_subcommand("ablate", "run the scenario grid");
  add_common(ablate, ablate_c, true);
  ablate->add_option("--store", ablate_store, "store directory (overrides data.store)");
  ablate->add_option("--grid", grid, "comma-separated scenario names (default: all eight)");

  std::string run_dir;
  auto* report = app.add_subcommand("report", "render tables and charts of a run directory");
  report->add_option("run", run_dir, "run directory containing curves.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) return run_ingest(dump, manifest, ingest_out, ingest_dataset, ingest_split, ingest_inputs);
    if (*gen) return run_gen_world(gen_c);
    if (*train) return run_train(train_c, train_store, resume);
    if (*eval) return run_eval(eval_c, eval_store, eval_ckpt, eval_split);
    if (*ablate) return run_ablate(ablate_c, ablate_store, grid);
    if (*report) return run_report(run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
