#include "jedi/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "binio.hpp"
#include "jedi/error.hpp"
#include "jedi/kvdoc.hpp"
#include "jedi/rng.hpp"

namespace jedi {

namespace fs = std::filesystem;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unlabeled: return "unlabeled";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : kAllSplits) {
    if (split_name(s) == name) return s;
  }
  throw ConfigError("split", "unknown split '" + std::string(name) +
                                 "' (valid: train, val, test, unlabeled)");
}

EmbeddingStore::EmbeddingStore(std::vector<DatasetSpec> manifest)
    : manifest_(std::move(manifest)), records_(manifest_.size()) {
  bool seen_pool = false;
  for (std::size_t i = 0; i < manifest_.size(); ++i) {
    const DatasetSpec& d = manifest_[i];
    const fs::path where = kManifestFile;
    if (d.dataset_id != i) {
      throw StoreError(StoreError::Kind::invariant, where, std::nullopt,
                       "dataset ids must be 0..n-1 in order; entry " + std::to_string(i) +
                           " has id " + std::to_string(d.dataset_id));
    }
    if (d.is_pool()) {
      seen_pool = true;
      if (d.feature_dim != 0) {
        throw StoreError(StoreError::Kind::invariant, where, std::nullopt,
                         "pool dataset '" + d.name + "' must have feature_dim 0");
      }
      continue;
    }
    if (seen_pool) {
      throw StoreError(StoreError::Kind::invariant, where, std::nullopt,
                       "expert dataset '" + d.name + "' listed after a pool dataset");
    }
    if (d.num_classes < 2) {
      throw StoreError(StoreError::Kind::invariant, where, std::nullopt,
                       "dataset '" + d.name + "' needs num_classes >= 2 (or 0 for a pool)");
    }
    if (d.feature_dim < 1) {
      throw StoreError(StoreError::Kind::invariant, where, std::nullopt,
                       "dataset '" + d.name + "' needs feature_dim >= 1");
    }
    ++num_experts_;
  }
  rebuild_offsets();
}

void EmbeddingStore::rebuild_offsets() {
  offsets_.assign(1, 0);
  for (std::size_t i = 0; i < num_experts_; ++i) {
    offsets_.push_back(offsets_.back() + manifest_[i].feature_dim);
  }
}

std::vector<int> EmbeddingStore::class_counts() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < num_experts_; ++i) out.push_back(manifest_[i].num_classes);
  return out;
}

void EmbeddingStore::validate_record(const SampleRecord& r, std::optional<std::size_t> index) const {
  auto fail = [&](StoreError::Kind kind, const std::string& msg) {
    throw StoreError(kind, kManifestFile, index, "sample '" + r.sample_id + "': " + msg);
  };
  if (r.home_dataset >= manifest_.size()) fail(StoreError::Kind::invariant, "unknown home dataset");
  if (r.features.size() != total_dim()) {
    fail(StoreError::Kind::width, "expected " + std::to_string(total_dim()) + " features, got " +
                                      std::to_string(r.features.size()));
  }
  for (float f : r.features) {
    if (!std::isfinite(f)) fail(StoreError::Kind::invariant, "non-finite feature");
  }
  if (r.sample_id.size() > 0xffff) fail(StoreError::Kind::invariant, "sample id too long");
  const DatasetSpec& home = manifest_[r.home_dataset];
  if (r.split == Split::unlabeled) {
    if (r.label) fail(StoreError::Kind::invariant, "unlabeled record carries a label");
  } else {
    if (!r.label) fail(StoreError::Kind::invariant, "labeled split without a label");
    if (*r.label < 0 || *r.label >= home.num_classes) {
      fail(StoreError::Kind::invariant, "label " + std::to_string(*r.label) + " outside [0, " +
                                            std::to_string(home.num_classes) + ")");
    }
  }
  if (r.expert_logits) {
    if (r.expert_logits->size() != num_experts_) {
      fail(StoreError::Kind::width, "expected " + std::to_string(num_experts_) + " logit blocks");
    }
    for (std::size_t e = 0; e < num_experts_; ++e) {
      if ((*r.expert_logits)[e].size() != static_cast<std::size_t>(manifest_[e].num_classes)) {
        fail(StoreError::Kind::width, "logit block " + std::to_string(e) + " has width " +
                                          std::to_string((*r.expert_logits)[e].size()));
      }
    }
  }
}

void EmbeddingStore::add(SampleRecord record) {
  validate_record(record, std::nullopt);
  records_[record.home_dataset][static_cast<std::size_t>(record.split)].push_back(std::move(record));
}

const std::vector<SampleRecord>& EmbeddingStore::records(std::size_t dataset_id, Split split) const {
  if (dataset_id >= records_.size()) {
    throw DimensionError("dataset id " + std::to_string(dataset_id) + " out of range");
  }
  return records_[dataset_id][static_cast<std::size_t>(split)];
}

std::vector<SampleRecord>& EmbeddingStore::records_mut(std::size_t dataset_id, Split split) {
  if (dataset_id >= records_.size()) {
    throw DimensionError("dataset id " + std::to_string(dataset_id) + " out of range");
  }
  return records_[dataset_id][static_cast<std::size_t>(split)];
}

std::size_t EmbeddingStore::total_records() const {
  std::size_t n = 0;
  for (const auto& per : records_) {
    for (const auto& v : per) n += v.size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Binary encoding, little-endian regardless of host.

namespace {

using binio::Reader;
using binio::Writer;

std::string file_name_for(std::size_t dataset_id, Split split) {
  return "ds" + std::to_string(dataset_id) + "_" + std::string(split_name(split)) + ".bin";
}

std::string encode_records(const EmbeddingStore& store, std::size_t dataset_id, Split split) {
  const auto& recs = store.records(dataset_id, split);
  Writer w;
  w.bytes(std::string_view(kStoreMagic, 4));
  w.u16(kStoreVersion);
  w.u16(static_cast<std::uint16_t>(dataset_id));
  w.u8(static_cast<std::uint8_t>(split));
  w.u64(recs.size());
  for (const SampleRecord& r : recs) {
    w.u16(static_cast<std::uint16_t>(r.sample_id.size()));
    w.bytes(r.sample_id);
    w.i32(r.label.value_or(-1));
    w.u32(static_cast<std::uint32_t>(r.features.size()));
    for (float f : r.features) w.f32(f);
    w.u8(r.expert_logits ? 1 : 0);
    if (r.expert_logits) {
      for (const auto& block : *r.expert_logits) {
        w.u32(static_cast<std::uint32_t>(block.size()));
        for (float f : block) w.f32(f);
      }
    }
  }
  return w.buffer();
}

void decode_records(EmbeddingStore& store, const fs::path& file, std::size_t dataset_id,
                    Split split) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw StoreError(StoreError::Kind::io, file, std::nullopt, "cannot open file");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), file);

  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kStoreMagic, 4) != 0) {
    throw StoreError(StoreError::Kind::magic, file, std::nullopt, "expected \"JEDI\"");
  }
  const std::uint16_t version = r.u16();
  if (version != kStoreVersion) {
    throw StoreError(StoreError::Kind::version, file, std::nullopt,
                     "file version " + std::to_string(version) + ", reader supports " +
                         std::to_string(kStoreVersion));
  }
  const std::uint16_t ds = r.u16();
  const std::uint8_t tag = r.u8();
  if (ds != dataset_id || tag != static_cast<std::uint8_t>(split)) {
    throw StoreError(StoreError::Kind::invariant, file, std::nullopt,
                     "header names dataset " + std::to_string(ds) + " split tag " +
                         std::to_string(tag) + ", manifest expects dataset " +
                         std::to_string(dataset_id) + " split " + std::string(split_name(split)));
  }
  const std::uint64_t count = r.u64();
  const std::size_t d_total = store.total_dim();
  auto& dst = store.records_mut(dataset_id, split);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    r.set_record(idx);
    SampleRecord rec;
    rec.home_dataset = static_cast<std::uint16_t>(dataset_id);
    rec.split = split;
    rec.sample_id = r.bytes(r.u16());
    const std::int32_t label = r.i32();
    if (label >= 0) rec.label = label;
    const std::uint32_t width = r.u32();
    if (width != d_total) {
      throw StoreError(StoreError::Kind::width, file, idx,
                       "record has " + std::to_string(width) + " features, manifest declares " +
                           std::to_string(d_total));
    }
    rec.features.resize(width);
    for (float& f : rec.features) f = r.f32();
    const std::uint8_t has_logits = r.u8();
    if (has_logits > 1) {
      throw StoreError(StoreError::Kind::invariant, file, idx, "logits flag must be 0 or 1");
    }
    if (has_logits == 1) {
      std::vector<std::vector<float>> blocks(store.num_experts());
      for (std::size_t e = 0; e < store.num_experts(); ++e) {
        const std::uint32_t w = r.u32();
        if (w != static_cast<std::uint32_t>(store.manifest()[e].num_classes)) {
          throw StoreError(StoreError::Kind::width, file, idx,
                           "logit block " + std::to_string(e) + " has width " + std::to_string(w) +
                               ", expected " + std::to_string(store.manifest()[e].num_classes));
        }
        blocks[e].resize(w);
        for (float& f : blocks[e]) f = r.f32();
      }
      rec.expert_logits = std::move(blocks);
    }
    try {
      store.validate_record(rec, idx);
    } catch (const StoreError& e) {
      throw StoreError(e.kind(), file, idx, "sample '" + rec.sample_id + "' fails validation");
    }
    dst.push_back(std::move(rec));
  }
  r.set_record(std::nullopt);
  if (!r.at_end()) {
    throw StoreError(StoreError::Kind::invariant, file, std::nullopt,
                     std::to_string(r.remaining()) + " trailing bytes");
  }
}

}  // namespace

void write_store(const EmbeddingStore& store, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreError(StoreError::Kind::io, dir, std::nullopt, ec.message());

  KvDoc manifest;
  manifest.set("format", "jedi-embedding-store");
  manifest.set("version", std::to_string(kStoreVersion));
  manifest.set("datasets", std::to_string(store.num_datasets()));
  manifest.set("total_dim", std::to_string(store.total_dim()));
  for (const DatasetSpec& d : store.manifest()) {
    const std::string p = "dataset." + std::to_string(d.dataset_id) + ".";
    manifest.set(p + "name", d.name);
    manifest.set(p + "num_classes", std::to_string(d.num_classes));
    manifest.set(p + "feature_dim", std::to_string(d.feature_dim));
    manifest.set(p + "train_size", std::to_string(d.train_size));
    for (Split s : kAllSplits) {
      if (store.count(d.dataset_id, s) == 0) continue;
      const std::string name = file_name_for(d.dataset_id, s);
      const fs::path path = dir / name;
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) throw StoreError(StoreError::Kind::io, path, std::nullopt, "cannot write file");
      const std::string bytes = encode_records(store, d.dataset_id, s);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw StoreError(StoreError::Kind::io, path, std::nullopt, "write failed");
      manifest.set(p + "file." + std::string(split_name(s)), name);
    }
  }
  manifest.save(dir / kManifestFile);
}

std::vector<DatasetSpec> parse_manifest(const KvDoc& m, const fs::path& origin) {
  auto field = [&](const std::string& key) {
    try {
      return m.get_int(key, -1);
    } catch (const ConfigError& e) {
      throw StoreError(StoreError::Kind::invariant, origin, std::nullopt, e.what());
    }
  };
  const std::int64_t n = field("datasets");
  if (n < 0) throw StoreError(StoreError::Kind::invariant, origin, std::nullopt, "missing datasets");
  std::vector<DatasetSpec> specs;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::string p = "dataset." + std::to_string(i) + ".";
    DatasetSpec d;
    d.dataset_id = static_cast<std::uint16_t>(i);
    d.name = m.get_string(p + "name", "dataset" + std::to_string(i));
    const std::int64_t classes = field(p + "num_classes");
    const std::int64_t dim = field(p + "feature_dim");
    const std::int64_t train = m.has(p + "train_size") ? field(p + "train_size") : 0;
    if (classes < 0 || dim < 0 || train < 0) {
      throw StoreError(StoreError::Kind::invariant, origin, std::nullopt,
                       "incomplete entry for dataset " + std::to_string(i));
    }
    d.num_classes = static_cast<int>(classes);
    d.feature_dim = static_cast<std::size_t>(dim);
    d.train_size = static_cast<std::uint64_t>(train);
    specs.push_back(std::move(d));
  }
  try {
    EmbeddingStore probe(specs);
  } catch (const StoreError& e) {
    throw StoreError(e.kind(), origin, std::nullopt, e.what());
  }
  return specs;
}

EmbeddingStore read_store(const fs::path& dir) {
  const fs::path mpath = dir / kManifestFile;
  if (!fs::exists(mpath)) {
    throw StoreError(StoreError::Kind::io, mpath, std::nullopt, "manifest not found");
  }
  KvDoc m;
  try {
    m = KvDoc::load(mpath);
  } catch (const ConfigError& e) {
    throw StoreError(StoreError::Kind::invariant, mpath, std::nullopt, e.what());
  }
  auto field = [&](const std::string& key) {
    try {
      return m.get_int(key, -1);
    } catch (const ConfigError& e) {
      throw StoreError(StoreError::Kind::invariant, mpath, std::nullopt, e.what());
    }
  };
  if (m.get_string("format", "") != "jedi-embedding-store") {
    throw StoreError(StoreError::Kind::magic, mpath, std::nullopt, "not a jedi store manifest");
  }
  if (field("version") != kStoreVersion) {
    throw StoreError(StoreError::Kind::version, mpath, std::nullopt,
                     "manifest version " + m.get_string("version", "?"));
  }
  EmbeddingStore store(parse_manifest(m, mpath));
  const std::int64_t declared_total = field("total_dim");
  if (declared_total >= 0 && static_cast<std::size_t>(declared_total) != store.total_dim()) {
    throw StoreError(StoreError::Kind::width, mpath, std::nullopt,
                     "total_dim " + std::to_string(declared_total) + " != sum of feature_dim " +
                         std::to_string(store.total_dim()));
  }
  for (const DatasetSpec& d : store.manifest()) {
    for (Split s : kAllSplits) {
      auto file = m.get("dataset." + std::to_string(d.dataset_id) + ".file." +
                        std::string(split_name(s)));
      if (!file) continue;
      decode_records(store, dir / *file, d.dataset_id, s);
    }
  }
  return store;
}

EmbeddingStore split_train_val(const EmbeddingStore& store, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("val_fraction", "must lie in (0, 1), got " + format_double(fraction));
  }
  EmbeddingStore out = store;
  for (std::size_t ds = 0; ds < store.num_experts(); ++ds) {
    auto& train = out.records_mut(ds, Split::train);
    if (train.empty()) {
      throw ConfigError("val_fraction", "dataset '" + store.manifest()[ds].name +
                                            "' has no train records to split");
    }
    const std::size_t n = train.size();
    const auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::stream(seed, "split", {ds});
    rng.shuffle(order);
    std::vector<bool> to_val(n, false);
    for (std::size_t i = 0; i < n_val; ++i) to_val[order[i]] = true;

    std::vector<SampleRecord> keep;
    auto& val = out.records_mut(ds, Split::val);
    for (std::size_t i = 0; i < n; ++i) {
      if (to_val[i]) {
        train[i].split = Split::val;
        val.push_back(std::move(train[i]));
      } else {
        keep.push_back(std::move(train[i]));
      }
    }
    train = std::move(keep);
    out.manifest_mut()[ds].train_size = train.size();
  }
  return out;
}

std::span<const float> segment_view(const SampleRecord& record, const EmbeddingStore& store,
                                    std::size_t dataset_id) {
  if (dataset_id >= store.num_experts()) {
    throw DimensionError("segment_view: dataset id " + std::to_string(dataset_id) +
                         " out of range (" + std::to_string(store.num_experts()) + " experts)");
  }
  const auto& off = store.offsets();
  if (record.features.size() != store.total_dim()) {
    throw DimensionError("segment_view: record width " + std::to_string(record.features.size()) +
                         " vs manifest " + std::to_string(store.total_dim()));
  }
  return std::span<const float>(record.features).subspan(off[dataset_id],
                                                          off[dataset_id + 1] - off[dataset_id]);
}

std::vector<DatasetSpec> reference_video_manifest() {
  return {
      {0, "ActivityNet", 200, 2048, 8398},
      {1, "HMDB51", 51, 2048, 3570},
      {2, "Kinetics400", 400, 1024, 226070},
      {3, "UCF101", 101, 2048, 9537},
  };
}

}  // namespace jedi
