#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jedi {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2, unlabeled = 3 };
inline constexpr std::array<Split, 4> kAllSplits{Split::train, Split::val, Split::test,
                                                 Split::unlabeled};

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

// One dataset of the manifest. Entries with num_classes == 0 are unlabeled
// pools: they own no expert and no feature segment (feature_dim == 0) and must
// come after every expert dataset.
struct DatasetSpec {
  std::uint16_t dataset_id = 0;
  std::string name;
  int num_classes = 0;
  std::size_t feature_dim = 0;
  std::uint64_t train_size = 0;

  bool is_pool() const noexcept { return num_classes == 0; }
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct SampleRecord {
  std::string sample_id;
  std::vector<float> features;  // all expert segments, concatenated in manifest order
  std::optional<std::vector<std::vector<float>>> expert_logits;  // one block per expert
  std::optional<std::int32_t> label;
  std::uint16_t home_dataset = 0;
  Split split = Split::train;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::vector<DatasetSpec> manifest);

  const std::vector<DatasetSpec>& manifest() const noexcept { return manifest_; }
  std::vector<DatasetSpec>& manifest_mut() noexcept { return manifest_; }
  std::size_t num_datasets() const noexcept { return manifest_.size(); }
  std::size_t num_experts() const noexcept { return num_experts_; }
  // Prefix sums of expert feature_dim; offsets()[num_experts()] == total_dim().
  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
  std::size_t total_dim() const noexcept { return offsets_.back(); }
  std::vector<int> class_counts() const;

  // Validates against the manifest, then appends to (home_dataset, split).
  void add(SampleRecord record);
  const std::vector<SampleRecord>& records(std::size_t dataset_id, Split split) const;
  std::vector<SampleRecord>& records_mut(std::size_t dataset_id, Split split);
  std::size_t count(std::size_t dataset_id, Split split) const {
    return records(dataset_id, split).size();
  }
  std::size_t total_records() const;

  // Throws StoreError(invariant) describing the first violation.
  void validate_record(const SampleRecord& record, std::optional<std::size_t> index = {}) const;

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.manifest_ == b.manifest_ && a.records_ == b.records_;
  }

 private:
  void rebuild_offsets();

  std::vector<DatasetSpec> manifest_;
  std::size_t num_experts_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::array<std::vector<SampleRecord>, 4>> records_;
};

inline constexpr char kStoreMagic[4] = {'J', 'E', 'D', 'I'};
inline constexpr std::uint16_t kStoreVersion = 1;
inline constexpr const char* kManifestFile = "manifest.kv";

class KvDoc;

// Dataset entries of a manifest document: `datasets = n` plus
// dataset.<i>.{name, num_classes, feature_dim, train_size}.
std::vector<DatasetSpec> parse_manifest(const KvDoc& doc, const std::filesystem::path& origin);

// Writes manifest.kv plus one binary file per non-empty (dataset, split).
void write_store(const EmbeddingStore& store, const std::filesystem::path& dir);
EmbeddingStore read_store(const std::filesystem::path& dir);

// Re-marks ceil(fraction * n_train) uniformly chosen train records of every
// expert dataset as val. train_size follows the new train count.
EmbeddingStore split_train_val(const EmbeddingStore& store, double fraction, std::uint64_t seed);

std::span<const float> segment_view(const SampleRecord& record, const EmbeddingStore& store,
                                    std::size_t dataset_id);

// Full-scale manifest fixture: four expert datasets with 2048/2048/1024/2048
// wide segments (7168 total).
std::vector<DatasetSpec> reference_video_manifest();

}  // namespace jedi
