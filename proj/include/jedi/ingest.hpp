#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "jedi/store.hpp"

namespace jedi {

// Text interchange for cached embeddings, one sample per line:
//   sample_id,label,f_1,...,f_d
// label is -1 when absent and d is the full concatenated width. Blank lines
// and lines starting with '#' are skipped.
struct DumpInput {
  std::size_t dataset = 0;
  Split split = Split::train;
  std::filesystem::path path;
};

// Parses "dataset:split:path".
DumpInput parse_dump_input(const std::string& spec);

// Appends every line of `in` to (dataset, split) of `store`.
std::size_t ingest_stream(std::istream& in, const std::filesystem::path& origin,
                          EmbeddingStore& store, std::size_t dataset, Split split);

// Builds a store from a manifest document and dumps. Datasets whose manifest
// train_size is 0 take their ingested train count.
EmbeddingStore ingest_dumps(const std::vector<DatasetSpec>& manifest,
                            const std::vector<DumpInput>& inputs);

// Record counts per dataset and split, one line per dataset.
std::string store_summary(const EmbeddingStore& store);

}  // namespace jedi
