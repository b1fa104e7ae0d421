#include "jedi/ingest.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include "jedi/error.hpp"
#include "jedi/kvdoc.hpp"

namespace jedi {

DumpInput parse_dump_input(const std::string& spec) {
  const auto first = spec.find(':');
  const auto second = first == std::string::npos ? first : spec.find(':', first + 1);
  if (second == std::string::npos) {
    throw ConfigError("input", "expected dataset:split:path, got '" + spec + "'");
  }
  DumpInput in;
  const std::string ds = spec.substr(0, first);
  auto [ptr, ec] = std::from_chars(ds.data(), ds.data() + ds.size(), in.dataset);
  if (ec != std::errc() || ptr != ds.data() + ds.size()) {
    throw ConfigError("input", "bad dataset index '" + ds + "'");
  }
  in.split = parse_split(spec.substr(first + 1, second - first - 1));
  in.path = spec.substr(second + 1);
  if (in.path.empty()) throw ConfigError("input", "empty path in '" + spec + "'");
  return in;
}

namespace {

float parse_float(const std::string& field, const std::filesystem::path& origin, std::size_t line,
                  std::size_t column) {
  const std::string t = trim(field);
  float v = 0.0f;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw IngestError(origin, line,
                      "field " + std::to_string(column) + " is not a number: '" + t + "'");
  }
  return v;
}

}  // namespace

std::size_t ingest_stream(std::istream& in, const std::filesystem::path& origin,
                          EmbeddingStore& store, std::size_t dataset, Split split) {
  if (dataset >= store.num_datasets()) {
    throw ConfigError("input", "dataset " + std::to_string(dataset) + " not in manifest (" +
                                   std::to_string(store.num_datasets()) + " datasets)");
  }
  const std::size_t width = store.total_dim();
  std::string line;
  std::size_t line_no = 0, added = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::vector<std::string> fields = jedi::split(t, ',');
    if (fields.size() != width + 2) {
      throw IngestError(origin, line_no,
                        "expected id, label and " + std::to_string(width) + " features, got " +
                            std::to_string(fields.size() < 2 ? 0 : fields.size() - 2) +
                            " features");
    }
    SampleRecord rec;
    rec.sample_id = trim(fields[0]);
    if (rec.sample_id.empty()) throw IngestError(origin, line_no, "empty sample id");
    const std::string label = trim(fields[1]);
    int y = 0;
    auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), y);
    if (ec != std::errc() || ptr != label.data() + label.size() || label.empty()) {
      throw IngestError(origin, line_no, "label is not an integer: '" + label + "'");
    }
    if (y < -1) throw IngestError(origin, line_no, "label must be -1 or a class index");
    if (y >= 0) rec.label = y;
    rec.features.reserve(width);
    for (std::size_t k = 0; k < width; ++k) {
      rec.features.push_back(parse_float(fields[k + 2], origin, line_no, k + 3));
    }
    rec.home_dataset = static_cast<std::uint16_t>(dataset);
    rec.split = split;
    try {
      store.add(std::move(rec));
    } catch (const StoreError& e) {
      throw IngestError(origin, line_no, e.what());
    }
    ++added;
  }
  return added;
}

EmbeddingStore ingest_dumps(const std::vector<DatasetSpec>& manifest,
                            const std::vector<DumpInput>& inputs) {
  EmbeddingStore store(manifest);
  for (const DumpInput& input : inputs) {
    std::ifstream in(input.path);
    if (!in) throw StoreError(StoreError::Kind::io, input.path, std::nullopt, "cannot open dump");
    ingest_stream(in, input.path, store, input.dataset, input.split);
  }
  for (std::size_t i = 0; i < store.num_experts(); ++i) {
    DatasetSpec& d = store.manifest_mut()[i];
    if (d.train_size == 0) d.train_size = store.count(i, Split::train);
  }
  return store;
}

std::string store_summary(const EmbeddingStore& store) {
  std::string out;
  for (const DatasetSpec& d : store.manifest()) {
    out += d.name + ":";
    for (Split s : kAllSplits) {
      out += " " + std::string(split_name(s)) + "=" + std::to_string(store.count(d.dataset_id, s));
    }
    out += "\n";
  }
  return out;
}

}  // namespace jedi
