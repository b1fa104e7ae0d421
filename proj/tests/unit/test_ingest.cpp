#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "jedi/error.hpp"
#include "jedi/ingest.hpp"

using namespace jedi;
namespace fs = std::filesystem;

namespace {

EmbeddingStore two_dataset_store() {
  return EmbeddingStore({{0, "a", 3, 2, 0}, {1, "b", 2, 1, 0}, {2, "pool", 0, 0, 0}});
}

}  // namespace

TEST(Ingest, TenLineDumpRoundTrips) {
  EmbeddingStore store = two_dataset_store();
  std::ostringstream text;
  text << "# id,label,features\n";
  for (int r = 0; r < 10; ++r) {
    text << "s" << r << "," << r % 3 << "," << 0.5 * r << "," << -0.25 * r << "," << 1e-3 * r
         << "\n";
  }
  std::istringstream in(text.str());
  EXPECT_EQ(ingest_stream(in, "dump.csv", store, 0, Split::train), 10u);
  const auto& recs = store.records(0, Split::train);
  ASSERT_EQ(recs.size(), 10u);
  for (int r = 0; r < 10; ++r) {
    EXPECT_EQ(recs[r].sample_id, "s" + std::to_string(r));
    EXPECT_EQ(*recs[r].label, r % 3);
    EXPECT_EQ(recs[r].features[0], static_cast<float>(0.5 * r));
    EXPECT_EQ(recs[r].features[1], static_cast<float>(-0.25 * r));
    EXPECT_EQ(recs[r].features[2], static_cast<float>(1e-3 * r));
  }
}

TEST(Ingest, EmptyDumpAddsNothing) {
  EmbeddingStore store = two_dataset_store();
  std::istringstream in("\n# nothing here\n");
  EXPECT_EQ(ingest_stream(in, "empty.csv", store, 1, Split::test), 0u);
}

TEST(Ingest, WrongFeatureCountReportsLine) {
  EmbeddingStore store = two_dataset_store();
  std::istringstream in("a,0,1,2,3\nb,1,1,2\n");
  try {
    ingest_stream(in, "dump.csv", store, 0, Split::train);
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("dump.csv:2"), std::string::npos);
  }
}

TEST(Ingest, BadNumbersAndLabels) {
  auto fails_at = [](const std::string& text, std::size_t dataset, Split split) {
    EmbeddingStore store = two_dataset_store();
    std::istringstream in(text);
    try {
      ingest_stream(in, "d", store, dataset, split);
    } catch (const IngestError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(fails_at("a,0,1,x,3\n", 0, Split::train), 1u);
  EXPECT_EQ(fails_at("a,0,1,2,3\nb,zero,1,2,3\n", 0, Split::train), 2u);
  EXPECT_EQ(fails_at("a,3,1,2,3\n", 0, Split::train), 1u);   // label outside [0, 3)
  EXPECT_EQ(fails_at("a,-1,1,2,3\n", 0, Split::train), 1u);  // labeled split needs a label
  EXPECT_EQ(fails_at("a,-1,1,2,3\n", 2, Split::unlabeled), 0u);
  EXPECT_EQ(fails_at(",0,1,2,3\n", 0, Split::train), 1u);
}

TEST(Ingest, DumpSpecParsing) {
  const DumpInput in = parse_dump_input("1:test:/tmp/x:y.csv");
  EXPECT_EQ(in.dataset, 1u);
  EXPECT_EQ(in.split, Split::test);
  EXPECT_EQ(in.path, "/tmp/x:y.csv");
  EXPECT_THROW(parse_dump_input("1:test"), ConfigError);
  EXPECT_THROW(parse_dump_input("x:test:f"), ConfigError);
  EXPECT_ANY_THROW(parse_dump_input("0:holdout:f"));
}

TEST(Ingest, DumpsFillTrainSizes) {
  const fs::path dir = fs::temp_directory_path() / ("jedi_ingest_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  {
    std::ofstream(dir / "a.csv") << "x,0,1,2,3\ny,1,4,5,6\n";
    std::ofstream(dir / "b.csv") << "z,1,1,2,3\n";
  }
  const EmbeddingStore store =
      ingest_dumps(two_dataset_store().manifest(),
                   {{0, Split::train, dir / "a.csv"}, {1, Split::train, dir / "b.csv"}});
  EXPECT_EQ(store.manifest()[0].train_size, 2u);
  EXPECT_EQ(store.manifest()[1].train_size, 1u);
  EXPECT_NE(store_summary(store).find("a: train=2"), std::string::npos);
  EXPECT_THROW(ingest_dumps(two_dataset_store().manifest(), {{0, Split::train, dir / "none.csv"}}),
               StoreError);
  fs::remove_all(dir);
}
