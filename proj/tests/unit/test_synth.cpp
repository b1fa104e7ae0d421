#include <gtest/gtest.h>

#include <sstream>

#include "jedi/error.hpp"
#include "jedi/kvdoc.hpp"
#include "jedi/metrics.hpp"
#include "jedi/synth.hpp"

using namespace jedi;

namespace {

// Test acc@1 of a linear probe from segment `seg` to the labels of dataset `ds`.
double probe(const EmbeddingStore& store, std::size_t ds, std::size_t seg) {
  auto rows = [&](Split s) {
    const auto& recs = store.records(ds, s);
    const std::size_t b = store.offsets()[seg], e = store.offsets()[seg + 1];
    Tensor2 x(recs.size(), e - b);
    for (std::size_t r = 0; r < recs.size(); ++r) {
      for (std::size_t k = b; k < e; ++k) x(r, k - b) = recs[r].features[k];
    }
    return x;
  };
  const auto classes = static_cast<std::size_t>(store.manifest()[ds].num_classes);
  const LinearFit fit =
      fit_linear_head(rows(Split::train), label_vector(store, ds, Split::train), classes);
  ParamTensor w("w", fit.head.weight), b("b", fit.head.bias);
  return topk_accuracy(affine(rows(Split::test), w, b), label_vector(store, ds, Split::test), 1);
}

WorldSpec small_world() {
  WorldSpec spec;
  spec.train_counts = {120, 90, 150};
  spec.test_counts = {60, 60, 60};
  spec.unlabeled_pool = 30;
  return spec;
}

}  // namespace

TEST(World, DefaultShape) {
  const EmbeddingStore store = generate_world(WorldSpec{});
  EXPECT_EQ(store.num_experts(), 3u);
  EXPECT_EQ(store.num_datasets(), 4u);
  EXPECT_EQ(store.total_dim(), 64u);
  EXPECT_EQ(store.count(0, Split::train), 400u);
  EXPECT_EQ(store.count(1, Split::train), 300u);
  EXPECT_EQ(store.count(2, Split::train), 500u);
  EXPECT_EQ(store.count(2, Split::test), 200u);
  EXPECT_EQ(store.count(3, Split::unlabeled), 1000u);
  EXPECT_EQ(store.manifest()[3].name, "pool");
}

TEST(World, DeterministicInSeed) {
  WorldSpec spec = small_world();
  EXPECT_EQ(generate_world(spec), generate_world(spec));
  WorldSpec other = spec;
  other.seed = 1;
  EXPECT_NE(generate_world(spec), generate_world(other));
}

TEST(World, SpecValidation) {
  WorldSpec spec;
  spec.cross_signal_strength = 1.5;
  EXPECT_THROW(generate_world(spec), ConfigError);
  spec = WorldSpec{};
  spec.segment_dims = {4, 4};
  EXPECT_THROW(generate_world(spec), ConfigError);
}

TEST(World, KvRoundTrip) {
  WorldSpec spec = small_world();
  spec.seed = 17;
  spec.noise_scale = 0.25;
  KvDoc doc;
  spec.to_kv(doc);
  const WorldSpec back = WorldSpec::from_kv(doc);
  EXPECT_EQ(generate_world(back), generate_world(spec));
}

TEST(World, NoCrossSignalLeavesForeignSegmentsUninformative) {
  WorldSpec spec;
  spec.cross_signal_strength = 0.0;
  spec.train_counts = {1000, 100, 100};
  spec.test_counts = {1000, 10, 10};
  spec.unlabeled_pool = 0;
  const EmbeddingStore store = generate_world(spec);
  const double chance = 1.0 / 5.0;
  EXPECT_NEAR(probe(store, 0, 1), chance, 0.05);
  EXPECT_NEAR(probe(store, 0, 2), chance, 0.05);
  EXPECT_GT(probe(store, 0, 0), chance + 0.2);
}

TEST(World, CrossSignalMakesConcatenationWin) {
  WorldSpec spec;
  spec.cross_signal_strength = 0.8;
  spec.unlabeled_pool = 0;
  const EmbeddingStore store = generate_world(spec);
  for (std::size_t ds = 0; ds < 3; ++ds) {
    EXPECT_GT(oracle_best_linear(store, ds, OracleInput::concatenation),
              oracle_best_linear(store, ds, OracleInput::own_segment) + 0.05)
        << "dataset " << ds;
  }
}

TEST(Experts, SeparableWorldFitsPerfectly) {
  EmbeddingStore store({{0, "sep", 2, 2, 0}});
  for (int r = 0; r < 40; ++r) {
    SampleRecord rec;
    rec.sample_id = std::to_string(r);
    const int y = r % 2;
    rec.features = {static_cast<float>(y == 0 ? -1.0 - 0.1 * r : 1.0 + 0.1 * r),
                    static_cast<float>(r % 5)};
    rec.label = y;
    store.add(std::move(rec));
  }
  const ExpertOracle oracle = pretrain_experts(store);
  ParamTensor w("w", oracle.heads[0].weight), b("b", oracle.heads[0].bias);
  const Tensor2 x = feature_matrix(store, 0, Split::train, OracleInput::own_segment);
  EXPECT_EQ(topk_accuracy(affine(x, w, b), label_vector(store, 0, Split::train), 1), 1.0);
}

TEST(Experts, BeatChanceAndAreRepeatable) {
  const EmbeddingStore store = generate_world(small_world());
  std::ostringstream warnings;
  const ExpertOracle a = pretrain_experts(store, {}, &warnings);
  const ExpertOracle b = pretrain_experts(store);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.heads[i].weight, b.heads[i].weight);
    EXPECT_EQ(a.heads[i].bias, b.heads[i].bias);
    ParamTensor w("w", a.heads[i].weight), bias("b", a.heads[i].bias);
    const Tensor2 x = feature_matrix(store, i, Split::test, OracleInput::own_segment);
    const double acc = topk_accuracy(affine(x, w, bias), label_vector(store, i, Split::test), 1);
    EXPECT_GT(acc, 1.0 / store.manifest()[i].num_classes);
    if (!a.converged[i]) {
      EXPECT_NE(warnings.str().find(store.manifest()[i].name), std::string::npos);
    }
  }
}

TEST(Experts, NonConvergenceWarnsInsteadOfThrowing) {
  const EmbeddingStore store = generate_world(small_world());
  LinearFitOptions opts;
  opts.max_steps = 3;
  std::ostringstream warnings;
  const ExpertOracle o = pretrain_experts(store, opts, &warnings);
  EXPECT_FALSE(o.converged[0]);
  EXPECT_NE(warnings.str().find("gradient norm"), std::string::npos);
}

TEST(Oracle, OwnSegmentMatchesExpert) {
  const EmbeddingStore store = generate_world(small_world());
  const ExpertOracle o = pretrain_experts(store);
  for (std::size_t i = 0; i < 3; ++i) {
    ParamTensor w("w", o.heads[i].weight), b("b", o.heads[i].bias);
    const Tensor2 x = feature_matrix(store, i, Split::test, OracleInput::own_segment);
    const double expert = topk_accuracy(affine(x, w, b), label_vector(store, i, Split::test), 1);
    EXPECT_NEAR(oracle_best_linear(store, i, OracleInput::own_segment), expert, 0.005);
  }
}

// Property: the concatenated input never does much worse than the own segment.
TEST(Oracle, ConcatenationDominatesOwnSegment) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    WorldSpec spec = small_world();
    spec.seed = seed;
    const EmbeddingStore store = generate_world(spec);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GE(oracle_best_linear(store, i, OracleInput::concatenation),
                oracle_best_linear(store, i, OracleInput::own_segment) - 0.005);
    }
  }
}

TEST(Oracle, NoTrainingSamples) {
  EmbeddingStore store({{0, "a", 2, 2, 0}});
  EXPECT_THROW(oracle_best_linear(store, 0, OracleInput::own_segment), ConfigError);
}
