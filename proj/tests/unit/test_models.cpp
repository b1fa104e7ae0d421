#include <gtest/gtest.h>

#include <cmath>

#include "../support/composite.hpp"
#include "jedi/error.hpp"
#include "jedi/graph.hpp"
#include "jedi/models.hpp"

using namespace jedi;

namespace {

AdjustmentModule tiny_module() {
  AdjustmentModule m;
  m.down_w = ParamTensor("u", Tensor2::from_rows({{1.0}, {1.0}}));
  m.down_b = ParamTensor("ub", Tensor2(1, 1));
  m.up_w = ParamTensor("w", Tensor2::from_rows({{1.0, 0.0}}));
  m.up_b = ParamTensor("wb", Tensor2(1, 2));
  return m;
}

std::vector<DatasetSpec> small_specs() {
  return {{0, "a", 3, 4, 10}, {1, "b", 2, 5, 20}, {2, "pool", 0, 0, 0}};
}

EmbeddingStore small_store() {
  EmbeddingStore store(small_specs());
  Rng rng = Rng::stream(5, "fixture");
  for (std::uint16_t h = 0; h < 2; ++h) {
    for (int r = 0; r < 4; ++r) {
      SampleRecord rec;
      rec.sample_id = std::to_string(h) + std::to_string(r);
      for (std::size_t k = 0; k < 9; ++k) rec.features.push_back(static_cast<float>(rng.normal()));
      rec.label = r % store.manifest()[h].num_classes;
      rec.home_dataset = h;
      store.add(std::move(rec));
    }
  }
  return store;
}

}  // namespace

TEST(Adjust, HandEvaluatedExample) {
  const std::vector<double> e{1.0, 1.0};
  const auto out = adjust(e, tiny_module());
  EXPECT_NEAR(out[0], 1.0 + 2.0 / (1.0 + std::exp(-2.0)) , 1e-15);
  EXPECT_NEAR(out[0], 2.761594, 1e-6);
  EXPECT_EQ(out[1], 1.0);
}

TEST(Adjust, ZeroInputZeroBiasesIsZero) {
  const std::vector<double> e{0.0, 0.0};
  const auto out = adjust(e, tiny_module());
  EXPECT_EQ(out, (std::vector<double>{0.0, 0.0}));
}

TEST(Adjust, ResidualIdentityAtInit) {
  const ModelSet set = init_models(small_specs(), 7, InitPolicy{}, EnsembleInput::adjusted_features);
  Rng rng = Rng::stream(1, "fixture");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> e(4);
    for (double& x : e) x = 5.0 * rng.normal();
    EXPECT_EQ(adjust(e, set.students[0].adjustment), e);
  }
}

TEST(Adjust, WidthMismatchThrows) {
  const std::vector<double> e{1.0, 2.0, 3.0};
  EXPECT_THROW(adjust(e, tiny_module()), DimensionError);
}

TEST(TeacherDropout, ReferenceRates) {
  EXPECT_NEAR(teacher_dropout_rate(200, 7168, 10), 0.720982, 1e-6);
  EXPECT_NEAR(teacher_dropout_rate(51, 7168, 10), 0.928851, 1e-6);
  EXPECT_NEAR(teacher_dropout_rate(400, 7168, 10), 0.441964, 1e-6);
  EXPECT_NEAR(teacher_dropout_rate(101, 7168, 10), 0.859096, 1e-6);
  EXPECT_EQ(teacher_dropout_rate(800, 7168, 10), 0.0);
  EXPECT_EQ(teacher_dropout_rate(717, 7168, 10), 0.0);
}

TEST(TeacherDropout, ExpectedActiveNeurons) {
  for (std::size_t c : {200u, 51u, 400u, 101u}) {
    // p is rounded to a double, so the identity holds to within a few ulps
    EXPECT_NEAR(7168.0 * (1.0 - teacher_dropout_rate(c, 7168, 10)), 10.0 * static_cast<double>(c), 1e-9);
  }
}

TEST(EnsembleInput, Widths) {
  const std::vector<std::size_t> widths{2048, 2048, 1024, 2048}, classes{200, 51, 400, 101};
  EXPECT_EQ(ensemble_input_width(EnsembleInput::base_features, widths, classes), 7168u);
  EXPECT_EQ(ensemble_input_width(EnsembleInput::adjusted_features, widths, classes), 7168u);
  EXPECT_EQ(ensemble_input_width(EnsembleInput::predictions, widths, classes), 752u);
  EXPECT_EQ(ensemble_input_width(EnsembleInput::adjusted_plus_predictions, widths, classes), 7920u);
}

TEST(EnsembleInput, NamesRoundTrip) {
  for (auto m : {EnsembleInput::predictions, EnsembleInput::base_features,
                 EnsembleInput::adjusted_features, EnsembleInput::adjusted_plus_predictions}) {
    EXPECT_EQ(parse_ensemble_input(ensemble_input_name(m)), m);
  }
  EXPECT_THROW(parse_ensemble_input("logits"), ConfigError);
}

TEST(InitModels, DeterministicInSeed) {
  const auto a = init_models(small_specs(), 3, InitPolicy{}, EnsembleInput::predictions);
  const auto b = init_models(small_specs(), 3, InitPolicy{}, EnsembleInput::predictions);
  const auto c = init_models(small_specs(), 4, InitPolicy{}, EnsembleInput::predictions);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    any_diff = any_diff || pa[i]->value != pc[i]->value;
  }
  EXPECT_TRUE(any_diff);
}

TEST(InitModels, PoolEntriesOwnNoModel) {
  const auto set = init_models(small_specs(), 3, InitPolicy{}, EnsembleInput::predictions);
  EXPECT_EQ(set.num_experts(), 2u);
  EXPECT_EQ(set.total_width(), 9u);
  EXPECT_EQ(set.teachers[1].meta_w.rows(), 5u);
}

TEST(InitModels, InvalidPolicy) {
  InitPolicy p;
  p.hidden_width = 0;
  EXPECT_THROW(init_models(small_specs(), 1, p, EnsembleInput::predictions), ConfigError);
  p = InitPolicy{};
  p.adjust_dropout = 1.0;
  EXPECT_THROW(init_models(small_specs(), 1, p, EnsembleInput::predictions), ConfigError);
}

TEST(StudentForward, ZeroHeadGivesBias) {
  const EmbeddingStore store = small_store();
  ModelSet set = init_models(store.manifest(), 1, InitPolicy{}, EnsembleInput::predictions);
  set.students[0].head_w.value.fill(0.0);
  set.students[0].head_b.value = Tensor2::from_rows({{0.5, -1.0, 2.0}});
  const auto logits = student_forward(store.records(0, Split::train)[0], store, set.students[0]);
  EXPECT_EQ(logits, (std::vector<double>{0.5, -1.0, 2.0}));
}

TEST(StudentForward, WarmStartMatchesExpert) {
  const EmbeddingStore store = small_store();
  std::vector<ExpertHead> heads;
  Rng rng = Rng::stream(2, "fixture");
  for (std::size_t i = 0; i < 2; ++i) {
    ExpertHead h{Tensor2(store.manifest()[i].feature_dim,
                         static_cast<std::size_t>(store.manifest()[i].num_classes)),
                 Tensor2(1, static_cast<std::size_t>(store.manifest()[i].num_classes))};
    for (double& x : h.weight.data()) x = rng.normal();
    for (double& x : h.bias.data()) x = rng.normal();
    heads.push_back(h);
  }
  const ModelSet set =
      init_models(store.manifest(), 9, InitPolicy{}, EnsembleInput::adjusted_features, &heads);
  for (std::size_t i = 0; i < 2; ++i) {
    for (const SampleRecord& r : store.records(i, Split::train)) {
      const auto seg = segment_view(r, store, i);
      const auto got = student_forward(r, store, set.students[i]);
      for (std::size_t c = 0; c < got.size(); ++c) {
        double want = heads[i].bias(0, c);
        for (std::size_t k = 0; k < seg.size(); ++k) want += seg[k] * heads[i].weight(k, c);
        EXPECT_NEAR(got[c], want, 1e-12);
      }
    }
  }
}

TEST(StudentForward, AdjustmentChangeMovesLogits) {
  const EmbeddingStore store = small_store();
  ModelSet set = init_models(store.manifest(), 1, InitPolicy{}, EnsembleInput::predictions);
  const SampleRecord& r = store.records(1, Split::train)[2];
  const auto before = student_forward(r, store, set.students[1]);
  set.students[1].adjustment.up_b.value.fill(0.3);
  EXPECT_NE(student_forward(r, store, set.students[1]), before);
}

TEST(TeacherForward, AdjustedEqualsBaseAtInit) {
  const EmbeddingStore store = small_store();
  const ModelSet adjusted =
      init_models(store.manifest(), 4, InitPolicy{}, EnsembleInput::adjusted_features);
  const ModelSet base = init_models(store.manifest(), 4, InitPolicy{}, EnsembleInput::base_features);
  for (std::size_t i = 0; i < 2; ++i) {
    for (const SampleRecord& r : store.records(i, Split::train)) {
      EXPECT_EQ(teacher_forward(r, store, adjusted, i), teacher_forward(r, store, base, i));
    }
  }
}

TEST(TeacherForward, BatchAgreesWithSingleSample) {
  const EmbeddingStore store = small_store();
  ModelSet set =
      init_models(store.manifest(), 4, InitPolicy{}, EnsembleInput::adjusted_plus_predictions);
  Rng rng = Rng::stream(8, "fixture");
  for (ParamTensor* p : set.parameters()) {
    for (double& x : p->value.data()) x = rng.uniform(-0.5, 0.5);
  }
  const auto& recs = store.records(0, Split::train);
  Tensor2 x(recs.size(), store.total_dim());
  for (std::size_t b = 0; b < recs.size(); ++b) {
    for (std::size_t k = 0; k < store.total_dim(); ++k) x(b, k) = recs[b].features[k];
  }
  const ForwardPass pass = forward(set, x, false, nullptr);
  for (std::size_t b = 0; b < recs.size(); ++b) {
    for (std::size_t t = 0; t < 2; ++t) {
      const auto single = teacher_forward(recs[b], store, set, t);
      for (std::size_t c = 0; c < single.size(); ++c) {
        EXPECT_NEAR(pass.teacher_logits[t](b, c), single[c], 1e-12);
      }
    }
    const auto s = student_forward(recs[b], store, set.students[1]);
    for (std::size_t c = 0; c < s.size(); ++c) {
      EXPECT_NEAR(pass.student_logits[1](b, c), s[c], 1e-12);
    }
  }
}

TEST(Graph, TrainModeDropoutDeterministicPerStream) {
  const EmbeddingStore store = small_store();
  InitPolicy policy;
  policy.adjust_dropout = 0.5;
  policy.teacher_k = 0.1;
  ModelSet set = init_models(store.manifest(), 4, policy, EnsembleInput::base_features);
  for (ParamTensor* p : set.parameters()) p->value.fill(0.1);
  Tensor2 x(3, store.total_dim(), 1.0);
  const Rng a = Rng::stream(1, "dropout", {0, 0});
  const Rng b = Rng::stream(1, "dropout", {0, 1});
  const ForwardPass p1 = forward(set, x, true, &a), p2 = forward(set, x, true, &a);
  const ForwardPass p3 = forward(set, x, true, &b);
  EXPECT_EQ(p1.teacher_logits, p2.teacher_logits);
  EXPECT_EQ(p1.student_logits, p2.student_logits);
  EXPECT_NE(p1.teacher_logits, p3.teacher_logits);
  const ForwardPass eval = forward(set, x, false, nullptr);
  EXPECT_FALSE(eval.teacher_masks[0].active());
}

// Property: the analytic gradient of the joint objective matches central
// differences on random toy instances, every ensemble input mode included.
TEST(Graph, CompositeGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    fixtures::CompositeToy toy = fixtures::make_composite_toy(seed);
    EXPECT_LT(toy.fd_error(), 1e-4) << "seed " << seed << " mode "
                                    << ensemble_input_name(toy.models.mode);
  }
}

TEST(Graph, DetachedTeacherGetsOnlyHingeGradient) {
  fixtures::CompositeToy toy = fixtures::make_composite_toy(7);
  for (auto& s : toy.samples) {
    s.home = 0;
    s.label = 0;
  }
  toy.kd_into_teacher = false;
  toy.models.zero_grad();
  toy.loss(true);
  std::vector<Tensor2> with_kd;
  for (auto& t : toy.models.teachers) with_kd.push_back(t.meta_w.grad);
  toy.models.zero_grad();
  toy.weights.gamma = 0.0;
  toy.loss(true);
  for (std::size_t t = 0; t < toy.models.teachers.size(); ++t) {
    EXPECT_EQ(toy.models.teachers[t].meta_w.grad, with_kd[t]);
  }
}
