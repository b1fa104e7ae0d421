#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "jedi/kvdoc.hpp"
#include "jedi/models.hpp"
#include "jedi/store.hpp"

namespace jedi {

// Multi-dataset embedding world. A sample of class y from home dataset h has,
// in every segment i, the latent
//   sqrt(w_hi) * mu_{h,y} + s_{h,y} * N(0, I)   (s_{h,y} scales each axis)
// with w_hh = 1 - cross_signal_strength and w_hi = cross_signal_strength / (n - 1)
// otherwise, mapped by a fixed random affine map A_i z + b_i plus
// noise_scale * N(0, I). Class means of one dataset are orthogonal with norm
// class_separation. Each class scales every latent axis by within_scale *
// exp(U(-class_scale_spread, class_scale_spread)), so class covariances
// differ and the Bayes boundary of a segment is not linear. Unlabeled pool
// samples come from uniformly chosen home datasets and carry no label.
struct WorldSpec {
  std::vector<int> num_classes{5, 4, 6};
  std::vector<std::size_t> segment_dims{24, 24, 16};
  std::vector<std::size_t> train_counts{400, 300, 500};
  std::vector<std::size_t> val_counts{0, 0, 0};
  std::vector<std::size_t> test_counts{200, 200, 200};
  std::size_t unlabeled_pool = 1000;
  std::size_t shared_latent_dim = 8;
  double noise_scale = 1.0;
  double cross_signal_strength = 0.7;
  double class_separation = 4.0;
  double within_scale = 0.7;
  double class_scale_spread = 1.2;
  std::uint64_t seed = 0;

  std::size_t num_datasets() const noexcept { return num_classes.size(); }
  void validate() const;

  // Reads `world.*` keys; missing keys keep the defaults above.
  static WorldSpec from_kv(const KvDoc& doc);
  void to_kv(KvDoc& doc) const;
};

EmbeddingStore generate_world(const WorldSpec& spec);

struct LinearFitOptions {
  double tolerance = 1e-6;  // on the gradient norm
  std::size_t max_steps = 10000;
};

struct LinearFit {
  ExpertHead head;
  double grad_norm = 0.0;
  std::size_t steps = 0;
  bool converged = false;
};

// Unregularized multinomial logistic regression by full-batch accelerated
// gradient descent with step 1 / L, L bounded through the top eigenvalue of
// the (bias-augmented) second-moment matrix.
LinearFit fit_linear_head(const Tensor2& x, std::span<const int> labels, std::size_t num_classes,
                          const LinearFitOptions& options = {});

struct ExpertOracle {
  std::vector<ExpertHead> heads;
  std::vector<double> grad_norms;
  std::vector<bool> converged;
};

// One linear head per expert dataset over its own segment of the train split.
// Non-convergence is reported to `warnings` (when non-null), not thrown.
ExpertOracle pretrain_experts(const EmbeddingStore& store, const LinearFitOptions& options = {},
                              std::ostream* warnings = nullptr);

enum class OracleInput { own_segment, concatenation };

// Test-split acc@1 of a reference linear classifier trained on the train split.
double oracle_best_linear(const EmbeddingStore& store, std::size_t dataset_id, OracleInput input,
                          const LinearFitOptions& options = {});

// Feature rows (own segment or full width) and labels of one split.
Tensor2 feature_matrix(const EmbeddingStore& store, std::size_t dataset_id, Split split,
                       OracleInput input);
std::vector<int> label_vector(const EmbeddingStore& store, std::size_t dataset_id, Split split);

}  // namespace jedi
