#include "jedi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "jedi/error.hpp"
#include "jedi/metrics.hpp"
#include "jedi/rng.hpp"

namespace jedi {

void WorldSpec::validate() const {
  const std::size_t n = num_classes.size();
  if (n == 0) throw ConfigError("world.num_classes", "needs at least one dataset");
  auto same_len = [&](std::size_t len, const char* field) {
    if (len != n) {
      throw ConfigError(field, "has " + std::to_string(len) + " entries for " + std::to_string(n) +
                                   " datasets");
    }
  };
  same_len(segment_dims.size(), "world.segment_dims");
  same_len(train_counts.size(), "world.train_counts");
  same_len(val_counts.size(), "world.val_counts");
  same_len(test_counts.size(), "world.test_counts");
  for (int c : num_classes) {
    if (c < 2) throw ConfigError("world.num_classes", "every dataset needs >= 2 classes");
  }
  for (std::size_t d : segment_dims) {
    if (d == 0) throw ConfigError("world.segment_dims", "every segment needs width >= 1");
  }
  if (shared_latent_dim == 0) throw ConfigError("world.shared_latent_dim", "must be >= 1");
  if (!(cross_signal_strength >= 0.0 && cross_signal_strength <= 1.0)) {
    throw ConfigError("world.cross_signal_strength", "must lie in [0, 1]");
  }
  if (n == 1 && cross_signal_strength != 0.0) {
    throw ConfigError("world.cross_signal_strength", "must be 0 for a single dataset");
  }
  if (!(noise_scale >= 0.0)) throw ConfigError("world.noise_scale", "must be >= 0");
  if (!(within_scale >= 0.0)) throw ConfigError("world.within_scale", "must be >= 0");
  if (!(class_scale_spread >= 0.0)) throw ConfigError("world.class_scale_spread", "must be >= 0");
  if (!(class_separation > 0.0)) throw ConfigError("world.class_separation", "must be positive");
}

namespace {

template <typename T>
std::vector<T> to_vec(const std::vector<std::int64_t>& v, const char* key) {
  for (std::int64_t x : v) {
    if (x < 0) throw ConfigError(key, "entries must be >= 0");
  }
  return {v.begin(), v.end()};
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

template <typename T>
std::vector<std::int64_t> as_i64(const std::vector<T>& v) {
  return {v.begin(), v.end()};
}

// Orthonormal rows when count <= dim (Gram-Schmidt on Gaussian draws); extra
// rows are random unit vectors.
std::vector<std::vector<double>> random_directions(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<std::vector<double>> out;
  while (out.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    if (out.size() < dim) {
      for (const auto& u : out) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += u[k] * v[k];
        for (std::size_t k = 0; k < dim; ++k) v[k] -= dot * u[k];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

WorldSpec WorldSpec::from_kv(const KvDoc& doc) {
  WorldSpec s;
  auto list = [&](const char* key, std::vector<std::int64_t> fallback) {
    return doc.get_int_list(key, fallback);
  };
  s.num_classes = to_vec<int>(list("world.num_classes", as_i64(s.num_classes)), "world.num_classes");
  s.segment_dims =
      to_vec<std::size_t>(list("world.segment_dims", as_i64(s.segment_dims)), "world.segment_dims");
  s.train_counts =
      to_vec<std::size_t>(list("world.train_counts", as_i64(s.train_counts)), "world.train_counts");
  const std::size_t n = s.num_classes.size();
  s.val_counts = to_vec<std::size_t>(list("world.val_counts", std::vector<std::int64_t>(n, 0)),
                                     "world.val_counts");
  s.test_counts = to_vec<std::size_t>(list("world.test_counts", std::vector<std::int64_t>(n, 200)),
                                      "world.test_counts");
  auto non_negative = [&](const char* key, std::int64_t fallback) {
    std::int64_t v = doc.get_int(key, fallback);
    if (v < 0) throw ConfigError(key, "must be >= 0");
    return static_cast<std::size_t>(v);
  };
  s.unlabeled_pool = non_negative("world.unlabeled_pool", static_cast<std::int64_t>(s.unlabeled_pool));
  s.shared_latent_dim =
      non_negative("world.shared_latent_dim", static_cast<std::int64_t>(s.shared_latent_dim));
  s.noise_scale = doc.get_double("world.noise_scale", s.noise_scale);
  s.cross_signal_strength = doc.get_double("world.cross_signal_strength", s.cross_signal_strength);
  s.class_separation = doc.get_double("world.class_separation", s.class_separation);
  s.within_scale = doc.get_double("world.within_scale", s.within_scale);
  s.class_scale_spread = doc.get_double("world.class_scale_spread", s.class_scale_spread);
  s.seed = static_cast<std::uint64_t>(doc.get_int("world.seed", 0));
  s.validate();
  return s;
}

void WorldSpec::to_kv(KvDoc& doc) const {
  doc.set("world.num_classes", join(num_classes));
  doc.set("world.segment_dims", join(segment_dims));
  doc.set("world.train_counts", join(train_counts));
  doc.set("world.val_counts", join(val_counts));
  doc.set("world.test_counts", join(test_counts));
  doc.set("world.unlabeled_pool", std::to_string(unlabeled_pool));
  doc.set("world.shared_latent_dim", std::to_string(shared_latent_dim));
  doc.set("world.noise_scale", format_double(noise_scale));
  doc.set("world.cross_signal_strength", format_double(cross_signal_strength));
  doc.set("world.class_separation", format_double(class_separation));
  doc.set("world.within_scale", format_double(within_scale));
  doc.set("world.class_scale_spread", format_double(class_scale_spread));
  doc.set("world.seed", std::to_string(seed));
}

EmbeddingStore generate_world(const WorldSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_datasets();
  const std::size_t latent = spec.shared_latent_dim;

  std::vector<DatasetSpec> manifest;
  for (std::size_t h = 0; h < n; ++h) {
    manifest.push_back({static_cast<std::uint16_t>(h), "synthetic" + std::to_string(h),
                        spec.num_classes[h], spec.segment_dims[h], spec.train_counts[h]});
  }
  if (spec.unlabeled_pool > 0) {
    manifest.push_back({static_cast<std::uint16_t>(n), "pool", 0, 0, 0});
  }
  EmbeddingStore store(manifest);

  const Rng world = Rng::stream(spec.seed, "world");
  Rng structure = world.split(0);
  std::vector<std::vector<std::vector<double>>> means(n);
  for (std::size_t h = 0; h < n; ++h) {
    means[h] = random_directions(static_cast<std::size_t>(spec.num_classes[h]), latent, structure);
    for (auto& m : means[h]) {
      for (double& x : m) x *= spec.class_separation;
    }
  }
  std::vector<Tensor2> maps;  // d_i x L
  std::vector<std::vector<double>> shifts;
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(latent));
  for (std::size_t i = 0; i < n; ++i) {
    Tensor2 a(spec.segment_dims[i], latent);
    for (double& x : a.data()) x = map_scale * structure.normal();
    std::vector<double> b(spec.segment_dims[i]);
    for (double& x : b) x = structure.normal();
    maps.push_back(std::move(a));
    shifts.push_back(std::move(b));
  }

  // Per-class, per-axis within-class scales; a separate stream keeps the
  // draws above independent of the spread.
  Rng shape = world.split(2 + n * 4);
  std::vector<std::vector<std::vector<double>>> scales(n);
  for (std::size_t h = 0; h < n; ++h) {
    scales[h].assign(static_cast<std::size_t>(spec.num_classes[h]), std::vector<double>(latent));
    for (auto& row : scales[h]) {
      for (double& x : row) x = spec.within_scale * std::exp(spec.class_scale_spread * shape.uniform(-1.0, 1.0));
    }
  }

  auto sample = [&](std::size_t h, int y, Rng& rng) {
    std::vector<float> features;
    std::vector<double> z(latent);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = n == 1 ? 1.0
                       : i == h ? 1.0 - spec.cross_signal_strength
                                : spec.cross_signal_strength / static_cast<double>(n - 1);
      const double root = std::sqrt(w);
      for (std::size_t k = 0; k < latent; ++k) {
        const auto c = static_cast<std::size_t>(y);
        z[k] = root * means[h][c][k] + scales[h][c][k] * rng.normal();
      }
      for (std::size_t r = 0; r < spec.segment_dims[i]; ++r) {
        double v = shifts[i][r];
        for (std::size_t k = 0; k < latent; ++k) v += maps[i](r, k) * z[k];
        v += spec.noise_scale * rng.normal();
        features.push_back(static_cast<float>(v));
      }
    }
    return features;
  };

  for (std::size_t h = 0; h < n; ++h) {
    const std::size_t counts[3] = {spec.train_counts[h], spec.val_counts[h], spec.test_counts[h]};
    const Split splits[3] = {Split::train, Split::val, Split::test};
    for (std::size_t s = 0; s < 3; ++s) {
      Rng rng = world.split(1 + h * 4 + s);
      for (std::size_t r = 0; r < counts[s]; ++r) {
        const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_classes[h])));
        SampleRecord rec;
        rec.sample_id = "d" + std::to_string(h) + "-" + std::string(split_name(splits[s])) + "-" +
                        std::to_string(r);
        rec.features = sample(h, y, rng);
        rec.label = y;
        rec.home_dataset = static_cast<std::uint16_t>(h);
        rec.split = splits[s];
        store.add(std::move(rec));
      }
    }
  }
  Rng pool_rng = world.split(1 + n * 4);
  for (std::size_t r = 0; r < spec.unlabeled_pool; ++r) {
    const std::size_t h = static_cast<std::size_t>(pool_rng.below(n));
    const int y = static_cast<int>(pool_rng.below(static_cast<std::uint64_t>(spec.num_classes[h])));
    SampleRecord rec;
    rec.sample_id = "pool-" + std::to_string(r);
    rec.features = sample(h, y, pool_rng);
    rec.home_dataset = static_cast<std::uint16_t>(n);
    rec.split = Split::unlabeled;
    store.add(std::move(rec));
  }
  return store;
}

namespace {

struct Objective {
  const Tensor2& x;
  std::span<const int> labels;
  std::size_t classes;

  // Mean cross-entropy gradient at (w, b); returns the gradient norm.
  double gradient(const Tensor2& w, const std::vector<double>& b, Tensor2& gw,
                  std::vector<double>& gb) const {
    const std::size_t n = x.rows(), d = x.cols();
    gw.fill(0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    std::vector<double> z(classes), p(classes);
    for (std::size_t r = 0; r < n; ++r) {
      auto row = x.row(r);
      for (std::size_t c = 0; c < classes; ++c) z[c] = b[c];
      for (std::size_t k = 0; k < d; ++k) {
        const double xv = row[k];
        for (std::size_t c = 0; c < classes; ++c) z[c] += xv * w(k, c);
      }
      softmax(z, 1.0, p);
      p[static_cast<std::size_t>(labels[r])] -= 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double xv = row[k];
        for (std::size_t c = 0; c < classes; ++c) gw(k, c) += xv * p[c];
      }
      for (std::size_t c = 0; c < classes; ++c) gb[c] += p[c];
    }
    const double inv = 1.0 / static_cast<double>(n);
    double sq = 0.0;
    for (double& g : gw.data()) {
      g *= inv;
      sq += g * g;
    }
    for (double& g : gb) {
      g *= inv;
      sq += g * g;
    }
    return std::sqrt(sq);
  }
};

// Largest eigenvalue of [x 1]^T [x 1] / n by power iteration.
double second_moment_top_eigenvalue(const Tensor2& x) {
  const std::size_t n = x.rows(), d = x.cols() + 1;
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d))), next(d);
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      auto row = x.row(r);
      double dot = v[d - 1];
      for (std::size_t k = 0; k + 1 < d; ++k) dot += row[k] * v[k];
      for (std::size_t k = 0; k + 1 < d; ++k) next[k] += row[k] * dot;
      next[d - 1] += dot;
    }
    double norm = 0.0;
    for (double& y : next) {
      y /= static_cast<double>(n);
      norm += y * y;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    const double prev = lambda;
    lambda = norm;
    for (std::size_t k = 0; k < d; ++k) v[k] = next[k] / norm;
    if (std::abs(lambda - prev) <= 1e-10 * lambda) break;
  }
  return lambda;
}

}  // namespace

LinearFit fit_linear_head(const Tensor2& x, std::span<const int> labels, std::size_t num_classes,
                          const LinearFitOptions& options) {
  if (x.rows() == 0) throw ConfigError("fit_linear_head", "no training samples");
  if (labels.size() != x.rows()) throw DimensionError("fit_linear_head: label count mismatch");
  if (num_classes < 2) throw ConfigError("fit_linear_head", "needs at least 2 classes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DimensionError("fit_linear_head: label " + std::to_string(y) + " out of range");
    }
  }
  const std::size_t d = x.cols(), c = num_classes;
  Objective f{x, labels, c};
  // The softmax Hessian is bounded by I / 2.
  const double lipschitz = std::max(0.5 * second_moment_top_eigenvalue(x), 1e-12);
  const double step = 1.0 / lipschitz;

  Tensor2 w(d, c), w_prev(d, c), y_w(d, c), gw(d, c);
  std::vector<double> b(c, 0.0), b_prev(c, 0.0), y_b(c, 0.0), gb(c, 0.0);
  double t = 1.0;
  LinearFit out;
  for (out.steps = 0; out.steps < options.max_steps; ++out.steps) {
    out.grad_norm = f.gradient(y_w, y_b, gw, gb);
    if (out.grad_norm < options.tolerance) {
      out.converged = true;
      w = y_w;
      b = y_b;
      break;
    }
    w_prev = w;
    b_prev = b;
    double restart = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w.data()[i] = y_w.data()[i] - step * gw.data()[i];
      restart += gw.data()[i] * (w.data()[i] - w_prev.data()[i]);
    }
    for (std::size_t i = 0; i < c; ++i) {
      b[i] = y_b[i] - step * gb[i];
      restart += gb[i] * (b[i] - b_prev[i]);
    }
    if (restart > 0.0) t = 1.0;  // momentum points uphill
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    t = t_next;
    for (std::size_t i = 0; i < w.size(); ++i) {
      y_w.data()[i] = w.data()[i] + beta * (w.data()[i] - w_prev.data()[i]);
    }
    for (std::size_t i = 0; i < c; ++i) y_b[i] = b[i] + beta * (b[i] - b_prev[i]);
  }
  if (!out.converged) out.grad_norm = f.gradient(w, b, gw, gb);
  out.head.weight = std::move(w);
  out.head.bias = Tensor2(1, c, std::move(b));
  return out;
}

Tensor2 feature_matrix(const EmbeddingStore& store, std::size_t dataset_id, Split split,
                       OracleInput input) {
  const auto& recs = store.records(dataset_id, split);
  const std::size_t width =
      input == OracleInput::own_segment ? store.manifest().at(dataset_id).feature_dim
                                        : store.total_dim();
  Tensor2 x(recs.size(), width);
  for (std::size_t r = 0; r < recs.size(); ++r) {
    std::span<const float> src = input == OracleInput::own_segment
                                     ? segment_view(recs[r], store, dataset_id)
                                     : std::span<const float>(recs[r].features);
    std::copy(src.begin(), src.end(), x.row(r).begin());
  }
  return x;
}

std::vector<int> label_vector(const EmbeddingStore& store, std::size_t dataset_id, Split split) {
  std::vector<int> out;
  for (const SampleRecord& r : store.records(dataset_id, split)) {
    if (!r.label) {
      throw ConfigError("labels", "record '" + r.sample_id + "' of dataset " +
                                      std::to_string(dataset_id) + " has no label");
    }
    out.push_back(*r.label);
  }
  return out;
}

ExpertOracle pretrain_experts(const EmbeddingStore& store, const LinearFitOptions& options,
                              std::ostream* warnings) {
  ExpertOracle oracle;
  for (std::size_t i = 0; i < store.num_experts(); ++i) {
    const DatasetSpec& d = store.manifest()[i];
    Tensor2 x = feature_matrix(store, i, Split::train, OracleInput::own_segment);
    std::vector<int> y = label_vector(store, i, Split::train);
    if (x.rows() == 0) {
      throw ConfigError("pretrain_experts", "dataset '" + d.name + "' has no train records");
    }
    LinearFit fit = fit_linear_head(x, y, static_cast<std::size_t>(d.num_classes), options);
    if (!fit.converged && warnings) {
      *warnings << "warning: expert '" << d.name << "' stopped after " << fit.steps
                << " steps with gradient norm " << fit.grad_norm << "\n";
    }
    oracle.heads.push_back(std::move(fit.head));
    oracle.grad_norms.push_back(fit.grad_norm);
    oracle.converged.push_back(fit.converged);
  }
  return oracle;
}

double oracle_best_linear(const EmbeddingStore& store, std::size_t dataset_id, OracleInput input,
                          const LinearFitOptions& options) {
  if (dataset_id >= store.num_experts()) {
    throw DimensionError("oracle_best_linear: dataset id out of range");
  }
  Tensor2 x = feature_matrix(store, dataset_id, Split::train, input);
  std::vector<int> y = label_vector(store, dataset_id, Split::train);
  if (x.rows() == 0) throw ConfigError("oracle_best_linear", "no training samples");
  const auto classes = static_cast<std::size_t>(store.manifest()[dataset_id].num_classes);
  LinearFit fit = fit_linear_head(x, y, classes, options);
  Tensor2 xt = feature_matrix(store, dataset_id, Split::test, input);
  std::vector<int> yt = label_vector(store, dataset_id, Split::test);
  ParamTensor w("w", fit.head.weight), b("b", fit.head.bias);
  return topk_accuracy(affine(xt, w, b), yt, 1);
}

}  // namespace jedi
