#include <cstring>
#include <fstream>
#include <iterator>

#include "binio.hpp"
#include "jedi/error.hpp"
#include "jedi/trainer.hpp"

namespace jedi {

namespace {

using binio::Reader;
using binio::Writer;

void put_string(Writer& w, const std::string& s) {
  w.u32(static_cast<std::uint32_t>(s.size()));
  w.bytes(s);
}

std::string get_string(Reader& r) { return r.bytes(r.u32()); }

void put_tensor(Writer& w, const Tensor2& t) {
  w.u32(static_cast<std::uint32_t>(t.rows()));
  w.u32(static_cast<std::uint32_t>(t.cols()));
  for (double v : t.data()) w.f64(v);
}

Tensor2 get_tensor(Reader& r) {
  const std::size_t rows = r.u32(), cols = r.u32();
  if (rows * cols * 8 > r.remaining()) {
    throw Error("checkpoint tensor of " + std::to_string(rows) + "x" + std::to_string(cols) +
                " exceeds the file");
  }
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = r.f64();
  return t;
}

void put_param(Writer& w, const ParamTensor& p) {
  put_string(w, p.name);
  put_tensor(w, p.value);
  put_tensor(w, p.adam_m);
  put_tensor(w, p.adam_v);
  w.u64(p.step_count);
}

ParamTensor get_param(Reader& r) {
  ParamTensor p;
  p.name = get_string(r);
  p.value = get_tensor(r);
  p.adam_m = get_tensor(r);
  p.adam_v = get_tensor(r);
  p.step_count = r.u64();
  p.grad = Tensor2(p.value.rows(), p.value.cols());
  return p;
}

void put_sizes(Writer& w, const std::vector<std::size_t>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (std::size_t x : v) w.u64(x);
}

std::vector<std::size_t> get_sizes(Reader& r) {
  std::vector<std::size_t> v(r.u32());
  for (std::size_t& x : v) x = r.u64();
  return v;
}

void put_doubles(Writer& w, const std::vector<double>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.f64(x);
}

std::vector<double> get_doubles(Reader& r) {
  std::vector<double> v(r.u32());
  for (double& x : v) x = r.f64();
  return v;
}

void put_snapshot(Writer& w, const MetricsSnapshot& s) {
  w.i32(s.epoch);
  w.u64(s.config_hash);
  w.u32(static_cast<std::uint32_t>(s.values.size()));
  for (const auto& [key, v] : s.values) {
    put_string(w, key.model);
    w.u64(key.dataset);
    put_string(w, key.split);
    w.f64(v.acc1);
    w.f64(v.acc5);
    w.f64(v.map);
    w.u64(v.count);
  }
  put_doubles(w, s.student_cls);
  put_doubles(w, s.teacher_cls);
  put_doubles(w, s.kd);
  w.f64(s.loss);
  w.u64(s.skipped_samples);
}

MetricsSnapshot get_snapshot(Reader& r) {
  MetricsSnapshot s;
  s.epoch = r.i32();
  s.config_hash = r.u64();
  const std::size_t count = r.u32();
  for (std::size_t i = 0; i < count; ++i) {
    MetricKey key;
    key.model = get_string(r);
    key.dataset = r.u64();
    key.split = get_string(r);
    MetricValues v;
    v.acc1 = r.f64();
    v.acc5 = r.f64();
    v.map = r.f64();
    v.count = r.u64();
    s.values[key] = v;
  }
  s.student_cls = get_doubles(r);
  s.teacher_cls = get_doubles(r);
  s.kd = get_doubles(r);
  s.loss = r.f64();
  s.skipped_samples = r.u64();
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u16(kCheckpointVersion);
  w.u64(ckpt.next_epoch);
  w.u64(ckpt.seed);
  w.u64(ckpt.config_hash);

  const ModelSet& m = ckpt.models;
  w.u8(static_cast<std::uint8_t>(m.mode));
  put_sizes(w, m.segment_widths);
  put_sizes(w, m.class_counts);
  w.u32(static_cast<std::uint32_t>(m.students.size()));
  for (const StudentModel& s : m.students) {
    w.u64(s.dataset_id);
    w.f64(s.adjustment.keep_probability);
    for (const ParamTensor* p : {&s.adjustment.down_w, &s.adjustment.down_b, &s.adjustment.up_w,
                                 &s.adjustment.up_b, &s.head_w, &s.head_b}) {
      put_param(w, *p);
    }
  }
  w.u32(static_cast<std::uint32_t>(m.teachers.size()));
  for (const TeacherEnsemble& t : m.teachers) {
    w.u64(t.dataset_id);
    w.f64(t.dropout_rate);
    put_param(w, t.meta_w);
    put_param(w, t.meta_b);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.expert_heads.size()));
  for (const ExpertHead& h : ckpt.expert_heads) {
    put_tensor(w, h.weight);
    put_tensor(w, h.bias);
  }
  put_snapshot(w, ckpt.initial);
  w.u32(static_cast<std::uint32_t>(ckpt.history.size()));
  for (const MetricsSnapshot& s : ckpt.history) put_snapshot(w, s);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError(StoreError::Kind::io, tmp, std::nullopt, "cannot open for writing");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw StoreError(StoreError::Kind::io, tmp, std::nullopt, "write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError(StoreError::Kind::io, path, std::nullopt, "cannot open checkpoint");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);
  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw StoreError(StoreError::Kind::magic, path, std::nullopt, "expected \"JCKP\"");
  }
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw StoreError(StoreError::Kind::version, path, std::nullopt,
                     "checkpoint version " + std::to_string(version) + ", reader supports " +
                         std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  ck.next_epoch = r.u64();
  ck.seed = r.u64();
  ck.config_hash = r.u64();

  ModelSet& m = ck.models;
  const std::uint8_t mode = r.u8();
  if (mode > static_cast<std::uint8_t>(EnsembleInput::adjusted_plus_predictions)) {
    throw StoreError(StoreError::Kind::invariant, path, std::nullopt, "unknown ensemble mode");
  }
  m.mode = static_cast<EnsembleInput>(mode);
  m.segment_widths = get_sizes(r);
  m.class_counts = get_sizes(r);
  m.students.resize(r.u32());
  for (StudentModel& s : m.students) {
    s.dataset_id = r.u64();
    s.adjustment.keep_probability = r.f64();
    for (ParamTensor* p : {&s.adjustment.down_w, &s.adjustment.down_b, &s.adjustment.up_w,
                           &s.adjustment.up_b, &s.head_w, &s.head_b}) {
      *p = get_param(r);
    }
  }
  m.teachers.resize(r.u32());
  for (TeacherEnsemble& t : m.teachers) {
    t.dataset_id = r.u64();
    t.dropout_rate = r.f64();
    t.meta_w = get_param(r);
    t.meta_b = get_param(r);
  }
  if (m.students.size() != m.segment_widths.size() || m.teachers.size() != m.students.size()) {
    throw StoreError(StoreError::Kind::invariant, path, std::nullopt, "model counts disagree");
  }
  ck.expert_heads.resize(r.u32());
  for (ExpertHead& h : ck.expert_heads) {
    h.weight = get_tensor(r);
    h.bias = get_tensor(r);
  }
  ck.initial = get_snapshot(r);
  ck.history.resize(r.u32());
  for (MetricsSnapshot& s : ck.history) s = get_snapshot(r);
  if (!r.at_end()) {
    throw StoreError(StoreError::Kind::invariant, path, std::nullopt,
                     std::to_string(r.remaining()) + " trailing bytes");
  }
  return ck;
}

}  // namespace jedi
