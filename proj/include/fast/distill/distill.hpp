#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fast/codec/model.hpp"
#include "fast/nn/adam.hpp"
#include "fast/nn/ops.hpp"
#include "fast/nn/param_set.hpp"
#include "fast/priority/priority.hpp"

namespace fast::distill {

using nn::ParamSet;
using nn::Tape;
using nn::Tensor;
using nn::Var;

enum class TargetKind : std::uint32_t { Importance = 0, Robustness = 1 };
enum class Split : std::uint32_t { Train = 0, Holdout = 1 };

inline const char* to_string(TargetKind k) { return k == TargetKind::Importance ? "importance" : "robustness"; }
inline const char* to_string(Split s) { return s == Split::Train ? "train" : "holdout"; }

/// (A, target) pairs for one student. Container layout:
///   "FSTD" | u32 version=1 | u32 kind | u32 split | u32 c | u32 h | u32 w | u64 count |
///   count x (c*h*w doubles of A, then c doubles of target)
/// All integers and doubles little-endian.
struct DistillDataset {
  TargetKind kind = TargetKind::Importance;
  Split split = Split::Train;
  nn::Shape feature_shape;
  std::vector<Tensor> features;
  std::vector<std::vector<double>> targets;

  std::size_t size() const noexcept { return features.size(); }

  void add(Tensor a, std::vector<double> target) {
    if (feature_shape.empty()) feature_shape = a.shape();
    if (a.shape() != feature_shape || target.size() != feature_shape[0]) {
      throw nn::ShapeError("distill record " + nn::to_string(a.shape()) + " / " + std::to_string(target.size()) +
                           " targets does not match " + nn::to_string(feature_shape));
    }
    features.push_back(std::move(a));
    targets.push_back(std::move(target));
  }

  void save(std::ostream& os) const {
    if (feature_shape.size() != 3) throw std::invalid_argument("distill dataset has no geometry");
    os.write("FSTD", 4);
    nn::io::put<std::uint32_t>(os, 1);
    nn::io::put<std::uint32_t>(os, static_cast<std::uint32_t>(kind));
    nn::io::put<std::uint32_t>(os, static_cast<std::uint32_t>(split));
    for (auto d : feature_shape) nn::io::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    nn::io::put<std::uint64_t>(os, size());
    for (std::size_t i = 0; i < size(); ++i) {
      nn::io::put_doubles(os, features[i].data());
      nn::io::put_doubles(os, targets[i]);
    }
  }

  static DistillDataset load(std::istream& is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FSTD", 4) != 0) throw std::runtime_error("not a distillation dataset");
    if (nn::io::get<std::uint32_t>(is) != 1) throw std::runtime_error("unsupported distillation dataset version");
    DistillDataset d;
    const auto kind = nn::io::get<std::uint32_t>(is);
    const auto split = nn::io::get<std::uint32_t>(is);
    if (kind > 1 || split > 1) throw std::runtime_error("corrupt distillation dataset header");
    d.kind = static_cast<TargetKind>(kind);
    d.split = static_cast<Split>(split);
    d.feature_shape.resize(3);
    for (auto& v : d.feature_shape) v = nn::io::get<std::uint32_t>(is);
    const auto count = nn::io::get<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
      Tensor a(d.feature_shape);
      nn::io::get_doubles(is, a.data());
      std::vector<double> t(d.feature_shape[0]);
      nn::io::get_doubles(is, t);
      d.features.push_back(std::move(a));
      d.targets.push_back(std::move(t));
    }
    return d;
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    save(os);
  }

  static DistillDataset load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return load(is);
  }

  std::string bytes() const {
    std::ostringstream os;
    save(os);
    return os.str();
  }
};

struct DistillPair {
  DistillDataset importance;
  DistillDataset robustness;
};

/// Stage (i): runs the teacher algorithms on encode(s) for every image. Work
/// is spread over `threads` workers and merged in image order.
inline DistillPair build_distill_dataset(const codec::Codec& codec, const std::vector<Tensor>& images,
                                         const priority::NoiseBudget& budget, Split split,
                                         unsigned threads = 1) {
  if (images.empty()) throw std::invalid_argument("build_distill_dataset: no source images");
  const codec::CodecDecoder decoder{&codec};
  std::vector<Tensor> feats(images.size());
  std::vector<priority::TeacherPriority> teach(images.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < images.size(); i += stride) {
      feats[i] = codec.encode(images[i]);
      teach[i] = priority::teacher_priority(feats[i], images[i], decoder, budget);
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(images.size())));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  DistillPair out;
  out.importance.kind = TargetKind::Importance;
  out.robustness.kind = TargetKind::Robustness;
  out.importance.split = out.robustness.split = split;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.importance.add(feats[i], teach[i].importance.norm);
    out.robustness.add(std::move(feats[i]), std::move(teach[i].robustness.norm));
  }
  return out;
}

struct StudentConfig {
  std::size_t grid = 2;     // pooled grid side (2 at desk scale, 5 at paper scale)
  std::size_t hidden = 24;
};

/// WNet / RNet: adaptive average pooling to grid x grid per feature map,
/// flatten, dense + ReLU, dense + sigmoid to c outputs.
class Student {
 public:
  Student() = default;
  Student(nn::Shape feature_shape, StudentConfig config, ParamSet params)
      : shape_(std::move(feature_shape)), config_(config), params_(std::move(params)) {
    if (params_.size() != 4 || params_.at(0).dim(1) != shape_[0] * config_.grid * config_.grid ||
        params_.at(2).dim(0) != shape_[0]) {
      throw nn::ShapeError("student parameters do not match features " + nn::to_string(shape_));
    }
  }

  static Student init(const nn::Shape& feature_shape, StudentConfig config, std::uint64_t seed) {
    if (feature_shape.size() != 3) throw nn::ShapeError("student needs a c x h x w geometry");
    std::mt19937_64 rng(seed);
    const std::size_t c = feature_shape[0], in = c * config.grid * config.grid;
    ParamSet ps;
    ps.add("l1.w", nn::kaiming_uniform({config.hidden, in}, in, rng));
    ps.add("l1.b", Tensor({config.hidden}));
    ps.add("l2.w", nn::simple_uniform({c, config.hidden}, config.hidden, rng));
    ps.add("l2.b", Tensor({c}));
    return Student(feature_shape, config, std::move(ps));
  }

  const nn::Shape& feature_shape() const noexcept { return shape_; }
  const StudentConfig& config() const noexcept { return config_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  Var forward(const nn::BoundParams& p, const Var& a) const {
    if (a.shape() != shape_) {
      throw nn::ShapeError("student expects features " + nn::to_string(shape_) + ", got " + nn::to_string(a.shape()));
    }
    const auto& v = p.vars();
    Var x = nn::adaptive_avg_pool(a, config_.grid);
    x = nn::reshape(x, {x.size()});
    x = nn::relu(nn::add(nn::dense(v[0], x), v[1]));
    return nn::sigmoid(nn::add(nn::dense(v[2], x), v[3]));
  }

  std::vector<double> infer(const Tensor& a) const {
    Tape tape;
    nn::BoundParams p(tape, params_, false);
    return forward(p, tape.constant(a)).value().vec();
  }

  /// Stored as a ParamSet with the geometry and grid encoded in the shapes.
  void save_file(const std::string& path) const { params_.save_file(path); }

  static Student load_file(const std::string& path, const nn::Shape& feature_shape) {
    auto ps = ParamSet::load_file(path);
    const std::size_t c = feature_shape.at(0);
    if (ps.size() != 4 || ps.at(2).dim(0) != c) throw std::runtime_error(path + " is not a student for c=" + std::to_string(c));
    const auto grid = static_cast<std::size_t>(std::lround(std::sqrt(ps.at(0).dim(1) / static_cast<double>(c))));
    const std::size_t hidden = ps.at(0).dim(0);
    return Student(feature_shape, {grid, hidden}, std::move(ps));
  }

 private:
  nn::Shape shape_;
  StudentConfig config_;
  ParamSet params_;
};

struct StudentTrainConfig {
  StudentConfig model{};
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double learning_rate = 3e-3;
  std::uint64_t seed = 1;
};

struct StudentTrainResult {
  Student student;
  std::vector<double> epoch_loss;
  double holdout_mse = NAN;   // NaN when no holdout set is given
};

/// Mean squared error of the student over a dataset (per target component).
inline double dataset_mse(const Student& s, const DistillDataset& d) {
  if (d.size() == 0) return NAN;
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto out = s.infer(d.features[i]);
    for (std::size_t k = 0; k < out.size(); ++k) acc += (out[k] - d.targets[i][k]) * (out[k] - d.targets[i][k]);
  }
  return acc / static_cast<double>(d.size() * d.feature_shape[0]);
}

/// Stage (ii): plain MSE regression onto the teacher targets with Adam.
inline StudentTrainResult train_student(const DistillDataset& train, const StudentTrainConfig& cfg,
                                        const DistillDataset* holdout = nullptr,
                                        const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (train.size() == 0) throw std::invalid_argument("train_student: empty training split");
  if (holdout && holdout->size() && holdout->feature_shape != train.feature_shape) {
    throw nn::ShapeError("train_student: holdout geometry differs from training geometry");
  }
  StudentTrainResult r;
  r.student = Student::init(train.feature_shape, cfg.model, cfg.seed);
  auto& params = r.student.params();
  nn::Adam opt(params, {.learning_rate = cfg.learning_rate});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      auto grads = nn::zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        Tape tape;
        nn::BoundParams p(tape, params, true);
        const Var out = r.student.forward(p, tape.constant(train.features[order[b]]));
        const Var loss = nn::mse(out, tape.constant(Tensor({train.feature_shape[0]}, train.targets[order[b]])));
        const double l = loss.value().item();
        if (!std::isfinite(l)) {
          throw std::runtime_error("train_student: loss diverged at epoch " + std::to_string(epoch + 1));
        }
        total += l;
        tape.backward(loss);
        nn::accumulate_grads(tape, p, grads);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) g *= inv;
      opt.step(params, grads);
    }
    r.epoch_loss.push_back(total / static_cast<double>(train.size()));
    if (on_epoch) on_epoch(epoch + 1, r.epoch_loss.back());
  }
  if (holdout) r.holdout_mse = dataset_mse(r.student, *holdout);
  return r;
}

/// Stage (iii): priority from the students alone. Needs neither the source
/// image nor the decoder.
inline std::vector<double> student_infer(const Tensor& a, const Student& wnet, const Student& rnet,
                                         const priority::PriorityWeights& weights = {}) {
  return priority::combine_priority(wnet.infer(a), rnet.infer(a), weights);
}

/// Ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j);
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = r;
    i = j + 1;
  }
  return rank;
}

/// Spearman rank correlation (Pearson correlation of average ranks); 0 when
/// either side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length vectors");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

/// Mean per-record Spearman correlation between student outputs and targets.
inline double mean_spearman(const Student& s, const DistillDataset& d) {
  if (d.size() == 0) return NAN;
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) acc += spearman(s.infer(d.features[i]), d.targets[i]);
  return acc / static_cast<double>(d.size());
}

}  // namespace fast::distill
