#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "fast/codec/model.hpp"
#include "fast/distill/distill.hpp"
#include "fast/harness/dataset.hpp"
#include "support/gradcheck.hpp"

using namespace fast;
using namespace fast::distill;
using fast::testing::random_tensor;

namespace {

const codec::Geometry kDesk = codec::Geometry::desk();

const DistillPair& small_pair() {
  static const DistillPair pair = [] {
    const auto codec = codec::Codec::init(kDesk, 3);
    return build_distill_dataset(codec, harness::gen_synthetic_dataset(4, 16, 5), {}, Split::Train);
  }();
  return pair;
}

}  // namespace

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman(std::vector{1.0, 2.0, 3.0}, std::vector{10.0, 20.0, 30.0}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(std::vector{1.0, 2.0, 3.0}, std::vector{3.0, 2.0, 1.0}), -1.0);
  EXPECT_DOUBLE_EQ(spearman(std::vector{1.0, 2.0, 3.0}, std::vector{1.0, 8.0, 27.0}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(std::vector{1.0, 1.0, 1.0}, std::vector{1.0, 2.0, 3.0}), 0.0);
  // 1 - 6*sum(d^2)/(n(n^2-1)) with ranks [1,2,3,4] vs [2,1,4,3]
  EXPECT_NEAR(spearman(std::vector{1.0, 2.0, 3.0, 4.0}, std::vector{2.0, 1.0, 4.0, 3.0}), 1.0 - 6.0 * 4.0 / 60.0, 1e-12);
  EXPECT_EQ(average_ranks(std::vector{5.0, 1.0, 5.0}), (std::vector<double>{1.5, 0.0, 1.5}));
}

TEST(DistillDataset, RecordsAndTargetRange) {
  const auto& p = small_pair();
  ASSERT_EQ(p.importance.size(), 4u);
  ASSERT_EQ(p.robustness.size(), 4u);
  EXPECT_EQ(p.importance.kind, TargetKind::Importance);
  EXPECT_EQ(p.robustness.kind, TargetKind::Robustness);
  EXPECT_EQ(p.importance.feature_shape, kDesk.feature_shape());
  for (const auto* d : {&p.importance, &p.robustness}) {
    for (const auto& t : d->targets) {
      ASSERT_EQ(t.size(), kDesk.feature_channels);
      for (double v : t) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.importance.features[i].vec(), p.robustness.features[i].vec());
}

TEST(DistillDataset, RebuildIsByteIdenticalAndThreadIndependent) {
  const auto codec = codec::Codec::init(kDesk, 3);
  const auto images = harness::gen_synthetic_dataset(4, 16, 5);
  const auto again = build_distill_dataset(codec, images, {}, Split::Train, 3);
  EXPECT_EQ(again.importance.bytes(), small_pair().importance.bytes());
  EXPECT_EQ(again.robustness.bytes(), small_pair().robustness.bytes());
}

TEST(DistillDataset, RoundTrip) {
  const auto& d = small_pair().robustness;
  std::stringstream ss;
  d.save(ss);
  const auto back = DistillDataset::load(ss);
  EXPECT_EQ(back.kind, d.kind);
  EXPECT_EQ(back.split, d.split);
  EXPECT_EQ(back.bytes(), d.bytes());
  std::stringstream bad("FSTX");
  EXPECT_THROW(DistillDataset::load(bad), std::runtime_error);
}

TEST(DistillDataset, RejectsMismatchedRecord) {
  DistillDataset d;
  d.feature_shape = kDesk.feature_shape();
  EXPECT_THROW(d.add(Tensor({24, 4, 4}), std::vector<double>(23, 0.5)), nn::ShapeError);
  EXPECT_THROW(d.add(Tensor({24, 2, 2}), std::vector<double>(24, 0.5)), nn::ShapeError);
}

TEST(Student, MemorizesSingleRecord) {
  std::mt19937_64 rng(4);
  DistillDataset d;
  d.feature_shape = kDesk.feature_shape();
  std::vector<double> target(24);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (auto& t : target) t = u(rng);
  d.add(random_tensor(kDesk.feature_shape(), rng), target);
  StudentTrainConfig cfg;
  cfg.epochs = 400;
  cfg.learning_rate = 1e-2;
  const auto res = train_student(d, cfg);
  EXPECT_LT(dataset_mse(res.student, d), 1e-4);
  EXPECT_EQ(res.epoch_loss.size(), 400u);
  EXPECT_TRUE(std::isnan(res.holdout_mse));
}

TEST(Student, TrainingIsDeterministicAndReportsHoldout) {
  const auto& p = small_pair();
  StudentTrainConfig cfg;
  cfg.epochs = 5;
  const auto a = train_student(p.importance, cfg, &p.importance);
  const auto b = train_student(p.importance, cfg, &p.importance);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_EQ(a.student.params().at(0).vec(), b.student.params().at(0).vec());
  EXPECT_NEAR(a.holdout_mse, dataset_mse(a.student, p.importance), 1e-15);
}

TEST(Student, InferShapeRangeAndPriorityCombination) {
  const auto wnet = Student::init(kDesk.feature_shape(), {}, 1);
  const auto rnet = Student::init(kDesk.feature_shape(), {}, 2);
  std::mt19937_64 rng(8);
  const auto a = random_tensor(kDesk.feature_shape(), rng);
  const auto xi = student_infer(a, wnet, rnet, {0.5, 0.5});
  ASSERT_EQ(xi.size(), 24u);
  const auto w = wnet.infer(a);
  const auto r = rnet.infer(a);
  for (std::size_t k = 0; k < 24; ++k) {
    EXPECT_GT(w[k], 0.0);
    EXPECT_LT(w[k], 1.0);
    EXPECT_NEAR(xi[k], 0.5 * w[k] + 0.5 * (1.0 - r[k]), 1e-15);
  }
  EXPECT_EQ(student_infer(a, wnet, rnet, {0.5, 0.5}), xi);
}

TEST(Student, RejectsGeometryMismatch) {
  const auto s = Student::init(kDesk.feature_shape(), {}, 1);
  EXPECT_THROW(s.infer(Tensor({24, 2, 2})), nn::ShapeError);
  EXPECT_THROW(s.infer(Tensor({12, 4, 4})), nn::ShapeError);
  EXPECT_THROW(Student::init(kDesk.feature_shape(), {5, 24}, 1).infer(Tensor({24, 4, 4})), nn::ShapeError);
}

TEST(Student, PaperScaleGrid) {
  const auto s = Student::init({256, 8, 8}, {5, 24}, 1);
  EXPECT_EQ(s.params().at(0).shape(), (nn::Shape{24, 256 * 25}));
  EXPECT_EQ(s.infer(Tensor({256, 8, 8})).size(), 256u);
}

TEST(Student, SaveLoad) {
  const auto s = Student::init(kDesk.feature_shape(), {1, 7}, 6);
  const std::string path = ::testing::TempDir() + "student.bin";
  s.save_file(path);
  const auto back = Student::load_file(path, kDesk.feature_shape());
  EXPECT_EQ(back.config().grid, 1u);
  EXPECT_EQ(back.config().hidden, 7u);
  std::mt19937_64 rng(1);
  const auto a = random_tensor(kDesk.feature_shape(), rng);
  EXPECT_EQ(back.infer(a), s.infer(a));
  EXPECT_THROW(Student::load_file(path, {12, 4, 4}), std::runtime_error);
}

TEST(Student, InferenceIsFasterThanTeacher) {
  const auto codec = codec::Codec::init(kDesk, 3);
  const auto img = harness::gen_synthetic_dataset(1, 16, 9)[0];
  const auto a = codec.encode(img);
  const auto wnet = Student::init(kDesk.feature_shape(), {}, 1);
  const auto rnet = Student::init(kDesk.feature_shape(), {}, 2);
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  const auto teacher = priority::teacher_priority(a, img, codec::CodecDecoder{&codec});
  const double t_teacher = std::chrono::duration<double>(clock::now() - t0).count();
  t0 = clock::now();
  for (int i = 0; i < 10; ++i) student_infer(a, wnet, rnet, {});
  const double t_student = std::chrono::duration<double>(clock::now() - t0).count() / 10.0;
  EXPECT_EQ(teacher.xi.size(), 24u);
  EXPECT_GT(t_teacher / t_student, 10.0);
}
