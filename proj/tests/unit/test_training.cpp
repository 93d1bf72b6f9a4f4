#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "schn/checkpoint.hpp"
#include "schn/errors.hpp"
#include "schn/ops.hpp"
#include "schn/training.hpp"

using namespace schn;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.model = {6, 1, 2, 2, 0.2};
  c.degradation = DegradationSpec::for_scale(2);
  c.data.synthetic_count = 6;
  c.data.synthetic_size = 16;
  c.batch_size = 4;
  c.lr_initial = 1e-3;
  c.max_epochs = 4;
  c.seed = 3;
  return c;
}

std::vector<double> losses(Trainer& t, int steps) {
  std::vector<double> out;
  for (int i = 0; i < steps; ++i) out.push_back(t.step().total);
  return out;
}

}  // namespace

TEST(MultiHeadLoss, SingleHeadIgnoresLambda) {
  const auto target = schn::testing::random_tensor({1, 3, 4, 4}, 1);
  const auto out = schn::testing::random_tensor({1, 3, 4, 4}, 2);
  const auto r = multi_head_loss<double>({out}, target, 0.05);
  EXPECT_DOUBLE_EQ(r.total.item(), l1_loss(out, target).item());
  ASSERT_EQ(r.per_head.size(), 1u);
}

TEST(MultiHeadLoss, PerfectOutputsGiveZero) {
  const auto target = schn::testing::random_tensor({1, 3, 4, 4}, 3);
  EXPECT_EQ(multi_head_loss<double>({target, target, target}, target, 0.05).total.item(), 0.0);
}

TEST(MultiHeadLoss, EightEqualHeadsWeighOneThirtyFive) {
  const auto target = Tensor<double>::zeros({1, 3, 4, 4});
  std::vector<Tensor<double>> heads(8, Tensor<double>::full({1, 3, 4, 4}, 0.25));
  EXPECT_NEAR(multi_head_loss<double>(heads, target, 0.05).total.item(), 1.35 * 0.25, 1e-12);
}

TEST(MultiHeadLoss, ZeroLambdaIsLastHeadExactly) {
  const auto target = schn::testing::random_tensor({1, 3, 4, 4}, 4);
  std::vector<Tensor<double>> heads;
  for (std::uint64_t s = 0; s < 4; ++s) heads.push_back(schn::testing::random_tensor({1, 3, 4, 4}, 10 + s));
  EXPECT_EQ(multi_head_loss<double>(heads, target, 0.0).total.item(), l1_loss(heads.back(), target).item());
  EXPECT_THROW(multi_head_loss<double>({}, target, 0.05), ConfigError);
}

TEST(LrSchedule, HalvesEveryPeriod) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_schedule(0, c), 5e-5);
  EXPECT_DOUBLE_EQ(lr_schedule(9, c), 5e-5);
  EXPECT_DOUBLE_EQ(lr_schedule(10, c), 2.5e-5);
  EXPECT_DOUBLE_EQ(lr_schedule(59, c), 1.5625e-6);
  EXPECT_THROW(lr_schedule(-1, c), ConfigError);
  int halvings = 0;
  for (int e = 1; e < c.max_epochs; ++e) halvings += lr_schedule(e, c) < lr_schedule(e - 1, c);
  EXPECT_EQ(halvings, c.max_epochs / 10 - (c.max_epochs % 10 == 0 ? 1 : 0));
}

TEST(TrainConfig, ValidationAndJsonRoundTrip) {
  auto c = tiny_config();
  const nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  auto bad = j;
  bad["lambda"] = -0.5;
  EXPECT_THROW(bad.get<TrainConfig>(), ConfigError);
  bad = j;
  bad["lr_initial"] = 0.0;
  EXPECT_THROW(bad.get<TrainConfig>(), ConfigError);
  bad = j;
  bad["variant"] = "XY";
  EXPECT_THROW(bad.get<TrainConfig>(), ConfigError);
}

TEST(EpochOrder, IsAPermutationThatChangesPerEpoch) {
  const auto a = epoch_order(1, 0, 20);
  const auto b = epoch_order(1, 1, 20);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, epoch_order(1, 0, 20));
}

TEST(Trainer, IdenticalSeedsGiveIdenticalLossSequences) {
  const auto cfg = tiny_config();
  const auto patches = load_training_patches(cfg.data);
  Trainer a(cfg, patches), b(cfg, patches);
  EXPECT_EQ(losses(a, 5), losses(b, 5));
}

TEST(Trainer, EpochAccounting) {
  const auto cfg = tiny_config();
  Trainer t(cfg, load_training_patches(cfg.data));
  EXPECT_EQ(t.steps_per_epoch(), 2);
  const auto r1 = t.step();
  EXPECT_EQ(r1.batch.size(), 4u);
  const auto r2 = t.step();
  EXPECT_EQ(r2.batch.size(), 2u);
  EXPECT_EQ(t.state().epoch, 1);
  std::vector<std::size_t> seen;
  for (const auto& b : {r1, r2}) {
    for (const auto& item : b.batch) seen.push_back(item.patch_index);
  }
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  while (!t.finished()) t.step();
  EXPECT_EQ(t.state().global_step, 8);
}

TEST(Trainer, OffsetBranchReceivesGradientAfterFirstStep) {
  const auto cfg = tiny_config();
  Trainer t(cfg, load_training_patches(cfg.data));
  t.step();
  double norm = 0.0;
  for (const auto& br : t.model().modules[0].branches) {
    for (float g : br.conv2.weight.grad()) norm += g * g;
  }
  EXPECT_GT(norm, 0.0);
}

TEST(Trainer, VariantsAgreeWithoutNoise) {
  auto nf = tiny_config();
  nf.degradation.noise_probability = 0.0;
  auto an = nf;
  an.variant = Variant::kAN;
  const auto patches = load_training_patches(nf.data);
  Trainer a(nf, patches), b(an, patches);
  EXPECT_EQ(losses(a, 3), losses(b, 3));
}

TEST(Trainer, SplitRunMatchesUninterruptedRun) {
  const auto cfg = tiny_config();
  const auto patches = load_training_patches(cfg.data);
  Trainer whole(cfg, patches);
  losses(whole, 5);
  Trainer first(cfg, patches);
  losses(first, 3);
  auto second = Trainer::restore(decode_checkpoint(encode_checkpoint(first.checkpoint())), patches);
  losses(second, 2);
  EXPECT_EQ(encode_checkpoint(whole.checkpoint()), encode_checkpoint(second.checkpoint()));
}

TEST(Trainer, RestoreRejectsPlainModelCheckpoint) {
  const auto contents = model_contents(SchnModel<float>::initialized(tiny_config().model, 1));
  EXPECT_THROW(Trainer::restore(contents, {}), FormatError);
}

TEST(Trainer, NonFiniteLossCarriesBatchManifest) {
  auto cfg = tiny_config();
  const auto patches = load_training_patches(cfg.data);
  Trainer t(cfg, patches);
  const_cast<SchnModel<float>&>(t.model()).entry.weight.mutable_data()[0] = std::nanf("");
  try {
    t.step();
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_TRUE(e.batch().contains("items"));
    EXPECT_EQ(e.batch()["items"].size(), 4u);
  }
}

TEST(TrainingPatches, DirectoryWithoutImagesIsAnError) {
  DataSource d;
  d.dir = (std::filesystem::temp_directory_path() / "schn_empty_patch_dir").string();
  std::filesystem::create_directories(d.dir);
  EXPECT_THROW(load_training_patches(d), ConfigError);
  std::filesystem::remove_all(d.dir);
}
