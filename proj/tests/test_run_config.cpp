#include <gtest/gtest.h>

#include <random>

#include "sdan/errors.hpp"
#include "sdan/run_config.hpp"

using namespace sdan;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, EmptyTextGivesDefaults) {
  const RunConfig cfg = parse_run_config("");
  EXPECT_EQ(cfg.model, default_model_config(2));
  EXPECT_EQ(cfg.train, TrainConfig{});
  EXPECT_EQ(cfg.out_dir, "run");
}

TEST(RunConfig, ParsesValuesAndComments) {
  const RunConfig cfg = parse_run_config(
      "# toy run\n"
      "scale = 3\n"
      "channels=16   # distill follows\n"
      "\n"
      "attention_variant = lka13\n"
      "enable_sdm = false\n"
      "lr = 1e-4\n"
      "iterations = 25\n"
      "seed = 9\n"
      "data_root = /data/div2k\n");
  EXPECT_EQ(cfg.model.scale, 3);
  EXPECT_EQ(cfg.model.channels, 16);
  EXPECT_EQ(cfg.model.distill_channels, 8);
  EXPECT_EQ(cfg.model.attention_variant, AttentionVariant::Lka13);
  EXPECT_FALSE(cfg.model.enable_sdm);
  EXPECT_EQ(cfg.train.lr, 1e-4);
  EXPECT_EQ(cfg.train.iterations, 25);
  EXPECT_EQ(cfg.train.seed, 9u);
  EXPECT_EQ(cfg.data_root, "/data/div2k");
}

TEST(RunConfig, ErrorsNameKeyAndLine) {
  EXPECT_EQ(error_of("channels = 56\nchanels = 56\n"), "t.cfg:2: unknown key 'chanels'");
  EXPECT_NE(error_of("seed = 1\nseed = 2").find("more than once"), std::string::npos);
  EXPECT_NE(error_of("lr = fast").find("'lr'"), std::string::npos);
  EXPECT_NE(error_of("just words").find("t.cfg:1"), std::string::npos);
  EXPECT_NE(error_of("beta1 = 1.5").find("beta"), std::string::npos);
  EXPECT_NE(error_of("channels = 30").find("channels"), std::string::npos);
  EXPECT_NE(error_of("patch_size = 8").find("patch"), std::string::npos);
  EXPECT_NE(error_of("attention_variant = SE").find("attention"), std::string::npos);
}

TEST(RunConfig, RenderListsEveryKeyInOrder) {
  const std::string text = render_run_config(RunConfig{});
  std::size_t pos = 0;
  for (const std::string& key : run_config_keys()) {
    const std::size_t at = text.find(key + " = ", pos);
    ASSERT_NE(at, std::string::npos) << key;
    pos = at;
  }
  for (const char* key :
       {"scale", "channels", "num_blocks", "replicate_n", "star_kernel", "strip_kernel",
        "square_kernel", "dilation", "distill_channels", "attention_variant",
        "enable_sdm", "lr", "beta1", "beta2", "beta3", "eps", "weight_decay",
        "ema_decay", "iterations", "batch_size", "patch_size", "seed", "deterministic",
        "data_root", "out_dir"}) {
    EXPECT_NE(std::find(run_config_keys().begin(), run_config_keys().end(), key),
              run_config_keys().end())
        << key;
  }
}

TEST(RunConfig, RenderParseRoundTripOnRandomConfigs) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 25; ++trial) {
    RunConfig cfg;
    cfg.model.scale = 2 + trial % 3;
    cfg.model.channels = 8 * (1 + trial % 4);
    cfg.model.distill_channels = cfg.model.channels / 4;
    cfg.model.enable_mmlka = trial % 2 == 0;
    cfg.model.attention_variant = trial % 3 == 0 ? AttentionVariant::Lka13
                                                 : AttentionVariant::MmLka;
    cfg.train.lr = u(rng) * 1e-2;
    cfg.train.beta1 = u(rng);
    cfg.train.ema_decay = u(rng);
    cfg.train.seed = rng();
    cfg.train.augment_flip = trial % 4 == 1;
    cfg.data_root = "data dir " + std::to_string(trial);
    cfg.out_dir = "out/" + std::to_string(trial);
    EXPECT_EQ(parse_run_config(render_run_config(cfg)), cfg) << trial;
  }
}
