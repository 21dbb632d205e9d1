#include "catch_amalgamated.hpp"

#include "spasvc/config.hpp"
#include "spasvc/error.hpp"

using namespace spasvc;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("paper preset carries the published constants", "[config]") {
  const SvcConfig c = preset_config("paper");
  REQUIRE(c.mel.sample_rate == 44100);
  REQUIRE(c.mel.hop == 512);
  REQUIRE(c.mel.n_mels == 128);
  REQUIRE(c.train.lr == 1.5e-4);
  REQUIRE(c.train.batch_size == 64);
  REQUIRE(c.train.max_steps == 40000);
  REQUIRE(c.train.effective_sched_step() == 10000);
  REQUIRE(c.train.sched_gamma == 0.5);
  REQUIRE(c.denoiser.layers == 20);
  REQUIRE(c.denoiser.channels == 512);
  REQUIRE(c.ddsp.hidden == 256);
  REQUIRE(c.diffusion_k == 100);
  REQUIRE(c.train.cycle_key_min == 6);
  REQUIRE(c.train.cycle_key_max == 18);
  REQUIRE(c.train.perturb_key_min == -5);
  REQUIRE(c.train.perturb_key_max == 5);
  REQUIRE(c.ssim.k1 == 0.01);
  REQUIRE(c.ssim.k2 == 0.03);
  REQUIRE(c.content.sample_rate == 16000);
  REQUIRE(c.content.hop == 320);
}

TEST_CASE("desk preset is small and internally consistent", "[config]") {
  const SvcConfig c = preset_config("desk");
  REQUIRE(c.train.batch_size == 8);
  REQUIRE(c.train.max_steps == 2000);
  REQUIRE(c.ddsp.hidden == 64);
  REQUIRE(c.ddsp.layers == 2);
  REQUIRE(c.denoiser.layers == 4);
  REQUIRE(c.denoiser.channels == 64);
  REQUIRE(c.denoiser.in_dim == c.mel.n_mels);
  REQUIRE(c.denoiser.cond_dim == c.ddsp.hidden);
  REQUIRE(c.ddsp.hop == c.mel.hop);
  REQUIRE(c.f0.hop == c.mel.hop);
  REQUIRE(c.vocoder.mel.n_mels == c.mel.n_mels);
  REQUIRE_NOTHROW(c.validate());
}

TEST_CASE("config text round-trips through the parser", "[config]") {
  SvcConfig c = preset_config("desk");
  c.train.lr = 3.25e-3;
  c.train.loss_kind = LossKind::Mse;
  c.train.cycle_prob = 0.25;
  c.ssim.variant = SsimVariant::Paper;
  c.train.seed = 18446744073709551615ull;
  const SvcConfig back = parse_config(to_config_text(c));
  REQUIRE(to_json(back) == to_json(c));
  REQUIRE(to_json(config_from_json(to_json(c))) == to_json(c));
}

TEST_CASE("parser overrides preset values and ignores comments", "[config]") {
  const SvcConfig c = parse_config("# desk run\npreset = desk\nlr = 0.001  # faster\n\nmax_steps=10\n");
  REQUIRE(c.preset == "desk");
  REQUIRE(c.train.lr == 0.001);
  REQUIRE(c.train.max_steps == 10);
  REQUIRE(c.train.effective_sched_step() == 2);
}

TEST_CASE("config errors name the key and line", "[config]") {
  REQUIRE_THROWS_WITH(parse_config("lr = 1\n", "a.cfg"), ContainsSubstring("missing required key 'preset'"));
  REQUIRE_THROWS_WITH(parse_config("preset = desk\nlearning_rate = 1\n", "a.cfg"),
                      ContainsSubstring("a.cfg:2: unknown key 'learning_rate'"));
  REQUIRE_THROWS_WITH(parse_config("preset = desk\nlr = fast\n", "a.cfg"), ContainsSubstring("a.cfg:2"));
  REQUIRE_THROWS_WITH(parse_config("preset = desk\nlr = 1\nlr = 2\n", "a.cfg"), ContainsSubstring("already set"));
  REQUIRE_THROWS_WITH(parse_config("preset = huge\n", "a.cfg"), ContainsSubstring("unknown preset"));
  REQUIRE_THROWS_WITH(parse_config("preset = desk\njust words\n", "a.cfg"), ContainsSubstring("a.cfg:2"));
  REQUIRE_THROWS_AS(parse_config("preset = desk\ncycle_prob = 1.5\n"), UsageError);
  REQUIRE_THROWS_AS(parse_config("preset = desk\nlr = 0\n"), UsageError);
  REQUIRE_THROWS_AS(load_config("/nonexistent/x.cfg"), UsageError);
}

TEST_CASE("every key appears in the config text", "[config]") {
  const std::string text = to_config_text(preset_config("paper"));
  for (const auto& k : config_keys()) REQUIRE_THAT(text, ContainsSubstring(k + " = "));
}
