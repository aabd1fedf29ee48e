#include <doctest.h>

#include <fstream>

#include "slsnet/checkpoint.hpp"
#include "slsnet/config.hpp"
#include "slsnet/error.hpp"
#include "support.hpp"

using namespace slsnet;
using testing::TempDir;

TEST_CASE("config parsing") {
  auto cfg = parse_config(
      "# desk run\n"
      "input_size = 64\n"
      "scale_factor = 0.25   # quarter width\n"
      "lr=0.001\n"
      "\n"
      "augment = true\n"
      "loss_alpha = 0\n");
  CHECK(cfg.model.input_size == 64);
  CHECK(cfg.model.scale_factor == 0.25);
  CHECK(cfg.optimizer.lr == 0.001);
  CHECK(cfg.augment);
  CHECK(cfg.model.loss_alpha == 0);
  CHECK(cfg.batch_size == 8);

  CHECK_THROWS_AS(parse_config("no_such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("input_size 64\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("input_size = sixty\n"), ConfigError);
  // Values are range-checked by validate(), after any overrides are applied.
  CHECK_THROWS_AS(parse_config("input_size = 60\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("augment = maybe\n"), ConfigError);
  try {
    parse_config("seed = 1\nbogus = 2\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("config text round trip") {
  TrainConfig cfg;
  cfg.model.scale_factor = 0.3;
  cfg.optimizer.lr = 1.0 / 3.0;
  cfg.max_steps = 17;
  cfg.seed = 123456789012345ull;
  auto back = parse_config(to_config_text(cfg));
  CHECK(to_config_text(back) == to_config_text(cfg));
  CHECK(back.optimizer.lr == cfg.optimizer.lr);
  CHECK(back.model.scale_factor == cfg.model.scale_factor);
  CHECK(back.seed == cfg.seed);

  TempDir dir("cfg");
  std::ofstream(dir / "a.cfg") << to_config_text(cfg);
  CHECK(to_config_text(load_config(dir / "a.cfg")) == to_config_text(cfg));
  CHECK_THROWS_AS(load_config(dir / "none.cfg"), IoError);
}

TEST_CASE("checkpoint format errors") {
  TempDir dir("ckfmt");
  Parameter p("w", Tensor::full({1, 1, 2, 2}, 0.5, true));
  p.m.assign(4, 0.1);
  p.v.assign(4, 0.2);
  Buffer b{"bn", {1, 2}};
  StateRefs s{{&p}, {&b}};
  save_checkpoint(dir / "c.slsn", {7, "x = 1"}, s);
  CHECK(read_checkpoint_info(dir / "c.slsn").step == 7);

  Parameter q("w", Tensor::zeros({1, 1, 2, 2}, true));
  Buffer c{"bn", {0, 0}};
  StateRefs t{{&q}, {&c}};
  load_checkpoint(dir / "c.slsn", t);
  CHECK(q.value.data()[3] == 0.5);
  CHECK(q.m == p.m);
  CHECK(q.v == p.v);
  CHECK(c.values == b.values);

  Parameter wrong("w", Tensor::zeros({1, 1, 1, 4}, true));
  StateRefs ws{{&wrong}, {&c}};
  CHECK_THROWS_AS(load_checkpoint(dir / "c.slsn", ws), FormatError);
  Parameter renamed("v", Tensor::zeros({1, 1, 2, 2}, true));
  StateRefs rs{{&renamed}, {&c}};
  CHECK_THROWS_AS(load_checkpoint(dir / "c.slsn", rs), FormatError);

  // Truncation and corruption.
  std::ifstream in(dir / "c.slsn", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ofstream(dir / "short.slsn", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.slsn", t), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::ofstream(dir / "bad.slsn", std::ios::binary) << bad;
  CHECK_THROWS_AS(read_checkpoint_info(dir / "bad.slsn"), FormatError);
  std::string other_precision = bytes;
  other_precision[9] = sizeof(real) == 8 ? 4 : 8;
  std::ofstream(dir / "prec.slsn", std::ios::binary) << other_precision;
  CHECK_THROWS_AS(load_checkpoint(dir / "prec.slsn", t), FormatError);
  CHECK_THROWS_AS(read_checkpoint_info(dir / "absent.slsn"), IoError);
}
