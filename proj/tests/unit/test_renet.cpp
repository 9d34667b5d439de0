#include <cmath>

#include "doctest.h"
#include "hybridboost/brain_renet.hpp"
#include "hybridboost/dataset.hpp"
#include "hybridboost/errors.hpp"
#include "support.hpp"

using namespace hybridboost;
using namespace hybridboost::renet;

TEST_SUITE("brain-renet") {

TEST_CASE("default spatial trace and flatten length") {
  BrainReNetConfig c;
  const auto trace = c.spatial_trace();
  REQUIRE(trace.size() == 7);
  const std::size_t expected[] = {64, 32, 16, 8, 4, 2, 1};
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(trace[i].first == expected[i]);
    CHECK(trace[i].second == expected[i]);
  }
  CHECK(c.flatten_length() == 128);
}

TEST_CASE("parameter count matches the closed form") {
  BrainReNetConfig c;
  c.num_classes = 3;
  // blocks: c_out*c_in*9 + 3*c_out with c_in doubling after each block
  const std::size_t blocks = (8 * 1 * 9 + 24) + (16 * 16 * 9 + 48) + (32 * 32 * 9 + 96) +
                             (32 * 64 * 9 + 96) + (64 * 64 * 9 + 192) + (64 * 128 * 9 + 192);
  const std::size_t head = 128 * 128 + 128 + 128 * 3 + 3;
  CHECK(c.parameter_count() == blocks + head);
  CHECK(c.parameter_count() == 158163);
  CHECK(build_model(c, 1).parameter_count() == c.parameter_count());
}

TEST_CASE("config validation") {
  BrainReNetConfig c;
  c.input_height = c.input_width = 32;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  BrainReNetConfig d;
  d.conv_channels = {4, 4};
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.allow_reduced_depth = true;
  CHECK_NOTHROW(d.validate());
  BrainReNetConfig e;
  e.dropout_rate = 1.0;
  CHECK_THROWS_AS(e.validate(), ConfigError);
}

TEST_CASE("alternating pooling keeps channel counts") {
  BrainReNetConfig c;
  c.pooling = PoolingMode::alternating;
  CHECK(c.block_output_channels(0) == 8);
  CHECK(c.flatten_length() == 64);
}

TEST_CASE("build is deterministic and forward is well formed") {
  BrainReNetConfig c;
  c.num_classes = 3;
  const BrainReNetModel a = build_model(c, 77);
  const BrainReNetModel b = build_model(c, 77);
  CHECK(a == b);
  CHECK(!(a == build_model(c, 78)));

  Rng rng(5);
  Tensor batch({3, 1, 64, 64});
  for (double& v : batch.data()) v = uniform01(rng);
  const ForwardResult out = forward(a, batch);
  CHECK(out.logits.shape() == Shape{3, 3});
  CHECK(out.fc1_activations.shape() == Shape{3, 128});
  const Tensor p = nn::softmax(out.logits);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(std::abs(p[n * 3] + p[n * 3 + 1] + p[n * 3 + 2] - 1.0) <= 1e-12);
  }
  CHECK(forward(a, batch).logits == out.logits);

  for (std::size_t n = 0; n < 3; ++n) {
    Tensor single({1, 1, 64, 64});
    std::copy(batch.data().begin() + n * 4096, batch.data().begin() + (n + 1) * 4096,
              single.data().begin());
    const ForwardResult one = forward(a, single);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(std::abs(one.logits[k] - out.logits[n * 3 + k]) <= 1e-9);
    }
  }

  CHECK_THROWS_AS(forward(a, Tensor({1, 1, 32, 32})), DimensionError);
}

TEST_CASE("toy network end-to-end gradient") {
  CHECK(support::toy_network_grad_error(3) <= 1e-4);
}

TEST_CASE("training") {
  const data::Dataset ds = data::synth_dataset(data::SynthKind::classify3, 10, 64, 8);
  BrainReNetConfig c;
  c.num_classes = 3;
  TrainConfig tc;
  tc.epochs = 0;
  const BrainReNetModel m = build_model(c, 1);
  const TrainResult none = train(m, ds, {}, tc, 2);
  CHECK(none.model == m);
  CHECK(none.history.train_loss.empty());

  tc.epochs = 3;
  tc.learning_rate = 0.01;
  tc.augment = false;
  const TrainResult r = train(m, ds, {}, tc, 2);
  REQUIRE(r.history.train_loss.size() == 3);
  CHECK(r.history.train_loss.back() < r.history.train_loss.front());
  CHECK(r.history.selected_epoch == 2);
  const TrainResult again = train(m, ds, {}, tc, 2);
  CHECK(again.model == r.model);

  CHECK_THROWS_AS(train(m, data::Dataset{}, {}, tc, 2), DataError);
}

TEST_CASE("deep features equal forward fc1 activations") {
  const data::Dataset ds = data::synth_dataset(data::SynthKind::detect2, 3, 64, 4);
  const BrainReNetModel m = build_model(BrainReNetConfig{}, 9);
  const FeatureMatrix f = extract_deep_features(m, ds);
  CHECK(f.dim() == 128);
  CHECK(f.n() == ds.size());
  CHECK(f.labels == ds.labels);
  const ForwardResult out = forward(m, to_batch(ds.images));
  for (std::size_t i = 0; i < f.values.data().size(); ++i) {
    CHECK(f.values.data()[i] == out.fc1_activations[i]);
  }
  CHECK(extract_deep_features(m, ds) == f);
}

TEST_CASE("model file round trip and errors") {
  BrainReNetConfig c;
  c.num_classes = 3;
  const BrainReNetModel m = build_model(c, 5);
  const auto bytes = encode_model(m);
  CHECK(bytes[0] == 'B');
  CHECK(bytes[3] == 'R');
  const BrainReNetModel back = decode_model(bytes, "mem");
  CHECK(encode_model(back) == bytes);

  const auto dir = support::scratch_dir("renet_io");
  save_model(back, dir / "m.brnr");
  CHECK(support::read_bytes(dir / "m.brnr") == bytes);
  CHECK(encode_model(load_model(dir / "m.brnr")) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_model(bad, "mem"), FormatError);

  auto ver = bytes;
  ver[4] += 1;
  try {
    decode_model(ver, "mem");
    FAIL("expected a version error");
  } catch (const VersionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('1') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }

  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(decode_model(cut, "mem"), CorruptionError);
}

}
