#include <cfloat>
#include <cmath>
#include <numeric>

#include "bwn/binarization.hpp"
#include "bwn/network.hpp"
#include "bwn/ops.hpp"
#include "bwn/oracles.hpp"
#include "bwn/synth.hpp"
#include "bwn/training.hpp"
#include "helpers.hpp"

using namespace bwn;
using bwn::test::max_abs_diff;
using bwn::test::random_tensor;

namespace {

// Two classes told apart by the sign of the first pixel.
Dataset toy_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.inputs = Tensor({n, 1, 2, 2});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = i % 2;
    const float sign = d.labels[i] ? 1.0f : -1.0f;
    d.inputs[i * 4] = sign * static_cast<float>(1.0 + rng.uniform());
    for (std::size_t k = 1; k < 4; ++k) d.inputs[i * 4 + k] = static_cast<float>(0.1 * rng.normal());
  }
  return d;
}

NetworkSpec toy_spec() {
  NetworkSpec spec;
  spec.input_shape = {1, 2, 2};
  spec.embedding_dim = 8;
  spec.num_classes = 2;
  spec.layers = {LayerSpec::binary_conv2d(2, 1), LayerSpec::flatten()};
  return spec;
}

SyntheticDataset small_speakers() {
  SyntheticSpeakerConfig cfg;
  cfg.num_speakers = 4;
  cfg.utterances_per_speaker = 10;
  cfg.feature_shape = {1, 12, 12};
  cfg.sigma_within = 0.1;
  cfg.smoothing = 1;
  cfg.seed = 21;
  return generate_dataset(cfg);
}

NetworkSpec small_resnet(std::size_t classes, Activation act = Activation::relu) {
  MicroResNetOptions opts;
  opts.channels = {4, 8};
  opts.embedding_dim = 16;
  opts.input_shape = {1, 12, 12};
  opts.num_classes = classes;
  opts.activation = act;
  return build_micro_resnet(opts);
}

}  // namespace

TEST_CASE("cross_entropy_loss") {
  const Tensor uniform({2, 5}, 0.3f);
  const std::vector<std::size_t> labels{1, 4};
  const LossResult u = cross_entropy_loss(uniform, labels);
  CHECK(u.loss == doctest::Approx(std::log(5.0)).epsilon(1e-6));

  const Tensor huge({1, 3}, std::vector<float>{0.0f, 80.0f, 0.0f});
  const std::vector<std::size_t> one{1};
  CHECK(cross_entropy_loss(huge, one).loss <= 1e-12);

  Rng rng(1);
  const Tensor logits = random_tensor(rng, {4, 3});
  const std::vector<std::size_t> l4{0, 2, 1, 2};
  const LossResult r = cross_entropy_loss(logits, l4);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Tensor probe = logits;
    const double numeric = oracle::central_difference(
        [&](double x) {
          probe[i] = static_cast<float>(x);
          return cross_entropy_loss(probe, l4).loss;
        },
        logits[i], 1e-3);
    CHECK(std::fabs(numeric - r.grad_logits[i]) <= 1e-4);
  }
  const std::vector<std::size_t> bad{0, 3, 1, 2};
  CHECK(test::error_code_of([&] { (void)cross_entropy_loss(logits, bad); }) == Errc::out_of_range);
}

TEST_CASE("ste_gradient") {
  const Tensor g = ste_gradient(Tensor({2}, 1.0f), Tensor({2}, std::vector<float>{0.5f, -2.0f}));
  CHECK(g.values() == std::vector<float>{1.0f, 0.0f});
  Rng rng(2);
  const Tensor up = random_tensor(rng, {10});
  CHECK(ste_gradient(up, Tensor({10}, 0.0f)) == up);
  const Tensor clipped = ste_gradient(up, Tensor({10}, 1.5f));
  for (float v : clipped.values()) CHECK(v == 0.0f);
  CHECK(ste_gradient(up, Tensor({10}, 1.5f), 2.0) == up);
}

TEST_CASE("backward_binary_layer constructed cases") {
  const LayerSpec conv = LayerSpec::binary_conv2d(1, 1);
  const Tensor input({1, 1, 2, 2}, std::vector<float>{1.0f, -2.0f, 0.5f, 3.0f});
  const Tensor up({1, 1, 2, 2}, std::vector<float>{0.25f, 1.0f, -1.0f, 0.5f});
  const double raw = 0.25 - 2.0 - 0.5 + 1.5;

  const BinaryLayerGrads inside = backward_binary_layer(conv, Tensor({1, 1, 1, 1}, 0.5f), &input, up);
  CHECK(inside.raw_weights[0] == doctest::Approx(raw));
  CHECK(inside.shadow[0] == doctest::Approx(raw * 1.5));

  const BinaryLayerGrads outside = backward_binary_layer(conv, Tensor({1, 1, 1, 1}, -1.5f), &input, up);
  CHECK(outside.shadow[0] == outside.raw_weights[0]);  // 1/n with n = 1

  const BinaryLayerGrads pass = backward_binary_layer(conv, Tensor({1, 1, 1, 1}, 0.5f), &input, up, 1.0,
                                                      GradientRule::pass_through);
  CHECK(pass.shadow[0] == pass.raw_weights[0]);
  const BinaryLayerGrads pass_clipped = backward_binary_layer(
      conv, Tensor({1, 1, 1, 1}, 1.5f), &input, up, 1.0, GradientRule::pass_through);
  CHECK(pass_clipped.shadow[0] == 0.0f);

  Rng rng(3);
  const Tensor shadow = random_tensor(rng, {3, 2, 3, 3}, 0.6);
  const Tensor x = random_tensor(rng, {2, 2, 5, 5});
  const Tensor g = random_tensor(rng, {2, 3, 5, 5});
  const LayerSpec conv3 = LayerSpec::binary_conv2d(3, 3, 1, 1);
  const BinaryLayerGrads full = backward_binary_layer(conv3, shadow, &x, g);
  const Tensor w_tilde = expand(binarize_bank(shadow));
  CHECK(max_abs_diff(full.input, conv2d_backward_input(g, w_tilde, x.shape(), 1, 1)) <= 1e-5);
  CHECK(max_abs_diff(full.raw_weights, conv2d_backward_weights(g, x, shadow.shape(), 1, 1)) <= 1e-4);

  CHECK(test::error_code_of([&] { (void)backward_binary_layer(conv3, shadow, nullptr, g); }) ==
        Errc::missing_cache);
  const Tensor empty;
  CHECK(test::error_code_of([&] { (void)backward_binary_layer(conv3, shadow, &empty, g); }) ==
        Errc::missing_cache);
}

TEST_CASE("sgd_momentum_step") {
  TrainState s;
  s.weights = {Tensor({1}, 1.0f)};
  s.momentum = {Tensor({1})};
  s.learning_rate = 0.1;
  const std::vector<Tensor> g{Tensor({1}, 1.0f)};
  sgd_momentum_step(s, g, 0.0);
  CHECK(s.weights[0][0] == doctest::Approx(0.9));
  CHECK(s.step == 1);

  TrainState z = s;
  sgd_momentum_step(z, std::vector<Tensor>{Tensor({1})}, 0.0);
  CHECK(z.weights == s.weights);
  CHECK(z.step == 2);

  TrainState m;
  m.weights = {Tensor({1}, 1.0f)};
  m.momentum = {Tensor({1})};
  m.learning_rate = 0.1;
  sgd_momentum_step(m, g, 0.95);
  sgd_momentum_step(m, g, 0.95);
  CHECK(std::fabs(m.weights[0][0] - (1.0 - 0.1 - 0.1 * 1.95)) <= 4 * FLT_EPSILON);
  CHECK(m.momentum[0][0] == doctest::Approx(1.95));

  CHECK(test::error_code_of([&] { sgd_momentum_step(m, std::vector<Tensor>{Tensor({2})}, 0.9); }) ==
        Errc::shape_mismatch);
}

TEST_CASE("lr_schedule") {
  CHECK(lr_schedule(0, 0.01) == 0.01);
  CHECK(lr_schedule(9, 0.01) == 0.01);
  CHECK(lr_schedule(10, 0.01) == 0.01 * 0.1);
  CHECK(std::fabs(lr_schedule(25, 0.01) - 0.0001) <= 1e-18);
  CHECK(lr_schedule(4, 1.0, 0.5, 2) == 0.25);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lr0 = 0.0;
  CHECK(test::error_code_of([&] { c.validate(); }) == Errc::config);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK(test::error_code_of([&] { c.validate(); }) == Errc::config);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK(test::error_code_of([&] { c.validate(); }) == Errc::config);
}

TEST_CASE("train_step runs the phases in order with a full-precision forward") {
  const SyntheticDataset ds = small_speakers();
  const Dataset train = ds.utterances.training_set();
  const NetworkSpec spec = small_resnet(4);
  TrainState state = make_train_state(init_model(spec, 1), TrainConfig{}, 1);
  StepTrace trace;
  const std::vector<std::size_t> labels(train.labels.begin(), train.labels.begin() + 4);
  Tensor batch({4, 1, 12, 12});
  std::copy_n(train.inputs.data().begin(), batch.size(), batch.data().begin());
  (void)train_step(state, spec, batch, labels, TrainConfig{}, &trace);
  CHECK(trace.phases == std::vector<std::string>{"forward", "loss", "binarize", "backward", "update"});
  CHECK(trace.forward_ops.scale_multiplies == 0);
  CHECK(trace.forward_ops.inner_multiplies > 0);
}

TEST_CASE("zero learning rate leaves the shadows bit-identical") {
  const Dataset d = toy_dataset(4, 5);
  const NetworkSpec spec = toy_spec();
  TrainState state = make_train_state(init_model(spec, 2), TrainConfig{}, 2);
  state.learning_rate = 0.0;
  const std::vector<Tensor> before = state.weights;
  (void)train_step(state, spec, d.inputs, d.labels, TrainConfig{});
  CHECK(state.weights == before);
}

TEST_CASE("single-sample dataset is fitted") {
  const Dataset d = toy_dataset(1, 6);
  const NetworkSpec spec = toy_spec();
  TrainConfig cfg;
  cfg.batch_size = 1;
  TrainState state = make_train_state(init_model(spec, 3), cfg, 3);
  EpochMetrics m;
  for (int e = 0; e < 50; ++e) m = train_epoch(state, spec, d, cfg);
  CHECK(m.epoch == 49);
  CHECK(m.accuracy == 1.0);
  const Model trained = trained_model(spec, state);
  CHECK(classification_accuracy(forward_network(trained, d.inputs, ForwardMode::train_fullprec).logits,
                                d.labels) == 1.0);
}

TEST_CASE("linearly separable toy reaches full accuracy") {
  const Dataset d = toy_dataset(16, 7);
  const NetworkSpec spec = toy_spec();
  TrainConfig cfg;
  cfg.batch_size = 4;
  TrainState state = make_train_state(init_model(spec, 4), cfg, 4);
  EpochMetrics m;
  for (int e = 0; e < 50; ++e) m = train_epoch(state, spec, d, cfg);
  CHECK(m.accuracy == 1.0);
}

TEST_CASE("training on synthetic speakers lowers the loss and is deterministic") {
  const SyntheticDataset ds = small_speakers();
  const Dataset train = ds.utterances.training_set();
  const NetworkSpec spec = small_resnet(4, Activation::prelu);
  TrainConfig cfg;
  cfg.batch_size = 8;

  auto run = [&] {
    TrainState state = make_train_state(init_model(spec, 9), cfg, 9);
    std::vector<double> losses;
    for (int e = 0; e < 10; ++e) losses.push_back(train_epoch(state, spec, train, cfg).loss);
    return std::make_pair(losses, state);
  };
  const auto [losses, state] = run();
  CHECK(losses[9] < losses[0]);
  const auto [again, state2] = run();
  CHECK(losses == again);
  CHECK(state.weights == state2.weights);

  // Shadows stay full precision: some filter holds more than two magnitudes.
  const std::vector<ParamInfo> layout = parameter_layout(spec);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!layout[i].binarizable) continue;
    const Tensor& w = state.weights[i];
    const BinaryFilterBank bank = binarize_bank(w);
    bool differs = false;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (std::fabs(w[k]) != bank.scale(k / bank.bits_per_filter())) differs = true;
    }
    CHECK(differs);
  }
}

TEST_CASE("clip_shadow bounds the binarizable shadows") {
  const Dataset d = toy_dataset(8, 8);
  const NetworkSpec spec = toy_spec();
  TrainConfig cfg;
  cfg.lr0 = 5.0;
  cfg.clip_shadow = true;
  cfg.clip_threshold = 0.5;
  TrainState state = make_train_state(init_model(spec, 5), cfg, 5);
  for (int e = 0; e < 3; ++e) (void)train_epoch(state, spec, d, cfg);
  for (float v : state.weights[0].values()) CHECK(std::fabs(v) <= 0.5f);
}

TEST_CASE("train_epoch errors") {
  const NetworkSpec spec = toy_spec();
  TrainState state = make_train_state(init_model(spec, 6), TrainConfig{}, 6);
  Dataset empty;
  CHECK(test::error_code_of([&] { (void)train_epoch(state, spec, empty, TrainConfig{}); }) ==
        Errc::invalid_argument);

  Dataset d = toy_dataset(2, 9);
  d.inputs[0] = NAN;
  CHECK(test::error_code_of([&] { (void)train_epoch(state, spec, d, TrainConfig{}); }) == Errc::numeric);
}

TEST_CASE("classification_accuracy") {
  const Tensor logits({3, 2}, std::vector<float>{1, 0, 0, 1, 2, 1});
  const std::vector<std::size_t> labels{0, 1, 1};
  CHECK(classification_accuracy(logits, labels) == doctest::Approx(2.0 / 3.0));
}
