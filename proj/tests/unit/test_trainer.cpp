#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "pointgrow/synthetic.hpp"
#include "pointgrow/trainer.hpp"
#include "test_util.hpp"

using namespace pointgrow;
using testutil::error_of;

namespace {

// Direct six-loop convolution: out[o][y][x] = b[o] + sum w[o][i][ky][kx] * in[i][y+ky-1][x+kx-1].
std::vector<double> naive_conv(const ToyNet& net, const ConvShape& l, const std::vector<double>& in,
                               int h, int w, bool relu) {
  const auto p = net.params();
  std::vector<double> out(static_cast<std::size_t>(l.out * h * w));
  for (int o = 0; o < l.out; ++o) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = p[l.bias_offset() + static_cast<std::size_t>(o)];
        for (int i = 0; i < l.in; ++i) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int yy = y + ky - 1, xx = x + kx - 1;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              s += p[l.offset + static_cast<std::size_t>(((o * l.in + i) * 3 + ky) * 3 + kx)] *
                   in[static_cast<std::size_t>((i * h + yy) * w + xx)];
            }
          }
        }
        out[static_cast<std::size_t>((o * h + y) * w + x)] = relu ? std::max(s, 0.0) : s;
      }
    }
  }
  return out;
}

std::vector<double> naive_forward(const ToyNet& net, const Tensor4& x, int sample) {
  const auto in = x.sample(sample);
  std::vector<double> a(in.begin(), in.end());
  a = naive_conv(net, net.layers()[0], a, x.h, x.w, true);
  a = naive_conv(net, net.layers()[1], a, x.h, x.w, true);
  a = naive_conv(net, net.layers()[2], a, x.h, x.w, false);
  const std::size_t plane = static_cast<std::size_t>(x.h * x.w);
  const int c = net.num_classes();
  for (std::size_t q = 0; q < plane; ++q) {
    double z = 0.0;
    for (int k = 0; k < c; ++k) z += std::exp(a[k * plane + q]);
    for (int k = 0; k < c; ++k) a[k * plane + q] = std::exp(a[k * plane + q]) / z;
  }
  return a;
}

ToyNet random_net(int classes, std::mt19937_64& rng, double scale) {
  ToyNet net(classes);
  std::normal_distribution<double> d(0.0, scale);
  for (double& v : net.params()) v = d(rng);
  return net;
}

Tensor4 random_input(int n, int h, int w, std::mt19937_64& rng) {
  Tensor4 x(n, 3, h, w);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (double& v : x.data) v = d(rng);
  return x;
}

// Two-class toy set: left half dark class 0, right half bright class 1.
struct TwoTone {
  RasterImage image{8, 8};
  ClassMask truth{8, 8, 2};
  PseudoMask target;
  TwoTone() {
    for (int y = 0; y < 8; ++y) {
      for (int x = 4; x < 8; ++x) {
        image.set(x, y, {230, 230, 230});
        truth.classes[static_cast<std::size_t>(y * 8 + x)] = 1;
      }
    }
    target = {truth, std::vector<std::uint8_t>(64, 1)};
  }
};

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam first step moves by lr against the gradient sign") {
  std::vector<double> p{1.0, -2.0, 0.5, 3.0};
  const std::vector<double> g{0.3, -7.0, 0.0, 1e-3};
  AdamState s(4);
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  adam_step(p, g, s, cfg);
  CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(p[2] == 0.5);
  CHECK(p[3] == doctest::Approx(3.0 - 0.01).epsilon(1e-4));
  CHECK(s.step == 1);

  // Second step by hand.
  const double m = 0.9 * 0.03 + 0.1 * 0.3, v = 0.999 * 0.001 * 0.09 + 0.001 * 0.09;
  const double expected =
      p[0] - 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  adam_step(p, g, s, cfg);
  CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));

  AdamState wrong(3);
  CHECK(error_of([&] { adam_step(p, g, wrong, cfg); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("initialization") {
  const ToyNet net = ToyNet::initialized(5, 3);
  CHECK(net.parameter_count() == 3u * 16 * 9 + 16 + 16u * 32 * 9 + 32 + 32u * 5 * 9 + 5);
  CHECK(net == ToyNet::initialized(5, 3));
  CHECK_FALSE(net == ToyNet::initialized(5, 4));
  const auto p = net.params();
  for (int l = 0; l < 2; ++l) {
    const ConvShape& s = net.layers()[static_cast<std::size_t>(l)];
    const double bound = std::sqrt(6.0 / (s.in * 9));
    double max_abs = 0.0;
    for (std::size_t i = 0; i < s.weight_count(); ++i) max_abs = std::max(max_abs, std::abs(p[s.offset + i]));
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.8 * bound);
    for (int o = 0; o < s.out; ++o) CHECK(p[s.bias_offset() + static_cast<std::size_t>(o)] == 0.0);
  }
  const ConvShape& last = net.layers()[2];
  for (std::size_t i = last.offset; i < last.offset + last.size(); ++i) CHECK(p[i] == 0.0);

  std::mt19937_64 rng(1);
  const Tensor4 probs = net_forward(net, random_input(2, 5, 6, rng));
  for (double v : probs.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(error_of([] { ToyNet(0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("forward equals the direct convolution oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 4; ++trial) {
    const int h = 1 + trial * 2, w = 2 + trial;
    const ToyNet net = random_net(2 + trial, rng, 0.3);
    const Tensor4 x = random_input(2, h, w, rng);
    const Tensor4 fast = net_forward(net, x, nullptr, 2);
    for (int i = 0; i < 2; ++i) {
      const auto slow = naive_forward(net, x, i);
      const auto got = fast.sample(i);
      for (std::size_t k = 0; k < slow.size(); ++k) CHECK(got[k] == doctest::Approx(slow[k]).epsilon(1e-10));
    }
  }
  CHECK(error_of([] { net_forward(ToyNet(2), Tensor4(1, 4, 2, 2)); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("backward matches central differences on every parameter") {
  std::mt19937_64 rng(13);
  const ToyNet net = random_net(3, rng, 0.25);
  const Tensor4 x = random_input(2, 3, 4, rng);
  Tensor4 r(2, 3, 3, 4);
  std::normal_distribution<double> d(0.0, 1.0);
  for (double& v : r.data) v = d(rng);
  const auto objective = [&](const ToyNet& n) {
    const Tensor4 p = net_forward(n, x);
    double s = 0.0;
    for (std::size_t k = 0; k < p.data.size(); ++k) s += r.data[k] * p.data[k];
    return s;
  };
  ForwardCache cache;
  net_forward(net, x, &cache);
  const std::vector<double> g = net_backward(net, cache, r, 2);
  REQUIRE(g.size() == net.parameter_count());
  int bad = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    ToyNet up = net, down = net;
    up.params()[k] += 1e-6;
    down.params()[k] -= 1e-6;
    const double fd = (objective(up) - objective(down)) / 2e-6;
    // Below ~1e-3 the difference quotient itself is only good to ~1e-9 absolute.
    const double scale = std::max({std::abs(fd), std::abs(g[k]), 1e-3});
    if (std::abs(fd - g[k]) / scale > 1e-4) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("images_to_tensor and argmax") {
  const RasterImage img(2, 1, {0, 51, 255, 255, 255, 255});
  const Tensor4 t = images_to_tensor({&img});
  CHECK(t.at(0, 0, 0, 0) == 0.0);
  CHECK(t.at(0, 1, 0, 0) == doctest::Approx(0.2));
  CHECK(t.at(0, 2, 0, 1) == 1.0);

  Tensor4 p(1, 3, 1, 2);
  p.data = {0.4, 0.2, 0.4, 0.5, 0.2, 0.3};
  const ClassMask m = argmax_mask(p, 0);
  CHECK(m.classes == std::vector<std::uint8_t>{0, 1});  // pixel 0 ties classes 0 and 1
}

TEST_CASE("plateau scheduler") {
  PlateauScheduler s(1.0, 2, 0.5);
  CHECK(s.observe(0.1) == 1.0);
  CHECK(s.observe(0.1) == 1.0);  // one bad epoch
  CHECK(s.observe(0.05) == 1.0);  // two
  CHECK(s.observe(0.1) == 0.5);  // three exceeds patience
  CHECK(s.observe(0.2) == 0.5);
  CHECK(s.observe(0.2) == 0.5);
  CHECK(s.observe(0.2) == 0.5);
  CHECK(s.observe(0.2) == 0.25);
  PlateauScheduler eager(1.0, 0, 0.1);
  eager.observe(1.0);
  CHECK(eager.observe(1.0) == doctest::Approx(0.1));
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.lr = -1.0;
  CHECK(error_of([&] { validate(c); }) == ErrorCode::kInvalidArgument);
  c = {};
  c.factor = 1.0;
  CHECK(error_of([&] { validate(c); }) == ErrorCode::kInvalidArgument);
  c = {};
  c.batch_size = 0;
  CHECK(error_of([&] { validate(c); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("zero learning rate leaves weights untouched") {
  TwoTone toy;
  const ToyNet net = ToyNet::initialized(2, 5);
  TrainConfig c;
  c.lr = 0.0;
  c.epochs = 3;
  const TrainResult r = train(net, {{&toy.image, &toy.target}}, {{&toy.image, &toy.truth}},
                              {{1.0, 1.0}, 1e-6}, c);
  CHECK(r.final_state.net == net);
  CHECK(r.log.size() == 3);
  CHECK(r.final_state.adam.step == 3);
  CHECK(r.log[0].train_loss == doctest::Approx(r.log[2].train_loss));
}

TEST_CASE("training reduces the loss and is deterministic") {
  TwoTone toy;
  TrainConfig c;
  c.lr = 1e-2;
  c.epochs = 25;
  c.seed = 4;
  const std::vector<TrainSample> ts{{&toy.image, &toy.target}, {&toy.image, &toy.target}};
  const std::vector<EvalSample> vs{{&toy.image, &toy.truth}};
  std::vector<EpochLog> seen;
  const TrainResult a = train(ToyNet::initialized(2, 1), ts, vs, {{1.0, 1.0}, 1e-6}, c,
                              [&](const EpochLog& e) { seen.push_back(e); });
  const TrainResult b = train(ToyNet::initialized(2, 1), ts, vs, {{1.0, 1.0}, 1e-6}, c);
  CHECK(seen == a.log);
  CHECK(a.log == b.log);
  CHECK(a.final_state == b.final_state);
  CHECK(a.log.back().train_loss < 0.5 * a.log.front().train_loss);
  CHECK(a.best_val_miou == 1.0);
  CHECK(a.best_state.epoch == static_cast<std::uint64_t>(a.best_epoch));
  CHECK(a.log.front().lr == 1e-2);

  const auto lines = epoch_log_jsonl(a.log);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 25);
  const auto first = nlohmann::json::parse(lines.substr(0, lines.find('\n')));
  CHECK(first.at("epoch").get<int>() == 1);
}

TEST_CASE("unsupervised pixels give zero gradient") {
  TwoTone toy;
  toy.target.m.assign(64, 0);
  TrainConfig c;
  c.lr = 1e-2;
  c.epochs = 2;
  const ToyNet net = ToyNet::initialized(2, 9);
  const TrainResult r =
      train(net, {{&toy.image, &toy.target}}, {{&toy.image, &toy.truth}}, {{1.0, 1.0}, 1e-6}, c);
  CHECK(r.final_state.net == net);
  CHECK(r.log[0].train_loss == 0.0);
}

TEST_CASE("train input errors") {
  TwoTone toy;
  TrainConfig c;
  c.epochs = 1;
  const std::vector<TrainSample> ts{{&toy.image, &toy.target}};
  const std::vector<EvalSample> vs{{&toy.image, &toy.truth}};
  CHECK(error_of([&] { train(ToyNet(2), {}, vs, {{1, 1}, 1e-6}, c); }) == ErrorCode::kEmpty);
  CHECK(error_of([&] { train(ToyNet(2), ts, {}, {{1, 1}, 1e-6}, c); }) == ErrorCode::kEmpty);
  CHECK(error_of([&] { train(ToyNet(2), ts, vs, {{1, 1, 1}, 1e-6}, c); }) ==
        ErrorCode::kDimensionMismatch);
  c.epochs = 0;
  const TrainResult none = train(ToyNet(2), ts, vs, {{1, 1}, 1e-6}, c);
  CHECK(none.log.empty());
  CHECK(none.final_state.net == ToyNet(2));
}

TEST_CASE("uniform network predicts background everywhere") {
  TwoTone toy;
  const ConfusionMatrix cm = evaluate(ToyNet(2), {{&toy.image, &toy.truth}});
  CHECK(cm.total() == 64);
  CHECK(cm.counts[0 * 2 + 0] == 32);  // gt 0, pred 0
  CHECK(cm.counts[1 * 2 + 0] == 32);  // gt 1, pred 0
  CHECK(miou_micro(cm, 0) == 0.0);
  CHECK(error_of([] { evaluate(ToyNet(2), {}); }) == ErrorCode::kEmpty);
}

TEST_CASE("checkpoint round trip and corruption") {
  testutil::TempDir dir("ckpt");
  TwoTone toy;
  TrainConfig c;
  c.lr = 1e-3;
  c.epochs = 2;
  const TrainResult r = train(ToyNet::initialized(2, 2), {{&toy.image, &toy.target}},
                              {{&toy.image, &toy.truth}}, {{1, 1}, 1e-6}, c);
  save_checkpoint(r.final_state, dir / "a.ckpt");
  CHECK(load_checkpoint(dir / "a.ckpt") == r.final_state);

  const Bytes bytes = serialize_checkpoint(r.final_state);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TNCK");
  Bytes bad = bytes;
  bad[1] = 'X';
  CHECK(error_of([&] { deserialize_checkpoint(bad); }) == ErrorCode::kBadMagic);
  bad = bytes;
  bad[4] = 9;
  CHECK(error_of([&] { deserialize_checkpoint(bad); }) == ErrorCode::kBadVersion);
  const Bytes cut(bytes.begin(), bytes.end() - 20);
  CHECK(error_of([&] { deserialize_checkpoint(cut); }) == ErrorCode::kTruncated);
  bad = bytes;
  bad[10] = 17;  // first hidden width
  CHECK(error_of([&] { deserialize_checkpoint(bad); }) == ErrorCode::kDimensionMismatch);
  CHECK(error_of([&] { load_checkpoint(dir / "none.ckpt"); }) == ErrorCode::kMissingFile);
}

}  // TEST_SUITE
