#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "legend/checkpoint.hpp"
#include "legend/nn.hpp"
#include "legend/rng.hpp"

using namespace legend;
using ad::NodeRef;
using ad::Tape;

TEST_CASE("mlp_new is deterministic and shapes check out") {
  auto a = nn::mlp_new(std::vector<int>{2, 2}, nn::Act::relu, 42);
  auto b = nn::mlp_new(std::vector<int>{2, 2}, nn::Act::relu, 42);
  CHECK(a.params == b.params);

  auto c = nn::mlp_new(std::vector<int>{2, 4, 1}, nn::Act::relu, 1);
  CHECK(c.output_dim() == 1);
  CHECK(c.params.size() == 2 * 4 + 4 + 4 * 1 + 1);

  CHECK_THROWS(nn::mlp_new(std::vector<int>{3}, nn::Act::relu, 1));
  CHECK_THROWS(nn::mlp_new(std::vector<int>{3, 0}, nn::Act::relu, 1));
}

TEST_CASE("init weight variance approximately 2/fan_in") {
  const int fan_in = 8;
  double sum = 0.0, sumsq = 0.0;
  int count = 0;
  for (int s = 0; s < 100; ++s) {
    auto net = nn::mlp_new(std::vector<int>{fan_in, 16, 1}, nn::Act::relu,
                           1000 + s);
    for (int i = 0; i < fan_in * 16; ++i) {
      sum += net.params[i];
      sumsq += net.params[i] * net.params[i];
      ++count;
    }
  }
  const double var = sumsq / count - (sum / count) * (sum / count);
  CHECK(var == doctest::Approx(2.0 / fan_in).epsilon(0.2));
}

TEST_CASE("mlp_forward degenerate and hand-computed cases") {
  // all-zero weights, bias b -> output b regardless of x
  auto net = nn::mlp_new(std::vector<int>{2, 2}, nn::Act::relu, 3);
  for (auto& p : net.params) p = 0.0;
  net.params[4] = 1.5;  // bias 0
  net.params[5] = -2.0;
  Tape t;
  auto bn = nn::bind(net, t);
  std::vector<NodeRef> x{t.leaf(3.0), t.leaf(-7.0)};
  auto y = nn::mlp_forward(bn, x, t);
  CHECK(t.value(y[0]) == 1.5);
  CHECK(t.value(y[1]) == -2.0);

  // single linear layer W = I, b = 0 is the identity
  auto id = nn::mlp_new(std::vector<int>{2, 2}, nn::Act::relu, 4);
  id.params = {1, 0, 0, 1, 0, 0};
  Tape t2;
  auto bid = nn::bind(id, t2);
  std::vector<NodeRef> x2{t2.leaf(0.3), t2.leaf(-0.8)};
  auto y2 = nn::mlp_forward(bid, x2, t2);
  CHECK(t2.value(y2[0]) == 0.3);
  CHECK(t2.value(y2[1]) == -0.8);

  // hand-built 2-2-1 ReLU net at x = (1, 2):
  // W1 = {1,-1; 0.5,0.5}, b1 = 0, W2 = {1,1}, b2 = 0
  // relu(1 - 2) = 0, relu(0.5 + 1.0) = 1.5, output = 1.5
  auto h = nn::mlp_new(std::vector<int>{2, 2, 1}, nn::Act::relu, 5);
  h.params = {1, -1, 0.5, 0.5, 0, 0, 1, 1, 0};
  Tape t3;
  auto bh = nn::bind(h, t3);
  std::vector<NodeRef> x3{t3.leaf(1.0), t3.leaf(2.0)};
  CHECK(t3.value(nn::mlp_forward(bh, x3, t3)[0]) == doctest::Approx(1.5));

  CHECK_THROWS(nn::mlp_forward(bh, std::vector<NodeRef>{x3[0]}, t3));
}

TEST_CASE("mlp_eval matches mlp_forward") {
  rng::Stream rs(11);
  auto net = nn::mlp_new(std::vector<int>{3, 8, 2}, nn::Act::tanh, 77);
  for (int trial = 0; trial < 20; ++trial) {
    double x[3] = {rs.uniform(-2, 2), rs.uniform(-2, 2), rs.uniform(-2, 2)};
    double y[2];
    nn::mlp_eval(net, x, y);
    Tape t;
    auto bn = nn::bind(net, t);
    std::vector<NodeRef> xn{t.leaf(x[0]), t.leaf(x[1]), t.leaf(x[2])};
    auto yn = nn::mlp_forward(bn, xn, t);
    CHECK(t.value(yn[0]) == doctest::Approx(y[0]).epsilon(1e-15));
    CHECK(t.value(yn[1]) == doctest::Approx(y[1]).epsilon(1e-15));
  }
}

TEST_CASE("lstm degenerate: zero parameters give output-bias image") {
  auto net = nn::lstm_new(2, 4, 3, 9);
  for (auto& p : net.params) p = 0.0;
  net.params[net.proj_offset() + 3 * 4 + 0] = 0.25;  // output bias
  std::vector<std::vector<double>> seq{{1, 2}, {3, 4}, {0, 0}};
  std::vector<std::vector<double>> out;
  nn::rnn_eval(net, seq, out);
  for (const auto& row : out) {
    CHECK(row[0] == 0.25);
    CHECK(row[1] == 0.0);
    CHECK(row[2] == 0.0);
  }
}

TEST_CASE("lstm causality: pi_0 invariant to later inputs") {
  auto net = nn::lstm_new(2, 6, 2, 123);
  std::vector<std::vector<double>> seq1{{0.5, -0.5}, {1, 1}, {2, 2}};
  std::vector<std::vector<double>> seq2{{0.5, -0.5}, {-9, 4}, {0, 7}};
  std::vector<std::vector<double>> o1, o2;
  nn::rnn_eval(net, seq1, o1);
  nn::rnn_eval(net, seq2, o2);
  CHECK(o1[0][0] == o2[0][0]);
  CHECK(o1[0][1] == o2[0][1]);
  CHECK(o1[1][0] != o2[1][0]);
}

TEST_CASE("single-step lstm against hand-rolled cell") {
  auto net = nn::lstm_new(1, 1, 1, 55);
  // params: gates i,f,o,c each {W(1), U(1), b(1)}, then C(1), d(1)
  net.params = {0.5, 0.0, 0.1,   // input gate
                0.3, 0.0, 1.0,   // forget gate
                -0.2, 0.0, 0.2,  // output gate
                0.7, 0.0, -0.1,  // candidate
                1.3, 0.05};      // projection
  const double x = 0.8;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double ig = sig(0.5 * x + 0.1);
  const double fg = sig(0.3 * x + 1.0);
  const double og = sig(-0.2 * x + 0.2);
  const double cand = std::tanh(0.7 * x - 0.1);
  const double c = fg * 0.0 + ig * cand;
  const double h = og * std::tanh(c);
  const double want = 1.3 * h + 0.05;

  std::vector<std::vector<double>> out;
  nn::rnn_eval(net, {{x}}, out);
  CHECK(out[0][0] == doctest::Approx(want).epsilon(1e-12));

  // taped forward agrees bit-for-bit in value
  Tape t;
  auto bn = nn::bind(net, t);
  std::vector<std::vector<NodeRef>> seq{{t.leaf(x)}};
  auto pis = nn::rnn_forward(bn, seq, t);
  CHECK(t.value(pis[0][0]) == doctest::Approx(out[0][0]).epsilon(1e-15));
}

TEST_CASE("adam first step and zero-gradient behavior") {
  std::vector<double> params{1.0, -2.0};
  nn::AdamState st;
  st.lr = 0.01;

  // zero gradient leaves parameters unchanged
  nn::adam_step(params, std::vector<double>{0.0, 0.0}, st);
  CHECK(params[0] == 1.0);
  CHECK(params[1] == -2.0);

  // first step from fresh state: p -= lr * g / (|g| + eps)
  std::vector<double> p2{0.5};
  nn::AdamState st2;
  st2.lr = 0.01;
  const double g = 0.37;
  nn::adam_step(p2, std::vector<double>{g}, st2);
  const double want = 0.5 - 0.01 * g / (std::abs(g) + st2.eps);
  CHECK(p2[0] == doctest::Approx(want).epsilon(1e-12));

  CHECK_THROWS(nn::adam_step(p2, std::vector<double>{1.0, 2.0}, st2));
}

TEST_CASE("checkpoint round trip") {
  nn::Checkpoint ck;
  ck.meta.emplace_back("dt", "0.2");
  ck.mlps.emplace_back("f", nn::mlp_new(std::vector<int>{2, 8, 2},
                                        nn::Act::relu, 17));
  ck.mlps.emplace_back("g", nn::mlp_new(std::vector<int>{2, 8, 8, 2},
                                        nn::Act::tanh, 18));
  ck.lstms.emplace_back("h", nn::lstm_new(4, 8, 2, 19));

  const std::string s1 = nn::checkpoint_to_string(ck);
  nn::Checkpoint loaded = nn::checkpoint_from_string(s1);
  const std::string s2 = nn::checkpoint_to_string(loaded);
  CHECK(s1 == s2);

  // forward passes agree bit-exactly after the round trip
  rng::Stream rs(5);
  for (int trial = 0; trial < 100; ++trial) {
    double x[2] = {rs.uniform(-3, 3), rs.uniform(-3, 3)};
    double y1[2], y2[2];
    nn::mlp_eval(ck.mlp("g"), x, y1);
    nn::mlp_eval(loaded.mlp("g"), x, y2);
    CHECK(y1[0] == y2[0]);
    CHECK(y1[1] == y2[1]);
  }

  // truncated stream is an explicit error
  CHECK_THROWS(nn::checkpoint_from_string(s1.substr(0, s1.size() / 2)));
  // version mismatch is an explicit error
  std::string bad = s1;
  bad[12] = '9';
  CHECK_THROWS(nn::checkpoint_from_string(bad));
}
