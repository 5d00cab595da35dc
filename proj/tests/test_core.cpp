#include "doctest.h"

#include <cmath>
#include <limits>

#include "motioncode/gradcheck.hpp"
#include "motioncode/ops.hpp"
#include "test_util.hpp"

using namespace motioncode;
using motioncode::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

// Reduces an arbitrary tensor to a scalar with non-uniform weights so that
// every output coordinate contributes a distinct gradient.
Tensor<double> weighted_sum(Tape<double>& tape, const Tensor<double>& x) {
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  auto weights = Tensor<double>::from(x.dims(), std::move(w));
  return ops::sum(tape, ops::mul(tape, x, weights));
}

}  // namespace

TEST_CASE("softmax_rows of a constant row is uniform") {
  Tape<double> tape(false);
  auto x = Tensor<double>::from({1, 3}, {0, 0, 0});
  auto y = ops::softmax_rows(tape, x, {});
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax_rows with one unmasked entry puts all mass on it") {
  Tape<double> tape(false);
  auto x = Tensor<double>::from({1, 2}, {0.37, 5.0});
  std::vector<std::uint8_t> mask{0, 1};
  auto y = ops::softmax_rows(tape, x, mask);
  CHECK(y.at(0) == 1.0);
  CHECK(y.at(1) == 0.0);
}

TEST_CASE("softmax_rows returns zeros for fully masked rows") {
  Tape<double> tape(false);
  auto x = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  std::vector<std::uint8_t> mask{1, 1, 0, 0};
  auto y = ops::softmax_rows(tape, x, mask);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(2) + y.at(3) == doctest::Approx(1.0));
}

TEST_CASE("softmax_rows matches an extended-precision evaluation") {
  std::mt19937_64 rng(11);
  Tape<double> tape(false);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({4, 4}, rng, -4.0, 4.0);
    auto y = ops::softmax_rows(tape, x, {});
    for (std::size_t r = 0; r < 4; ++r) {
      long double total = 0;
      for (std::size_t j = 0; j < 4; ++j) total += std::exp(static_cast<long double>(x.at(r * 4 + j)));
      long double row_sum = 0;
      for (std::size_t j = 0; j < 4; ++j) {
        const long double expected = std::exp(static_cast<long double>(x.at(r * 4 + j))) / total;
        CHECK(std::abs(static_cast<long double>(y.at(r * 4 + j)) - expected) < 1e-12L);
        row_sum += y.at(r * 4 + j);
      }
      CHECK(std::abs(row_sum - 1.0L) < 1e-12L);
    }
  }
}

TEST_CASE("softmax_rows rejects a mask of the wrong size") {
  Tape<double> tape(false);
  auto x = Tensor<double>::from({1, 3}, {0, 0, 0});
  std::vector<std::uint8_t> mask{0, 1};
  CHECK_THROWS_AS(ops::softmax_rows(tape, x, mask), InvalidArgument);
}

TEST_CASE("backward of sum is all ones") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 3, 4}, rng, -1, 1, true);
  Tape<double> tape;
  tape.backward(ops::sum(tape, x));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of squared norm is twice the input") {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  Tape<double> tape;
  tape.backward(ops::sum(tape, ops::square(tape, x)));
  CHECK(x.grad()[0] == 4.0 / 2.0);
  CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("backward leaves non-participating tensors with zero grad") {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  auto unused = Tensor<double>::from({2}, {3, 4}, true);
  Tape<double> tape;
  auto y = ops::add(tape, x, ops::detach(unused));
  tape.backward(ops::sum(tape, y));
  CHECK(!unused.has_grad());
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("backward errors") {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  SUBCASE("non-scalar loss") {
    Tape<double> tape;
    auto y = ops::square(tape, x);
    CHECK_THROWS_AS(tape.backward(y), InvalidArgument);
  }
  SUBCASE("second replay") {
    Tape<double> tape;
    auto loss = ops::sum(tape, ops::square(tape, x));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), InvalidArgument);
  }
}

TEST_CASE("every primitive passes a finite-difference check in 64-bit") {
  std::mt19937_64 rng(2024);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto w = random_tensor({4, 5}, rng);
  auto row = random_tensor({4}, rng);

  auto check = [](const char* name, double err) {
    INFO(name);
    CHECK(err < kGradTol);
  };

  check("add", check_gradients_over([&](auto& t) { return weighted_sum(t, ops::add(t, a, b)); }, {a, b}));
  check("sub", check_gradients_over([&](auto& t) { return weighted_sum(t, ops::sub(t, a, b)); }, {a, b}));
  check("mul", check_gradients_over([&](auto& t) { return weighted_sum(t, ops::mul(t, a, b)); }, {a, b}));
  check("scale", check_gradients([](auto& t, const auto& x) { return weighted_sum(t, ops::scale(t, x, -1.7)); }, a));
  check("add_broadcast",
        check_gradients_over([&](auto& t) { return weighted_sum(t, ops::add_broadcast(t, a, row)); }, {a, row}));
  check("relu", check_gradients([](auto& t, const auto& x) { return weighted_sum(t, ops::relu(t, x)); }, a));
  check("square", check_gradients([](auto& t, const auto& x) { return weighted_sum(t, ops::square(t, x)); }, a));
  check("abs", check_gradients([](auto& t, const auto& x) { return weighted_sum(t, ops::abs(t, x)); }, a));
  check("sum", check_gradients([](auto& t, const auto& x) { return ops::sum(t, x); }, a));
  check("mean", check_gradients([](auto& t, const auto& x) { return ops::mean(t, x); }, a));
  check("matmul", check_gradients_over([&](auto& t) { return weighted_sum(t, ops::matmul(t, a, w)); }, {a, w}));

  auto gain = random_tensor({4}, rng, 0.5, 1.5);
  auto bias = random_tensor({4}, rng);
  check("layer_norm", check_gradients_over(
                          [&](auto& t) { return weighted_sum(t, ops::layer_norm(t, a, gain, bias)); }, {a, gain, bias}));

  std::vector<std::uint8_t> mask{0, 0, 1, 0, 1, 1, 1, 1, 0, 1, 0, 0};
  check("softmax_rows", check_gradients(
                            [&](auto& t, const auto& x) { return weighted_sum(t, ops::softmax_rows(t, x, mask)); }, a));
  check("slice_rows",
        check_gradients([](auto& t, const auto& x) { return weighted_sum(t, ops::slice_rows(t, x, 1, 3)); }, a));

  std::vector<std::size_t> index{2, 0, 2, 1, 2};
  check("gather_rows",
        check_gradients([&](auto& t, const auto& x) { return weighted_sum(t, ops::gather_rows<double>(t, x, index)); },
                        a));

  std::vector<ops::RowRange> ranges{{0, 1}, {1, 3}};
  check("range_mean",
        check_gradients([&](auto& t, const auto& x) { return weighted_sum(t, ops::range_mean<double>(t, x, ranges)); },
                        a));

  check("rearrange_windows", check_gradients(
                                 [](auto& t, const auto& x) {
                                   return weighted_sum(t, ops::rearrange_windows(t, x, 2).values);
                                 },
                                 a));

  auto keys = random_tensor({3, 2, 4}, rng);
  check("window_scores",
        check_gradients_over([&](auto& t) { return weighted_sum(t, ops::window_scores(t, a, keys, 2, 0.5)); },
                             {a, keys}));
  auto probs = random_tensor({3, 2, 2}, rng, 0.0, 1.0);
  check("window_mix",
        check_gradients_over([&](auto& t) { return weighted_sum(t, ops::window_mix(t, probs, keys)); }, {probs, keys}));
}

TEST_CASE("check_gradients on simple functions") {
  auto x = Tensor<double>::from({2}, {1, 1});
  CHECK(check_gradients([](auto&, const auto&) { return Tensor<double>::scalar(3.0); }, x) == 0.0);
  CHECK(check_gradients([](auto& t, const auto& p) { return ops::sum(t, ops::mul(t, p, p)); }, x) < 1e-8);
}

TEST_CASE("check_gradients rejects non-finite values") {
  auto x = Tensor<double>::from({1}, {1.0});
  auto f = [](auto& t, const auto& p) {
    return ops::scale(t, ops::sum(t, p), std::numeric_limits<double>::infinity());
  };
  CHECK_THROWS_AS(check_gradients(f, x), NumericalError);
}

TEST_CASE("rearrange_windows layout") {
  Tape<double> tape(false);
  SUBCASE("single frame, M=3") {
    auto x = Tensor<double>::from({1, 2}, {7, 8});
    auto w = ops::rearrange_windows(tape, x, 3);
    CHECK(w.values.dims() == Shape{1, 3, 2});
    CHECK(w.padded == std::vector<std::uint8_t>{1, 1, 0});
    CHECK(w.values.at(4) == 7);
    CHECK(w.values.at(5) == 8);
    CHECK(w.values.at(0) == 0);
  }
  SUBCASE("three frames, M=2") {
    auto x = Tensor<double>::from({3, 1}, {10, 11, 12});
    auto w = ops::rearrange_windows(tape, x, 2);
    CHECK(w.padded == std::vector<std::uint8_t>{1, 0, 0, 0, 0, 0});
    CHECK(ops::detach(w.values).values()[1] == 10);
    const std::vector<double> expected{0, 10, 10, 11, 11, 12};
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(w.values.at(i) == expected[i]);
  }
  SUBCASE("index-arithmetic oracle, n_f=16, M=5") {
    std::mt19937_64 rng(5);
    auto x = random_tensor({16, 3}, rng);
    auto w = ops::rearrange_windows(tape, x, 5);
    for (int t = 0; t < 16; ++t) {
      for (int m = 0; m < 5; ++m) {
        const int s = t - 5 + 1 + m;
        const bool pad = s < 0;
        CHECK(static_cast<bool>(w.padded[t * 5 + m]) == pad);
        for (int d = 0; d < 3; ++d) {
          const double expected = pad ? 0.0 : x.at(s * 3 + d);
          CHECK(w.values.at((t * 5 + m) * 3 + d) == expected);
        }
      }
    }
  }
}

TEST_CASE("forward results are bitwise deterministic") {
  auto run = []() {
    std::mt19937_64 rng(77);
    auto a = random_tensor<float>({8, 6}, rng);
    auto w = random_tensor<float>({6, 6}, rng);
    Tape<float> tape(false);
    auto y = ops::softmax_rows(tape, ops::matmul(tape, a, w), {});
    return motioncode::testing::copy_values(y);
  };
  CHECK(run() == run());
}

TEST_CASE("shape errors raise invalid-argument") {
  Tape<double> tape(false);
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({3, 2});
  CHECK_THROWS_AS(ops::add(tape, a, b), InvalidArgument);
  CHECK_THROWS_AS(ops::matmul(tape, a, a), InvalidArgument);
  CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1, 2, 3}), InvalidArgument);
}
