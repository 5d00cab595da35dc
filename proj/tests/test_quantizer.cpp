#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "motioncode/errors.hpp"
#include "motioncode/gradcheck.hpp"
#include "motioncode/ops.hpp"
#include "motioncode/quantizer.hpp"
#include "test_util.hpp"

using namespace motioncode;
using motioncode::testing::random_tensor;

namespace {

std::span<const double> row(const Tensor<double>& t, std::size_t i) {
  return t.values().subspan(i * t.dim(1), t.dim(1));
}

// Independent scan: materialize every (distance, index) pair and take the
// lexicographic minimum.
std::size_t scan_nearest(std::span<const double> frame, const Tensor<double>& book,
                         const std::vector<std::size_t>& allowed) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t k : allowed) {
    double d = 0;
    for (std::size_t i = 0; i < frame.size(); ++i) d += (frame[i] - book.at(k * frame.size() + i)) * (frame[i] - book.at(k * frame.size() + i));
    all.emplace_back(d, k);
  }
  return std::min_element(all.begin(), all.end())->second;
}

}  // namespace

TEST_CASE("nearest_code finds an exact entry and breaks ties by lowest index") {
  std::mt19937_64 rng(1);
  auto book = random_tensor<double>({12, 3}, rng);
  auto hit = nearest_code<double>(row(book, 7), book, all_codes(12));
  CHECK(hit.first == 7);
  CHECK(hit.second == 0.0);

  auto tie = Tensor<double>::zeros({10, 2});
  tie.mutable_values()[3 * 2] = 1.0;
  tie.mutable_values()[9 * 2] = -1.0;
  for (std::size_t k : {0u, 1u, 2u, 4u, 5u, 6u, 7u, 8u}) tie.mutable_values()[k * 2 + 1] = 50.0 + k;
  std::vector<double> origin{0.0, 0.0};
  CHECK(nearest_code<double>(origin, tie, all_codes(10)).first == 3);
  std::vector<std::size_t> reversed{9, 3};
  CHECK(nearest_code<double>(origin, tie, reversed).first == 3);
}

TEST_CASE("nearest_code rejects an empty allowed set") {
  auto book = Tensor<double>::zeros({4, 2});
  std::vector<double> frame{0, 0};
  CHECK_THROWS_AS(nearest_code<double>(frame, book, {}), InvalidArgument);
}

TEST_CASE("nearest_code equals an exhaustive scan over 1000 random trials") {
  std::mt19937_64 rng(2024);
  auto book = random_tensor<double>({512, 6}, rng);
  std::bernoulli_distribution keep(0.3);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto frame = random_tensor<double>({6}, rng, -1.5, 1.5);
    std::vector<std::size_t> allowed;
    if (trial % 2 == 0) {
      allowed = all_codes(512);
    } else {
      for (std::size_t k = 0; k < 512; ++k)
        if (keep(rng)) allowed.push_back(k);
      if (allowed.empty()) allowed.push_back(trial % 512);
    }
    if (nearest_code<double>(frame.values(), book, allowed).first != scan_nearest(frame.values(), book, allowed))
      ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("quantize builds segments and segment means") {
  auto book = Tensor<double>::zeros({6, 2});
  for (std::size_t k = 0; k < 6; ++k) book.mutable_values()[k * 2] = 10.0 * static_cast<double>(k);
  auto z = Tensor<double>::from({5, 2}, {50.1, 0.2, 49.7, -0.1, 50.3, 0.5, 20.2, 1.0, 19.9, -1.0});
  auto tape = Tape<double>::inference();
  auto a = quantize(tape, z, book, all_codes(6));
  CHECK(a.codes == std::vector<std::size_t>{5, 5, 5, 2, 2});
  CHECK(a.segments == std::vector<Segment>{{0, 3, 5}, {3, 5, 2}});
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(a.z_bar.at(t * 2) == (50.1 + 49.7 + 50.3) / 3.0);
    CHECK(a.z_bar.at(t * 2 + 1) == (0.2 + -0.1 + 0.5) / 3.0);
  }
  for (std::size_t i = 0; i < a.z_q.size(); ++i) CHECK(a.z_q.at(i) == a.z_q_st.at(i));
  CHECK(a.z_q.at(0) == 50.0);
}

TEST_CASE("distinct codes per frame give z_bar equal to z_e") {
  std::mt19937_64 rng(4);
  auto book = random_tensor<double>({8, 3}, rng);
  std::vector<double> rows;
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t i = 0; i < 3; ++i) rows.push_back(book.at(k * 3 + i) + 1e-3);
  auto z = Tensor<double>::from({8, 3}, rows);
  auto tape = Tape<double>::inference();
  auto a = quantize(tape, z, book, all_codes(8));
  CHECK(a.segments.size() == 8);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(a.z_bar.at(i) == z.at(i));
}

TEST_CASE("segments and segment means match a brute-force run-length oracle") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> code(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> len(1, 40);
    const std::size_t n = len(rng);
    std::vector<std::size_t> codes(n);
    for (auto& c : codes) c = code(rng);
    auto segs = run_length(codes);

    std::vector<Segment> oracle;
    std::size_t start = 0;
    for (std::size_t t = 1; t <= n; ++t) {
      if (t == n || codes[t] != codes[t - 1]) {
        oracle.push_back({start, t, codes[start]});
        start = t;
      }
    }
    REQUIRE(segs == oracle);
    CHECK(expand_segments(segs) == codes);
    for (std::size_t i = 1; i < segs.size(); ++i) CHECK(segs[i].code != segs[i - 1].code);

    auto z = random_tensor<double>({n, 2}, rng);
    std::vector<ops::RowRange> ranges;
    for (const auto& s : segs) ranges.push_back({s.start, s.end});
    auto tape = Tape<double>::inference();
    auto bar = ops::range_mean(tape, z, std::span<const ops::RowRange>(ranges));
    for (const auto& s : segs) {
      for (std::size_t j = 0; j < 2; ++j) {
        double sum = 0;
        for (std::size_t t = s.start; t < s.end; ++t) sum += z.at(t * 2 + j);
        const double mean = sum / static_cast<double>(s.length());
        for (std::size_t t = s.start; t < s.end; ++t) CHECK(bar.at(t * 2 + j) == mean);
      }
    }
  }
}

TEST_CASE("quantizing codebook rows returns their own codes") {
  std::mt19937_64 rng(6);
  auto samples = random_tensor<double>({200, 5}, rng);
  auto book = init_codebook(samples, 32, rng);
  auto codes = assign_codes(book, book, all_codes(32));
  CHECK(codes == all_codes(32));
  auto tape = Tape<double>::inference();
  auto a = quantize(tape, book, book, all_codes(32));
  auto again = assign_codes(a.z_q, book, all_codes(32));
  CHECK(again == a.codes);
}

TEST_CASE("straight-through gradient at z_e equals the gradient injected at z_q") {
  std::mt19937_64 rng(7);
  auto book = random_tensor<double>({6, 4}, rng, -1, 1, true);
  auto z = random_tensor<double>({9, 4}, rng, -1, 1, true);
  auto g = random_tensor<double>({9, 4}, rng);
  Tape<double> tape;
  auto a = quantize(tape, z, book, all_codes(6));
  auto loss = ops::sum(tape, ops::mul(tape, a.z_q_st, g));
  tape.backward(loss);
  REQUIRE(z.has_grad());
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.grad()[i] == g.at(i));
  if (book.has_grad())
    for (double v : book.grad()) CHECK(v == 0.0);
}

TEST_CASE("straight_through_both keeps the quantized value and feeds both inputs") {
  std::mt19937_64 rng(8);
  auto book = random_tensor<double>({5, 3}, rng, -1, 1, true);
  auto z = random_tensor<double>({7, 3}, rng, -1, 1, true);
  auto g = random_tensor<double>({7, 3}, rng);
  Tape<double> tape;
  auto a = quantize(tape, z, book, all_codes(5));
  auto both = straight_through_both(tape, z, a.z_q);
  for (std::size_t i = 0; i < both.size(); ++i) CHECK(both.at(i) == a.z_q.at(i));
  tape.backward(ops::sum(tape, ops::mul(tape, both, g)));
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.grad()[i] == g.at(i));
  std::vector<double> expect(book.size(), 0.0);
  for (std::size_t t = 0; t < 7; ++t)
    for (std::size_t j = 0; j < 3; ++j) expect[a.codes[t] * 3 + j] += g.at(t * 3 + j);
  for (std::size_t i = 0; i < book.size(); ++i) CHECK(book.grad()[i] == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("quantizer gradients through z_q and z_bar match finite differences at fixed codes") {
  std::mt19937_64 rng(9);
  auto book = random_tensor<double>({4, 3}, rng, -2, 2, true);
  auto z = random_tensor<double>({10, 3}, rng, -2, 2, true);
  auto w1 = random_tensor<double>({10, 3}, rng);
  auto w2 = random_tensor<double>({10, 3}, rng);
  auto loss = [&](Tape<double>& tape) {
    auto a = quantize(tape, z, book, all_codes(4));
    return ops::add(tape, ops::sum(tape, ops::mul(tape, ops::square(tape, a.z_q), w1)),
                    ops::sum(tape, ops::mul(tape, ops::square(tape, a.z_bar), w2)));
  };
  CHECK(check_gradients_over(loss, {book, z}, 1e-5) < 1e-4);
}

TEST_CASE("init_codebook yields distinct finite rows even from repeated samples") {
  std::mt19937_64 rng(10);
  auto samples = Tensor<double>::from({3, 2}, {1, 1, 1, 1, 2, 2});
  auto book = init_codebook(samples, 8, rng);
  CHECK(book.dim(0) == 8);
  CHECK_NOTHROW(validate_codebook(book));
  auto dup = Tensor<double>::from({2, 2}, {1, 2, 1, 2});
  CHECK_THROWS_AS(validate_codebook(dup), ValidationError);
}

TEST_CASE("restriction plans") {
  std::vector<std::set<std::size_t>> usage{{0, 1}, {1, 2}, {5}, {6, 7}, {2, 3}, {9}, {4}, {8}};

  SUBCASE("unrestricted plan allows everything") {
    auto plan = unrestricted_plan(16, 8);
    CHECK(plan.allowed(3) == all_codes(16));
  }
  SUBCASE("a single group is the union of all used codes") {
    RestrictionConfig cfg;
    cfg.group_size = usage.size();
    auto plan = build_restriction(cfg, usage, 16, 1);
    REQUIRE(plan.subsets.size() == 1);
    CHECK(plan.subsets[0] == all_codes(10));
    for (std::size_t j = 0; j < usage.size(); ++j) CHECK(plan.allowed(j) == all_codes(10));
  }
  SUBCASE("subsets are non-empty and cover every used code") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto plan = build_restriction({}, usage, 16, seed);
      std::set<std::size_t> covered;
      for (const auto& s : plan.subsets) {
        CHECK_FALSE(s.empty());
        covered.insert(s.begin(), s.end());
      }
      CHECK(covered.size() == 10);
      CHECK(plan.choice.size() == usage.size());
    }
  }
  SUBCASE("same seed, same plan") {
    auto a = build_restriction({}, usage, 16, 42);
    auto b = build_restriction({}, usage, 16, 42);
    CHECK(a.subsets == b.subsets);
    CHECK(a.choice == b.choice);
  }
  SUBCASE("disabled restriction is unrestricted") {
    RestrictionConfig cfg;
    cfg.enabled = false;
    CHECK(build_restriction(cfg, usage, 16, 1).all_allowed);
  }
  SUBCASE("assigned codes stay inside the allowed subset") {
    std::mt19937_64 rng(11);
    auto book = random_tensor<double>({16, 4}, rng);
    auto plan = build_restriction({}, usage, 16, 3);
    for (std::size_t j = 0; j < usage.size(); ++j) {
      auto allowed = plan.allowed(j);
      auto codes = assign_codes(random_tensor<double>({50, 4}, rng), book, allowed);
      for (auto c : codes) CHECK(std::binary_search(allowed.begin(), allowed.end(), c));
    }
  }
  SUBCASE("no usage at all is an error") {
    std::vector<std::set<std::size_t>> empty(4);
    CHECK_THROWS_AS(build_restriction({}, empty, 16, 1), InvalidArgument);
  }
}

TEST_CASE("code usage, overlap and entropy") {
  std::vector<std::vector<std::size_t>> seqs{{1, 1, 2}};
  auto u = code_usage(seqs);
  CHECK(u.per_sequence[0] == CodeHistogram{{1, 2}, {2, 1}});
  CHECK(u.global == CodeHistogram{{1, 2}, {2, 1}});
  CHECK(jaccard({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(jaccard({1, 2}, {3, 4}) == 0.0);
  CHECK(jaccard({1, 2}, {2, 3}) == doctest::Approx(1.0 / 3.0));
  CHECK(usage_entropy({{0, 5}, {1, 5}}) == doctest::Approx(1.0));
  CHECK(usage_entropy({{3, 7}}) == 0.0);

  std::vector<std::vector<std::size_t>> codes{{0, 0, 1}, {2, 2}, {1, 3}};
  std::vector<std::string> subjects{"A", "B", "A"};
  auto by = codes_by_subject(codes, subjects);
  CHECK(by["A"] == std::set<std::size_t>{0, 1, 3});
  CHECK(by["B"] == std::set<std::size_t>{2});
  CHECK(mean_segment_length(codes) == doctest::Approx(7.0 / 5.0));
}

TEST_CASE("codes CSV round trip") {
  auto path = std::filesystem::temp_directory_path() / "motioncode_codes_test.csv";
  std::vector<std::size_t> codes{4, 4, 0, 15, 15, 15};
  write_codes_csv(path, codes);
  CHECK(read_codes_csv(path) == codes);
  std::filesystem::remove(path);
}
