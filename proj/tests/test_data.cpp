#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "legend/data.hpp"

using namespace legend;
using sde::Batch;

TEST_CASE("synthetic-1, zero noise: hidden states follow (1.05)^(5t)") {
  data::SyntheticSpec spec;
  spec.kind = data::SynKind::syn1;
  spec.dim = 2;
  spec.generated_per_step = 50;
  spec.observed_per_step = 20;
  spec.zero_noise = true;
  auto d = data::gen_synthetic(spec, 11);
  REQUIRE(d.hidden.times == std::vector<int>{0, 1, 2, 3});
  for (int t = 0; t <= 3; ++t) {
    const double factor = std::pow(1.05, 5 * t);
    const Batch& x0 = d.hidden.batches[0];
    const Batch& xt = d.hidden.batches[t];
    for (std::size_t i = 0; i < xt.count; ++i)
      for (int j = 0; j < 2; ++j) {
        CHECK(xt.row(i)[j] ==
              doctest::Approx(x0.row(i)[j] * factor).epsilon(1e-10));
        // observation map doubles the hidden state
        CHECK(d.observed_full.batches[t].row(i)[j] ==
              doctest::Approx(2.0 * xt.row(i)[j]).epsilon(1e-12));
      }
  }
}

TEST_CASE("synthetic-2 observations are exp of hidden, all positive") {
  data::SyntheticSpec spec;
  spec.kind = data::SynKind::syn2;
  spec.generated_per_step = 40;
  spec.observed_per_step = 10;
  auto d = data::gen_synthetic(spec, 13);
  for (int t = 0; t <= 3; ++t)
    for (std::size_t i = 0; i < d.observed_full.batches[t].count; ++i)
      for (int j = 0; j < 2; ++j) {
        const double y = d.observed_full.batches[t].row(i)[j];
        CHECK(y > 0.0);
        CHECK(y == doctest::Approx(std::exp(d.hidden.batches[t].row(i)[j]))
                       .epsilon(1e-12));
      }
}

TEST_CASE("synthetic-3 stays finite despite the log observation map") {
  data::SyntheticSpec spec;
  spec.kind = data::SynKind::syn3;
  spec.generated_per_step = 200;
  spec.observed_per_step = 50;
  auto d = data::gen_synthetic(spec, 17);
  for (const auto& b : d.observed_full.batches)
    for (double v : b.data) CHECK(std::isfinite(v));
  // initial hidden states are uniform in [-2, 2]
  for (double v : d.hidden.batches[0].data) {
    CHECK(v >= -2.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  data::SyntheticSpec spec;
  spec.generated_per_step = 30;
  spec.observed_per_step = 10;
  auto a = data::gen_synthetic(spec, 5);
  auto b = data::gen_synthetic(spec, 5);
  auto c = data::gen_synthetic(spec, 6);
  for (int t = 0; t <= 3; ++t) {
    CHECK(a.observed.batches[t].data == b.observed.batches[t].data);
    CHECK(a.observed.batches[t].data != c.observed.batches[t].data);
  }
  CHECK(a.observed.batches[0].count == 10);
  CHECK(a.observed_full.batches[0].count == 30);
}

TEST_CASE("per-substep noise has the configured covariance") {
  data::SyntheticSpec spec;
  spec.kind = data::SynKind::syn1;
  spec.dim = 2;
  spec.generated_per_step = 100000;
  spec.observed_per_step = 10;
  spec.num_obs_times = 2;
  spec.substeps = 1;  // one substep: x1 = 1.05 x0 + noise, noise ~ N(0, cov0)
  auto d = data::gen_synthetic(spec, 29);
  const Batch& x0 = d.hidden.batches[0];
  const Batch& x1 = d.hidden.batches[1];
  double c00 = 0, c01 = 0, c11 = 0;
  const std::size_t n = x0.count;
  for (std::size_t i = 0; i < n; ++i) {
    const double e0 = x1.row(i)[0] - 1.05 * x0.row(i)[0];
    const double e1 = x1.row(i)[1] - 1.05 * x0.row(i)[1];
    c00 += e0 * e0;
    c01 += e0 * e1;
    c11 += e1 * e1;
  }
  c00 /= n;
  c01 /= n;
  c11 /= n;
  CHECK(c00 == doctest::Approx(0.0025).epsilon(0.05));
  CHECK(c11 == doctest::Approx(0.0025).epsilon(0.05));
  CHECK(c01 == doctest::Approx(0.0020).epsilon(0.05));
}

TEST_CASE("empirical_batch: valid indices, deterministic, no replacement") {
  data::SyntheticSpec spec;
  spec.generated_per_step = 25;
  spec.observed_per_step = 25;
  auto d = data::gen_synthetic(spec, 3);
  Batch b1 = data::empirical_batch(d.observed, 1, 10, 99);
  Batch b2 = data::empirical_batch(d.observed, 1, 10, 99);
  Batch b3 = data::empirical_batch(d.observed, 1, 10, 100);
  CHECK(b1.data == b2.data);
  CHECK(b1.data != b3.data);
  // every drawn row exists in the source bag; rows are distinct
  const Batch& src = d.observed.batches[1];
  std::set<std::size_t> matched;
  for (std::size_t i = 0; i < b1.count; ++i) {
    bool found = false;
    for (std::size_t k = 0; k < src.count; ++k) {
      if (matched.count(k)) continue;
      if (std::equal(b1.row(i), b1.row(i) + 2, src.row(k))) {
        matched.insert(k);
        found = true;
        break;
      }
    }
    CHECK(found);
  }
  CHECK_THROWS_AS(data::empirical_batch(d.observed, 1, 26, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(data::empirical_batch(d.observed, 9, 5, 1),
                  std::out_of_range);
}

TEST_CASE("subsample statistics track the full bag") {
  data::SyntheticSpec spec;
  spec.generated_per_step = 2000;
  spec.observed_per_step = 1000;
  spec.num_obs_times = 2;
  auto d = data::gen_synthetic(spec, 7);
  for (int t = 0; t < 2; ++t) {
    double full_mean = 0, sub_mean = 0;
    const Batch& full = d.observed_full.batches[t];
    const Batch& sub = d.observed.batches[t];
    for (std::size_t i = 0; i < full.count; ++i) full_mean += full.row(i)[0];
    for (std::size_t i = 0; i < sub.count; ++i) sub_mean += sub.row(i)[0];
    full_mean /= full.count;
    sub_mean /= sub.count;
    CHECK(std::abs(full_mean - sub_mean) < 0.05);
  }
}

TEST_CASE("drop_timestep and prefix") {
  data::SyntheticSpec spec;
  spec.generated_per_step = 10;
  spec.observed_per_step = 5;
  auto d = data::gen_synthetic(spec, 2);
  auto gapped = data::drop_timestep(d.observed, 2);
  CHECK(gapped.times == std::vector<int>{0, 1, 3});
  CHECK(gapped.gap == 2);
  CHECK(!gapped.has_time(2));
  CHECK_THROWS_AS(gapped.at_time(2), std::out_of_range);
  CHECK_THROWS_AS(data::drop_timestep(gapped, 2), std::out_of_range);

  auto pre = data::prefix(d.observed, 1);
  CHECK(pre.times == std::vector<int>{0, 1});
  CHECK(pre.batches[1].data == d.observed.batches[1].data);
}

TEST_CASE("CSV round trip preserves values bit-exactly") {
  data::SyntheticSpec spec;
  spec.generated_per_step = 12;
  spec.observed_per_step = 6;
  auto d = data::gen_synthetic(spec, 21);
  std::ostringstream os;
  data::save_csv(d.observed, os);
  std::istringstream is(os.str());
  auto back = data::load_csv(is, "mem");
  REQUIRE(back.dim == d.observed.dim);
  REQUIRE(back.times == d.observed.times);
  for (std::size_t k = 0; k < back.batches.size(); ++k)
    CHECK(back.batches[k].data == d.observed.batches[k].data);
}

TEST_CASE("CSV loader error reporting") {
  {
    std::istringstream is("x,y\n1,2\n");
    CHECK_THROWS_WITH_AS(data::load_csv(is, "f"), doctest::Contains("header"),
                         std::runtime_error);
  }
  {
    std::istringstream is("t,dim_0,dim_1\n0,1.0\n");
    CHECK_THROWS_WITH_AS(data::load_csv(is, "f"),
                         doctest::Contains("line 2"), std::runtime_error);
  }
  {
    std::istringstream is("t,dim_0\n0,1.0\n1,abc\n");
    CHECK_THROWS_WITH_AS(data::load_csv(is, "f"),
                         doctest::Contains("line 3"), std::runtime_error);
  }
  {
    // rows out of order are grouped and sorted by t
    std::istringstream is("t,dim_0\n1,5.0\n0,3.0\n1,6.0\n");
    auto s = data::load_csv(is, "f");
    CHECK(s.times == std::vector<int>{0, 1});
    CHECK(s.batches[0].data == std::vector<double>{3.0});
    CHECK(s.batches[1].data == std::vector<double>{5.0, 6.0});
  }
}
