#include "dqrp/error.hpp"
#include "dqrp/rng.hpp"
#include "dqrp/train.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace dqrp;

namespace {

TrainConfig small_config(std::uint64_t seed, Algorithm alg = Algorithm::FreshXi) {
  TrainConfig c;
  c.algorithm = alg;
  c.epochs = 5;
  c.batch_size = 32;
  c.hidden = {16, 16};
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("minibatches") {
  const auto b4 = sample_minibatches(4, 2, 1);
  REQUIRE(b4.size() == 2);
  std::set<std::size_t> seen;
  for (const auto& b : b4) {
    CHECK(b.size() == 2);
    seen.insert(b.begin(), b.end());
  }
  CHECK(seen == std::set<std::size_t>{0, 1, 2, 3});

  const auto b5 = sample_minibatches(5, 2, 9);
  REQUIRE(b5.size() == 3);
  CHECK(b5[0].size() == 2);
  CHECK(b5[1].size() == 2);
  CHECK(b5[2].size() == 1);

  CHECK(sample_minibatches(100, 7, 42) == sample_minibatches(100, 7, 42));
  CHECK(sample_minibatches(100, 7, 42) != sample_minibatches(100, 7, 43));

  for (std::uint64_t s = 0; s < 20; ++s) {
    std::vector<std::size_t> all;
    for (const auto& b : sample_minibatches(37, 5, s)) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> want(37);
    for (std::size_t i = 0; i < 37; ++i) want[i] = i;
    CHECK(all == want);
  }

  CHECK_THROWS_AS(sample_minibatches(4, 5, 0), ConfigError);
  CHECK_THROWS_AS(sample_minibatches(4, 0, 0), ConfigError);
}

TEST_CASE("zero epochs return the initial network") {
  const Dataset data = generate(ModelSpec::make(ModelKind::Wave), 64, 1);
  for (Algorithm alg : {Algorithm::FixedXi, Algorithm::FreshXi}) {
    TrainConfig c = small_config(5, alg);
    c.epochs = 0;
    const TrainResult r = train(data, c);
    CHECK(r.network == init_network(NetworkShape::for_covariates(1, c.hidden), 5));
    CHECK(r.history.empty());
    CHECK(r.steps == 0);
  }
}

TEST_CASE("training is reproducible") {
  const Dataset data = generate(ModelSpec::make(ModelKind::Triangle), 100, 2);
  for (Algorithm alg : {Algorithm::FixedXi, Algorithm::FreshXi}) {
    const TrainResult a = train(data, small_config(7, alg));
    const TrainResult b = train(data, small_config(7, alg));
    CHECK(a.network == b.network);
    CHECK(history_to_csv(a.history) == history_to_csv(b.history));
    const TrainResult c = train(data, small_config(8, alg));
    CHECK_FALSE(a.network == c.network);
  }
  CHECK_FALSE(train(data, small_config(7, Algorithm::FixedXi)).network ==
              train(data, small_config(7, Algorithm::FreshXi)).network);
}

TEST_CASE("xi draw counts") {
  const Dataset data = generate(ModelSpec::make(ModelKind::Wave), 100, 3);
  const TrainConfig c = small_config(1);  // m = 32 -> batches 32, 32, 32, 4
  const TrainResult one = train_algorithm1(data, c);
  CHECK(one.xi_draws == 100);
  CHECK(one.steps == 5 * 4);
  const TrainResult two = train_algorithm2(data, c);
  CHECK(two.xi_draws == 5 * 100);
  CHECK(two.steps == 5 * 4);
  CHECK(one.history.size() == 5);
  for (std::size_t e = 0; e < one.history.size(); ++e) CHECK(one.history[e].epoch == e + 1);
}

TEST_CASE("training configuration errors") {
  const Dataset data = generate(ModelSpec::make(ModelKind::Wave), 20, 3);
  TrainConfig c = small_config(1);
  c.batch_size = 21;
  CHECK_THROWS_AS(train(data, c), ConfigError);
  c.batch_size = 0;
  CHECK_THROWS_AS(train(data, c), ConfigError);
  c = small_config(1);
  c.lambda = -1.0;
  CHECK_THROWS_AS(train(data, c), ConfigError);
  c = small_config(1);
  c.hidden = {};
  CHECK_THROWS_AS(train(data, c), ConfigError);
}

TEST_CASE("lambda defaults to log n and zero lambda leaves the penalty unweighted") {
  TrainConfig c;
  CHECK(c.lambda_for(512) == doctest::Approx(std::log(512.0)));
  c.lambda = 0.0;
  CHECK(c.lambda_for(512) == 0.0);

  const Dataset data = generate(ModelSpec::make(ModelKind::Wave), 64, 4);
  TrainConfig z = small_config(2);
  z.lambda = 0.0;
  const TrainResult r = train(data, z);
  for (const auto& h : r.history) {
    CHECK(std::isfinite(h.empirical_penalty));
    CHECK(h.penalized_risk == h.empirical_risk);
  }
}

TEST_CASE("history csv") {
  const std::vector<EpochRecord> h{{1, 0.5, 0.25, 1.0}, {2, 0.125, 0.0, 0.125}};
  CHECK(history_to_csv(h) ==
        "epoch,empirical_risk,empirical_penalty,penalized_risk\n1,0.5,0.25,1\n2,0.125,0,0.125\n");
}

TEST_CASE("wave training with defaults makes progress") {
  const Dataset data = generate(ModelSpec::make(ModelKind::Wave), 512, 11);
  TrainConfig c;
  c.seed = 11;
  const TrainResult r = train(data, c);
  REQUIRE(r.history.size() == 200);
  CHECK(r.history.back().penalized_risk < r.history.front().penalized_risk);
}
