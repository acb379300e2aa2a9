#include "dqrp/error.hpp"
#include "dqrp/simdata.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

using namespace dqrp;

namespace {

constexpr ModelKind kSix[] = {ModelKind::UniLinear,   ModelKind::Wave,
                              ModelKind::Triangle,    ModelKind::MultiLinear,
                              ModelKind::SingleIndex, ModelKind::Additive};

double empirical_quantile(std::vector<double> v, double tau) {
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(v.size()))) - 1;
  return v[k];
}

}  // namespace

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(std::abs(normal_quantile(0.975) - 1.959963984540054) <= 1e-12);
  CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
  CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
  CHECK_THROWS_AS(normal_quantile(-0.2), DomainError);

  const boost::math::normal_distribution<double> ref;
  double worst = 0.0;
  std::vector<double> ps;
  for (int e = 10; e >= 1; --e) {
    for (double m : {1.0, 2.5, 5.0}) ps.push_back(m * std::pow(10.0, -e));
  }
  for (int i = 1; i < 1000; ++i) ps.push_back(i / 1000.0);
  for (double p : ps) {
    worst = std::max(worst, std::abs(normal_quantile(p) - boost::math::quantile(ref, p)));
    worst = std::max(worst, std::abs(normal_quantile(1.0 - p) - boost::math::quantile(ref, 1.0 - p)));
    const double q = 1.0 - p;  // 1 - q is exact, p itself may not be
    CHECK(normal_quantile(1.0 - q) == doctest::Approx(-normal_quantile(q)).epsilon(1e-9));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("student t quantile") {
  CHECK(student_t_quantile(0.5, 3.0) == 0.0);
  CHECK(std::abs(student_t_quantile(0.95, 3.0) - 2.3534) <= 1e-3);
  CHECK(std::abs(student_t_quantile(0.9, 1e6) - normal_quantile(0.9)) <= 1e-3);
  CHECK_THROWS_AS(student_t_quantile(0.5, 0.5), DomainError);
  CHECK_THROWS_AS(student_t_quantile(1.0, 3.0), DomainError);

  for (double nu : {1.0, 2.0, 3.0, 7.5, 30.0}) {
    const boost::math::students_t_distribution<double> ref(nu);
    for (int i = 1; i < 200; ++i) {
      const double p = i / 200.0;
      const double q = student_t_quantile(p, nu);
      CHECK(std::abs(q - boost::math::quantile(ref, p)) <= 1e-8 * std::max(1.0, std::abs(q)));
      CHECK(std::abs(student_t_cdf(q, nu) - p) <= 1e-8);
    }
    for (double p : {1e-6, 1e-4, 1 - 1e-4}) {
      CHECK(std::abs(student_t_cdf(student_t_quantile(p, nu), nu) - p) <= 1e-8);
    }
  }
}

TEST_CASE("oracle examples") {
  const ModelSpec wave = ModelSpec::make(ModelKind::Wave);
  const ModelSpec tri = ModelSpec::make(ModelKind::Triangle);
  const std::vector<double> half{0.5};
  CHECK(std::abs(oracle_quantile(wave, half, 0.5)) <= 1e-12);
  CHECK(oracle_quantile(tri, half, 0.5) == doctest::Approx(4.0).epsilon(1e-15));
  const std::vector<double> eighth{0.125};
  const double expected = 0.25 + std::sin(0.125 * std::numbers::pi) * 1.6448536269514722;
  CHECK(oracle_quantile(wave, eighth, 0.95) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(expected - 0.8795) <= 1e-4);
  CHECK_THROWS_AS(oracle_quantile(ModelSpec::make(ModelKind::Additive), half, 0.5), UsageError);
  CHECK(ModelSpec::make(ModelKind::MultiLinear).dim == 8);
  CHECK(ModelSpec::make(ModelKind::Triangle).dim == 1);
  CHECK(parse_model_kind("Wave") == ModelKind::Wave);
  CHECK(parse_model_kind("single-index") == ModelKind::SingleIndex);
  CHECK_THROWS_AS(parse_model_kind("bogus"), ConfigError);

  // Additive at a hand-picked point.
  std::vector<double> x{0.2, 0.7, 0.5, 0.1, 0.3, 0.4, 0.9, 0.6};
  double bx = 0.0;
  for (std::size_t i = 0; i < 8; ++i) bx += kCoefB[i] * x[i];
  const double manual = 0.6 + 4 * 0.04 + 2 * 1.0 - 5 * 0.4 + std::exp(0.1 * (bx - 0.5)) * 1.6448536269514722;
  CHECK(oracle_quantile(ModelSpec::make(ModelKind::Additive), x, 0.95) ==
        doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("oracles are nondecreasing in tau") {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (ModelKind kind : kSix) {
    const ModelSpec m = ModelSpec::make(kind);
    std::vector<double> taus;
    for (int j = 1; j <= 50; ++j) taus.push_back(j / 51.0);
    int violations = 0;
    for (int i = 0; i < 50; ++i) {
      std::vector<double> x(m.dim);
      if (m.dim == 1) {
        x[0] = i / 49.0;
      } else {
        for (double& v : x) v = u(gen);
      }
      double prev = -INFINITY;
      for (double t : taus) {
        const double q = oracle_quantile(m, x, t);
        if (q < prev) ++violations;
        prev = q;
      }
      for (int k = 0; k < 20; ++k) {
        double t1 = 0.001 + 0.998 * u(gen), t2 = 0.001 + 0.998 * u(gen);
        if (t1 > t2) std::swap(t1, t2);
        if (oracle_quantile(m, x, t1) > oracle_quantile(m, x, t2)) ++violations;
      }
    }
    CHECK_MESSAGE(violations == 0, model_name(kind));
  }
}

TEST_CASE("monte carlo quantile consistency with independent noise samplers") {
  // Responses are rebuilt from std:: normal and Student-t samplers, so the
  // empirical quantiles check the closed forms rather than the generator.
  std::mt19937_64 gen(1234);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t T = 100000;
  for (ModelKind kind : kSix) {
    const ModelSpec m = ModelSpec::make(kind);
    std::vector<double> x(m.dim);
    for (double& v : x) v = 0.1 + 0.8 * u(gen);
    const double loc = oracle_quantile(m, x, 0.5);
    const double scale = oracle_quantile(m, x, 0.8413447460685429) - loc;  // Phi(1)
    std::vector<double> ys(T);
    const bool t_noise = kind == ModelKind::UniLinear || kind == ModelKind::MultiLinear;
    std::normal_distribution<double> z;
    std::student_t_distribution<double> t(m.nu);
    for (auto& y : ys) y = t_noise ? loc + t(gen) : loc + scale * z(gen);
    for (double tau : {0.25, 0.5, 0.75}) {
      CHECK_MESSAGE(std::abs(empirical_quantile(ys, tau) - oracle_quantile(m, x, tau)) <= 0.02,
                    model_name(kind) << " tau " << tau);
    }
  }
}

TEST_CASE("generate") {
  const ModelSpec wave = ModelSpec::make(ModelKind::Wave);
  CHECK_THROWS_AS(generate(wave, 0, 1), UsageError);
  const Dataset a = generate(wave, 512, 1);
  const Dataset b = generate(wave, 512, 1);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK_FALSE(a.y == generate(wave, 512, 2).y);
  CHECK(a.size() == 512);
  CHECK(a.x.minCoeff() > 0.0);
  CHECK(a.x.maxCoeff() < 1.0);
  CHECK(dataset_to_csv(a) == dataset_to_csv(b));

  const Dataset add = generate(ModelSpec::make(ModelKind::Additive), 100, 3);
  CHECK(add.dim() == 8);
  CHECK(add.x.allFinite());
  CHECK(add.y.allFinite());

  // Standardized noise Phi^{-1}(U) has median 0.
  const Dataset big = generate(wave, 1000000, 5);
  std::vector<double> noise;
  noise.reserve(big.size());
  for (Eigen::Index i = 0; i < big.x.rows(); ++i) {
    const double x = big.x(i, 0);
    const double s = std::abs(std::sin(std::numbers::pi * x));
    if (s < 1e-3) continue;
    noise.push_back((big.y(i) - 2.0 * x * std::sin(4.0 * std::numbers::pi * x)) / s);
  }
  CHECK(std::abs(empirical_quantile(noise, 0.5)) <= 0.01);
}

TEST_CASE("csv loading") {
  const std::string text = "age,bmd\n10,0.1\n15.5,-0.02\n25.55,0.3\n";
  const Dataset d = parse_csv(text, {"age"}, "bmd", false);
  CHECK(d.size() == 3);
  CHECK(d.x(1, 0) == 15.5);
  CHECK(d.y(1) == -0.02);
  CHECK(d.scaling.empty());

  try {
    parse_csv("a,y\n1,2\n3,oops\n", {}, "y", false);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == 2);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_csv("", {}, "y", false), ParseError);
  CHECK_THROWS_AS(parse_csv("a,b\n1,2\n", {}, "y", false), ParseError);
  CHECK_THROWS_AS(parse_csv("a,y\n", {}, "y", false), ParseError);
  CHECK_THROWS_AS(parse_csv("a,y\n1\n", {}, "y", false), ParseError);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", {}, "y"), ParseError);

  const Dataset s = parse_csv("age,y\n9.4,0\n25.55,1\n17.475,2\n", {"age"}, "y", true);
  REQUIRE(s.scaling.size() == 1);
  CHECK(s.scaling[0].min == 9.4);
  CHECK(s.scaling[0].max == 25.55);
  CHECK(s.x(0, 0) == 0.0);
  CHECK(s.x(1, 0) == 1.0);
  CHECK(s.x(2, 0) == doctest::Approx((17.475 - 9.4) / (25.55 - 9.4)).epsilon(1e-15));
  CHECK(s.scaling[0].invert(s.x(2, 0)) == doctest::Approx(17.475).epsilon(1e-15));
}

TEST_CASE("dataset round trip through csv") {
  const Dataset a = generate(ModelSpec::make(ModelKind::SingleIndex), 50, 9);
  const auto dir = std::filesystem::temp_directory_path() / "dqrp_simdata_test";
  const std::string path = (dir / "single.csv").string();
  write_dataset(path, a);
  CHECK(std::filesystem::exists(metadata_path(path)));
  const Dataset b = load_csv(path, {}, "y", false);
  CHECK(b.x == a.x);
  CHECK(b.y == a.y);
  CHECK(b.covariate_names == a.covariate_names);
  std::filesystem::remove_all(dir);
}
