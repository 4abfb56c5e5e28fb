#include <doctest.h>

#include "oracles/gradcheck.hpp"

TEST_CASE("analytic gradients match central differences in double precision") {
  const auto outcomes = gradcheck::run_all(1, 6);
  CHECK(outcomes.size() >= 20);
  for (const auto& o : outcomes) {
    INFO(o.name << " checked " << o.coordinates << " coordinates");
    CHECK(o.coordinates > 0);
    CHECK(o.max_rel_error <= 1e-4);
  }
}

TEST_CASE("the checker notices a wrong gradient") {
  // A deliberately scaled derivative of x^2 at 3 must be flagged.
  double x = 3.0;
  const double numeric = oracle::central_difference(x, 1e-6, [&] { return x * x; });
  CHECK(oracle::relative_error(6.0, numeric) < 1e-8);
  CHECK(oracle::relative_error(6.0 * 1.001, numeric) > 1e-4);
  CHECK(x == 3.0);
}
