#include <doctest.h>

#include <stdexcept>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ringflow/ring.hpp"
#include "ringflow/rng.hpp"

using namespace ringflow;

namespace {

Snapshot make_snapshot(std::vector<double> thetas, std::vector<double> speeds) {
  Snapshot s;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    s.vehicles.push_back({thetas[i], speeds[i]});
    s.observed.push_back(1);
  }
  return s;
}

Snapshot random_snapshot(RngStream& rng, int n) {
  Snapshot s;
  for (int i = 0; i < n; ++i) {
    s.vehicles.push_back({rng.uniform(0.0, kTwoPi), rng.uniform(10.5, 14.0)});
    s.observed.push_back(1);
  }
  return s;
}

}  // namespace

TEST_CASE("angular gaps: equally spaced vehicles") {
  const RingGeometry geom{100.0};
  std::vector<double> thetas;
  for (int k = 0; k < 5; ++k) thetas.push_back(k * kTwoPi / 5.0);
  const auto gaps = angular_gaps(make_snapshot(thetas, {12, 12, 12, 12, 12}),
                                 geom);
  REQUIRE(gaps.size() == 5);
  for (double g : gaps) CHECK(g == doctest::Approx(125.66370614359172).epsilon(1e-12));
}

TEST_CASE("angular gaps: two opposite vehicles") {
  const RingGeometry geom{100.0};
  const auto gaps =
      angular_gaps(make_snapshot({0.0, 3.141592653589793}, {12, 12}), geom);
  CHECK(gaps[0] == doctest::Approx(314.15926535897933).epsilon(1e-12));
  CHECK(gaps[1] == doctest::Approx(314.15926535897933).epsilon(1e-12));
}

TEST_CASE("angular gaps: wrap-around pair") {
  const RingGeometry geom{100.0};
  const auto gaps = angular_gaps(make_snapshot({0.1, 6.2}, {12, 12}), geom);
  CHECK(gaps[0] == doctest::Approx(610.0).epsilon(1e-12));
  CHECK(gaps[1] == doctest::Approx(18.318530717958568).epsilon(1e-9));
}

TEST_CASE("angular gaps: errors") {
  const RingGeometry geom{100.0};
  CHECK_THROWS_AS(angular_gaps(make_snapshot({1.0}, {12}), geom),
                  std::invalid_argument);
  CHECK_THROWS_AS(angular_gaps(make_snapshot({1.0, 1.0}, {12, 12}), geom),
                  std::invalid_argument);
}

TEST_CASE("angular gaps: conservation and permutation robustness") {
  const RingGeometry geom{100.0};
  RngStream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(8));
    Snapshot snap = random_snapshot(rng, n);
    const auto gaps = angular_gaps(snap, geom);
    const double total = std::accumulate(gaps.begin(), gaps.end(), 0.0);
    CHECK(std::abs(total - geom.circumference()) / geom.circumference() <
          1e-9);

    Snapshot shuffled = snap;
    std::reverse(shuffled.vehicles.begin(), shuffled.vehicles.end());
    auto a = gaps;
    auto b = angular_gaps(shuffled, geom);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("step dynamics: displacement, wrap and clamp") {
  const RingGeometry geom{100.0};
  const ActionBounds bounds;
  ActionBounds wide = bounds;  // the displacement examples sit below v_min
  wide.v_min = 0.0;
  SUBCASE("constant speed displacement") {
    const Snapshot s = make_snapshot({1.0, 4.0}, {10.0, 10.0});
    const Snapshot next = step_dynamics(s, {0.0, 0.0}, 0.1, geom, wide);
    CHECK(next.vehicles[0].theta == doctest::Approx(1.01).epsilon(1e-12));
    CHECK(next.vehicles[0].v == 10.0);
  }
  SUBCASE("theta wraps past two pi") {
    const Snapshot s = make_snapshot({6.28, 1.0}, {10.0, 10.0});
    const Snapshot next = step_dynamics(s, {0.0, 0.0}, 0.1, geom, wide);
    CHECK(next.vehicles[0].theta ==
          doctest::Approx(0.0068146928204138035).epsilon(1e-9));
  }
  SUBCASE("speed clamps at v_max") {
    const Snapshot s = make_snapshot({0.0, 3.0}, {13.95, 12.0});
    const Snapshot next = step_dynamics(s, {0.5, 0.0}, 0.1, geom, bounds);
    CHECK(next.vehicles[0].v == 14.0);
  }
  SUBCASE("control out of bounds throws") {
    const Snapshot s = make_snapshot({0.0, 3.0}, {12.0, 12.0});
    CHECK_THROWS_AS(step_dynamics(s, {0.6, 0.0}, 0.1, geom, bounds),
                    std::invalid_argument);
    CHECK_THROWS_AS(step_dynamics(s, {-1.2, 0.0}, 0.1, geom, bounds),
                    std::invalid_argument);
  }
}

TEST_CASE("dynamics closure under iteration") {
  const RingGeometry geom{100.0};
  const ActionBounds bounds;
  RngStream rng(11);
  Snapshot s = random_snapshot(rng, 5);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> u(5);
    for (auto& x : u) x = rng.uniform(bounds.a_min, bounds.a_max);
    s = step_dynamics(s, u, 0.1, geom, bounds);
    for (const auto& veh : s.vehicles) {
      CHECK(veh.theta >= 0.0);
      CHECK(veh.theta < kTwoPi);
      CHECK(veh.v >= bounds.v_min);
      CHECK(veh.v <= bounds.v_max);
    }
  }
}

TEST_CASE("speed limit lookup") {
  SUBCASE("left-closed convention") {
    SpeedLimitProfile p{{{0.0, 12.0}, {3.141592653589793, 13.0}}};
    validate_profile(p);
    CHECK(speed_limit_at(p, 1.0) == 12.0);
    CHECK(speed_limit_at(p, 3.141592653589793) == 13.0);
  }
  SUBCASE("single segment is constant") {
    SpeedLimitProfile p{{{0.0, 12.5}}};
    CHECK(speed_limit_at(p, 0.0) == 12.5);
    CHECK(speed_limit_at(p, 5.9) == 12.5);
  }
  SUBCASE("angles before the first start wrap onto the last segment") {
    SpeedLimitProfile p{{{1.0, 11.0}, {4.0, 12.0}}};
    CHECK(speed_limit_at(p, 0.5) == 12.0);
    CHECK(speed_limit_at(p, 2.0) == 11.0);
    CHECK(speed_limit_at(p, 5.0) == 12.0);
  }
  SUBCASE("profile validation") {
    CHECK_THROWS_AS(validate_profile(SpeedLimitProfile{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        validate_profile(SpeedLimitProfile{{{2.0, 12.0}, {1.0, 13.0}}}),
        std::invalid_argument);
  }
}

TEST_CASE("observe: headway, relative speed and limits") {
  const RingGeometry geom{100.0};
  const SpeedLimitProfile p{{{0.0, 13.0}}};
  SUBCASE("simple case") {
    const Snapshot s = make_snapshot({0.0, 1.2}, {12.0, 11.0});
    const Observation obs = observe(s, 0, geom, p);
    CHECK(obs.v == 12.0);
    CHECK(obs.v_limit == 13.0);
    CHECK(obs.d_pre == doctest::Approx(120.0).epsilon(1e-12));
    CHECK(obs.dv == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("identical speeds give zero relative speed") {
    const Snapshot s = make_snapshot({0.0, 2.0}, {12.0, 12.0});
    CHECK(observe(s, 0, geom, p).dv == 0.0);
  }
  SUBCASE("wrap-around headway") {
    const Snapshot s = make_snapshot({6.2, 0.1}, {12.0, 12.0});
    CHECK(observe(s, 0, geom, p).d_pre ==
          doctest::Approx(18.318530717958568).epsilon(1e-9));
  }
  SUBCASE("single vehicle has no preceding vehicle") {
    const Snapshot s = make_snapshot({1.0}, {12.0});
    CHECK_THROWS_AS(observe(s, 0, geom, p), std::invalid_argument);
  }
}

TEST_CASE("observation consistency with angular gaps") {
  const RingGeometry geom{100.0};
  const SpeedLimitProfile p{{{0.0, 13.0}}};
  RngStream rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(6));
    const Snapshot s = random_snapshot(rng, n);
    const auto gaps = angular_gaps(s, geom);
    for (int i = 0; i < n; ++i)
      CHECK(observe(s, i, geom, p).d_pre ==
            doctest::Approx(gaps[i]).epsilon(1e-12));
  }
}

TEST_CASE("wrap_angle stays in range") {
  CHECK(wrap_angle(-0.1) == doctest::Approx(kTwoPi - 0.1));
  CHECK(wrap_angle(kTwoPi) == 0.0);
  CHECK(wrap_angle(7.0) == doctest::Approx(7.0 - kTwoPi));
}
