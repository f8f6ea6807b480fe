#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rfqmm/config.hpp"
#include "rfqmm/grid.hpp"

using namespace rfqmm;

TEST_CASE("grid accessors") {
    GridSpec g;
    g.q_max = 10.0;
    g.q_step = 0.5;
    g.n_r = 5;
    g.t_block = 0.02;
    g.n_t = 400;
    CHECK(g.n_q() == 41);
    CHECK(g.q_index_of_zero() == 20);
    CHECK(g.q_value(0) == doctest::Approx(-10.0));
    CHECK(g.q_value(20) == doctest::Approx(0.0));
    CHECK(g.q_value(40) == doctest::Approx(10.0));
    CHECK(g.r_value(0) == 0.0);
    CHECK(g.r_value(4) == 1.0);
    CHECK(g.r_value(1) == doctest::Approx(0.25));
    CHECK(g.dt() == doctest::Approx(5e-5));
}

TEST_CASE("grid validation names the offending field") {
    const ModelParams mp = default_config().model;
    GridSpec g;
    g.t_block = 0.01;
    g.n_t = 1000;

    SUBCASE("valid baseline") { CHECK_NOTHROW(g.validate(mp)); }
    SUBCASE("q_max not a multiple of q_step") {
        g.q_max = 50.5;
        CHECK_THROWS_WITH_AS(g.validate(mp), doctest::Contains("q_max"),
                             std::invalid_argument);
    }
    SUBCASE("ladder size off the inventory grid") {
        g.q_step = 3.0;
        g.q_max = 51.0;
        CHECK_THROWS_WITH_AS(g.validate(mp), doctest::Contains("q_step"),
                             std::invalid_argument);
    }
    SUBCASE("too few score nodes") {
        g.n_r = 1;
        CHECK_THROWS_WITH_AS(g.validate(mp), doctest::Contains("n_r"),
                             std::invalid_argument);
    }
    SUBCASE("unstable explicit step") {
        g.n_t = 20;  // dt = 5e-4: far past the stability bound
        CHECK_THROWS_WITH_AS(g.validate(mp), doctest::Contains("n_t"),
                             std::invalid_argument);
    }
}

TEST_CASE("score profile interpolation") {
    GridSpec g;
    g.n_r = 5;  // nodes at 0, 0.25, 0.5, 0.75, 1
    const std::vector<double> profile{1.0, 2.0, 4.0, 8.0, 16.0};
    for (int i = 0; i < 5; ++i)
        CHECK(interp_r(g, profile, g.r_value(i)) == doctest::Approx(profile[i]));
    CHECK(interp_r(g, profile, 0.125) == doctest::Approx(1.5));
    CHECK(interp_r(g, profile, 0.9) == doctest::Approx(8.0 + 0.6 * 8.0));
    // Out-of-range queries clamp to the boundary values.
    CHECK(interp_r(g, profile, -0.5) == doctest::Approx(1.0));
    CHECK(interp_r(g, profile, 1.5) == doctest::Approx(16.0));
}

TEST_CASE("control field layout") {
    ControlField cf;
    cf.grid.q_max = 2.0;
    cf.grid.q_step = 1.0;
    cf.grid.n_r = 3;
    cf.n_sizes = 2;
    cf.allocate();
    CHECK(cf.y.size() == 4 * 2 * 5 * 3);
    CHECK(cf.delta.size() == cf.y.size());
    // Freshly allocated fields hold no quotes anywhere.
    for (std::size_t k = 0; k < 2; ++k)
        for (Tier t : {Tier::A, Tier::B})
            for (Side s : {Side::Bid, Side::Ask})
                CHECK_FALSE(cf.present(k, t, s, 0, 0));
    cf.y_at(1, Tier::B, Side::Ask, 3, 2) = 0.25;
    cf.delta_at(1, Tier::B, Side::Ask, 3, 2) = 0.7;
    CHECK(cf.present(1, Tier::B, Side::Ask, 3, 2));
    CHECK_FALSE(cf.present(1, Tier::B, Side::Bid, 3, 2));
    CHECK_FALSE(cf.present(1, Tier::A, Side::Ask, 3, 2));
    CHECK(cf.y_at(1, Tier::B, Side::Ask, 3, 2) == 0.25);
    CHECK(cf.delta_at(1, Tier::B, Side::Ask, 3, 2) == 0.7);
    // Distinct surfaces do not alias.
    cf.y_at(0, Tier::A, Side::Bid, 3, 2) = 0.5;
    CHECK(cf.y_at(1, Tier::B, Side::Ask, 3, 2) == 0.25);
}
