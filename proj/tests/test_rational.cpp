#include <doctest.h>

#include <stdexcept>

#include "resdim/common.hpp"
#include "resdim/rational.hpp"

using resdim::Rational;

TEST_SUITE("rational") {
  TEST_CASE("arithmetic stays reduced") {
    Rational a(1, 6), b(1, 3);
    CHECK((a + b) == Rational(1, 2));
    CHECK((b - a) == Rational(1, 6));
    CHECK((a * b) == Rational(1, 18));
    CHECK((a / b) == Rational(1, 2));
    CHECK(Rational(4, -8) == Rational(-1, 2));
    CHECK(Rational(-1, 2).den() == 2);
    CHECK(Rational(3, 2).pow(-2) == Rational(4, 9));
  }

  TEST_CASE("ordering and formatting") {
    CHECK(Rational(1, 3) < Rational(1, 2));
    CHECK(Rational(-1, 2) < Rational(-1, 3));
    CHECK(Rational(5, 10).str() == "1/2");
    CHECK(Rational(7).str() == "7");
    CHECK(Rational(-3, 9).str() == "-1/3");
  }

  TEST_CASE("parse") {
    CHECK(Rational::parse("3/12") == Rational(1, 4));
    CHECK(Rational::parse("-0.25") == Rational(-1, 4));
    CHECK(Rational::parse("5") == Rational(5));
    CHECK_THROWS_AS(Rational::parse(""), std::invalid_argument);
  }

  TEST_CASE("overflow and zero division are reported") {
    Rational big(INT64_MAX / 2);
    CHECK_THROWS_AS(big * big, std::overflow_error);
    CHECK_THROWS_AS(Rational(1, 0), std::domain_error);
    CHECK_THROWS_AS(Rational(1) / Rational(0), std::domain_error);
    CHECK_THROWS_AS(resdim::ipow(10, 30), std::overflow_error);
  }

  TEST_CASE("fmt pins 17 significant digits") {
    CHECK(resdim::fmt(0.1) == "0.10000000000000001");
    CHECK(resdim::fmt(2.0) == "2");
  }

  TEST_CASE("ls_slope") {
    CHECK(resdim::ls_slope({1, 2, 3}, {2, 4, 6}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(resdim::ls_slope({1}, {1}), std::invalid_argument);
  }
}
