#include <doctest.h>

#include <cmath>
#include <random>

#include "treemg/codec.hpp"

using namespace treemg;

TEST_CASE("encodeValue on dyadic and irrational inputs") {
  SUBCASE("0.625 at two bytes per attribute is exact") {
    auto e = encodeValue(0.625, 2);
    REQUIRE(e);
    CHECK(e->m == 80);
    CHECK(int(e->e) == -7);
    CHECK_FALSE(e->negative);
    CHECK(decodeValue(*e, 2) == 0.625);
  }
  SUBCASE("zero encodes to the zero pair") {
    auto e = encodeValue(0.0, 4);
    REQUIRE(e);
    CHECK(e->m == 0);
    CHECK(int(e->e) == 0);
    CHECK(decodeValue(*e, 4) == 0.0);
  }
  SUBCASE("one third at three bytes") {
    auto e = encodeValue(1.0 / 3.0, 3);
    REQUIRE(e);
    CHECK(int(e->e) == -16);
    CHECK(std::abs(decodeValue(*e, 3) - 1.0 / 3.0) <= std::ldexp(1.0, int(e->e) - 1));
  }
  SUBCASE("negative values carry the sign through the reserved bit") {
    auto e = encodeValue(-0.625, 2);
    REQUIRE(e);
    CHECK(e->negative);
    CHECK(decodeValue(*e, 2) == -0.625);
  }
}

TEST_CASE("codec round-trip bound and monotonicity over 1e5 random values") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  int checked = 0;
  for (int rep = 0; rep < 100000; ++rep) {
    const double x = dist(rng);
    double prevErr = -1.0;
    for (int bpa = 2; bpa <= 8; ++bpa) {
      auto e = encodeValue(x, bpa);
      REQUIRE(e);
      const double err = std::abs(decodeValue(*e, bpa) - x);
      REQUIRE(err <= std::ldexp(1.0, int(e->e) - 1));
      if (prevErr >= 0.0) REQUIRE(err <= prevErr);
      prevErr = err;
    }
    ++checked;
  }
  CHECK(checked == 100000);
}

TEST_CASE("encodeStencil picks the smallest sufficient bpa") {
  SUBCASE("all-zero stencils need no payload") {
    const CompressedStencil c = encodeStencil(std::vector<double>(9, 0.0), 1e-8);
    CHECK(c.bpa == 0);
    CHECK(c.payload.empty());
  }
  SUBCASE("values below the tolerance need no payload") {
    const CompressedStencil c = encodeStencil(std::vector<double>(9, 1e-9), 1e-8);
    CHECK(c.bpa == 0);
  }
  SUBCASE("dyadic entries compress to two bytes exactly") {
    std::vector<double> v = {0.625, -0.625, 0.625, -0.625};
    const CompressedStencil c = encodeStencil(v, 1e-8);
    CHECK(c.bpa == 2);
    const auto back = decodeStencil(c, 4);
    for (int k = 0; k < 4; ++k) CHECK(back[k] == v[k]);
  }
  SUBCASE("random stencils: error bound and minimality") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> v(9);
      for (auto& x : v) x = dist(rng);
      const double eps = 1e-8;
      const CompressedStencil c = encodeStencil(v, eps);
      REQUIRE(c.bpa >= 2);
      const auto back = decodeStencil(c, 9);
      for (int k = 0; k < 9; ++k) REQUIRE(std::abs(back[k] - v[k]) <= eps);
      // minimality: one byte less must violate the tolerance for some entry
      if (c.bpa > 2) {
        bool smallerWorks = true;
        for (int k = 0; k < 9 && smallerWorks; ++k) {
          auto e = encodeValue(v[k], c.bpa - 1);
          if (!e || std::abs(decodeValue(*e, c.bpa - 1) - v[k]) > eps) smallerWorks = false;
        }
        REQUIRE_FALSE(smallerWorks);
      }
    }
  }
  SUBCASE("payloads are bit-stable across encodings") {
    std::vector<double> v = {0.1, -0.2, 0.3, 1.0 / 3.0, -7e-3};
    const CompressedStencil a = encodeStencil(v, 1e-10);
    const CompressedStencil b = encodeStencil(v, 1e-10);
    CHECK(a.bpa == b.bpa);
    CHECK(a.payload == b.payload);
  }
  SUBCASE("malformed payload length is rejected") {
    CompressedStencil c;
    c.bpa = 2;
    c.payload.assign(5, 0);  // not a multiple of bpa * entries
    CHECK_THROWS(decodeStencil(c, 9));
  }
}

TEST_CASE("hierarchical representation round trip") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<double> op(25), ref(25);
  for (auto& x : op) x = dist(rng);
  for (auto& x : ref) x = dist(rng);
  const auto hat = hierarchize(op, ref);
  const auto back = dehierarchize(hat, ref);
  for (int k = 0; k < 25; ++k) CHECK(back[k] == doctest::Approx(op[k]).epsilon(1e-15));
  SUBCASE("operator equal to its reference hierarchizes to zero") {
    const auto zero = hierarchize(ref, ref);
    for (double v : zero) CHECK(v == 0.0);
  }
}

TEST_CASE("bpa tag packing uses nine bits") {
  for (int a : {0, 2, 5, 8})
    for (int p : {0, 2, 8})
      for (int r : {0, 3, 8}) {
        const std::uint16_t tags = packBpaTags(a, p, r);
        CHECK(tags < 512);  // 9 bits
        int ua, up, ur;
        unpackBpaTags(tags, ua, up, ur);
        CHECK(ua == a);
        CHECK(up == p);
        CHECK(ur == r);
      }
  CHECK(packBpaTags(0, 0, 0) == 0);
}
