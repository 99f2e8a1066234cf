#include <doctest.h>

#include <cmath>
#include <random>

#include "treemg/discretization.hpp"

using namespace treemg;

namespace {

// independent element-matrix oracle: 3-point Gauss integration of the
// bilinear shape gradient products with midpoint-frozen coefficients
ElementMatrix oracleDiffusionMatrix(const ProblemSpec& p, const CellKey& cell, int d) {
  REQUIRE(d == 2);
  const double h = 1.0 / ipow(3, cell.level);
  const double x0 = cell.index[0] * h, y0 = cell.index[1] * h;
  const Point mid{x0 + 0.5 * h, y0 + 0.5 * h, 0};
  const Coefficients co = p.eval(mid);

  const double gp[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
  const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

  auto shapeGrad = [&](int corner, double xi, double eta, double& gx, double& gy) {
    const int bx = corner & 1, by = (corner >> 1) & 1;
    const double sx = bx ? xi : 1.0 - xi;
    const double sy = by ? eta : 1.0 - eta;
    const double dx = bx ? 1.0 : -1.0;
    const double dy = by ? 1.0 : -1.0;
    gx = dx * sy / h;
    gy = sx * dy / h;
  };

  ElementMatrix E(16, 0.0);
  for (int gi = 0; gi < 3; ++gi)
    for (int gj = 0; gj < 3; ++gj) {
      const double w = gw[gi] * gw[gj] * h * h;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double gxi, gyi, gxj, gyj;
          shapeGrad(i, gp[gi], gp[gj], gxi, gyi);
          shapeGrad(j, gp[gi], gp[gj], gxj, gyj);
          E[i * 4 + j] += w * (co.epsilon[0] * gxi * gxj + co.epsilon[1] * gyi * gyj);
        }
    }
  return E;
}

Stencil oracleStencil(const Spacetree& tree, const VertexKey& v, const ProblemSpec& p) {
  const int d = tree.dim();
  Stencil s(pow3(d), 0.0);
  const int n = ipow(3, v.level);
  for (int k = 0; k < pow2(d); ++k) {
    IndexVec cellIdx{0, 0, 0};
    bool valid = true;
    for (int a = 0; a < d; ++a) {
      cellIdx[a] = v.index[a] - 1 + ((k >> a) & 1);
      if (cellIdx[a] < 0 || cellIdx[a] >= n) valid = false;
    }
    if (!valid) continue;
    const CellKey cell{v.level, cellIdx};
    const ElementMatrix E = oracleDiffusionMatrix(p, cell, d);
    int mine = 0;
    for (int a = 0; a < d; ++a)
      if (cellIdx[a] == v.index[a] - 1) mine |= (1 << a);
    for (int j = 0; j < pow2(d); ++j) {
      IndexVec off{0, 0, 0};
      for (int a = 0; a < d; ++a) off[a] = cellIdx[a] + ((j >> a) & 1) - v.index[a];
      s[entryFromOffset(off, 1, d)] += E[mine * pow2(d) + j];
    }
  }
  return s;
}

}  // namespace

TEST_CASE("benchmark coefficient tables") {
  const ProblemSpec jump = ProblemSpec::byName("jump", 2);
  auto cj = jump.eval(Point{0.25, 0.5, 0});
  CHECK(cj.epsilon[0] == 1.0);
  CHECK(cj.epsilon[1] == 1.0);
  CHECK(cj.velocity[0] == 0.0);
  CHECK(cj.rhs == 1.0);

  const ProblemSpec cb = ProblemSpec::byName("checkerboard", 2);
  auto cc = cb.eval(Point{0.75, 0.25, 0});
  CHECK(cc.epsilon[0] == 0.1);
  CHECK(cc.epsilon[1] == 1.0);

  const ProblemSpec circ = ProblemSpec::byName("circle", 2);
  auto ci = circ.eval(Point{0.5, 0.5, 0});
  CHECK(ci.velocity[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(ci.velocity[1] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(ci.rhs == 0.0);
  CHECK(circ.dirichlet(Point{0.0, 0.5, 0}) == doctest::Approx(1.0));
  CHECK(circ.dirichlet(Point{0.0, 0.0, 0}) == doctest::Approx(0.0));
  CHECK(circ.dirichlet(Point{0.5, 0.0, 0}) == 0.0);

  const ProblemSpec sin2 = ProblemSpec::byName("sin", 2);
  auto cs = sin2.eval(Point{0.5, 0.5, 0});
  CHECK(cs.rhs == doctest::Approx(2 * M_PI * M_PI));
}

TEST_CASE("constant-coefficient element matrix matches the classic values") {
  const ProblemSpec p = ProblemSpec::byName("sin", 2);
  // interior cell of a depth-2 grid
  const CellKey cell{2, makeIndex(4, 4)};
  const ElementMatrix E = elementMatrix(p, cell, 2);
  for (int i = 0; i < 4; ++i) CHECK(E[i * 4 + i] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(E[0 * 4 + 1] == doctest::Approx(-1.0 / 6.0).epsilon(1e-13));  // edge neighbour
  CHECK(E[0 * 4 + 2] == doctest::Approx(-1.0 / 6.0).epsilon(1e-13));
  CHECK(E[0 * 4 + 3] == doctest::Approx(-1.0 / 3.0).epsilon(1e-13));  // diagonal neighbour
  // against the quadrature oracle
  const ElementMatrix O = oracleDiffusionMatrix(p, cell, 2);
  for (int k = 0; k < 16; ++k) CHECK(E[k] == doctest::Approx(O[k]).epsilon(1e-12));
}

TEST_CASE("vanishing diffusion with vanishing convection yields a vanishing matrix") {
  const ProblemSpec p = ProblemSpec::byName("circle", 2, 1e-300);
  // midpoint of this cell is the vortex centre where the velocity vanishes
  const ElementMatrix E = elementMatrix(p, CellKey{1, makeIndex(1, 1)}, 2);
  for (double e : E) CHECK(std::abs(e) <= 1e-290);
}

TEST_CASE("element matrices are symmetric without convection") {
  for (const char* name : {"sin", "jump", "checkerboard"}) {
    const ProblemSpec p = ProblemSpec::byName(name, 2);
    const CellKey cell{3, makeIndex(7, 12)};
    const ElementMatrix E = elementMatrix(p, cell, 2);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(E[i * 4 + j] == doctest::Approx(E[j * 4 + i]).epsilon(1e-14));
  }
}

TEST_CASE("rediscretized stencils match the dense oracle assembly") {
  Spacetree t(2, 2);
  SUBCASE("interior sin stencil is resolution independent") {
    const ProblemSpec p = ProblemSpec::byName("sin", 2);
    for (const auto& v : {VertexKey{2, makeIndex(4, 4)}, VertexKey{2, makeIndex(5, 3)},
                          VertexKey{1, makeIndex(1, 1)}}) {
      const Stencil s = rediscretizedStencil(t, v, p);
      const double expect[9] = {-1, -1, -1, -1, 8, -1, -1, -1, -1};
      for (int e = 0; e < 9; ++e)
        CHECK(s[e] == doctest::Approx(expect[e] / 3.0).epsilon(1e-13));
    }
  }
  SUBCASE("boundary vertices carry the identity row") {
    const ProblemSpec p = ProblemSpec::byName("sin", 2);
    const Stencil s = rediscretizedStencil(t, VertexKey{2, makeIndex(0, 5)}, p);
    for (int e = 0; e < 9; ++e) CHECK(s[e] == (e == 4 ? 1.0 : 0.0));
  }
  SUBCASE("jump stencil straddling the interface, zero row sum, oracle row") {
    const ProblemSpec p = ProblemSpec::byName("jump", 2);
    // straddles x1 = 0.5 on level 2: vertices at x = 4/9 and 5/9 around it
    for (const auto& v : {VertexKey{2, makeIndex(4, 4)}, VertexKey{2, makeIndex(5, 4)}}) {
      const Stencil s = rediscretizedStencil(t, v, p);
      const Stencil o = oracleStencil(t, v, p);
      double rowSum = 0.0;
      for (int e = 0; e < 9; ++e) {
        CHECK(s[e] == doctest::Approx(o[e]).epsilon(1e-12));
        rowSum += s[e];
      }
      CHECK(std::abs(rowSum) <= 1e-12);
      double offSum = 0.0;
      for (int e = 0; e < 9; ++e)
        if (e != 4) offSum += s[e];
      CHECK(offSum == doctest::Approx(-s[4]).epsilon(1e-12));
    }
  }
  SUBCASE("checkerboard stencils match the oracle on a 4x4 patch") {
    const ProblemSpec p = ProblemSpec::byName("checkerboard", 2);
    for (int x = 3; x <= 6; ++x)
      for (int y = 3; y <= 6; ++y) {
        const VertexKey v{2, makeIndex(x, y)};
        const Stencil s = rediscretizedStencil(t, v, p);
        const Stencil o = oracleStencil(t, v, p);
        for (int e = 0; e < 9; ++e) CHECK(s[e] == doctest::Approx(o[e]).epsilon(1e-12));
      }
  }
}

TEST_CASE("splitStencil reproduces the cell-wise decomposition") {
  SUBCASE("the printed first part") {
    Stencil s(9);
    for (int e = 0; e < 9; ++e) s[e] = e + 1;  // s_0..s_8 = 1..9
    const auto parts = splitStencil(s, 2);
    // the part of the upper-left cell keeps s6 whole, halves s7 and s3, quarters s4
    const Stencil& ul = parts[0b10];  // cell left in x, up in y
    CHECK(ul[entryFromOffset(makeIndex(-1, 1), 1, 2)] == 7.0);
    CHECK(ul[entryFromOffset(makeIndex(0, 1), 1, 2)] == 8.0 / 2);
    CHECK(ul[entryFromOffset(makeIndex(-1, 0), 1, 2)] == 4.0 / 2);
    CHECK(ul[entryFromOffset(makeIndex(0, 0), 1, 2)] == 5.0 / 4);
    CHECK(ul[entryFromOffset(makeIndex(1, 0), 1, 2)] == 0.0);
    CHECK(ul[entryFromOffset(makeIndex(1, 1), 1, 2)] == 0.0);
    CHECK(ul[entryFromOffset(makeIndex(-1, -1), 1, 2)] == 0.0);
  }
  SUBCASE("all-ones stencil: each part sums to 2.25 and parts reassemble exactly") {
    Stencil ones(9, 1.0);
    const auto parts = splitStencil(ones, 2);
    for (const auto& part : parts) {
      double sum = 0.0;
      for (double v : part) sum += v;
      CHECK(sum == doctest::Approx(2.25));
    }
  }
  SUBCASE("random stencils reassemble exactly") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-3, 3);
    for (int rep = 0; rep < 50; ++rep) {
      for (int d = 2; d <= 3; ++d) {
        Stencil s(pow3(d));
        for (auto& v : s) v = dist(rng);
        const auto parts = splitStencil(s, d);
        CHECK(int(parts.size()) == pow2(d));
        for (int e = 0; e < pow3(d); ++e) {
          // pairwise summation: equal power-of-two shares recombine exactly
          std::vector<double> acc;
          for (const auto& part : parts) acc.push_back(part[e]);
          while (acc.size() > 1) {
            std::vector<double> next;
            for (std::size_t k = 0; k + 1 < acc.size(); k += 2)
              next.push_back(acc[k] + acc[k + 1]);
            if (acc.size() % 2) next.push_back(acc.back());
            acc.swap(next);
          }
          CHECK(acc[0] == s[e]);  // exact, no tolerance
        }
      }
    }
  }
  SUBCASE("zero stencil splits into zero parts") {
    const auto parts = splitStencil(Stencil(9, 0.0), 2);
    for (const auto& part : parts)
      for (double v : part) CHECK(v == 0.0);
  }
}

TEST_CASE("d-linear transfer stencils") {
  const TransferStencil t1 = dLinearTransfer(1);
  const double w1[5] = {1.0 / 3, 2.0 / 3, 1.0, 2.0 / 3, 1.0 / 3};
  for (int e = 0; e < 5; ++e) CHECK(t1[e] == doctest::Approx(w1[e]));

  const TransferStencil t2 = dLinearTransfer(2);
  CHECK(t2[entryFromOffset(makeIndex(0, 0), 2, 2)] == 1.0);
  CHECK(t2[entryFromOffset(makeIndex(1, 1), 2, 2)] == doctest::Approx(4.0 / 9.0));
  double sum = 0.0;
  for (double v : t2) sum += v;
  CHECK(sum == doctest::Approx(9.0));
}

TEST_CASE("parent interpolation weights") {
  // position at one third of a coarse edge
  auto pi = parentInterpolation(2, 2, makeIndex(4, 3));
  CHECK(pi.coarseCell[0] == 1);
  CHECK(pi.coarseCell[1] == 1);
  CHECK(pi.weights[0] == doctest::Approx(2.0 / 3.0));
  CHECK(pi.weights[1] == doctest::Approx(1.0 / 3.0));
  CHECK(pi.weights[2] == 0.0);
  // coincident with a coarse vertex
  auto pc = parentInterpolation(2, 2, makeIndex(3, 3));
  CHECK(pc.weights[0] == 1.0);
  // face-interior point at (1/3, 1/3) of the coarse cell
  auto pf = parentInterpolation(2, 2, makeIndex(4, 4));
  CHECK(pf.weights[0] == doctest::Approx(4.0 / 9.0));
  CHECK(pf.weights[3] == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("upwind stencils have nonpositive off-diagonals for dominant convection") {
  Spacetree t(2, 3);
  const ProblemSpec p = ProblemSpec::byName("circle", 2, 1e-12);
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> pick(1, ipow(3, 3) - 1);
  for (int rep = 0; rep < 100; ++rep) {
    const VertexKey v{3, makeIndex(pick(rng), pick(rng))};
    const Stencil s = rediscretizedStencil(t, v, p);
    for (int e = 0; e < 9; ++e) {
      if (e == 4) continue;
      CHECK(s[e] <= 1e-15);
    }
    CHECK(s[4] > 0.0);
  }
}
