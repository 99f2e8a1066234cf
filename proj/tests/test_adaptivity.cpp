#include <doctest.h>

#include <cmath>
#include <random>

#include "treemg/adaptivity.hpp"

using namespace treemg;

namespace {
SolverConfig plainConfig() {
  SolverConfig cfg;
  cfg.family = SolverFamily::Multiplicative;
  cfg.omega = 0.8;
  cfg.muPre = 1;
  cfg.muPost = 1;
  return cfg;
}
}  // namespace

TEST_CASE("refinement scores measure the deviation from the neighbour mean") {
  ProblemSpec p = ProblemSpec::byName("sin", 2);
  Spacetree t(2, 2);
  Solver s(t, p, plainConfig());
  SUBCASE("locally constant fields score zero") {
    t.forEachVertex(2, [&](const VertexKey&, VertexRecord& rec) { rec.u = 3.5; });
    CHECK(refinementScore(s, VertexKey{2, makeIndex(4, 4)}) == doctest::Approx(0.0));
  }
  SUBCASE("an isolated unit spike scores one") {
    t.forEachVertex(2, [&](const VertexKey&, VertexRecord& rec) { rec.u = 0.0; });
    t.vertex(2, makeIndex(4, 4))->u = 1.0;
    CHECK(refinementScore(s, VertexKey{2, makeIndex(4, 4)}) == doctest::Approx(1.0));
  }
  SUBCASE("linear fields score zero away from the wall") {
    t.forEachVertex(2, [&](const VertexKey& v, VertexRecord& rec) {
      rec.u = 2.0 * t.vertexPosition(v)[0];
    });
    CHECK(refinementScore(s, VertexKey{2, makeIndex(4, 4)}) ==
          doctest::Approx(0.0).epsilon(1e-14));
    CHECK(refinementScore(s, VertexKey{2, makeIndex(5, 3)}) ==
          doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("candidate rule") {
  ProblemSpec p = ProblemSpec::byName("sin", 2);
  Spacetree t(2, 2);
  Solver s(t, p, plainConfig());
  (void)s;
  VertexRecord* rec = t.vertex(2, makeIndex(4, 4));
  rec->r = 1e-3;
  CHECK(isCandidate(t, VertexKey{2, makeIndex(4, 4)}, *rec, 4));
  SUBCASE("a large residual blocks candidacy") {
    rec->r = 0.5;
    CHECK_FALSE(isCandidate(t, VertexKey{2, makeIndex(4, 4)}, *rec, 4));
  }
  SUBCASE("the minimal mesh width blocks candidacy") {
    rec->r = 1e-3;
    CHECK_FALSE(isCandidate(t, VertexKey{2, makeIndex(4, 4)}, *rec, 2));
  }
  SUBCASE("refined vertices are never candidates") {
    VertexRecord* coarse = t.vertex(1, makeIndex(1, 1));
    coarse->r = 1e-3;
    CHECK(coarse->type == VertexType::Refined);
    CHECK_FALSE(isCandidate(t, VertexKey{1, makeIndex(1, 1)}, *coarse, 4));
  }
}

TEST_CASE("ten-bin statistics approximate the top decile") {
  SUBCASE("uniform scores select exactly the top bin") {
    BinStatistics bins;
    bins.refit(0.0, 1.0);
    std::mt19937 rng(21);
    // 100 scores spread uniformly: ten per bin
    for (int k = 0; k < 100; ++k) bins.record((k % 100 + 0.5) / 100.0);
    CHECK(bins.total == 100);
    const double thr = bins.topDecileThreshold();
    CHECK(thr == doctest::Approx(0.9));
    int selected = 0;
    for (int k = 0; k < 100; ++k)
      if ((k % 100 + 0.5) / 100.0 >= thr) ++selected;
    CHECK(selected == 10);
    (void)rng;
  }
  SUBCASE("identical scores degenerate to selecting everything") {
    BinStatistics bins;
    bins.refit(0.7, 0.7);
    for (int k = 0; k < 50; ++k) bins.record(0.7);
    CHECK(bins.topDecileThreshold() <= 0.7);  // >= rule selects all
  }
  SUBCASE("scores are clamped into the fitted range") {
    BinStatistics bins;
    bins.refit(0.0, 1.0);
    CHECK(bins.binOf(-0.5) == 0);
    CHECK(bins.binOf(1.5) == BinStatistics::kBins - 1);
  }
}

TEST_CASE("selectAndRefine refines around the steep region only") {
  ProblemSpec p = ProblemSpec::byName("jump", 2);
  Spacetree t(2, 2);
  SolverConfig cfg = plainConfig();
  Solver s(t, p, cfg);
  AdaptivityDriver driver(s, 4);
  // impose a field with one steep spot and matching small residuals
  t.forEachVertex(2, [&](const VertexKey& v, VertexRecord& rec) {
    rec.u = 0.0;
    rec.r = 1e-4;
    (void)v;
  });
  t.vertex(2, makeIndex(3, 3))->u = 5.0;
  // first invocation only fits the bins
  const int first = driver.selectAndRefine();
  CHECK(first == 0);
  CHECK(driver.bins().total > 0);
  // second invocation refines the cells around the spike
  t.forEachVertex(2, [&](const VertexKey&, VertexRecord& rec) { rec.r = 1e-4; });
  const int second = driver.selectAndRefine();
  CHECK(second > 0);
  CHECK(t.finestLevel() == 3);
  // the spike's cells got refined, the far corner stayed untouched
  CHECK(t.cellRefined(CellKey{2, makeIndex(3, 3)}));
  CHECK_FALSE(t.cellRefined(CellKey{2, makeIndex(8, 8)}));
  SUBCASE("no candidates means no refinement") {
    for (int l = 1; l <= t.finestLevel(); ++l)
      t.forEachVertex(l, [&](const VertexKey&, VertexRecord& rec) { rec.r = 1.0; });
    CHECK(driver.selectAndRefine() == 0);
  }
}

TEST_CASE("dynamic runs never refine beyond the minimal mesh width") {
  ProblemSpec p = ProblemSpec::byName("jump", 2);
  Spacetree t(2, 1);
  SolverConfig cfg = plainConfig();
  cfg.muPre = 2;
  cfg.operatorMode = OperatorMode::Galerkin;
  cfg.maxIterations = 40;
  Solver s(t, p, cfg);
  AdaptivityDriver driver(s, 3);
  const SolveReport rep = s.solve([&](Solver&) { return driver.selectAndRefine(); });
  (void)rep;
  CHECK(t.finestLevel() <= 3);
  CHECK(t.finestLevel() > 1);  // the criterion actually unfolded the grid
}
