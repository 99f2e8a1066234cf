#include "treemg/adaptivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace treemg {

int BinStatistics::binOf(double score) const {
  if (hi <= lo) return kBins - 1;
  int b = int((score - lo) / (hi - lo) * kBins);
  if (b < 0) b = 0;
  if (b >= kBins) b = kBins - 1;
  return b;
}

double BinStatistics::topDecileThreshold() const {
  if (hi <= lo) return lo;  // degenerate range: everything qualifies
  const double goal = 0.1 * double(total);
  std::size_t cum = 0;
  double best = std::numeric_limits<double>::infinity();
  int bestBin = kBins - 1;
  for (int b = kBins - 1; b >= 0; --b) {
    cum += counts[b];
    const double dist = std::abs(double(cum) - goal);
    if (dist < best) {
      best = dist;
      bestBin = b;
    }
  }
  return lo + (hi - lo) * bestBin / double(kBins);
}

void BinStatistics::refit(double newLo, double newHi) {
  lo = newLo;
  hi = newHi;
  counts.fill(0);
  total = 0;
}

void BinStatistics::record(double score) {
  ++counts[binOf(score)];
  ++total;
}

double refinementScore(const Solver& solver, const VertexKey& v) {
  const Spacetree& tree = const_cast<Solver&>(solver).tree();
  const int d = tree.dim();
  const VertexRecord* rec = tree.vertex(v.level, v.index);
  if (!rec) return 0.0;
  const int n = ipow(3, v.level);
  double sum = 0.0;
  int count = 0;
  for (int e = 0; e < pow3(d); ++e) {
    IndexVec off = offsetFromEntry(e, 1, d);
    bool self = true, inside = true;
    IndexVec nb = v.index;
    for (int a = 0; a < d; ++a) {
      if (off[a] != 0) self = false;
      nb[a] += off[a];
      if (nb[a] < 0 || nb[a] > n) inside = false;
    }
    if (self || !inside) continue;
    const VertexRecord* nr = tree.vertex(v.level, nb);
    if (!nr) continue;
    sum += (nr->type == VertexType::Hanging) ? solver.interpolatedValue(v.level, nb) : nr->u;
    ++count;
  }
  if (count == 0) return 0.0;
  return std::abs(rec->u - sum / count);
}

bool isCandidate(const Spacetree& tree, const VertexKey& v, const VertexRecord& rec,
                 int maxDepth) {
  (void)tree;
  if (rec.type != VertexType::Unrefined) return false;
  if (v.level >= maxDepth) return false;
  if (rec.dirichlet) return false;  // boundary values are data, not unknowns
  return std::abs(rec.r) < 1e-2;
}

int AdaptivityDriver::selectAndRefine() {
  Spacetree& tree = solver_.tree();
  const int d = tree.dim();
  std::vector<std::pair<VertexKey, double>> scored;
  for (int l = 1; l <= tree.finestLevel(); ++l) {
    tree.forEachVertex(l, [&](const VertexKey& v, VertexRecord& rec) {
      if (!isCandidate(tree, v, rec, maxDepth_)) return;
      scored.emplace_back(v, refinementScore(solver_, v));
    });
  }
  int refinedCells = 0;
  if (bins_.valid()) {
    const double thr = bins_.topDecileThreshold();
    for (const auto& [v, score] : scored) {
      if (score < thr) continue;
      const int n = ipow(3, v.level);
      for (int k = 0; k < pow2(d); ++k) {
        IndexVec cell = v.index;
        bool valid = true;
        for (int a = 0; a < d; ++a) {
          cell[a] += ((k >> a) & 1) - 1;
          if (cell[a] < 0 || cell[a] >= n) valid = false;
        }
        const CellKey c{v.level, cell};
        if (!valid || !tree.cellExists(c) || tree.cellRefined(c)) continue;
        solver_.refineCellWithInit(c);
        ++refinedCells;
      }
    }
  }
  // re-fit the bin range to this sweep's observations
  double maxScore = 0.0;
  for (const auto& [v, score] : scored) {
    (void)v;
    maxScore = std::max(maxScore, score);
  }
  bins_.refit(0.0, maxScore);
  for (const auto& [v, score] : scored) {
    (void)v;
    bins_.record(score);
  }
  return refinedCells;
}

}  // namespace treemg
