#pragma once

#include <array>
#include <cstddef>

#include "treemg/solver.hpp"

namespace treemg {

// Ten-bin approximation of the top-decile selection; avoids a global sort.
struct BinStatistics {
  static constexpr int kBins = 10;
  double lo = 0.0;
  double hi = 0.0;
  std::array<std::size_t, kBins> counts{};
  std::size_t total = 0;

  bool valid() const { return total > 0; }
  int binOf(double score) const;
  // lower edge of the cutoff bin whose cumulative count best approximates 10%
  double topDecileThreshold() const;
  void refit(double newLo, double newHi);
  void record(double score);
};

// |u_v - mean(existing same-level neighbours)|
double refinementScore(const Solver& solver, const VertexKey& v);

bool isCandidate(const Spacetree& tree, const VertexKey& v, const VertexRecord& rec,
                 int maxDepth);

class AdaptivityDriver {
 public:
  AdaptivityDriver(Solver& solver, int maxDepth) : solver_(solver), maxDepth_(maxDepth) {}

  // scores current candidates against the previous sweep's bins, refines the
  // selected region, refits the bins; returns the number of refined cells
  int selectAndRefine();

  const BinStatistics& bins() const { return bins_; }

 private:
  Solver& solver_;
  int maxDepth_;
  BinStatistics bins_;
};

}  // namespace treemg
