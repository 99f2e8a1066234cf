#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "treemg/discretization.hpp"
#include "treemg/grid.hpp"
#include "treemg/operators.hpp"
#include "treemg/problem.hpp"

namespace treemg {

enum class SolverFamily { Additive, BPX, Multiplicative };
enum class OperatorMode { Rediscretize, Galerkin, BoxMG };
enum class SmootherKind { Jacobi, BlockJacobi };
enum class DampingMode { Uniform, Exponential };
enum class CoarseSolveMode { SweepOnly, Exact };
enum class Outcome { Converged, NotConverged, Diverged };

// Automaton steering the multiplicative traversal schedule.
struct SolverState {
  int current = 0;
  int old = 0;
};
inline SolverState ascend(SolverState s) { --s.current; return s; }
inline SolverState descend(SolverState s) { ++s.current; return s; }

struct SolverConfig {
  SolverFamily family = SolverFamily::Multiplicative;
  OperatorMode operatorMode = OperatorMode::Rediscretize;
  RestrictionVariant restriction = RestrictionVariant::Transpose;
  SmootherKind smoother = SmootherKind::Jacobi;
  int blockSweeps = 1;
  double omega = 0.8;
  DampingMode damping = DampingMode::Uniform;
  int muPre = 2;
  int muPost = 1;
  CoarseSolveMode coarseSolve = CoarseSolveMode::SweepOnly;
  int maxIterations = 300;
  double reductionGoal = 1e8;
  double epsMf = 0.0;  // <= 0 switches the stencil compression off
  double stagnationRho = 0.999;
  double divergenceFactor = 1e6;

  bool storesOperators() const { return operatorMode != OperatorMode::Rediscretize; }
  bool compression() const { return epsMf > 0.0 && storesOperators(); }
};

struct MemoryStats {
  std::size_t persistentBytes = 0;
  std::size_t payloadBytes = 0;
  std::size_t uncompressedBytes = 0;
  std::array<std::size_t, 9> bpaHistogram{};  // per-operator tag counts
  double compressionRatio = 1.0;
  std::size_t vertices = 0;
  std::size_t allZeroBpaVertices = 0;  // vertices with bpa=0 for all three operators
};

struct SolveReport {
  Outcome outcome = Outcome::NotConverged;
  int cycles = 0;
  std::vector<double> residualHistory;  // length cycles+1
  unsigned long long unknownReads = 0;
  std::vector<unsigned long long> unknownReadHistory;  // cumulative, per history entry
  std::vector<int> coarsestLevelHistory;
  std::vector<std::size_t> persistentBytesHistory;
  MemoryStats memory;
  int coarseSolveFailures = 0;

  static const char* outcomeName(Outcome o);
};

class Solver {
 public:
  Solver(Spacetree& tree, const ProblemSpec& problem, const SolverConfig& cfg);

  // b, boundary values and (for stored-operator modes) discretization stencils
  void initializeVertexData();

  // linear interpolant, discretization stencil, one undamped relaxation
  void refineCellWithInit(const CellKey& c);

  // Full driver. betweenCycles, when set, runs once per cycle (dynamic grids)
  // and returns the number of refined cells.
  SolveReport solve(const std::function<int(Solver&)>& betweenCycles = {});

  void runCycle();
  double measureResidual();        // composite residual, fills vertex r fields
  double levelResidual(int level); // residual of one level's system
  // polish one level with plain smoothing sweeps until its residual drops
  // below tol; returns the number of sweeps spent
  int exactCoarseSolve(int level, double tol = 1e-12, int cap = 100000);

  // coarsest-level degeneracy rule of the adaptive controller
  static bool stencilDegenerate(const double* stencil, int d);

  // One multiplicative smoothing sweep at the state machine's current level.
  void sweepState(bool rebuildCoarse);
  void sweepAdditive();  // additive or BPX, per cfg.family

  Spacetree& tree() { return tree_; }
  const SolverConfig& config() const { return cfg_; }
  const SolverState& state() const { return S_; }
  void resetState() { S_ = SolverState{tree_.finestLevel(), tree_.finestLevel()}; }
  unsigned long long unknownReads() const { return unknownReads_; }
  unsigned long long sweepCount() const { return sweeps_; }
  bool consumeStencilAlert();
  double omegaEff(int level) const;
  MemoryStats memoryStats() const;

  // value of the level field at an arbitrary lattice position, resolving
  // hanging/missing vertices through the coarser levels
  double interpolatedValue(int level, const IndexVec& idx) const;

 private:
  struct SweepFlags {
    bool rebuild = false;   // multiplicative Galerkin/BoxMG recompute gate
    bool additive = false;  // additive/BPX algorithm lines
    bool bpx = false;
    bool evalOnly = false;
    int evalLevel = -1;  // >= 0: single-level residual evaluation
  };

  void runSweep(const SweepFlags& f);

  void onLoad(const VertexCtx& v, const SweepFlags& f);
  void onTouchFirst(const VertexCtx& v, const SweepFlags& f);
  void onCell(const CellCtx& c, const SweepFlags& f);
  void onTouchLast(const VertexCtx& v, const SweepFlags& f);
  void onDescend(const PatchCtx& p, const SweepFlags& f);

  // operator access
  const double* stencil3(const VertexRecord* rec) const;
  double diagOf(const VertexRecord* rec) const;
  Stencil hangingStencil3(int level, const IndexVec& idx) const;
  double prolongWeight(const VertexRecord* w, const IndexVec& off) const;
  double restrictWeight(const VertexRecord* w, const IndexVec& off) const;

  // inter-grid gathers/scatters at a fine lattice position
  void forEachCovering(int fineLevel, const IndexVec& idx,
                       const std::function<void(VertexRecord&, const IndexVec&)>& f) const;
  double gatherP(int fineLevel, const IndexVec& idx,
                 const std::function<double(const VertexRecord&)>& field) const;
  void scatterRestriction(int fineLevel, const IndexVec& idx, double rhat);
  VertexRecord* coincidentCoarse(int level, const IndexVec& idx);
  bool isCPoint(int level, const IndexVec& idx) const;

  void accumulateCellResiduals(const CellCtx& c, bool doR, bool doRhat);
  void galerkinCellContribution(const CellCtx& c);
  void blockGaussSeidel(const PatchCtx& p);
  void recomputeBoxmg(const PatchCtx& p);
  void reconstructAtTouchFirst(VertexRecord& rec, int level, const IndexVec& idx);
  void compressAtTouchLast(VertexRecord& rec, int level, const IndexVec& idx);
  void materializeHanging(VertexRecord& rec, int level, const IndexVec& idx);
  void checkCoarsestStencil(const VertexRecord& rec);
  void initVertex(const VertexKey& v, VertexRecord& rec);

  Spacetree& tree_;
  ProblemSpec prob_;
  SolverConfig cfg_;
  SolverState S_{};
  unsigned long long unknownReads_ = 0;
  unsigned long long sweeps_ = 0;
  bool stencilAlert_ = false;
  int coarseSolveFailures_ = 0;
  double evalNorm2_ = 0.0;
};

}  // namespace treemg
