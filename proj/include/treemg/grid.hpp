#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "treemg/geom.hpp"
#include "treemg/problem.hpp"

namespace treemg {

struct CellKey {
  int level = 0;
  IndexVec index{0, 0, 0};  // lattice in [0, 3^level)
  bool operator==(const CellKey&) const = default;
};

struct VertexKey {
  int level = 0;
  IndexVec index{0, 0, 0};  // lattice in [0, 3^level]
  bool operator==(const VertexKey&) const = default;
};

enum class VertexType : std::uint8_t { Hanging, Refined, Unrefined };

// Per-vertex payload: the solver unknowns, the embedded operator stencils,
// their compressed persistent form, and transient traversal scratch.
struct VertexRecord {
  double u = 0;     // shape function weight (persistent)
  double uHat = 0;  // hierarchical surplus (transient)
  double r = 0;     // residual (transient)
  double rHat = 0;  // hierarchical residual (transient)
  double dVal = 0;  // inter-level update carrier (persistent)
  double b = 0;     // right-hand side (persistent)
  double inj = 0;   // injected smoother impact, BPX only (persistent)

  bool dirichlet = false;
  VertexType type = VertexType::Unrefined;

  // Operator stencils; empty vector = not stored.
  std::vector<double> A;  // 3^d system row
  std::vector<double> P;  // 5^d prolongation
  std::vector<double> R;  // 5^d restriction
  // Sweep-local copies for the additive families (valid while hasBackup).
  std::vector<double> Abackup;
  bool hasBackup = false;

  // Compressed persistent form (bpa codec); valid while `compressed`.
  bool compressed = false;
  bool hadP = false, hadR = false;  // which transfer operators the payload covers
  std::uint16_t bpaTags = 0;
  std::vector<std::uint8_t> payloadA, payloadP, payloadR;

  // Transient solver scratch.
  double diagAcc = 0;       // cell-wise accumulated diagonal (geometric mode)
  double blockDelta = 0;    // accumulated block-smoother update
  bool blockUpdated = false;

  // Traversal bookkeeping.
  bool touched = false;
  int pending = 0;
};

struct CellInfo {
  bool refined = false;
};

class Spacetree;

struct VertexCtx {
  VertexKey key;
  VertexRecord* rec;
  bool hanging;
};

struct CellCtx {
  CellKey key;
  bool refined;
  // 2^d adjacent vertices in lexicographic corner order.
  std::array<VertexRecord*, 8> corners;
  std::array<bool, 8> cornerHanging;
};

struct PatchCtx {
  CellKey parent;
  // 4^d patch vertices (children corners), lexicographic; entries follow
  // the local lattice {0..3}^d of level parent.level+1.
  std::array<VertexRecord*, 64> verts;
  std::array<bool, 64> hanging;
};

struct TraversalEvents {
  // fired when a vertex is brought in for the sweep, before the enclosing
  // descend; touchVertexFirstTime follows right after that descend
  std::function<void(const VertexCtx&)> loadVertex;
  std::function<void(const VertexCtx&)> touchVertexFirstTime;
  std::function<void(const CellCtx&)> handleCell;
  std::function<void(const VertexCtx&)> touchVertexLastTime;
  std::function<void(const PatchCtx&)> descend;
};

class Spacetree {
 public:
  Spacetree(int d, int initialDepth);

  int dim() const { return d_; }
  int finestLevel() const { return finestLevel_; }
  int coarsestActiveLevel() const { return coarsestActiveLevel_; }
  void setCoarsestActiveLevel(int l);

  bool cellExists(const CellKey& c) const;
  bool cellRefined(const CellKey& c) const;
  std::size_t cellCount(int level) const;
  std::size_t vertexCount(int level) const;

  VertexRecord* vertex(int level, const IndexVec& idx);
  const VertexRecord* vertex(int level, const IndexVec& idx) const;

  VertexType classifyVertex(const VertexKey& v) const;
  // number of same-level adjacent cells the lattice admits (fewer at the wall)
  int expectedAdjacentCells(const VertexKey& v) const;
  int actualAdjacentCells(const VertexKey& v) const;

  void refineCell(const CellKey& c,
                  const std::function<void(const VertexKey&, VertexRecord&)>& onNewVertex = {});
  void eraseSubtree(const CellKey& c);

  // Depth-first multiscale traversal; maxLevel < 0 visits the whole tree.
  void traverse(const TraversalEvents& events, int maxLevel = -1);

  // Deterministic (sorted-key) iteration over one level's vertices.
  void forEachVertex(int level, const std::function<void(const VertexKey&, VertexRecord&)>& f);
  void forEachVertexConst(int level,
                          const std::function<void(const VertexKey&, const VertexRecord&)>& f) const;

  double meshWidth(int level) const;
  Point vertexPosition(const VertexKey& v) const;
  Point cellMidpoint(const CellKey& c) const;

  // Total count of non-hanging vertices on active levels (cost metric helper).
  std::size_t nonHangingVertexCount() const;

 private:
  struct Level {
    std::unordered_map<std::uint64_t, CellInfo> cells;
    std::unordered_map<std::uint64_t, std::unique_ptr<VertexRecord>> vertices;
  };

  void recurse(const CellKey& c, const TraversalEvents& events, int maxLevel);
  VertexRecord& ensureVertex(const VertexKey& v, bool* created = nullptr);
  void reclassifyAround(const CellKey& c);
  void setVertexFlags(const VertexKey& v, VertexRecord& rec) const;

  int d_;
  int finestLevel_;
  int coarsestActiveLevel_;
  std::vector<Level> levels_;
  bool traversing_ = false;
};

}  // namespace treemg
