#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "treemg/discretization.hpp"

namespace treemg {

// Partially pivoted elimination for the small patch systems (n <= 64).
// Returns nullopt when the matrix is singular to working precision.
std::optional<std::vector<double>> solveDense(std::vector<double> A, std::vector<double> b);

// Stencils of all 4^d vertices of a descend patch, lexicographic over the
// local {0..3}^d lattice; stencil entries lexicographic over {-1,0,1}^d.
struct PatchStencils {
  int d = 2;
  std::vector<Stencil> s;  // 4^d stencils

  static PatchStencils zero(int d);
};

enum class PointClass : std::uint8_t { C, Gamma, Iota };

// patch-local classification relative to the reference (origin) corner
PointClass classifyPatchPoint(int d, const IndexVec& q);

enum class RestrictionVariant { Transpose, Injection, Aggregation };

// Sum stencil entries over all axes not in keepAxisMask; the result has one
// entry per offset combination of the kept axes (lexicographic, 3^k values).
std::vector<double> collapse(const Stencil& s, int d, unsigned keepAxisMask);

// Reflect the patch so that `corner` (bits over axes) maps onto the origin
// corner: vertex indices i -> 3-i and stencil offsets o -> -o per set axis.
PatchStencils mirrorPatch(const PatchStencils& ps, int corner);

// One corner's contribution of a patch: the 3^d entries of that corner's
// 5^d prolongation stencil that lie inside the patch.
struct CornerProlongation {
  bool ok = false;                      // false when the patch system is singular
  std::array<int, 27> entry{};          // indices into the 5^d stencil
  std::array<double, 27> value{};
  int count = 0;
};

std::array<CornerProlongation, 8> boxmgProlongation(const PatchStencils& ps);

TransferStencil restrictionFrom(const TransferStencil& P, RestrictionVariant variant);

// Entrywise interpolation of parent stencils for a hanging vertex.
Stencil hangingStencilFromParents(const std::vector<Stencil>& parents,
                                  const std::vector<double>& weights);

// Per fine child cell: scatter R^T|cell * E * P|cell into the coarse corner
// stencils. childOffset is the cell's {0,1,2}^d position inside its parent.
// Weight callbacks receive the coarse corner (bits) and the fine-grid offset
// of a fine vertex relative to that corner.
void galerkinAccumulate(
    int d, const IndexVec& childOffset,
    const std::array<const double*, 8>& fineStencils,
    const std::array<bool, 8>& sourceActive,
    const std::function<double(int cornerBits, const IndexVec& fineOffset)>& prolongWeight,
    const std::function<double(int cornerBits, const IndexVec& fineOffset)>& restrictWeight,
    const std::function<void(int cornerBits, int stencilEntry, double value)>& sink);

// Stencil rebuild predicate of the multiplicative Galerkin solver.
bool recomputeGalerkin(int level, int currentLevel, bool lastSmoothingStepOnCurrent,
                       bool vertexRefined);

}  // namespace treemg
