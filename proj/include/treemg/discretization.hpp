#pragma once

#include <vector>

#include "treemg/grid.hpp"
#include "treemg/problem.hpp"

namespace treemg {

// 3^d row of the level operator, lexicographic over {-1,0,1}^d offsets.
using Stencil = std::vector<double>;
// 5^d inter-grid transfer stencil over {-2..2}^d offsets in fine-grid units.
using TransferStencil = std::vector<double>;
// 2^d x 2^d coupling of a cell's corners, row-major, lexicographic corners.
using ElementMatrix = std::vector<double>;

// d-linear FEM for -div(eps grad u) + (v grad)u with coefficients sampled at
// the cell midpoint and donor-cell upwinding of the convection term.
// Rows of Dirichlet corners assemble to identity across the adjacent cells.
ElementMatrix elementMatrix(const ProblemSpec& p, const CellKey& cell, int d);

Stencil rediscretizedStencil(const Spacetree& tree, const VertexKey& v, const ProblemSpec& p);

Stencil identityStencil(int d);

// Cell-wise additive decomposition of a stencil; parts[k] belongs to the
// adjacent cell in corner direction k (lexicographic over {0,1}^d).
std::vector<Stencil> splitStencil(const Stencil& s, int d);

TransferStencil dLinearTransfer(int d);

// single entry of the d-linear transfer stencil, offset in {-2..2}^d
double dLinearWeight(int d, const IndexVec& offset);

// Interpolation of a fine lattice position from the enclosing coarse cell.
struct ParentInterp {
  IndexVec coarseCell{0, 0, 0};           // enclosing cell on level-1
  std::array<double, 8> weights{};        // per coarse corner, lexicographic
};
ParentInterp parentInterpolation(int d, int level, const IndexVec& idx);

// Lumped-mass nodal right-hand side f(x_v) * sum of adjacent cell shares.
double nodalRhs(const ProblemSpec& p, const Spacetree& tree, const VertexKey& v);

}  // namespace treemg
