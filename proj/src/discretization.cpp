#include "treemg/discretization.hpp"

#include <cmath>

namespace treemg {

namespace {

// 1D building blocks on the unit interval for bilinear shape products
constexpr double kStiff1[2][2] = {{1.0, -1.0}, {-1.0, 1.0}};
constexpr double kMass1[2][2] = {{1.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 1.0 / 3.0}};

bool cornerOnBoundary(const CellKey& cell, int cornerBits, int d) {
  const int n = ipow(3, cell.level);
  for (int a = 0; a < d; ++a) {
    const int idx = cell.index[a] + ((cornerBits >> a) & 1);
    if (idx == 0 || idx == n) return true;
  }
  return false;
}

int expectedAdjacent(const CellKey& cell, int cornerBits, int d) {
  const int n = ipow(3, cell.level);
  int count = 1;
  for (int a = 0; a < d; ++a) {
    const int idx = cell.index[a] + ((cornerBits >> a) & 1);
    count *= (idx == 0 || idx == n) ? 1 : 2;
  }
  return count;
}

}  // namespace

ElementMatrix elementMatrix(const ProblemSpec& p, const CellKey& cell, int d) {
  const int nv = pow2(d);
  const double h = 1.0 / ipow(3, cell.level);
  Point mid{0, 0, 0};
  for (int a = 0; a < d; ++a) mid[a] = (cell.index[a] + 0.5) * h;
  const Coefficients co = p.eval(mid);

  ElementMatrix E(nv * nv, 0.0);
  const double hd2 = std::pow(h, d - 2);
  for (int axis = 0; axis < d; ++axis) {
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j) {
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
          const int ia = (i >> a) & 1, ja = (j >> a) & 1;
          w *= (a == axis) ? kStiff1[ia][ja] : kMass1[ia][ja];
        }
        E[i * nv + j] += co.epsilon[axis] * hd2 * w;
      }
  }

  // donor-cell upwind convection, transverse-lumped
  const double tshare = std::pow(0.5, d - 1) * std::pow(h, d - 1);
  for (int axis = 0; axis < d; ++axis) {
    const double c = co.velocity[axis] * tshare;
    if (c == 0.0) continue;
    for (int i = 0; i < nv; ++i) {
      if ((i >> axis) & 1) continue;  // i = left node of the axis edge
      const int L = i, R = i | (1 << axis);
      if (c > 0) {
        E[R * nv + R] += c;
        E[R * nv + L] -= c;
      } else {
        E[L * nv + R] += c;
        E[L * nv + L] -= c;
      }
    }
  }

  for (int i = 0; i < nv; ++i) {
    if (!cornerOnBoundary(cell, i, d)) continue;
    for (int j = 0; j < nv; ++j) E[i * nv + j] = 0.0;
    E[i * nv + i] = 1.0 / expectedAdjacent(cell, i, d);
  }
  return E;
}

Stencil identityStencil(int d) {
  Stencil s(pow3(d), 0.0);
  s[entryFromOffset(IndexVec{0, 0, 0}, 1, d)] = 1.0;
  return s;
}

Stencil rediscretizedStencil(const Spacetree& tree, const VertexKey& v, const ProblemSpec& p) {
  const int d = tree.dim();
  const VertexRecord* rec = tree.vertex(v.level, v.index);
  if (rec && rec->dirichlet) return identityStencil(d);
  {
    const int n = ipow(3, v.level);
    bool onWall = false;
    for (int a = 0; a < d; ++a)
      if (v.index[a] == 0 || v.index[a] == n) onWall = true;
    if (onWall) return identityStencil(d);
  }

  Stencil s(pow3(d), 0.0);
  const int nv = pow2(d);
  const int n = ipow(3, v.level);
  for (int k = 0; k < nv; ++k) {
    IndexVec cellIdx;
    bool valid = true;
    for (int a = 0; a < d; ++a) {
      cellIdx[a] = v.index[a] - 1 + ((k >> a) & 1);
      if (cellIdx[a] < 0 || cellIdx[a] >= n) valid = false;
    }
    for (int a = d; a < 3; ++a) cellIdx[a] = 0;
    const CellKey cell{v.level, cellIdx};
    if (!valid || !tree.cellExists(cell)) continue;
    const ElementMatrix E = elementMatrix(p, cell, d);
    // v is corner (1 - k) of this cell: component a is 1 iff cell sits left of v
    int mine = 0;
    for (int a = 0; a < d; ++a)
      if (cellIdx[a] == v.index[a] - 1) mine |= (1 << a);
    for (int j = 0; j < nv; ++j) {
      IndexVec off;
      for (int a = 0; a < d; ++a) off[a] = cellIdx[a] + ((j >> a) & 1) - v.index[a];
      for (int a = d; a < 3; ++a) off[a] = 0;
      s[entryFromOffset(off, 1, d)] += E[mine * nv + j];
    }
  }
  return s;
}

std::vector<Stencil> splitStencil(const Stencil& s, int d) {
  const int parts = pow2(d);
  std::vector<Stencil> out(parts, Stencil(pow3(d), 0.0));
  for (int k = 0; k < parts; ++k) {
    for (int e = 0; e < pow3(d); ++e) {
      IndexVec off = offsetFromEntry(e, 1, d);
      double w = 1.0;
      for (int a = 0; a < d; ++a) {
        const int bit = (k >> a) & 1;
        if (off[a] == 0)
          w *= 0.5;
        else if ((bit == 1 && off[a] == 1) || (bit == 0 && off[a] == -1))
          w *= 1.0;
        else
          w = 0.0;
      }
      out[k][e] = s[e] * w;
    }
  }
  return out;
}

TransferStencil dLinearTransfer(int d) {
  TransferStencil t(pow5(d), 0.0);
  for (int e = 0; e < pow5(d); ++e) t[e] = dLinearWeight(d, offsetFromEntry(e, 2, d));
  return t;
}

double dLinearWeight(int d, const IndexVec& offset) {
  static const double w1[5] = {1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0};
  double w = 1.0;
  for (int a = 0; a < d; ++a) {
    const int o = offset[a];
    if (o < -2 || o > 2) return 0.0;
    w *= w1[o + 2];
  }
  return w;
}

ParentInterp parentInterpolation(int d, int level, const IndexVec& idx) {
  ParentInterp pi;
  const int nc = ipow(3, level - 1);
  std::array<double, 3> t{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    int c = idx[a] / 3;
    if (c > nc - 1) c = nc - 1;
    pi.coarseCell[a] = c;
    t[a] = (idx[a] - 3 * c) / 3.0;
  }
  for (int k = 0; k < pow2(d); ++k) {
    double w = 1.0;
    for (int a = 0; a < d; ++a) w *= ((k >> a) & 1) ? t[a] : (1.0 - t[a]);
    pi.weights[k] = w;
  }
  return pi;
}

double nodalRhs(const ProblemSpec& p, const Spacetree& tree, const VertexKey& v) {
  const double h = tree.meshWidth(v.level);
  const Point x = tree.vertexPosition(v);
  const int shares = tree.expectedAdjacentCells(v);
  return p.eval(x).rhs * shares * std::pow(0.5 * h, tree.dim());
}

}  // namespace treemg
