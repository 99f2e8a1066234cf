#include "treemg/operators.hpp"

#include <cmath>
#include <cstdlib>

namespace treemg {

std::optional<std::vector<double>> solveDense(std::vector<double> A, std::vector<double> b) {
  const int n = int(b.size());
  double scale = 0.0;
  for (double v : A) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return std::nullopt;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int row = col + 1; row < n; ++row)
      if (std::abs(A[row * n + col]) > std::abs(A[piv * n + col])) piv = row;
    if (std::abs(A[piv * n + col]) < 1e-13 * scale) return std::nullopt;
    if (piv != col) {
      for (int k = 0; k < n; ++k) std::swap(A[col * n + k], A[piv * n + k]);
      std::swap(b[col], b[piv]);
    }
    const double inv = 1.0 / A[col * n + col];
    for (int row = col + 1; row < n; ++row) {
      const double f = A[row * n + col] * inv;
      if (f == 0.0) continue;
      for (int k = col; k < n; ++k) A[row * n + k] -= f * A[col * n + k];
      b[row] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int row = n - 1; row >= 0; --row) {
    double s = b[row];
    for (int k = row + 1; k < n; ++k) s -= A[row * n + k] * x[k];
    x[row] = s / A[row * n + row];
  }
  return x;
}

PatchStencils PatchStencils::zero(int d) {
  PatchStencils ps;
  ps.d = d;
  ps.s.assign(ipow(4, d), Stencil(pow3(d), 0.0));
  return ps;
}

PointClass classifyPatchPoint(int d, const IndexVec& q) {
  int zeros = 0;
  for (int a = 0; a < d; ++a)
    if (q[a] == 0) ++zeros;
  if (zeros == d) return PointClass::C;
  if (zeros > 0) return PointClass::Gamma;
  return PointClass::Iota;
}

std::vector<double> collapse(const Stencil& s, int d, unsigned keepAxisMask) {
  int kept = 0;
  for (int a = 0; a < d; ++a)
    if (keepAxisMask & (1u << a)) ++kept;
  std::vector<double> out(ipow(3, kept), 0.0);
  for (int e = 0; e < pow3(d); ++e) {
    IndexVec off = offsetFromEntry(e, 1, d);
    int idx = 0, mul = 1;
    for (int a = 0; a < d; ++a) {
      if (!(keepAxisMask & (1u << a))) continue;
      idx += (off[a] + 1) * mul;
      mul *= 3;
    }
    out[idx] += s[e];
  }
  return out;
}

PatchStencils mirrorPatch(const PatchStencils& ps, int corner) {
  const int d = ps.d;
  PatchStencils out = PatchStencils::zero(d);
  for (int k = 0; k < ipow(4, d); ++k) {
    IndexVec q = unflatten(k, 4, d);
    IndexVec qm = q;
    for (int a = 0; a < d; ++a)
      if ((corner >> a) & 1) qm[a] = 3 - q[a];
    Stencil& dst = out.s[flatten(qm, 4, d)];
    const Stencil& src = ps.s[k];
    for (int e = 0; e < pow3(d); ++e) {
      IndexVec off = offsetFromEntry(e, 1, d);
      for (int a = 0; a < d; ++a)
        if ((corner >> a) & 1) off[a] = -off[a];
      dst[entryFromOffset(off, 1, d)] = src[e];
    }
  }
  return out;
}

namespace {

// Reference-corner system C(s) p = e_c over the {0,1,2}^d in-patch offsets.
void buildReferenceSystem(const PatchStencils& ps, std::vector<double>& C,
                          std::vector<double>& f) {
  const int d = ps.d;
  const int n = pow3(d);
  C.assign(n * n, 0.0);
  f.assign(n, 0.0);
  for (int row = 0; row < n; ++row) {
    IndexVec q = unflatten(row, 3, d);
    unsigned keep = 0;
    for (int a = 0; a < d; ++a)
      if (q[a] != 0) keep |= (1u << a);
    if (keep == 0) {  // the c-point: pinned to its coarse counterpart
      C[row * n + row] = 1.0;
      f[row] = 1.0;
      continue;
    }
    const Stencil& s = ps.s[flatten(q, 4, d)];
    const std::vector<double> cs = collapse(s, d, keep);
    int kept = 0;
    for (int a = 0; a < d; ++a)
      if (keep & (1u << a)) ++kept;
    for (int m = 0; m < ipow(3, kept); ++m) {
      // expand compact kept-axes offset back to a d-vector
      IndexVec off{0, 0, 0};
      int t = m;
      for (int a = 0; a < d; ++a) {
        if (!(keep & (1u << a))) continue;
        off[a] = t % 3 - 1;
        t /= 3;
      }
      IndexVec nq = addIndex(q, off);
      if (!indexInRange(nq, 0, 2, d)) continue;  // couples a dropped unknown
      C[row * n + flatten(nq, 3, d)] += cs[m];
    }
  }
}

}  // namespace

std::array<CornerProlongation, 8> boxmgProlongation(const PatchStencils& ps) {
  const int d = ps.d;
  std::array<CornerProlongation, 8> out{};
  std::vector<double> C, f;
  for (int corner = 0; corner < pow2(d); ++corner) {
    const PatchStencils ref = corner == 0 ? ps : mirrorPatch(ps, corner);
    buildReferenceSystem(ref, C, f);
    auto p = solveDense(C, f);
    CornerProlongation& cp = out[corner];
    if (!p) {
      cp.ok = false;
      continue;
    }
    cp.ok = true;
    cp.count = pow3(d);
    for (int m = 0; m < pow3(d); ++m) {
      IndexVec q = unflatten(m, 3, d);
      IndexVec off;
      for (int a = 0; a < d; ++a) off[a] = ((corner >> a) & 1) ? -q[a] : q[a];
      for (int a = d; a < 3; ++a) off[a] = 0;
      cp.entry[m] = entryFromOffset(off, 2, d);
      cp.value[m] = (*p)[m];
    }
    // the c-row pins the centre; enforce it exactly against roundoff
    cp.value[0] = 1.0;
  }
  return out;
}

TransferStencil restrictionFrom(const TransferStencil& P, RestrictionVariant variant) {
  const int size = int(P.size());
  switch (variant) {
    case RestrictionVariant::Transpose:
      return P;
    case RestrictionVariant::Injection: {
      TransferStencil r(size, 0.0);
      r[(size - 1) / 2] = 1.0;
      return r;
    }
    case RestrictionVariant::Aggregation:
      return TransferStencil(size, 1.0);
  }
  return P;
}

Stencil hangingStencilFromParents(const std::vector<Stencil>& parents,
                                  const std::vector<double>& weights) {
  Stencil out(parents.at(0).size(), 0.0);
  for (std::size_t k = 0; k < parents.size(); ++k)
    for (std::size_t e = 0; e < out.size(); ++e) out[e] += weights[k] * parents[k][e];
  return out;
}

void galerkinAccumulate(
    int d, const IndexVec& childOffset,
    const std::array<const double*, 8>& fineStencils,
    const std::array<bool, 8>& sourceActive,
    const std::function<double(int cornerBits, const IndexVec& fineOffset)>& prolongWeight,
    const std::function<double(int cornerBits, const IndexVec& fineOffset)>& restrictWeight,
    const std::function<void(int cornerBits, int stencilEntry, double value)>& sink) {
  const int nv = pow2(d);
  for (int sv = 0; sv < nv; ++sv) {
    if (!sourceActive[sv] || !fineStencils[sv]) continue;
    const double* srow = fineStencils[sv];
    IndexVec vpos;  // fine position relative to 3*cellAnchor
    for (int a = 0; a < 3; ++a) vpos[a] = 0;
    for (int a = 0; a < d; ++a) vpos[a] = childOffset[a] + ((sv >> a) & 1);
    for (int w = 0; w < nv; ++w) {
      IndexVec roff;
      for (int a = 0; a < 3; ++a) roff[a] = 0;
      for (int a = 0; a < d; ++a) roff[a] = vpos[a] - 3 * ((w >> a) & 1);
      if (!indexInRange(roff, -2, 2, d)) continue;
      const double rw = restrictWeight(w, roff);
      if (rw == 0.0) continue;
      for (int tv = 0; tv < nv; ++tv) {
        // E[sv][tv]: the split part of sv's stencil that this cell owns
        IndexVec off;
        double split = 1.0;
        for (int a = 0; a < 3; ++a) off[a] = 0;
        for (int a = 0; a < d; ++a) {
          off[a] = ((tv >> a) & 1) - ((sv >> a) & 1);
          if (off[a] == 0) split *= 0.5;
        }
        const double e = srow[entryFromOffset(off, 1, d)] * split;
        if (e == 0.0) continue;
        IndexVec tpos;
        for (int a = 0; a < 3; ++a) tpos[a] = 0;
        for (int a = 0; a < d; ++a) tpos[a] = childOffset[a] + ((tv >> a) & 1);
        for (int w2 = 0; w2 < nv; ++w2) {
          IndexVec poff;
          for (int a = 0; a < 3; ++a) poff[a] = 0;
          for (int a = 0; a < d; ++a) poff[a] = tpos[a] - 3 * ((w2 >> a) & 1);
          if (!indexInRange(poff, -2, 2, d)) continue;
          const double pw = prolongWeight(w2, poff);
          if (pw == 0.0) continue;
          IndexVec so;
          for (int a = 0; a < 3; ++a) so[a] = 0;
          for (int a = 0; a < d; ++a) so[a] = ((w2 >> a) & 1) - ((w >> a) & 1);
          sink(w, entryFromOffset(so, 1, d), rw * e * pw);
        }
      }
    }
  }
}

bool recomputeGalerkin(int level, int currentLevel, bool lastSmoothingStepOnCurrent,
                       bool vertexRefined) {
  return level + 1 == currentLevel && lastSmoothingStepOnCurrent && vertexRefined;
}

}  // namespace treemg
