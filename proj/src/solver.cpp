#include "treemg/solver.hpp"

#include <cmath>
#include <cstdlib>
#include <cstdio>

#include "treemg/codec.hpp"

namespace treemg {

namespace {
constexpr double kTinyDiag = 1e-300;

bool logEnabled() {
  static const bool on = std::getenv("SPACETREE_MG_LOG") != nullptr;
  return on;
}
}  // namespace

const char* SolveReport::outcomeName(Outcome o) {
  switch (o) {
    case Outcome::Converged: return "Converged";
    case Outcome::NotConverged: return "NotConverged";
    case Outcome::Diverged: return "Diverged";
  }
  return "?";
}

Solver::Solver(Spacetree& tree, const ProblemSpec& problem, const SolverConfig& cfg)
    : tree_(tree), prob_(problem), cfg_(cfg) {
  prob_.d = tree_.dim();
  S_ = SolverState{tree_.finestLevel(), tree_.finestLevel()};
  initializeVertexData();
}

double Solver::omegaEff(int level) const {
  if (cfg_.damping == DampingMode::Uniform) return cfg_.omega;
  return std::pow(cfg_.omega, tree_.finestLevel() - level + 1);
}

bool Solver::consumeStencilAlert() {
  const bool a = stencilAlert_;
  stencilAlert_ = false;
  return a;
}

void Solver::initVertex(const VertexKey& v, VertexRecord& rec) {
  if (rec.type == VertexType::Hanging) return;
  const Point x = tree_.vertexPosition(v);
  if (rec.dirichlet) {
    rec.u = prob_.dirichlet(x);
    rec.b = rec.u;
  } else {
    rec.b = nodalRhs(prob_, tree_, v);
  }
  if (cfg_.storesOperators()) {
    rec.A = rediscretizedStencil(tree_, v, prob_);
    rec.compressed = false;
  }
}

void Solver::initializeVertexData() {
  for (int l = 0; l <= tree_.finestLevel(); ++l)
    tree_.forEachVertex(l, [&](const VertexKey& v, VertexRecord& rec) { initVertex(v, rec); });
}

double Solver::interpolatedValue(int level, const IndexVec& idx) const {
  const VertexRecord* rec = tree_.vertex(level, idx);
  if (rec && rec->type != VertexType::Hanging) return rec->u;
  if (level == 0) return rec ? rec->u : 0.0;
  const ParentInterp pi = parentInterpolation(tree_.dim(), level, idx);
  double val = 0.0;
  for (int k = 0; k < pow2(tree_.dim()); ++k) {
    if (pi.weights[k] == 0.0) continue;
    IndexVec c = pi.coarseCell;
    for (int a = 0; a < tree_.dim(); ++a) c[a] += (k >> a) & 1;
    val += pi.weights[k] * interpolatedValue(level - 1, c);
  }
  return val;
}

void Solver::refineCellWithInit(const CellKey& c) {
  std::vector<VertexKey> fresh;
  tree_.refineCell(c, [&](const VertexKey& v, VertexRecord& rec) {
    (void)rec;
    fresh.push_back(v);
  });
  const int d = tree_.dim();
  for (const auto& v : fresh) {
    VertexRecord& rec = *tree_.vertex(v.level, v.index);
    if (rec.type == VertexType::Hanging) continue;
    if (rec.dirichlet) {
      initVertex(v, rec);
      continue;
    }
    // linear interpolant from the coarser level, then data and stencil
    const ParentInterp pi = parentInterpolation(d, v.level, v.index);
    double u = 0.0;
    for (int k = 0; k < pow2(d); ++k) {
      IndexVec cidx = pi.coarseCell;
      for (int a = 0; a < d; ++a) cidx[a] += (k >> a) & 1;
      u += pi.weights[k] * interpolatedValue(v.level - 1, cidx);
    }
    rec.u = u;
    initVertex(v, rec);
  }
  // one undamped relaxation per fresh interior vertex
  for (const auto& v : fresh) {
    VertexRecord& rec = *tree_.vertex(v.level, v.index);
    if (rec.type == VertexType::Hanging || rec.dirichlet) continue;
    const Stencil row =
        cfg_.storesOperators() ? rec.A : rediscretizedStencil(tree_, v, prob_);
    const int centre = entryFromOffset(IndexVec{0, 0, 0}, 1, d);
    if (std::abs(row[centre]) < kTinyDiag) continue;
    double au = 0.0;
    for (int e = 0; e < pow3(d); ++e) {
      if (row[e] == 0.0) continue;
      IndexVec n = addIndex(v.index, offsetFromEntry(e, 1, d));
      const VertexRecord* nr = tree_.vertex(v.level, n);
      const double nu = (nr && nr->type != VertexType::Hanging) ? nr->u
                                                                : interpolatedValue(v.level, n);
      au += row[e] * nu;
    }
    rec.u += (rec.b - au) / row[centre];
  }
}

const double* Solver::stencil3(const VertexRecord* rec) const {
  if (!cfg_.storesOperators()) return nullptr;
  if (!rec) return nullptr;
  if (rec->hasBackup) return rec->Abackup.data();
  return rec->A.empty() ? nullptr : rec->A.data();
}

double Solver::diagOf(const VertexRecord* rec) const {
  if (cfg_.storesOperators()) {
    const double* s = stencil3(rec);
    return s ? s[entryFromOffset(IndexVec{0, 0, 0}, 1, tree_.dim())] : 0.0;
  }
  return rec->diagAcc;
}

Stencil Solver::hangingStencil3(int level, const IndexVec& idx) const {
  const VertexRecord* rec = tree_.vertex(level, idx);
  if (rec && rec->type != VertexType::Hanging) {
    if (const double* s = stencil3(rec)) return Stencil(s, s + pow3(tree_.dim()));
    return rediscretizedStencil(tree_, VertexKey{level, idx}, prob_);
  }
  const int d = tree_.dim();
  const ParentInterp pi = parentInterpolation(d, level, idx);
  std::vector<Stencil> parents;
  std::vector<double> weights;
  for (int k = 0; k < pow2(d); ++k) {
    if (pi.weights[k] == 0.0) continue;
    IndexVec c = pi.coarseCell;
    for (int a = 0; a < d; ++a) c[a] += (k >> a) & 1;
    parents.push_back(hangingStencil3(level - 1, c));
    weights.push_back(pi.weights[k]);
  }
  return hangingStencilFromParents(parents, weights);
}

double Solver::prolongWeight(const VertexRecord* w, const IndexVec& off) const {
  if (cfg_.operatorMode == OperatorMode::BoxMG && w && !w->P.empty() &&
      w->type != VertexType::Hanging && !w->dirichlet)
    return w->P[entryFromOffset(off, 2, tree_.dim())];
  return dLinearWeight(tree_.dim(), off);
}

double Solver::restrictWeight(const VertexRecord* w, const IndexVec& off) const {
  if (!w || w->type != VertexType::Refined || w->dirichlet) return 0.0;
  switch (cfg_.restriction) {
    case RestrictionVariant::Injection:
      for (int a = 0; a < tree_.dim(); ++a)
        if (off[a] != 0) return 0.0;
      return 1.0;
    case RestrictionVariant::Aggregation:
      return 1.0;
    case RestrictionVariant::Transpose:
      if (cfg_.operatorMode == OperatorMode::BoxMG && !w->R.empty())
        return w->R[entryFromOffset(off, 2, tree_.dim())];
      return dLinearWeight(tree_.dim(), off);
  }
  return 0.0;
}

void Solver::forEachCovering(int fineLevel, const IndexVec& idx,
                             const std::function<void(VertexRecord&, const IndexVec&)>& f) const {
  const int d = tree_.dim();
  const int coarse = fineLevel - 1;
  if (coarse < 0) return;
  const int nc = ipow(3, coarse);
  int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
  for (int a = 0; a < d; ++a) {
    lo[a] = (idx[a] - 2 < 0) ? 0 : (idx[a] - 2 + 2) / 3;  // ceil((idx-2)/3), clamped
    hi[a] = std::min(nc, (idx[a] + 2) / 3);
  }
  for (int z = (d > 2 ? lo[2] : 0); z <= (d > 2 ? hi[2] : 0); ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x) {
        const IndexVec w{x, y, z};
        VertexRecord* rec = const_cast<Spacetree&>(tree_).vertex(coarse, w);
        if (!rec) continue;
        IndexVec off{0, 0, 0};
        bool inSupport = true;
        for (int a = 0; a < d; ++a) {
          off[a] = idx[a] - 3 * w[a];
          if (off[a] < -2 || off[a] > 2) inSupport = false;
        }
        if (inSupport) f(*rec, off);
      }
}

double Solver::gatherP(int fineLevel, const IndexVec& idx,
                       const std::function<double(const VertexRecord&)>& field) const {
  double val = 0.0;
  forEachCovering(fineLevel, idx, [&](VertexRecord& rec, const IndexVec& off) {
    const double pw = prolongWeight(&rec, off);
    if (pw != 0.0) val += pw * field(rec);
  });
  return val;
}

void Solver::scatterRestriction(int fineLevel, const IndexVec& idx, double rhat) {
  if (rhat == 0.0) return;
  forEachCovering(fineLevel, idx, [&](VertexRecord& rec, const IndexVec& off) {
    const double rw = restrictWeight(&rec, off);
    if (rw != 0.0) rec.b += rw * rhat;
  });
}

VertexRecord* Solver::coincidentCoarse(int level, const IndexVec& idx) {
  if (level < 1) return nullptr;
  IndexVec c{0, 0, 0};
  for (int a = 0; a < tree_.dim(); ++a) {
    if (idx[a] % 3 != 0) return nullptr;
    c[a] = idx[a] / 3;
  }
  return tree_.vertex(level - 1, c);
}

bool Solver::isCPoint(int level, const IndexVec& idx) const {
  if (level <= tree_.coarsestActiveLevel()) return false;
  IndexVec c{0, 0, 0};
  for (int a = 0; a < tree_.dim(); ++a) {
    if (idx[a] % 3 != 0) return false;
    c[a] = idx[a] / 3;
  }
  const VertexRecord* w = tree_.vertex(level - 1, c);
  return w && w->type != VertexType::Hanging;
}

void Solver::materializeHanging(VertexRecord& rec, int level, const IndexVec& idx) {
  rec.u = gatherP(level, idx, [](const VertexRecord& w) { return w.u; });
  rec.uHat = 0;
  rec.r = 0;
  rec.rHat = 0;
  rec.diagAcc = 0;
}

void Solver::reconstructAtTouchFirst(VertexRecord& rec, int level, const IndexVec& idx) {
  if (!cfg_.compression() || !rec.compressed) return;
  int bA = 0, bP = 0, bR = 0;
  unpackBpaTags(rec.bpaTags, bA, bP, bR);
  const int d = tree_.dim();
  const Stencil refA = rediscretizedStencil(tree_, VertexKey{level, idx}, prob_);
  rec.A = dehierarchize(decodeStencil(CompressedStencil{bA, rec.payloadA}, pow3(d)), refA);
  if (rec.hadP) {
    rec.P = dehierarchize(decodeStencil(CompressedStencil{bP, rec.payloadP}, pow5(d)),
                          dLinearTransfer(d));
  }
  if (rec.hadR) {
    rec.R = dehierarchize(decodeStencil(CompressedStencil{bR, rec.payloadR}, pow5(d)),
                          restrictionFrom(dLinearTransfer(d), cfg_.restriction));
  }
  rec.payloadA.clear();
  rec.payloadP.clear();
  rec.payloadR.clear();
  rec.compressed = false;
}

void Solver::compressAtTouchLast(VertexRecord& rec, int level, const IndexVec& idx) {
  if (!cfg_.compression() || rec.type == VertexType::Hanging || rec.A.empty()) return;
  const int d = tree_.dim();
  const Stencil refA = rediscretizedStencil(tree_, VertexKey{level, idx}, prob_);
  CompressedStencil cA = encodeStencil(hierarchize(rec.A, refA), cfg_.epsMf);
  int bP = 0, bR = 0;
  rec.hadP = !rec.P.empty();
  rec.hadR = !rec.R.empty();
  if (rec.hadP) {
    CompressedStencil cP = encodeStencil(hierarchize(rec.P, dLinearTransfer(d)), cfg_.epsMf);
    bP = cP.bpa;
    rec.payloadP = std::move(cP.payload);
    rec.P.clear();
    rec.P.shrink_to_fit();
  }
  if (rec.hadR) {
    CompressedStencil cR = encodeStencil(
        hierarchize(rec.R, restrictionFrom(dLinearTransfer(d), cfg_.restriction)), cfg_.epsMf);
    bR = cR.bpa;
    rec.payloadR = std::move(cR.payload);
    rec.R.clear();
    rec.R.shrink_to_fit();
  }
  rec.bpaTags = packBpaTags(cA.bpa, bP, bR);
  rec.payloadA = std::move(cA.payload);
  rec.A.clear();
  rec.A.shrink_to_fit();
  rec.compressed = true;
}

bool Solver::stencilDegenerate(const double* stencil, int d) {
  const int centre = entryFromOffset(IndexVec{0, 0, 0}, 1, d);
  const double c = stencil[centre];
  if (c <= 0.0) return true;
  double offSum = 0.0, scale = std::abs(c);
  for (int e = 0; e < pow3(d); ++e) {
    if (e == centre) continue;
    offSum += stencil[e];
    scale = std::max(scale, std::abs(stencil[e]));
  }
  // zero-row-sum rows sit exactly on the boundary of this test; keep the
  // accumulation roundoff from tipping them over
  return std::abs(offSum) > std::abs(c) + 1e-10 * scale;
}

void Solver::checkCoarsestStencil(const VertexRecord& rec) {
  const double* s = stencil3(&rec);
  if (!s) return;
  if (stencilDegenerate(s, tree_.dim())) stencilAlert_ = true;
}

void Solver::accumulateCellResiduals(const CellCtx& c, bool doR, bool doRhat) {
  const int d = tree_.dim();
  const int nv = pow2(d);
  if (!cfg_.storesOperators()) {
    const ElementMatrix E = elementMatrix(prob_, c.key, d);
    for (int i = 0; i < nv; ++i) {
      if (c.cornerHanging[i]) continue;
      VertexRecord* ri = c.corners[i];
      double au = 0.0, auh = 0.0;
      for (int j = 0; j < nv; ++j) {
        const double e = E[i * nv + j];
        au += e * c.corners[j]->u;
        if (doRhat) auh += e * (c.cornerHanging[j] ? 0.0 : c.corners[j]->uHat);
      }
      if (doR) {
        ri->r -= au;
        ri->diagAcc += E[i * nv + i];
      }
      if (doRhat) ri->rHat -= auh;
    }
    return;
  }
  for (int i = 0; i < nv; ++i) {
    if (c.cornerHanging[i]) continue;
    const double* row = stencil3(c.corners[i]);
    if (!row) continue;
    VertexRecord* ri = c.corners[i];
    double au = 0.0, auh = 0.0, diag = 0.0;
    for (int j = 0; j < nv; ++j) {
      IndexVec off{0, 0, 0};
      double w = 1.0;
      for (int a = 0; a < d; ++a) {
        off[a] = ((j >> a) & 1) - ((i >> a) & 1);
        if (off[a] == 0) w *= 0.5;
      }
      const double e = row[entryFromOffset(off, 1, d)] * w;
      if (i == j) diag = e;
      au += e * c.corners[j]->u;
      if (doRhat) auh += e * (c.cornerHanging[j] ? 0.0 : c.corners[j]->uHat);
    }
    if (doR) {
      ri->r -= au;
      ri->diagAcc += diag;
    }
    if (doRhat) ri->rHat -= auh;
  }
}

void Solver::galerkinCellContribution(const CellCtx& c) {
  const int d = tree_.dim();
  const int L = c.key.level - 1;
  IndexVec parent{0, 0, 0}, childOffset{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    parent[a] = c.key.index[a] / 3;
    childOffset[a] = c.key.index[a] - 3 * parent[a];
  }
  std::array<VertexRecord*, 8> coarse{};
  for (int k = 0; k < pow2(d); ++k) {
    IndexVec w = parent;
    for (int a = 0; a < d; ++a) w[a] += (k >> a) & 1;
    coarse[k] = tree_.vertex(L, w);
  }
  std::array<const double*, 8> fs{};
  std::array<bool, 8> act{};
  for (int k = 0; k < pow2(d); ++k) {
    act[k] = !c.cornerHanging[k];
    fs[k] = act[k] ? stencil3(c.corners[k]) : nullptr;
  }
  galerkinAccumulate(
      d, childOffset, fs, act,
      [&](int bits, const IndexVec& off) { return prolongWeight(coarse[bits], off); },
      [&](int bits, const IndexVec& off) { return restrictWeight(coarse[bits], off); },
      [&](int bits, int entry, double v) {
        if (!coarse[bits]->A.empty()) coarse[bits]->A[entry] += v;
      });
}

void Solver::recomputeBoxmg(const PatchCtx& p) {
  const int d = tree_.dim();
  const int L = p.parent.level;
  PatchStencils ps = PatchStencils::zero(d);
  for (int k = 0; k < ipow(4, d); ++k) {
    IndexVec idx = addIndex(scaleIndex(p.parent.index, 3), unflatten(k, 4, d));
    if (p.hanging[k]) {
      ps.s[k] = hangingStencil3(L + 1, idx);
    } else if (const double* s = stencil3(p.verts[k])) {
      ps.s[k].assign(s, s + pow3(d));
    } else {
      ps.s[k] = rediscretizedStencil(tree_, VertexKey{L + 1, idx}, prob_);
    }
  }
  const auto per = boxmgProlongation(ps);
  for (int bits = 0; bits < pow2(d); ++bits) {
    IndexVec widx = p.parent.index;
    for (int a = 0; a < d; ++a) widx[a] += (bits >> a) & 1;
    VertexRecord* w = tree_.vertex(L, widx);
    if (!w || w->type == VertexType::Hanging || w->dirichlet) continue;
    if (w->P.empty()) w->P = dLinearTransfer(d);
    if (w->R.empty()) w->R = restrictionFrom(dLinearTransfer(d), cfg_.restriction);
    const CornerProlongation& cp = per[bits];
    if (!cp.ok) {
      if (L == tree_.coarsestActiveLevel()) stencilAlert_ = true;
      continue;
    }
    for (int m = 0; m < cp.count; ++m) {
      w->P[cp.entry[m]] = cp.value[m];
      if (cfg_.restriction == RestrictionVariant::Transpose) w->R[cp.entry[m]] = cp.value[m];
    }
  }
}

void Solver::blockGaussSeidel(const PatchCtx& p) {
  const int d = tree_.dim();
  const int fine = p.parent.level + 1;
  const int centre = entryFromOffset(IndexVec{0, 0, 0}, 1, d);
  const int nIota = pow2(d);
  std::array<int, 8> slot{};
  std::array<Stencil, 8> rows;
  for (int k = 0; k < nIota; ++k) {
    IndexVec q{0, 0, 0};
    for (int a = 0; a < d; ++a) q[a] = 1 + ((k >> a) & 1);
    slot[k] = flatten(q, 4, d);
    const VertexRecord* rec = p.verts[slot[k]];
    if (const double* s = stencil3(rec))
      rows[k].assign(s, s + pow3(d));
    else
      rows[k] = rediscretizedStencil(
          tree_, VertexKey{fine, addIndex(scaleIndex(p.parent.index, 3), unflatten(slot[k], 4, d))},
          prob_);
  }
  for (int sweep = 0; sweep < cfg_.blockSweeps; ++sweep) {
    for (int k = 0; k < nIota; ++k) {
      VertexRecord* rec = p.verts[slot[k]];
      const Stencil& row = rows[k];
      if (std::abs(row[centre]) < kTinyDiag) continue;
      IndexVec q = unflatten(slot[k], 4, d);
      double sum = 0.0;
      for (int e = 0; e < pow3(d); ++e) {
        if (e == centre || row[e] == 0.0) continue;
        IndexVec n = addIndex(q, offsetFromEntry(e, 1, d));
        sum += row[e] * p.verts[flatten(n, 4, d)]->u;
      }
      const double unew = (rec->b - sum) / row[centre];
      rec->blockDelta += unew - rec->u;
      rec->u = unew;
      rec->blockUpdated = true;
    }
  }
}

void Solver::onLoad(const VertexCtx& v, const SweepFlags& f) {
  VertexRecord& rec = *v.rec;
  // the memory-access cost proxy counts solver sweeps, not measurement
  if (!v.hanging && !f.evalOnly) ++unknownReads_;
  reconstructAtTouchFirst(rec, v.key.level, v.key.index);
  if (v.hanging) materializeHanging(rec, v.key.level, v.key.index);
}

void Solver::onTouchFirst(const VertexCtx& v, const SweepFlags& f) {
  VertexRecord& rec = *v.rec;
  const int level = v.key.level;
  if (v.hanging) return;  // interpolant only, set at load time
  if (f.evalOnly) {
    rec.r = 0;
    rec.diagAcc = 0;
    return;
  }
  const int lmin = tree_.coarsestActiveLevel();
  if (f.additive) {
    if (level < lmin) return;
    if (cfg_.storesOperators() && rec.type == VertexType::Refined && !rec.dirichlet) {
      rec.Abackup = rec.A;
      rec.hasBackup = true;
      std::fill(rec.A.begin(), rec.A.end(), 0.0);
    }
    if (level > lmin && !rec.dirichlet) {
      const double pd =
          gatherP(level, v.key.index, [](const VertexRecord& w) { return w.dVal; });
      double add = pd;
      if (f.bpx && !isCPoint(level, v.key.index))
        add = pd - gatherP(level, v.key.index, [](const VertexRecord& w) { return w.inj; });
      rec.dVal += add;
      rec.u += add;
    }
    rec.uHat =
        level > lmin
            ? rec.u - gatherP(level, v.key.index, [](const VertexRecord& w) { return w.u; })
            : 0.0;
    rec.r = 0;
    rec.rHat = 0;
    rec.diagAcc = 0;
    if (rec.type == VertexType::Refined && !rec.dirichlet) rec.b = 0;
    return;
  }
  const int cur = S_.current, old = S_.old;
  rec.diagAcc = 0;
  if (level == cur || (cur > level && rec.type == VertexType::Unrefined)) {
    rec.r = 0;
    rec.rHat = 0;
  }
  if (cur < old && old == level)
    rec.uHat = rec.u - gatherP(level, v.key.index, [](const VertexRecord& w) { return w.u; });
  if (cur < old && cur == level && rec.type == VertexType::Refined && !rec.dirichlet) rec.b = 0;
  if (cur > old && cur == level && !rec.dirichlet) {
    const double pd = gatherP(level, v.key.index, [](const VertexRecord& w) { return w.dVal; });
    rec.u += pd;
    rec.dVal += pd;
  }
  if (f.rebuild && level == cur - 1 && rec.type == VertexType::Refined && !rec.dirichlet &&
      cfg_.storesOperators())
    std::fill(rec.A.begin(), rec.A.end(), 0.0);
}

void Solver::onCell(const CellCtx& c, const SweepFlags& f) {
  const int level = c.key.level;
  if (f.evalOnly) {
    const bool contributes = f.evalLevel >= 0
                                 ? level == f.evalLevel
                                 : (level == tree_.finestLevel() || [&] {
                                     for (int k = 0; k < pow2(tree_.dim()); ++k)
                                       if (!c.cornerHanging[k] &&
                                           c.corners[k]->type == VertexType::Unrefined)
                                         return true;
                                     return false;
                                   }());
    if (contributes) accumulateCellResiduals(c, true, false);
    return;
  }
  const int lmin = tree_.coarsestActiveLevel();
  if (f.additive) {
    if (level < lmin) return;
    if (cfg_.storesOperators() && level > lmin) galerkinCellContribution(c);
    accumulateCellResiduals(c, true, true);
    return;
  }
  const int cur = S_.current, old = S_.old;
  if (f.rebuild && level == cur && cfg_.storesOperators()) galerkinCellContribution(c);
  bool anyUnrefined = false;
  for (int k = 0; k < pow2(tree_.dim()); ++k)
    if (!c.cornerHanging[k] && c.corners[k]->type == VertexType::Unrefined) anyUnrefined = true;
  const bool doR = level == cur || (level < cur && anyUnrefined);
  const bool doRhat = cur < old && level == old;
  if (doR || doRhat) accumulateCellResiduals(c, doR, doRhat);
}

void Solver::onTouchLast(const VertexCtx& v, const SweepFlags& f) {
  VertexRecord& rec = *v.rec;
  const int level = v.key.level;
  if (v.hanging) {  // interpolant only; the record data is transient
    rec.u = 0;
    rec.uHat = 0;
    rec.r = 0;
    rec.rHat = 0;
    rec.blockDelta = 0;
    rec.blockUpdated = false;
    return;
  }
  if (f.evalOnly) {
    rec.r += rec.b;
    const bool inNorm = f.evalLevel >= 0
                            ? level == f.evalLevel
                            : rec.type == VertexType::Unrefined;
    if (inNorm && !rec.dirichlet) evalNorm2_ += rec.r * rec.r;
    compressAtTouchLast(rec, level, v.key.index);
    return;
  }
  const int lmin = tree_.coarsestActiveLevel();
  if (f.additive) {
    if (level >= lmin) {
      rec.r += rec.b;
      rec.rHat += rec.b;
      double delta = 0.0;
      if (!rec.dirichlet) {
        if (rec.blockUpdated) {
          delta = rec.blockDelta;
        } else {
          const double diag = diagOf(&rec);
          if (std::abs(diag) < kTinyDiag) {
            stencilAlert_ = true;
          } else {
            delta = omegaEff(level) * rec.r / diag;
          }
        }
      }
      const bool cpt = f.bpx && isCPoint(level, v.key.index);
      if (!rec.dirichlet && !rec.blockUpdated && !cpt) rec.u += delta;
      rec.dVal = delta;
      rec.blockUpdated = false;
      rec.blockDelta = 0;
      if (level > lmin) {
        VertexRecord* w = coincidentCoarse(level, v.key.index);
        if (!f.bpx && w) w->u = rec.u;
        scatterRestriction(level, v.key.index, rec.rHat);
        if (f.bpx && w && w->type == VertexType::Refined) w->inj = rec.dVal;
      }
      if (f.bpx && isCPoint(level, v.key.index)) rec.dVal = 0;
      if (cfg_.storesOperators() && level == lmin && rec.type == VertexType::Refined &&
          !rec.dirichlet)
        checkCoarsestStencil(rec);
    }
    rec.hasBackup = false;
    compressAtTouchLast(rec, level, v.key.index);
    return;
  }
  // multiplicative
  const int cur = S_.current, old = S_.old;
  const bool smoothed = level == cur || (cur > level && rec.type == VertexType::Unrefined);
  if (smoothed) rec.r += rec.b;
  if (cur < old && level == old) rec.rHat += rec.b;
  double delta = 0.0;
  if (smoothed && !rec.dirichlet) {
    if (rec.blockUpdated) {
      delta = rec.blockDelta;
    } else {
      const double diag = diagOf(&rec);
      if (std::abs(diag) < kTinyDiag) {
        stencilAlert_ = true;
      } else {
        delta = omegaEff(level) * rec.r / diag;
        rec.u += delta;
      }
    }
  }
  if (cur > old && cur == level + 1)
    rec.dVal = delta;  // the accumulated correction was prolonged this sweep
  else if (cur < old && cur == level && rec.type == VertexType::Refined)
    rec.dVal = delta;  // fresh correction baseline under the new smoothing level
  else if (smoothed)
    rec.dVal += delta;
  rec.blockUpdated = false;
  rec.blockDelta = 0;
  if (cur >= level && level >= 1) {
    if (VertexRecord* w = coincidentCoarse(level, v.key.index)) w->u = rec.u;
  }
  if (cur < old && old == level) scatterRestriction(level, v.key.index, rec.rHat);
  if (f.rebuild && level == cur - 1 && level == tree_.coarsestActiveLevel() &&
      rec.type == VertexType::Refined && !rec.dirichlet && cfg_.storesOperators())
    checkCoarsestStencil(rec);
  rec.hasBackup = false;
  compressAtTouchLast(rec, level, v.key.index);
}

void Solver::onDescend(const PatchCtx& p, const SweepFlags& f) {
  if (f.evalOnly) return;
  const int L = p.parent.level;
  const int lmin = tree_.coarsestActiveLevel();
  if (cfg_.operatorMode == OperatorMode::BoxMG) {
    const bool gate = f.additive ? L >= lmin : (f.rebuild && L == S_.current - 1);
    if (gate) recomputeBoxmg(p);
  }
  if (cfg_.smoother == SmootherKind::BlockJacobi && cfg_.blockSweeps > 0) {
    // multiplicative: pure smoothing sweeps only; the transition sweeps fuse
    // inter-grid transfers whose data a patch solve must not preempt
    const bool gate =
        f.additive ? L + 1 >= lmin : (L + 1 == S_.current && S_.current == S_.old);
    if (gate) blockGaussSeidel(p);
  }
}

void Solver::runSweep(const SweepFlags& f) {
  TraversalEvents ev;
  ev.loadVertex = [&](const VertexCtx& v) { onLoad(v, f); };
  ev.touchVertexFirstTime = [&](const VertexCtx& v) { onTouchFirst(v, f); };
  ev.handleCell = [&](const CellCtx& c) { onCell(c, f); };
  ev.touchVertexLastTime = [&](const VertexCtx& v) { onTouchLast(v, f); };
  ev.descend = [&](const PatchCtx& p) { onDescend(p, f); };
  int maxLevel = tree_.finestLevel();
  if (f.evalOnly && f.evalLevel >= 0) maxLevel = f.evalLevel;
  if (!f.evalOnly && !f.additive) maxLevel = std::max(S_.current, S_.old);
  if (!f.evalOnly) ++sweeps_;
  tree_.traverse(ev, maxLevel);
}

void Solver::sweepState(bool rebuildCoarse) {
  SweepFlags f;
  f.rebuild = rebuildCoarse && cfg_.storesOperators();
  runSweep(f);
}

void Solver::sweepAdditive() {
  SweepFlags f;
  f.additive = true;
  f.bpx = cfg_.family == SolverFamily::BPX;
  runSweep(f);
}

double Solver::measureResidual() {
  SweepFlags f;
  f.evalOnly = true;
  evalNorm2_ = 0.0;
  runSweep(f);
  return std::sqrt(evalNorm2_);
}

int Solver::exactCoarseSolve(int level, double tol, int cap) {
  S_ = SolverState{level, level};
  int n = 0;
  while (levelResidual(level) >= tol && n < cap) {
    sweepState(false);
    ++n;
  }
  if (n >= cap) ++coarseSolveFailures_;
  return n;
}

double Solver::levelResidual(int level) {
  SweepFlags f;
  f.evalOnly = true;
  f.evalLevel = level;
  evalNorm2_ = 0.0;
  runSweep(f);
  return std::sqrt(evalNorm2_);
}

void Solver::runCycle() {
  const int finest = tree_.finestLevel();
  if (cfg_.family != SolverFamily::Multiplicative) {
    sweepAdditive();
    if (consumeStencilAlert() && tree_.coarsestActiveLevel() < finest)
      tree_.setCoarsestActiveLevel(tree_.coarsestActiveLevel() + 1);
    if (cfg_.coarseSolve == CoarseSolveMode::Exact &&
        tree_.coarsestActiveLevel() < tree_.finestLevel())
      exactCoarseSolve(tree_.coarsestActiveLevel());
    return;
  }
  auto stepTo = [&](int level) {
    S_.old = S_.current;
    S_.current = level;
  };
  S_ = SolverState{finest, finest};
  int l = finest;
  while (true) {
    for (int k = 0; k < cfg_.muPre; ++k) {
      stepTo(l);
      const bool rebuild =
          cfg_.storesOperators() && k == cfg_.muPre - 1 && l > tree_.coarsestActiveLevel();
      sweepState(rebuild);
      if (consumeStencilAlert() && tree_.coarsestActiveLevel() < finest)
        tree_.setCoarsestActiveLevel(tree_.coarsestActiveLevel() + 1);
    }
    if (l <= tree_.coarsestActiveLevel()) break;
    --l;
  }
  // once the hierarchy has degenerated to a single level the cycle is plain
  // (block) Jacobi; polishing that level would solve the full problem exactly
  if (cfg_.coarseSolve == CoarseSolveMode::Exact && l < tree_.finestLevel())
    exactCoarseSolve(l);
  for (int k = 0; k < cfg_.muPost; ++k) {
    stepTo(l);
    sweepState(false);
  }
  while (l < finest) {
    ++l;
    for (int k = 0; k < cfg_.muPost; ++k) {
      stepTo(l);
      sweepState(false);
    }
  }
  S_.old = S_.current;
}

SolveReport Solver::solve(const std::function<int(Solver&)>& betweenCycles) {
  SolveReport rep;
  const double r0 = measureResidual();
  rep.residualHistory.push_back(r0);
  rep.unknownReadHistory.push_back(unknownReads_);
  rep.coarsestLevelHistory.push_back(tree_.coarsestActiveLevel());
  rep.persistentBytesHistory.push_back(memoryStats().persistentBytes);
  if (r0 == 0.0) {
    rep.outcome = Outcome::Converged;
    rep.cycles = 0;
    rep.unknownReads = unknownReads_;
    rep.memory = memoryStats();
    return rep;
  }
  const double target = r0 / cfg_.reductionGoal;
  rep.outcome = Outcome::NotConverged;
  rep.cycles = cfg_.maxIterations;
  bool refinedLastCycle = false;
  for (int cycle = 1; cycle <= cfg_.maxIterations; ++cycle) {
    runCycle();
    const double rk = measureResidual();
    const double prev = rep.residualHistory.back();
    rep.residualHistory.push_back(rk);
    rep.unknownReadHistory.push_back(unknownReads_);
    rep.coarsestLevelHistory.push_back(tree_.coarsestActiveLevel());
    rep.persistentBytesHistory.push_back(memoryStats().persistentBytes);
    if (logEnabled())
      std::fprintf(stderr, "[treemg] cycle %d residual %.6e lmin %d reads %llu\n", cycle, rk,
                   tree_.coarsestActiveLevel(), unknownReads_);
    if (rk <= target) {
      rep.outcome = Outcome::Converged;
      rep.cycles = cycle;
      break;
    }
    if (rk > cfg_.divergenceFactor * r0) {
      rep.outcome = Outcome::Diverged;
      rep.cycles = cycle;
      break;
    }
    // The residual rule stays quiet while the additive-family pipeline fills:
    // their corrections reach the finest level only after one sweep per
    // level, so early ratios are startup transients. A multiplicative cycle
    // is complete from the first iteration on.
    const int pipeline = cfg_.family == SolverFamily::Multiplicative
                             ? 0
                             : tree_.finestLevel() - tree_.coarsestActiveLevel() + 1;
    if (cycle > pipeline && !refinedLastCycle && prev > 0.0 && rk > cfg_.stagnationRho * prev &&
        tree_.coarsestActiveLevel() < tree_.finestLevel())
      tree_.setCoarsestActiveLevel(tree_.coarsestActiveLevel() + 1);
    refinedLastCycle = betweenCycles ? betweenCycles(*this) > 0 : false;
  }
  rep.unknownReads = unknownReads_;
  rep.coarseSolveFailures = coarseSolveFailures_;
  rep.memory = memoryStats();
  return rep;
}

MemoryStats Solver::memoryStats() const {
  MemoryStats m;
  const int d = tree_.dim();
  const std::size_t unknowns = (cfg_.family == SolverFamily::BPX ? 4 : 3) * 8 + 1;
  for (int l = 0; l <= tree_.finestLevel(); ++l) {
    tree_.forEachVertexConst(l, [&](const VertexKey&, const VertexRecord& rec) {
      if (rec.type == VertexType::Hanging) return;
      ++m.vertices;
      m.persistentBytes += unknowns;
      std::size_t logical = unknowns;
      if (cfg_.compression()) {
        m.persistentBytes += 2;  // the bpa tags
        const std::size_t pay =
            rec.payloadA.size() + rec.payloadP.size() + rec.payloadR.size();
        m.persistentBytes += pay;
        m.payloadBytes += pay;
        int bA = 0, bP = 0, bR = 0;
        unpackBpaTags(rec.bpaTags, bA, bP, bR);
        ++m.bpaHistogram[bA];
        ++m.bpaHistogram[bP];
        ++m.bpaHistogram[bR];
        if (rec.bpaTags == 0) ++m.allZeroBpaVertices;
        logical += 8 * pow3(d);  // the stencil it stands in for
        if (rec.hadP) logical += 8 * pow5(d);
        if (rec.hadR) logical += 8 * pow5(d);
      } else {
        const std::size_t raw =
            8 * (rec.A.size() + rec.P.size() + rec.R.size());
        m.persistentBytes += raw;
        logical += raw;
      }
      m.uncompressedBytes += logical;
    });
  }
  m.compressionRatio =
      m.uncompressedBytes ? double(m.persistentBytes) / double(m.uncompressedBytes) : 1.0;
  return m;
}

}  // namespace treemg
