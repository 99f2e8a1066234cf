#include "treemg/grid.hpp"

#include <algorithm>
#include <stdexcept>

namespace treemg {

Spacetree::Spacetree(int d, int initialDepth) : d_(d), finestLevel_(0), coarsestActiveLevel_(1) {
  if (d != 2 && d != 3) throw std::invalid_argument("dimension must be 2 or 3");
  if (initialDepth < 1) throw std::invalid_argument("initialDepth must be >= 1");
  levels_.resize(1);
  levels_[0].cells.emplace(packIndex(IndexVec{0, 0, 0}), CellInfo{});
  for (int k = 0; k < pow2(d_); ++k) {
    IndexVec corner = unflatten(k, 2, d_);
    ensureVertex(VertexKey{0, corner});
  }
  for (int depth = 0; depth < initialDepth; ++depth) {
    std::vector<CellKey> toRefine;
    const int l = finestLevel_;
    for (const auto& [packed, info] : levels_[l].cells) {
      (void)info;
      // unpack by scanning vertices is avoided: reconstruct from packed key
      IndexVec idx{int(packed & 0x1fffff), int((packed >> 21) & 0x1fffff),
                   int((packed >> 42) & 0x1fffff)};
      toRefine.push_back(CellKey{l, idx});
    }
    std::sort(toRefine.begin(), toRefine.end(), [](const CellKey& a, const CellKey& b) {
      return packIndex(a.index) < packIndex(b.index);
    });
    for (const auto& c : toRefine) refineCell(c);
  }
}

void Spacetree::setCoarsestActiveLevel(int l) {
  if (l < 1) l = 1;
  if (l > finestLevel_) l = finestLevel_;
  coarsestActiveLevel_ = l;
}

bool Spacetree::cellExists(const CellKey& c) const {
  if (c.level < 0 || c.level >= int(levels_.size())) return false;
  return levels_[c.level].cells.count(packIndex(c.index)) > 0;
}

bool Spacetree::cellRefined(const CellKey& c) const {
  if (c.level < 0 || c.level >= int(levels_.size())) return false;
  auto it = levels_[c.level].cells.find(packIndex(c.index));
  return it != levels_[c.level].cells.end() && it->second.refined;
}

std::size_t Spacetree::cellCount(int level) const {
  if (level < 0 || level >= int(levels_.size())) return 0;
  return levels_[level].cells.size();
}

std::size_t Spacetree::vertexCount(int level) const {
  if (level < 0 || level >= int(levels_.size())) return 0;
  return levels_[level].vertices.size();
}

VertexRecord* Spacetree::vertex(int level, const IndexVec& idx) {
  if (level < 0 || level >= int(levels_.size())) return nullptr;
  auto it = levels_[level].vertices.find(packIndex(idx));
  return it == levels_[level].vertices.end() ? nullptr : it->second.get();
}

const VertexRecord* Spacetree::vertex(int level, const IndexVec& idx) const {
  if (level < 0 || level >= int(levels_.size())) return nullptr;
  auto it = levels_[level].vertices.find(packIndex(idx));
  return it == levels_[level].vertices.end() ? nullptr : it->second.get();
}

int Spacetree::expectedAdjacentCells(const VertexKey& v) const {
  const int n = ipow(3, v.level);
  int count = 1;
  for (int a = 0; a < d_; ++a) count *= (v.index[a] == 0 || v.index[a] == n) ? 1 : 2;
  return count;
}

int Spacetree::actualAdjacentCells(const VertexKey& v) const {
  const int n = ipow(3, v.level);
  int count = 0;
  for (int k = 0; k < pow2(d_); ++k) {
    IndexVec off = unflatten(k, 2, d_);
    IndexVec cell;
    bool valid = true;
    for (int a = 0; a < d_; ++a) {
      cell[a] = v.index[a] - 1 + off[a];
      if (cell[a] < 0 || cell[a] >= n) valid = false;
    }
    for (int a = d_; a < 3; ++a) cell[a] = 0;
    if (valid && cellExists(CellKey{v.level, cell})) ++count;
  }
  return count;
}

VertexType Spacetree::classifyVertex(const VertexKey& v) const {
  if (actualAdjacentCells(v) < expectedAdjacentCells(v)) return VertexType::Hanging;
  const VertexKey finer{v.level + 1, scaleIndex(v.index, 3)};
  if (vertex(finer.level, finer.index) &&
      actualAdjacentCells(finer) >= expectedAdjacentCells(finer))
    return VertexType::Refined;
  return VertexType::Unrefined;
}

void Spacetree::setVertexFlags(const VertexKey& v, VertexRecord& rec) const {
  const int n = ipow(3, v.level);
  rec.dirichlet = false;
  for (int a = 0; a < d_; ++a)
    if (v.index[a] == 0 || v.index[a] == n) rec.dirichlet = true;
}

VertexRecord& Spacetree::ensureVertex(const VertexKey& v, bool* created) {
  if (v.level >= int(levels_.size())) levels_.resize(v.level + 1);
  auto& map = levels_[v.level].vertices;
  auto it = map.find(packIndex(v.index));
  if (it == map.end()) {
    auto rec = std::make_unique<VertexRecord>();
    setVertexFlags(v, *rec);
    it = map.emplace(packIndex(v.index), std::move(rec)).first;
    if (created) *created = true;
  } else if (created) {
    *created = false;
  }
  return *it->second;
}

void Spacetree::reclassifyAround(const CellKey& c) {
  // children-level patch vertices plus the cell's own corners
  const int lf = c.level + 1;
  for (int k = 0; k < ipow(4, d_); ++k) {
    IndexVec local = unflatten(k, 4, d_);
    IndexVec idx = addIndex(scaleIndex(c.index, 3), local);
    if (VertexRecord* rec = vertex(lf, idx)) rec->type = classifyVertex(VertexKey{lf, idx});
  }
  for (int k = 0; k < pow2(d_); ++k) {
    IndexVec idx = addIndex(c.index, unflatten(k, 2, d_));
    if (VertexRecord* rec = vertex(c.level, idx)) rec->type = classifyVertex(VertexKey{c.level, idx});
  }
}

void Spacetree::refineCell(const CellKey& c,
                           const std::function<void(const VertexKey&, VertexRecord&)>& onNewVertex) {
  if (c.level < 0 || c.level >= int(levels_.size()))
    throw std::invalid_argument("refineCell: cell does not exist");
  auto lvlIt = levels_[c.level].cells.find(packIndex(c.index));
  if (lvlIt == levels_[c.level].cells.end())
    throw std::invalid_argument("refineCell: cell does not exist");
  if (lvlIt->second.refined) return;  // no-op
  lvlIt->second.refined = true;

  const int lf = c.level + 1;
  if (lf >= int(levels_.size())) levels_.resize(lf + 1);
  for (int k = 0; k < pow3(d_); ++k) {
    IndexVec child = addIndex(scaleIndex(c.index, 3), unflatten(k, 3, d_));
    levels_[lf].cells.emplace(packIndex(child), CellInfo{});
  }
  std::vector<VertexKey> fresh;
  for (int k = 0; k < ipow(4, d_); ++k) {
    IndexVec idx = addIndex(scaleIndex(c.index, 3), unflatten(k, 4, d_));
    bool created = false;
    ensureVertex(VertexKey{lf, idx}, &created);
    if (created) fresh.push_back(VertexKey{lf, idx});
  }
  if (lf > finestLevel_) finestLevel_ = lf;
  reclassifyAround(c);
  if (onNewVertex)
    for (const auto& v : fresh) onNewVertex(v, *vertex(v.level, v.index));
}

void Spacetree::eraseSubtree(const CellKey& c) {
  if (!cellExists(c)) return;
  auto& info = levels_[c.level].cells[packIndex(c.index)];
  if (!info.refined) return;  // no-op
  const int lf = c.level + 1;
  for (int k = 0; k < pow3(d_); ++k) {
    CellKey child{lf, addIndex(scaleIndex(c.index, 3), unflatten(k, 3, d_))};
    eraseSubtree(child);
    levels_[lf].cells.erase(packIndex(child.index));
  }
  info.refined = false;
  // drop orphaned children-level vertices
  for (int k = 0; k < ipow(4, d_); ++k) {
    IndexVec idx = addIndex(scaleIndex(c.index, 3), unflatten(k, 4, d_));
    VertexKey v{lf, idx};
    if (vertex(lf, idx) && actualAdjacentCells(v) == 0) levels_[lf].vertices.erase(packIndex(idx));
  }
  while (finestLevel_ > 0 && levels_[finestLevel_].cells.empty()) --finestLevel_;
  if (coarsestActiveLevel_ > finestLevel_) coarsestActiveLevel_ = std::max(1, finestLevel_);
  reclassifyAround(c);
}

double Spacetree::meshWidth(int level) const { return 1.0 / ipow(3, level); }

Point Spacetree::vertexPosition(const VertexKey& v) const {
  const double h = meshWidth(v.level);
  Point p{0, 0, 0};
  for (int a = 0; a < d_; ++a) p[a] = (v.index[a] == ipow(3, v.level)) ? 1.0 : v.index[a] * h;
  return p;
}

Point Spacetree::cellMidpoint(const CellKey& c) const {
  const double h = meshWidth(c.level);
  Point p{0, 0, 0};
  for (int a = 0; a < d_; ++a) p[a] = (c.index[a] + 0.5) * h;
  return p;
}

std::size_t Spacetree::nonHangingVertexCount() const {
  std::size_t n = 0;
  for (int l = 0; l < int(levels_.size()); ++l)
    for (const auto& [k, rec] : levels_[l].vertices) {
      (void)k;
      if (rec->type != VertexType::Hanging) ++n;
    }
  return n;
}

void Spacetree::forEachVertex(int level,
                              const std::function<void(const VertexKey&, VertexRecord&)>& f) {
  if (level < 0 || level >= int(levels_.size())) return;
  std::vector<std::uint64_t> keys;
  keys.reserve(levels_[level].vertices.size());
  for (const auto& [k, rec] : levels_[level].vertices) {
    (void)rec;
    keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());
  for (auto k : keys) {
    IndexVec idx{int(k & 0x1fffff), int((k >> 21) & 0x1fffff), int((k >> 42) & 0x1fffff)};
    f(VertexKey{level, idx}, *levels_[level].vertices.at(k));
  }
}

void Spacetree::forEachVertexConst(
    int level, const std::function<void(const VertexKey&, const VertexRecord&)>& f) const {
  if (level < 0 || level >= int(levels_.size())) return;
  std::vector<std::uint64_t> keys;
  keys.reserve(levels_[level].vertices.size());
  for (const auto& [k, rec] : levels_[level].vertices) {
    (void)rec;
    keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());
  for (auto k : keys) {
    IndexVec idx{int(k & 0x1fffff), int((k >> 21) & 0x1fffff), int((k >> 42) & 0x1fffff)};
    f(VertexKey{level, idx}, *levels_[level].vertices.at(k));
  }
}

void Spacetree::recurse(const CellKey& c, const TraversalEvents& events, int maxLevel) {
  const bool refined = cellRefined(c);
  if (refined && c.level < maxLevel) {
    PatchCtx patch;
    patch.parent = c;
    const int lf = c.level + 1;
    int freshCount = 0;
    std::array<int, 64> fresh{};
    for (int k = 0; k < ipow(4, d_); ++k) {
      IndexVec idx = addIndex(scaleIndex(c.index, 3), unflatten(k, 4, d_));
      VertexRecord* rec = vertex(lf, idx);
      patch.verts[k] = rec;
      patch.hanging[k] = rec->type == VertexType::Hanging;
      if (!rec->touched) {
        rec->touched = true;
        rec->pending = actualAdjacentCells(VertexKey{lf, idx});
        fresh[freshCount++] = k;
        if (events.loadVertex)
          events.loadVertex(VertexCtx{VertexKey{lf, idx}, rec, patch.hanging[k]});
      }
    }
    if (events.descend) events.descend(patch);
    if (events.touchVertexFirstTime)
      for (int m = 0; m < freshCount; ++m) {
        const int k = fresh[m];
        IndexVec idx = addIndex(scaleIndex(c.index, 3), unflatten(k, 4, d_));
        events.touchVertexFirstTime(VertexCtx{VertexKey{lf, idx}, patch.verts[k], patch.hanging[k]});
      }
    for (int k = 0; k < pow3(d_); ++k) {
      CellKey child{lf, addIndex(scaleIndex(c.index, 3), unflatten(k, 3, d_))};
      recurse(child, events, maxLevel);
    }
  }
  CellCtx ctx;
  ctx.key = c;
  ctx.refined = refined;
  for (int k = 0; k < pow2(d_); ++k) {
    IndexVec idx = addIndex(c.index, unflatten(k, 2, d_));
    VertexRecord* rec = vertex(c.level, idx);
    ctx.corners[k] = rec;
    ctx.cornerHanging[k] = rec->type == VertexType::Hanging;
  }
  if (events.handleCell) events.handleCell(ctx);
  for (int k = 0; k < pow2(d_); ++k) {
    IndexVec idx = addIndex(c.index, unflatten(k, 2, d_));
    VertexRecord* rec = ctx.corners[k];
    if (--rec->pending == 0) {
      rec->touched = false;
      if (events.touchVertexLastTime)
        events.touchVertexLastTime(
            VertexCtx{VertexKey{c.level, idx}, rec, rec->type == VertexType::Hanging});
    }
  }
}

void Spacetree::traverse(const TraversalEvents& events, int maxLevel) {
  if (traversing_) throw std::logic_error("reentrant traversal");
  traversing_ = true;
  if (maxLevel < 0) maxLevel = finestLevel_;
  const CellKey root{0, IndexVec{0, 0, 0}};
  for (int k = 0; k < pow2(d_); ++k) {
    IndexVec idx = unflatten(k, 2, d_);
    VertexRecord* rec = vertex(0, idx);
    rec->touched = true;
    rec->pending = 1;
    const VertexCtx ctx{VertexKey{0, idx}, rec, rec->type == VertexType::Hanging};
    if (events.loadVertex) events.loadVertex(ctx);
    if (events.touchVertexFirstTime) events.touchVertexFirstTime(ctx);
  }
  recurse(root, events, maxLevel);
  traversing_ = false;
}

}  // namespace treemg
