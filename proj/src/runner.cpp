#include "treemg/runner.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "treemg/adaptivity.hpp"

namespace treemg {

void RunConfig::validate() const {
  if (d != 2 && d != 3) throw std::invalid_argument("d must be 2 or 3");
  if (hMinExp < 1 || hMinExp > 7)
    throw std::invalid_argument("hmin exponent must be in 1..7 (mesh width 3^-n)");
  if (solver.omega <= 0.0 || solver.omega >= 2.0)
    throw std::invalid_argument("omega must lie in (0,2)");
  if (solver.muPre < 1 || solver.muPost < 1)
    throw std::invalid_argument("mu counts must be >= 1");
  ProblemSpec::byName(problem, d, circleEps);  // rejects unknown names
}

SolveReport runScenario(const RunConfig& cfg) {
  cfg.validate();
  const ProblemSpec prob = ProblemSpec::byName(cfg.problem, cfg.d, cfg.circleEps);
  const bool dynamic = cfg.gridMode == GridMode::Dynamic;
  Spacetree tree(cfg.d, dynamic ? 1 : cfg.hMinExp);
  Solver solver(tree, prob, cfg.solver);
  if (!dynamic) return solver.solve();
  AdaptivityDriver driver(solver, cfg.hMinExp);
  return solver.solve([&](Solver&) { return driver.selectAndRefine(); });
}

void emitCsv(const SolveReport& rep, std::ostream& os) {
  os << "cycle,residual,unknown_reads,coarsest_level,persistent_bytes\n";
  char buf[64];
  for (std::size_t k = 0; k < rep.residualHistory.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17e", rep.residualHistory[k]);
    os << k << ',' << buf << ',' << rep.unknownReadHistory[k] << ','
       << rep.coarsestLevelHistory[k] << ',' << rep.persistentBytesHistory[k] << '\n';
  }
}

std::string summaryLine(const RunConfig& cfg, const SolveReport& rep) {
  std::ostringstream os;
  char buf[64];
  const double r0 = rep.residualHistory.front();
  const double rn = rep.residualHistory.back();
  os << "problem=" << cfg.problem << " d=" << cfg.d << " n=" << cfg.hMinExp
     << " grid=" << (cfg.gridMode == GridMode::Dynamic ? "dynamic" : "regular")
     << " solver=" << familyName(cfg.solver.family) << " ops=" << opsName(cfg.solver.operatorMode)
     << " outcome=" << SolveReport::outcomeName(rep.outcome) << " cycles=" << rep.cycles;
  std::snprintf(buf, sizeof buf, " r0=%.6e", r0);
  os << buf;
  std::snprintf(buf, sizeof buf, " r=%.6e", rn);
  os << buf;
  if (r0 > 0.0) {
    std::snprintf(buf, sizeof buf, " reduction=%.3e", r0 / (rn > 0 ? rn : 1e-300));
    os << buf;
  }
  os << " unknown_reads=" << rep.unknownReads
     << " coarsest_level=" << rep.coarsestLevelHistory.back()
     << " persistent_bytes=" << rep.memory.persistentBytes
     << " payload_bytes=" << rep.memory.payloadBytes;
  std::snprintf(buf, sizeof buf, " compression_ratio=%.4f", rep.memory.compressionRatio);
  os << buf;
  if (rep.memory.vertices > 0) {
    std::snprintf(buf, sizeof buf, " bpa0_vertices=%.4f",
                  double(rep.memory.allZeroBpaVertices) / double(rep.memory.vertices));
    os << buf;
  }
  if (rep.coarseSolveFailures > 0) os << " coarse_solve_failures=" << rep.coarseSolveFailures;
  return os.str();
}

void emitReport(const RunConfig& cfg, const SolveReport& rep) {
  if (!cfg.outPath.empty()) {
    std::ofstream f(cfg.outPath, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + cfg.outPath);
    emitCsv(rep, f);
  }
  std::cout << summaryLine(cfg, rep) << "\n";
}

const char* familyName(SolverFamily f) {
  switch (f) {
    case SolverFamily::Additive: return "add";
    case SolverFamily::BPX: return "bpx";
    case SolverFamily::Multiplicative: return "mult";
  }
  return "?";
}

const char* opsName(OperatorMode m) {
  switch (m) {
    case OperatorMode::Rediscretize: return "redisc";
    case OperatorMode::Galerkin: return "galerkin";
    case OperatorMode::BoxMG: return "boxmg";
  }
  return "?";
}

std::vector<SuiteCell> runSuite(const SuiteSpec& spec) {
  std::vector<SuiteCell> cells;
  for (const auto& prob : spec.problems)
    for (auto family : spec.families)
      for (auto ops : spec.opsModes) {
        SuiteCell cell;
        cell.problem = prob;
        cell.family = family;
        cell.ops = ops;
        bool allConverged = true;
        for (int n : spec.hMinExps) {
          RunConfig rc = spec.base;
          rc.problem = prob;
          rc.hMinExp = n;
          rc.solver.family = family;
          rc.solver.operatorMode = ops;
          int cycles = -1;
          try {
            const SolveReport rep = runScenario(rc);
            if (rep.outcome == Outcome::Converged) cycles = rep.cycles;
          } catch (const std::exception& e) {
            std::cerr << "suite cell " << prob << "/" << familyName(family) << "/"
                      << opsName(ops) << " n=" << n << ": " << e.what() << "\n";
          }
          if (cycles < 0) allConverged = false;
          cell.cycles.push_back(cycles);
        }
        if (!allConverged) {
          cell.outcome = SuiteOutcome::Failed;
        } else if (cell.cycles.size() >= 2) {
          const double a = cell.cycles[cell.cycles.size() - 2];
          const double b = cell.cycles[cell.cycles.size() - 1];
          cell.outcome = (a > 0 && b / a <= 1.25) ? SuiteOutcome::ConvergedMeshIndependent
                                                  : SuiteOutcome::Converged;
        } else {
          cell.outcome = SuiteOutcome::Converged;
        }
        cells.push_back(cell);
      }
  return cells;
}

void printSuiteTable(const std::vector<SuiteCell>& cells, const SuiteSpec& spec,
                     std::ostream& os) {
  os << "solver/ops";
  for (const auto& p : spec.problems) os << '\t' << p;
  os << '\n';
  for (auto family : spec.families)
    for (auto ops : spec.opsModes) {
      os << familyName(family) << '/' << opsName(ops);
      for (const auto& p : spec.problems) {
        const SuiteCell* found = nullptr;
        for (const auto& c : cells)
          if (c.problem == p && c.family == family && c.ops == ops) found = &c;
        const char* sym = "-";
        if (found) {
          switch (found->outcome) {
            case SuiteOutcome::ConvergedMeshIndependent: sym = "ok"; break;
            case SuiteOutcome::Converged: sym = "(ok)"; break;
            case SuiteOutcome::Failed: sym = "x"; break;
          }
        }
        os << '\t' << sym;
        if (found) {
          os << " [";
          for (std::size_t k = 0; k < found->cycles.size(); ++k) {
            if (k) os << ' ';
            if (found->cycles[k] < 0)
              os << "-";
            else
              os << found->cycles[k];
          }
          os << "]";
        }
      }
      os << '\n';
    }
}

}  // namespace treemg
