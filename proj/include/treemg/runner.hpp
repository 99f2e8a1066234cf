#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "treemg/solver.hpp"

namespace treemg {

enum class GridMode { Regular, Dynamic };

struct RunConfig {
  std::string problem = "sin";
  int d = 2;
  int hMinExp = 3;  // finest mesh width 3^-n
  GridMode gridMode = GridMode::Regular;
  double circleEps = 1e-1;
  unsigned seed = 0;  // reserved for randomized tie-breaking; none by default
  SolverConfig solver;
  std::string outPath;

  void validate() const;
};

SolveReport runScenario(const RunConfig& cfg);

void emitCsv(const SolveReport& rep, std::ostream& os);
std::string summaryLine(const RunConfig& cfg, const SolveReport& rep);
void emitReport(const RunConfig& cfg, const SolveReport& rep);

enum class SuiteOutcome { ConvergedMeshIndependent, Converged, Failed };

struct SuiteCell {
  std::string problem;
  SolverFamily family;
  OperatorMode ops;
  SuiteOutcome outcome = SuiteOutcome::Failed;
  std::vector<int> cycles;  // per tested mesh exponent
};

struct SuiteSpec {
  std::vector<std::string> problems;
  std::vector<SolverFamily> families;
  std::vector<OperatorMode> opsModes;
  std::vector<int> hMinExps;  // ascending
  RunConfig base;
};

std::vector<SuiteCell> runSuite(const SuiteSpec& spec);
void printSuiteTable(const std::vector<SuiteCell>& cells, const SuiteSpec& spec,
                     std::ostream& os);

const char* familyName(SolverFamily f);
const char* opsName(OperatorMode m);

}  // namespace treemg
