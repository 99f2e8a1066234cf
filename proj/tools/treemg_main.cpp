#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "treemg/runner.hpp"

namespace {

using namespace treemg;

SolverFamily parseFamily(const std::string& s) {
  if (s == "add") return SolverFamily::Additive;
  if (s == "bpx") return SolverFamily::BPX;
  if (s == "mult") return SolverFamily::Multiplicative;
  throw CLI::ValidationError("--solver", "expected add, bpx or mult");
}

OperatorMode parseOps(const std::string& s) {
  if (s == "redisc") return OperatorMode::Rediscretize;
  if (s == "galerkin") return OperatorMode::Galerkin;
  if (s == "boxmg") return OperatorMode::BoxMG;
  throw CLI::ValidationError("--ops", "expected redisc, galerkin or boxmg");
}

RestrictionVariant parseRestriction(const std::string& s) {
  if (s == "transpose") return RestrictionVariant::Transpose;
  if (s == "inject") return RestrictionVariant::Injection;
  if (s == "aggregate") return RestrictionVariant::Aggregation;
  throw CLI::ValidationError("--restriction", "expected transpose, inject or aggregate");
}

void parseSmoother(const std::string& s, SolverConfig& cfg) {
  if (s == "jacobi") {
    cfg.smoother = SmootherKind::Jacobi;
    return;
  }
  if (s.rfind("block:", 0) == 0) {
    cfg.smoother = SmootherKind::BlockJacobi;
    cfg.blockSweeps = std::stoi(s.substr(6));
    if (cfg.blockSweeps < 0) throw CLI::ValidationError("--smoother", "block sweep count < 0");
    return;
  }
  throw CLI::ValidationError("--smoother", "expected jacobi or block:N");
}

struct CommonFlags {
  std::string problem = "sin";
  int d = 2;
  int hminExp = 3;
  std::string grid = "regular";
  std::string solver = "mult";
  std::string ops = "redisc";
  std::string restriction = "transpose";
  std::string smoother = "jacobi";
  double omega = 0.8;
  std::string damping = "uniform";
  std::vector<int> mu{2, 1};
  std::string coarse = "sweep";
  double epsMf = 0.0;
  int maxIt = 300;
  double reduction = 1e8;
  double circleEps = 1e-1;
  unsigned seed = 0;
  std::string out;
};

void addCommonFlags(CLI::App* app, CommonFlags& f) {
  app->add_option("--problem", f.problem, "benchmark: sin, jump, checkerboard, circle");
  app->add_option("--d", f.d, "spatial dimension (2 or 3)");
  app->add_option("--hmin-exp", f.hminExp, "finest mesh width exponent n, h = 3^-n");
  app->add_option("--grid", f.grid, "regular or dynamic");
  app->add_option("--solver", f.solver, "add, bpx or mult");
  app->add_option("--ops", f.ops, "redisc, galerkin or boxmg");
  app->add_option("--restriction", f.restriction, "transpose, inject or aggregate");
  app->add_option("--smoother", f.smoother, "jacobi or block:N");
  app->add_option("--omega", f.omega, "relaxation factor in (0,2)");
  app->add_option("--damping", f.damping, "uniform or exp");
  app->add_option("--mu", f.mu, "pre- and post-smoothing counts")->expected(2);
  app->add_option("--coarse", f.coarse, "sweep or exact");
  app->add_option("--eps-mf", f.epsMf, "stencil compression tolerance (0 = off)");
  app->add_option("--max-it", f.maxIt, "iteration cap");
  app->add_option("--reduction", f.reduction, "residual reduction goal");
  app->add_option("--circle-eps", f.circleEps, "diffusion weight of the circle setup");
  app->add_option("--seed", f.seed, "seed for randomized tie-breaking (unused by default)");
  app->add_option("--out", f.out, "CSV output path");
  app->set_config("--config", "", "key = value configuration file; flags override");
}

RunConfig toRunConfig(const CommonFlags& f) {
  RunConfig rc;
  rc.problem = f.problem;
  rc.d = f.d;
  rc.hMinExp = f.hminExp;
  if (f.grid == "regular")
    rc.gridMode = GridMode::Regular;
  else if (f.grid == "dynamic")
    rc.gridMode = GridMode::Dynamic;
  else
    throw CLI::ValidationError("--grid", "expected regular or dynamic");
  rc.circleEps = f.circleEps;
  rc.seed = f.seed;
  rc.outPath = f.out;
  rc.solver.family = parseFamily(f.solver);
  rc.solver.operatorMode = parseOps(f.ops);
  rc.solver.restriction = parseRestriction(f.restriction);
  parseSmoother(f.smoother, rc.solver);
  rc.solver.omega = f.omega;
  if (f.damping == "uniform")
    rc.solver.damping = DampingMode::Uniform;
  else if (f.damping == "exp")
    rc.solver.damping = DampingMode::Exponential;
  else
    throw CLI::ValidationError("--damping", "expected uniform or exp");
  rc.solver.muPre = f.mu.at(0);
  rc.solver.muPost = f.mu.at(1);
  if (f.coarse == "sweep")
    rc.solver.coarseSolve = CoarseSolveMode::SweepOnly;
  else if (f.coarse == "exact")
    rc.solver.coarseSolve = CoarseSolveMode::Exact;
  else
    throw CLI::ValidationError("--coarse", "expected sweep or exact");
  rc.solver.epsMf = f.epsMf;
  rc.solver.maxIterations = f.maxIt;
  rc.solver.reductionGoal = f.reduction;
  rc.validate();
  return rc;
}

std::vector<std::string> splitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasi-matrix-free geometric-algebraic multigrid benchmark"};
  app.require_subcommand(1);

  CommonFlags sf;
  CLI::App* solveCmd = app.add_subcommand("solve", "run one benchmark configuration");
  addCommonFlags(solveCmd, sf);

  CommonFlags uf;
  std::string problems = "sin,jump,checkerboard";
  std::string solvers = "add,bpx,mult";
  std::string opsList = "redisc,galerkin,boxmg";
  std::string hminExps = "2,3";
  CLI::App* suiteCmd = app.add_subcommand("suite", "run a problem x solver x operator grid");
  addCommonFlags(suiteCmd, uf);
  suiteCmd->add_option("--problems", problems, "comma-separated problem list");
  suiteCmd->add_option("--solvers", solvers, "comma-separated solver families");
  suiteCmd->add_option("--ops-list", opsList, "comma-separated operator modes");
  suiteCmd->add_option("--hmin-exps", hminExps, "comma-separated mesh exponents, ascending");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solveCmd->parsed()) {
      const treemg::RunConfig rc = toRunConfig(sf);
      const treemg::SolveReport rep = treemg::runScenario(rc);
      treemg::emitReport(rc, rep);
      return 0;
    }
    treemg::SuiteSpec spec;
    spec.base = toRunConfig(uf);
    spec.problems = splitList(problems);
    for (const auto& s : splitList(solvers)) spec.families.push_back(parseFamily(s));
    for (const auto& s : splitList(opsList)) spec.opsModes.push_back(parseOps(s));
    for (const auto& s : splitList(hminExps)) spec.hMinExps.push_back(std::stoi(s));
    const auto cells = treemg::runSuite(spec);
    treemg::printSuiteTable(cells, spec, std::cout);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
