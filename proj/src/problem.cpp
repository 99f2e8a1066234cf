#include "treemg/problem.hpp"

#include <cmath>
#include <stdexcept>

namespace treemg {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Coefficients ProblemSpec::eval(const Point& x) const {
  Coefficients c;
  switch (kind) {
    case Benchmark::Sin: {
      double f = 2.0 * kPi * kPi;
      for (int a = 0; a < d; ++a) f *= std::sin(kPi * x[a]);
      c.rhs = f;
      break;
    }
    case Benchmark::Jump: {
      const double e = x[0] < 0.5 ? 1.0 : 0.1;
      for (int a = 0; a < d; ++a) c.epsilon[a] = e;
      c.rhs = 1.0;
      break;
    }
    case Benchmark::Checkerboard: {
      for (int a = 0; a < d; ++a) c.epsilon[a] = x[a] < 0.5 ? 1.0 : 0.1;
      c.rhs = 1.0;
      break;
    }
    case Benchmark::Circle: {
      const double e = (d == 2 || x[2] <= 0.5) ? circleEps : 1.0;
      for (int a = 0; a < d; ++a) c.epsilon[a] = e;
      c.velocity[0] = std::sin(kPi * (x[1] - 0.5)) * std::cos(kPi * (x[0] - 0.5));
      c.velocity[1] = -std::cos(kPi * (x[1] - 0.5)) * std::sin(kPi * (x[0] - 0.5));
      c.rhs = 0.0;
      break;
    }
  }
  return c;
}

double ProblemSpec::dirichlet(const Point& x) const {
  if (kind == Benchmark::Circle) {
    if (x[0] == 0.0 || x[0] == 1.0) {
      const double y = x[1] - 0.5;
      return 1.0 - 4.0 * y * y;
    }
    return 0.0;
  }
  return 0.0;
}

bool ProblemSpec::onBoundary(const Point& x) const {
  for (int a = 0; a < d; ++a)
    if (x[a] == 0.0 || x[a] == 1.0) return true;
  return false;
}

ProblemSpec ProblemSpec::byName(const std::string& name, int d, double circleEps) {
  ProblemSpec p;
  p.d = d;
  p.circleEps = circleEps;
  if (name == "sin")
    p.kind = Benchmark::Sin;
  else if (name == "jump")
    p.kind = Benchmark::Jump;
  else if (name == "checkerboard")
    p.kind = Benchmark::Checkerboard;
  else if (name == "circle")
    p.kind = Benchmark::Circle;
  else
    throw std::invalid_argument("unknown problem: " + name);
  return p;
}

std::string ProblemSpec::name() const {
  switch (kind) {
    case Benchmark::Sin: return "sin";
    case Benchmark::Jump: return "jump";
    case Benchmark::Checkerboard: return "checkerboard";
    case Benchmark::Circle: return "circle";
  }
  return "?";
}

}  // namespace treemg
