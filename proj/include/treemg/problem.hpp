#pragma once

#include <array>
#include <string>

namespace treemg {

using Point = std::array<double, 3>;

enum class Benchmark { Sin, Jump, Checkerboard, Circle };

struct Coefficients {
  std::array<double, 3> epsilon{1, 1, 1};  // diagonal diffusion tensor entries
  std::array<double, 3> velocity{0, 0, 0};
  double rhs = 0;
};

// Convection-diffusion benchmark problems on (0,1)^d.
struct ProblemSpec {
  Benchmark kind = Benchmark::Sin;
  int d = 2;
  double circleEps = 1e-1;  // diffusion weight of the circle setup

  Coefficients eval(const Point& x) const;
  double dirichlet(const Point& x) const;
  bool onBoundary(const Point& x) const;

  static ProblemSpec byName(const std::string& name, int d, double circleEps = 1e-1);
  std::string name() const;
};

}  // namespace treemg
