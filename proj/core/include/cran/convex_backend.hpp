#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cran/linalg.hpp"

namespace cran::convex {

// A small conic modelling layer for the inner problems of the MM / SSUM
// loops: maximize a sum of weighted log-det-of-affine atoms plus an affine
// term over Hermitian PSD matrices, floored scalars and rate variables,
// subject to convex "atom <= bound" constraints.

struct PsdVariable {
  int dim = 0;
  std::string label;
};

struct ScalarVariable {
  double floor = 0.0;  // strict lower bound s > floor
  std::string label;
};

struct RateVariable {
  std::string label;
  std::optional<double> floor;  // free when empty
};

/// constant + sum_b Re tr(M_b X_b) + sum_k a_k s_k + sum_m c_m r_m
struct AffineForm {
  double constant = 0.0;
  std::vector<std::pair<int, CMatrix>> psd;
  std::vector<std::pair<int, double>> scalar;
  std::vector<std::pair<int, double>> rate;

  void add_psd(int var, const CMatrix& coeff, double scale = 1.0);
  void add_scalar(int var, double coeff);
  void add_rate(int var, double coeff);
  void add(const AffineForm& other, double scale = 1.0);
};

/// weight * log2 det(base + sum_b G_b X_b G_b^H + sum_k s_k F_k)
/// base must be Hermitian positive definite and every F_k Hermitian PSD.
struct LogDetAtom {
  double weight = 1.0;
  CMatrix base;
  std::vector<std::pair<int, CMatrix>> psd_maps;     // (variable, G)
  std::vector<std::pair<int, CMatrix>> scalar_maps;  // (variable, F)
};

/// coeff * (-log2 s_k), coeff >= 0
struct NegLogTerm {
  int scalar = 0;
  double coeff = 0.0;
};

/// affine + sum neg_logs - sum neg_logdets <= bound  (convex left-hand side)
struct Constraint {
  std::string label;
  AffineForm affine;
  std::vector<NegLogTerm> neg_logs;
  std::vector<LogDetAtom> neg_logdets;
  double bound = 0.0;
};

struct ConvexProgram {
  std::vector<PsdVariable> psd_vars;
  std::vector<ScalarVariable> scalar_vars;
  std::vector<RateVariable> rate_vars;
  std::vector<LogDetAtom> objective_logdets;
  AffineForm objective_affine;
  std::vector<Constraint> constraints;

  int add_psd(int dim, std::string label);
  int add_scalar(double floor, std::string label);
  int add_rate(std::string label, std::optional<double> floor = std::nullopt);

  /// Structural check: indices in range, shapes consistent, weights and
  /// coefficients nonnegative, bases PD. Throws std::invalid_argument.
  void validate() const;
};

enum class SolveStatus { Optimal, MaxIterations, Infeasible };

const char* to_string(SolveStatus s);

struct Solution {
  std::vector<CMatrix> psd_values;
  std::vector<double> scalar_values;
  std::vector<double> rate_values;
  double objective_value = 0.0;
  double kkt_residual = 0.0;  // duality-gap bound of the returned point
  SolveStatus status = SolveStatus::Infeasible;
  int newton_steps = 0;
  /// Well-centred interior point from the path (see checkpoint_barrier);
  /// a good start for a nearby program.
  std::shared_ptr<const Solution> checkpoint;
  double checkpoint_barrier = 0.0;
};

struct SolveOptions {
  double tolerance = 1e-6;
  int max_iterations = 1000;       // total Newton steps, all stages
  double initial_barrier = 1.0;    // t at the first centering
  double barrier_growth = 10.0;
  std::ostream* debug = nullptr;   // JSON-lines iterate dump when set
  /// With a strictly feasible warm start, pick the first barrier weight
  /// from the schedule by smallest Newton decrement instead of using
  /// `initial_barrier`.
  bool adapt_warm_barrier = true;
  /// When > 0, the centred iterate of the first stage with t >= this value
  /// is returned in Solution::checkpoint.
  double checkpoint_barrier = 0.0;
};

/// Logarithmic-barrier interior-point method. A strictly feasible warm start
/// skips phase one; the returned point is never worse than the warm start.
Solution solve(const ConvexProgram& program, const std::optional<Solution>& warm_start = std::nullopt,
               const SolveOptions& options = {});

double evaluate_objective(const ConvexProgram& program, const Solution& point);

/// Left-hand side of every constraint at `point` (compare with bound).
std::vector<double> constraint_values(const ConvexProgram& program, const Solution& point);

/// Largest violation max(0, lhs - bound) over constraints, variable floors
/// and PSD cones (as -min eigenvalue).
double max_violation(const ConvexProgram& program, const Solution& point);

}  // namespace cran::convex
