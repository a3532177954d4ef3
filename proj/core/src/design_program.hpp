#pragma once

// Shared plumbing between the CAP and CBP optimizers: mapping model
// quantities (covariances, quantization variances, rates) onto convex
// program variables and building log-det arguments and their tangents.

#include <memory>
#include <string>
#include <vector>

#include "cran/convex_backend.hpp"
#include "cran/geometry_channel.hpp"
#include "cran/signal_model.hpp"

namespace cran::detail {

/// Capacities at or below this are treated as an RU that carries nothing.
inline constexpr double kDarkCapacity = 1e-9;

/// Lower floor of rate variables. Slightly negative so that a zero rate
/// bound still leaves an interior; reported rates are clamped at zero.
inline constexpr double kRateFloor = -1e-9;

struct VariableMap {
  int total_tx = 0;
  std::vector<std::vector<int>> support;  // per MS, global antenna indices
  std::vector<int> cov_var;               // per MS, PSD variable or -1
  std::vector<int> sigma_var;             // per RU, scalar variable or -1
  std::vector<double> sigma_fixed;        // per RU, value when not a variable
  std::vector<int> rate_var;              // per MS, rate variable or -1
  double sigma_floor = kQuantizationFloor;
};

/// Declares the variables of `map` in a fresh program (same order every call).
void declare_variables(convex::ConvexProgram& program, const VariableMap& map);

PrecoderCovariance covariance_of(const VariableMap& map, const convex::Solution& x);
QuantizationProfile quantization_of(const VariableMap& map, const convex::Solution& x, double floor);
/// Rates clamped at zero.
std::vector<double> rates_of(const VariableMap& map, const convex::Solution& x);

convex::Solution point_of(const VariableMap& map, const PrecoderCovariance& v, const QuantizationProfile& q,
                          const std::vector<double>& rates);

/// base + sum_k G_k V_k G_k^H + sum_i sigma_i F_i
struct LogdetArgument {
  CMatrix base;
  std::vector<std::pair<int, CMatrix>> psd_maps;
  std::vector<std::pair<int, CMatrix>> scalar_maps;

  CMatrix evaluate(const convex::Solution& x) const;
  convex::LogDetAtom atom(double weight) const;
  /// scale * f(A, B(x)) with f the first-order expansion of log2 det at A.
  convex::AffineForm tangent(const CMatrix& a, double scale) const;
};

/// I + H_j (sum_{k in K} E_k V_k E_k^T + Omega) H_j^H, with K all MSs or all
/// MSs except j.
LogdetArgument rate_argument(const VariableMap& map, const SystemConfig& config, const ChannelRealization& h,
                             int ms, bool include_self);

/// D_i^T (sum_k E_k V_k E_k^T) D_i + sigma_i^2 I
LogdetArgument fronthaul_argument(const VariableMap& map, const SystemConfig& config, int ru);

/// tr(D_i^T (sum_k E_k V_k E_k^T) D_i) + N_t,i sigma_i^2
convex::AffineForm power_form(const VariableMap& map, const SystemConfig& config, int ru);

/// sigma^2 solving log2 det(B + sigma^2 I) - n log2 sigma^2 = bits, never
/// below twice the floor (the rate then undershoots `bits`).
double quantization_for_rate(const CMatrix& block, double bits, double floor);

/// Runs the sequence of slowly changing programs of an MM loop. Each solve
/// starts from the previous one's centred iterate at a moderate barrier
/// weight (recentring from a near-boundary optimum is slow), and the result
/// is never worse than a feasible incumbent.
class SequentialSolver {
 public:
  explicit SequentialSolver(convex::SolveOptions options);
  /// Throws std::runtime_error naming `context` if the program is infeasible.
  convex::Solution solve(const convex::ConvexProgram& program, const convex::Solution& incumbent,
                         const std::string& context);

 private:
  convex::SolveOptions options_;
  std::shared_ptr<const convex::Solution> checkpoint_;
  double checkpoint_barrier_ = 0.0;
};

}  // namespace cran::detail
