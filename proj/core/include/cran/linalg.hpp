#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>

#include <Eigen/Dense>

namespace cran {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// 1 / ln 2: converts natural-log derivatives to bits.
inline constexpr double kInvLn2 = 1.4426950408889634;

namespace linalg {

/// (A + A^H) / 2
CMatrix hermitian_part(const CMatrix& a);

/// log2 det(A) of a Hermitian positive-definite matrix via Cholesky.
/// Returns nullopt when the factorization fails.
std::optional<double> try_log2_det(const CMatrix& a);

/// Throwing variant of try_log2_det.
double log2_det(const CMatrix& a);

/// Smallest eigenvalue of the Hermitian part of `a`.
double min_eigenvalue(const CMatrix& a);

/// Principal square root of a Hermitian PSD matrix; negative eigenvalues
/// are clamped to zero.
CMatrix psd_sqrt(const CMatrix& a);

/// Eigenvalues clamped at zero, reassembled.
CMatrix clamp_psd(const CMatrix& a);

// Orthonormal real coordinates of the space of d x d Hermitian matrices
// under <A, B> = Re tr(A B). Coordinate layout: the d diagonal entries
// followed by (sqrt2 Re a_rc, sqrt2 Im a_rc) for r < c in row-major order.
// There are exactly d*d coordinates.

inline int hermitian_dim(int d) { return d * d; }

void to_params(const CMatrix& herm, std::span<double> out);
CMatrix from_params(std::span<const double> params, int d);

/// Writes x into coordinate slots, scaling by `scale`, accumulating.
void add_to_params(const CMatrix& herm, double scale, std::span<double> out);

/// 64-bit mixing used to derive independent seeds from a base seed and a
/// tuple of counters (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0);

}  // namespace linalg
}  // namespace cran
