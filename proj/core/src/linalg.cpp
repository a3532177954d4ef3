#include "cran/linalg.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace cran::linalg {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2 = 0.7071067811865476;
}  // namespace

CMatrix hermitian_part(const CMatrix& a) { return 0.5 * (a + a.adjoint()); }

std::optional<double> try_log2_det(const CMatrix& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  double acc = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index k = 0; k < a.rows(); ++k) {
    const double d = l(k, k).real();
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    acc += std::log(d);
  }
  return 2.0 * acc * kInvLn2;
}

double log2_det(const CMatrix& a) {
  auto v = try_log2_det(a);
  if (!v) throw std::domain_error("log2_det: matrix is not positive definite");
  return *v;
}

double min_eigenvalue(const CMatrix& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

CMatrix psd_sqrt(const CMatrix& a) {
  if (a.rows() == 0) return a;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(a));
  RVector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

CMatrix clamp_psd(const CMatrix& a) {
  if (a.rows() == 0) return a;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(a));
  RVector ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

void to_params(const CMatrix& herm, std::span<double> out) {
  const int d = static_cast<int>(herm.rows());
  if (static_cast<int>(out.size()) != d * d)
    throw std::invalid_argument("to_params: coordinate span has wrong size");
  int p = 0;
  for (int r = 0; r < d; ++r) out[p++] = herm(r, r).real();
  for (int r = 0; r < d; ++r) {
    for (int c = r + 1; c < d; ++c) {
      // average the two triangles so slightly non-Hermitian input is projected
      const Complex v = 0.5 * (herm(r, c) + std::conj(herm(c, r)));
      out[p++] = kSqrt2 * v.real();
      out[p++] = kSqrt2 * v.imag();
    }
  }
}

void add_to_params(const CMatrix& herm, double scale, std::span<double> out) {
  const int d = static_cast<int>(herm.rows());
  int p = 0;
  for (int r = 0; r < d; ++r) out[p++] += scale * herm(r, r).real();
  for (int r = 0; r < d; ++r) {
    for (int c = r + 1; c < d; ++c) {
      const Complex v = 0.5 * (herm(r, c) + std::conj(herm(c, r)));
      out[p++] += scale * kSqrt2 * v.real();
      out[p++] += scale * kSqrt2 * v.imag();
    }
  }
}

CMatrix from_params(std::span<const double> params, int d) {
  if (static_cast<int>(params.size()) != d * d)
    throw std::invalid_argument("from_params: coordinate span has wrong size");
  CMatrix x(d, d);
  int p = 0;
  for (int r = 0; r < d; ++r) x(r, r) = params[p++];
  for (int r = 0; r < d; ++r) {
    for (int c = r + 1; c < d; ++c) {
      const Complex v(params[p] * kInvSqrt2, params[p + 1] * kInvSqrt2);
      p += 2;
      x(r, c) = v;
      x(c, r) = std::conj(v);
    }
  }
  return x;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto splitmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = splitmix(base);
  h = splitmix(h ^ a);
  h = splitmix(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix(h ^ (c + 0x85157af5ULL));
  return h;
}

}  // namespace cran::linalg
