#include "cran/convex_backend.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "json.hpp"

namespace cran::convex {

// ---------------------------------------------------------------------------
// Program construction

void AffineForm::add_psd(int var, const CMatrix& coeff, double scale) {
  for (auto& [v, m] : psd) {
    if (v == var) {
      m += scale * coeff;
      return;
    }
  }
  psd.emplace_back(var, scale * coeff);
}

void AffineForm::add_scalar(int var, double coeff) {
  for (auto& [v, c] : scalar) {
    if (v == var) {
      c += coeff;
      return;
    }
  }
  scalar.emplace_back(var, coeff);
}

void AffineForm::add_rate(int var, double coeff) {
  for (auto& [v, c] : rate) {
    if (v == var) {
      c += coeff;
      return;
    }
  }
  rate.emplace_back(var, coeff);
}

void AffineForm::add(const AffineForm& other, double scale) {
  constant += scale * other.constant;
  for (const auto& [v, m] : other.psd) add_psd(v, m, scale);
  for (const auto& [v, c] : other.scalar) add_scalar(v, scale * c);
  for (const auto& [v, c] : other.rate) add_rate(v, scale * c);
}

int ConvexProgram::add_psd(int dim, std::string label) {
  psd_vars.push_back({dim, std::move(label)});
  return static_cast<int>(psd_vars.size()) - 1;
}

int ConvexProgram::add_scalar(double floor, std::string label) {
  scalar_vars.push_back({floor, std::move(label)});
  return static_cast<int>(scalar_vars.size()) - 1;
}

int ConvexProgram::add_rate(std::string label, std::optional<double> floor) {
  rate_vars.push_back({std::move(label), floor});
  return static_cast<int>(rate_vars.size()) - 1;
}

namespace {

void fail(const std::string& what) { throw std::invalid_argument("ConvexProgram: " + what); }

void validate_affine(const ConvexProgram& p, const AffineForm& a, const std::string& where) {
  for (const auto& [v, m] : a.psd) {
    if (v < 0 || v >= static_cast<int>(p.psd_vars.size())) fail(where + " references unknown PSD variable");
    if (m.rows() != p.psd_vars[v].dim || m.cols() != p.psd_vars[v].dim) fail(where + " PSD coefficient has wrong shape");
  }
  for (const auto& [v, c] : a.scalar)
    if (v < 0 || v >= static_cast<int>(p.scalar_vars.size())) fail(where + " references unknown scalar variable");
  for (const auto& [v, c] : a.rate)
    if (v < 0 || v >= static_cast<int>(p.rate_vars.size())) fail(where + " references unknown rate variable");
  if (!std::isfinite(a.constant)) fail(where + " has a non-finite constant");
}

void validate_atom(const ConvexProgram& p, const LogDetAtom& atom, const std::string& where) {
  if (!(atom.weight >= 0.0) || !std::isfinite(atom.weight)) fail(where + " log-det weight must be >= 0");
  const auto m = atom.base.rows();
  if (m < 1 || atom.base.cols() != m) fail(where + " log-det base must be square and nonempty");
  if (linalg::min_eigenvalue(atom.base) <= 0.0) fail(where + " log-det base must be positive definite");
  for (const auto& [v, g] : atom.psd_maps) {
    if (v < 0 || v >= static_cast<int>(p.psd_vars.size())) fail(where + " references unknown PSD variable");
    if (g.rows() != m || g.cols() != p.psd_vars[v].dim) fail(where + " PSD map has wrong shape");
  }
  for (const auto& [v, f] : atom.scalar_maps) {
    if (v < 0 || v >= static_cast<int>(p.scalar_vars.size())) fail(where + " references unknown scalar variable");
    if (f.rows() != m || f.cols() != m) fail(where + " scalar map has wrong shape");
    if (p.scalar_vars[v].floor < 0.0) fail(where + " scalar in a log-det atom needs a nonnegative floor");
    if (linalg::min_eigenvalue(f) < -1e-12) fail(where + " scalar map must be PSD");
  }
}

}  // namespace

void ConvexProgram::validate() const {
  for (const auto& v : psd_vars)
    if (v.dim < 1) fail("PSD variable '" + v.label + "' must have dimension >= 1");
  for (const auto& v : scalar_vars)
    if (!std::isfinite(v.floor)) fail("scalar variable '" + v.label + "' has a non-finite floor");
  validate_affine(*this, objective_affine, "objective");
  for (const auto& a : objective_logdets) validate_atom(*this, a, "objective");

  std::vector<bool> rate_bounded(rate_vars.size(), false);
  for (std::size_t m = 0; m < rate_vars.size(); ++m) rate_bounded[m] = rate_vars[m].floor.has_value();
  for (const auto& c : constraints) {
    const std::string where = "constraint '" + c.label + "'";
    validate_affine(*this, c.affine, where);
    for (const auto& a : c.neg_logdets) validate_atom(*this, a, where);
    for (const auto& t : c.neg_logs) {
      if (t.scalar < 0 || t.scalar >= static_cast<int>(scalar_vars.size())) fail(where + " references unknown scalar variable");
      if (!(t.coeff >= 0.0)) fail(where + " negated-log coefficient must be >= 0");
      if (scalar_vars[t.scalar].floor < 0.0) fail(where + " negated-log needs a nonnegative floor");
    }
    if (!std::isfinite(c.bound)) fail(where + " has a non-finite bound");
    for (const auto& [v, coeff] : c.affine.rate)
      if (coeff != 0.0) rate_bounded[v] = true;
  }
  for (std::size_t m = 0; m < rate_vars.size(); ++m)
    if (!rate_bounded[m]) fail("rate variable '" + rate_vars[m].label + "' appears in no constraint and has no floor");
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIterations: return "max-iterations";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Compiled representation over a flat real coordinate vector
//   [ PSD blocks (orthonormal Hermitian coordinates) | scalars | rates ]

namespace {

struct Layout {
  std::vector<int> dim;
  std::vector<int> off;
  int psd_total = 0;
  int n_scalar = 0;
  int n_rate = 0;
  int scalar_off() const { return psd_total; }
  int rate_off() const { return psd_total + n_scalar; }
  int small() const { return n_scalar + n_rate; }
  int total() const { return psd_total + n_scalar + n_rate; }
};

struct CompiledAtom {
  double weight = 0.0;
  CMatrix base;
  std::vector<std::pair<int, CMatrix>> psd_maps;
  std::vector<std::pair<int, CMatrix>> scalar_maps;
};

struct CompiledConstraint {
  RVector a;
  double constant = 0.0;
  std::vector<NegLogTerm> neg_logs;
  std::vector<CompiledAtom> atoms;
  double bound = 0.0;
};

struct Compiled {
  Layout layout;
  RVector obj_a;
  double obj_const = 0.0;
  std::vector<CompiledAtom> obj_atoms;
  std::vector<CompiledConstraint> cons;
  std::vector<double> scalar_floor;
  std::vector<std::optional<double>> rate_floor;
  double degree = 0.0;  // barrier parameter count
};

RVector compile_affine(const Layout& lay, const AffineForm& a) {
  RVector out = RVector::Zero(lay.total());
  for (const auto& [v, m] : a.psd) {
    const int d = lay.dim[v];
    linalg::add_to_params(linalg::hermitian_part(m), 1.0,
                          std::span<double>(out.data() + lay.off[v], static_cast<std::size_t>(d) * d));
  }
  for (const auto& [v, c] : a.scalar) out[lay.scalar_off() + v] += c;
  for (const auto& [v, c] : a.rate) out[lay.rate_off() + v] += c;
  return out;
}

CompiledAtom compile_atom(const LogDetAtom& a) {
  CompiledAtom c;
  c.weight = a.weight;
  c.base = linalg::hermitian_part(a.base);
  for (const auto& [v, g] : a.psd_maps) {
    bool merged = false;
    // maps of the same variable cannot be merged (G X G^H is not additive in G)
    (void)merged;
    c.psd_maps.emplace_back(v, g);
  }
  for (const auto& [v, f] : a.scalar_maps) c.scalar_maps.emplace_back(v, linalg::hermitian_part(f));
  return c;
}

Compiled compile(const ConvexProgram& p) {
  Compiled c;
  auto& lay = c.layout;
  int off = 0;
  for (const auto& v : p.psd_vars) {
    lay.dim.push_back(v.dim);
    lay.off.push_back(off);
    off += v.dim * v.dim;
  }
  lay.psd_total = off;
  lay.n_scalar = static_cast<int>(p.scalar_vars.size());
  lay.n_rate = static_cast<int>(p.rate_vars.size());
  c.obj_a = compile_affine(lay, p.objective_affine);
  c.obj_const = p.objective_affine.constant;
  for (const auto& a : p.objective_logdets)
    if (a.weight > 0.0) c.obj_atoms.push_back(compile_atom(a));
  for (const auto& con : p.constraints) {
    CompiledConstraint cc;
    cc.a = compile_affine(lay, con.affine);
    cc.constant = con.affine.constant;
    for (const auto& t : con.neg_logs)
      if (t.coeff > 0.0) cc.neg_logs.push_back(t);
    for (const auto& a : con.neg_logdets)
      if (a.weight > 0.0) cc.atoms.push_back(compile_atom(a));
    cc.bound = con.bound;
    c.cons.push_back(std::move(cc));
  }
  for (const auto& s : p.scalar_vars) c.scalar_floor.push_back(s.floor);
  for (const auto& r : p.rate_vars) c.rate_floor.push_back(r.floor);
  c.degree = static_cast<double>(c.cons.size() + c.scalar_floor.size());
  for (int d : lay.dim) c.degree += d;
  for (const auto& f : c.rate_floor)
    if (f) c.degree += 1.0;
  return c;
}

// ---------------------------------------------------------------------------
// Point evaluation

struct AtomState {
  Eigen::LLT<CMatrix> chol;
  double log2det = 0.0;
};

struct State {
  RVector x;
  std::vector<CMatrix> X;
  std::vector<Eigen::LLT<CMatrix>> Xchol;
  std::vector<AtomState> obj_atoms;
  std::vector<std::vector<AtomState>> con_atoms;
  std::vector<double> con_lhs;
  std::vector<double> slack;
  double objective = 0.0;
  double phi = 0.0;
};

double log_det_from_chol(const Eigen::LLT<CMatrix>& llt) {
  double acc = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index k = 0; k < l.rows(); ++k) acc += std::log(l(k, k).real());
  return 2.0 * acc;
}

bool chol_ok(const Eigen::LLT<CMatrix>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index k = 0; k < l.rows(); ++k) {
    const double d = l(k, k).real();
    if (!(d > 0.0) || !std::isfinite(d)) return false;
  }
  return true;
}

CMatrix atom_argument(const CompiledAtom& a, const State& st, const Layout& lay) {
  CMatrix s = a.base;
  for (const auto& [v, g] : a.psd_maps) s.noalias() += g * st.X[v] * g.adjoint();
  for (const auto& [v, f] : a.scalar_maps) s += st.x[lay.scalar_off() + v] * f;
  return linalg::hermitian_part(s);
}

bool eval_atom(const CompiledAtom& a, const State& st, const Layout& lay, AtomState& out) {
  out.chol.compute(atom_argument(a, st, lay));
  if (!chol_ok(out.chol)) return false;
  out.log2det = log_det_from_chol(out.chol) * kInvLn2;
  return std::isfinite(out.log2det);
}

/// Fills `st` at point x. With `require_strict`, returns false outside the
/// barrier domain (PSD, floors, constraint slacks). Objective and
/// constraint values are always computed when atoms are defined.
bool evaluate(const Compiled& c, const RVector& x, double t, State& st, bool require_strict = true) {
  const auto& lay = c.layout;
  st.x = x;
  const auto nb = lay.dim.size();
  st.X.resize(nb);
  st.Xchol.resize(nb);
  double barrier = 0.0;
  bool strict = true;
  for (std::size_t b = 0; b < nb; ++b) {
    const int d = lay.dim[b];
    st.X[b] = linalg::from_params(std::span<const double>(x.data() + lay.off[b], static_cast<std::size_t>(d) * d), d);
    st.Xchol[b].compute(st.X[b]);
    if (!chol_ok(st.Xchol[b])) {
      strict = false;
      if (require_strict) return false;
    } else {
      barrier -= log_det_from_chol(st.Xchol[b]);
    }
  }
  for (int k = 0; k < lay.n_scalar; ++k) {
    const double gap = x[lay.scalar_off() + k] - c.scalar_floor[k];
    if (!(gap > 0.0)) {
      strict = false;
      if (require_strict) return false;
    } else {
      barrier -= std::log(gap);
    }
  }
  for (int m = 0; m < lay.n_rate; ++m) {
    if (!c.rate_floor[m]) continue;
    const double gap = x[lay.rate_off() + m] - *c.rate_floor[m];
    if (!(gap > 0.0)) {
      strict = false;
      if (require_strict) return false;
    } else {
      barrier -= std::log(gap);
    }
  }

  st.obj_atoms.resize(c.obj_atoms.size());
  double obj = c.obj_a.dot(x) + c.obj_const;
  for (std::size_t a = 0; a < c.obj_atoms.size(); ++a) {
    if (!eval_atom(c.obj_atoms[a], st, lay, st.obj_atoms[a])) return false;
    obj += c.obj_atoms[a].weight * st.obj_atoms[a].log2det;
  }
  st.objective = obj;

  st.con_atoms.resize(c.cons.size());
  st.con_lhs.resize(c.cons.size());
  st.slack.resize(c.cons.size());
  for (std::size_t k = 0; k < c.cons.size(); ++k) {
    const auto& con = c.cons[k];
    double g = con.a.dot(x) + con.constant;
    for (const auto& t : con.neg_logs) {
      const double s = x[lay.scalar_off() + t.scalar];
      if (!(s > 0.0)) return false;
      g -= t.coeff * std::log2(s);
    }
    st.con_atoms[k].resize(con.atoms.size());
    for (std::size_t a = 0; a < con.atoms.size(); ++a) {
      if (!eval_atom(con.atoms[a], st, lay, st.con_atoms[k][a])) return false;
      g -= con.atoms[a].weight * st.con_atoms[k][a].log2det;
    }
    st.con_lhs[k] = g;
    st.slack[k] = con.bound - g;
    if (!(st.slack[k] > 0.0)) {
      strict = false;
      if (require_strict) return false;
    } else {
      barrier -= std::log(st.slack[k]);
    }
  }
  st.phi = -t * obj + barrier;
  return strict && std::isfinite(st.phi);
}

// ---------------------------------------------------------------------------
// Derivatives: H = blockdiag(B_b, D) + U U^T, B_b : Delta -> X^-1 Delta X^-1

struct Derivatives {
  RVector grad;
  RMatrix U;  // P x k
  RMatrix D;  // small x small
};

/// Gradient of log2 det(S) (in bits) scaled by `scale`, accumulated into g.
void add_atom_gradient(const CompiledAtom& a, const AtomState& as, const Layout& lay, double scale,
                       Eigen::Ref<RVector> g) {
  for (const auto& [v, gm] : a.psd_maps) {
    const CMatrix sinv_g = as.chol.solve(gm);
    const CMatrix m = gm.adjoint() * sinv_g;
    const int d = lay.dim[v];
    linalg::add_to_params(m, scale * kInvLn2, std::span<double>(g.data() + lay.off[v], static_cast<std::size_t>(d) * d));
  }
  for (const auto& [v, f] : a.scalar_maps) {
    g[lay.scalar_off() + v] += scale * kInvLn2 * as.chol.solve(f).trace().real();
  }
}

/// Appends sqrt(scale / ln 2) * R^T to U, where R (m^2 x P) factors the
/// negated Hessian of log det S.
void append_atom_rows(const CompiledAtom& a, const AtomState& as, const Layout& lay, double scale,
                      std::vector<RVector>& cols) {
  const auto m = a.base.rows();
  const double f = std::sqrt(scale * kInvLn2);
  const int first = static_cast<int>(cols.size());
  for (Eigen::Index r = 0; r < m * m; ++r) cols.push_back(RVector::Zero(lay.total()));

  const auto L = as.chol.matrixL();
  constexpr double kInvSqrt2 = 0.7071067811865476;
  for (const auto& [v, gm] : a.psd_maps) {
    const CMatrix gh = L.solve(gm);  // m x d
    const int d = lay.dim[v];
    int r = first;
    auto emit = [&](const CMatrix& herm) {
      linalg::add_to_params(herm, f, std::span<double>(cols[r].data() + lay.off[v], static_cast<std::size_t>(d) * d));
      ++r;
    };
    for (Eigen::Index p = 0; p < m; ++p) emit(gh.row(p).adjoint() * gh.row(p));
    for (Eigen::Index p = 0; p < m; ++p) {
      for (Eigen::Index q = p + 1; q < m; ++q) {
        const CMatrix pq = gh.row(p).adjoint() * gh.row(q);
        emit(kInvSqrt2 * (pq + pq.adjoint()));
        emit(Complex(0.0, kInvSqrt2) * (pq - pq.adjoint()));
      }
    }
  }
  for (const auto& [v, fm] : a.scalar_maps) {
    const CMatrix tmp = L.solve(fm);
    const CMatrix fh = L.solve(tmp.adjoint());  // L^-1 F L^-H
    std::vector<double> coords(static_cast<std::size_t>(m * m));
    linalg::to_params(linalg::hermitian_part(fh), coords);
    for (Eigen::Index r = 0; r < m * m; ++r) cols[first + r][lay.scalar_off() + v] += f * coords[r];
  }
}

Derivatives derivatives(const Compiled& c, const State& st, double t) {
  const auto& lay = c.layout;
  Derivatives dv;
  dv.grad = RVector::Zero(lay.total());
  dv.D = RMatrix::Zero(lay.small(), lay.small());
  std::vector<RVector> cols;

  // objective: -t * obj
  dv.grad.noalias() -= t * c.obj_a;
  for (std::size_t a = 0; a < c.obj_atoms.size(); ++a) {
    const auto& atom = c.obj_atoms[a];
    add_atom_gradient(atom, st.obj_atoms[a], lay, -t * atom.weight, dv.grad);
    append_atom_rows(atom, st.obj_atoms[a], lay, t * atom.weight, cols);
  }
  // PSD barriers
  for (std::size_t b = 0; b < lay.dim.size(); ++b) {
    const int d = lay.dim[b];
    const CMatrix xinv = st.Xchol[b].solve(CMatrix::Identity(d, d));
    linalg::add_to_params(linalg::hermitian_part(xinv), -1.0,
                          std::span<double>(dv.grad.data() + lay.off[b], static_cast<std::size_t>(d) * d));
  }
  // floors
  for (int k = 0; k < lay.n_scalar; ++k) {
    const double gap = st.x[lay.scalar_off() + k] - c.scalar_floor[k];
    dv.grad[lay.scalar_off() + k] -= 1.0 / gap;
    dv.D(k, k) += 1.0 / (gap * gap);
  }
  for (int m = 0; m < lay.n_rate; ++m) {
    if (!c.rate_floor[m]) continue;
    const double gap = st.x[lay.rate_off() + m] - *c.rate_floor[m];
    dv.grad[lay.rate_off() + m] -= 1.0 / gap;
    dv.D(lay.n_scalar + m, lay.n_scalar + m) += 1.0 / (gap * gap);
  }
  // constraints: -log(bound - g)
  for (std::size_t k = 0; k < c.cons.size(); ++k) {
    const auto& con = c.cons[k];
    const double sl = st.slack[k];
    RVector gg = con.a;
    for (const auto& term : con.neg_logs) {
      const double s = st.x[lay.scalar_off() + term.scalar];
      gg[lay.scalar_off() + term.scalar] -= term.coeff * kInvLn2 / s;
      dv.D(term.scalar, term.scalar) += term.coeff * kInvLn2 / (s * s) / sl;
    }
    for (std::size_t a = 0; a < con.atoms.size(); ++a) {
      add_atom_gradient(con.atoms[a], st.con_atoms[k][a], lay, -con.atoms[a].weight, gg);
      append_atom_rows(con.atoms[a], st.con_atoms[k][a], lay, con.atoms[a].weight / sl, cols);
    }
    dv.grad.noalias() += gg / sl;
    cols.push_back(gg / sl);
  }

  dv.U.resize(lay.total(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) dv.U.col(static_cast<Eigen::Index>(j)) = cols[j];
  return dv;
}

/// v -> X v X per PSD block (inverse of the PSD barrier Hessian).
RMatrix apply_block_inverse(const Layout& lay, const State& st, const RMatrix& v) {
  RMatrix out(v.rows(), v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    for (std::size_t b = 0; b < lay.dim.size(); ++b) {
      const int d = lay.dim[b];
      const auto n = static_cast<std::size_t>(d) * d;
      const CMatrix delta = linalg::from_params(std::span<const double>(v.col(j).data() + lay.off[b], n), d);
      const CMatrix r = st.X[b] * delta * st.X[b];
      linalg::to_params(linalg::hermitian_part(r), std::span<double>(out.col(j).data() + lay.off[b], n));
    }
  }
  return out;
}

// Basis of the Hermitian coordinates as sums of scaled unit matrices
// w * e_a e_b^T, matching linalg::to_params / from_params.
struct BasisTerm {
  int a;
  int b;
  Complex w;
};

std::vector<std::array<BasisTerm, 2>> hermitian_basis(int d) {
  std::vector<std::array<BasisTerm, 2>> out;
  out.reserve(static_cast<std::size_t>(d) * d);
  const Complex zero(0.0, 0.0);
  for (int r = 0; r < d; ++r) out.push_back({BasisTerm{r, r, 1.0}, BasisTerm{r, r, zero}});
  const double h = std::sqrt(0.5);
  for (int r = 0; r < d; ++r) {
    for (int c = r + 1; c < d; ++c) {
      out.push_back({BasisTerm{r, c, h}, BasisTerm{c, r, h}});
      out.push_back({BasisTerm{r, c, Complex(0.0, h)}, BasisTerm{c, r, Complex(0.0, -h)}});
    }
  }
  return out;
}

/// Hessian of -log det X in coordinates: H_kl = Re tr(B_k Y B_l Y), Y = X^-1.
RMatrix dense_block_hessian(const Layout& lay, const State& st) {
  RMatrix h = RMatrix::Zero(lay.psd_total, lay.psd_total);
  for (std::size_t blk = 0; blk < lay.dim.size(); ++blk) {
    const int d = lay.dim[blk];
    const int n = d * d;
    const CMatrix y = st.Xchol[blk].solve(CMatrix::Identity(d, d));
    const auto basis = hermitian_basis(d);
    const auto o = lay.off[blk];
    for (int k = 0; k < n; ++k) {
      for (int l = k; l < n; ++l) {
        Complex acc(0.0, 0.0);
        for (const auto& s : basis[k]) {
          if (s.w == Complex(0.0, 0.0)) continue;
          for (const auto& u : basis[l]) {
            if (u.w == Complex(0.0, 0.0)) continue;
            acc += s.w * u.w * y(s.b, u.a) * y(u.b, s.a);
          }
        }
        h(o + k, o + l) = acc.real();
        h(o + l, o + k) = acc.real();
      }
    }
  }
  return h;
}

/// H v using the structured form, for residual checks.
RVector hessian_apply(const Layout& lay, const State& st, const Derivatives& dv, const RVector& v) {
  RVector out = RVector::Zero(v.size());
  for (std::size_t b = 0; b < lay.dim.size(); ++b) {
    const int d = lay.dim[b];
    const auto n = static_cast<std::size_t>(d) * d;
    const CMatrix delta = linalg::from_params(std::span<const double>(v.data() + lay.off[b], n), d);
    const CMatrix r = st.Xchol[b].solve(st.Xchol[b].solve(delta).adjoint()).adjoint();
    linalg::to_params(linalg::hermitian_part(r), std::span<double>(out.data() + lay.off[b], n));
  }
  if (lay.small() > 0) out.tail(lay.small()).noalias() += dv.D * v.tail(lay.small());
  if (dv.U.cols() > 0) out.noalias() += dv.U * (dv.U.transpose() * v);
  return out;
}

std::optional<RVector> dense_solve(const Layout& lay, const State& st, const Derivatives& dv, const RVector& rhs) {
  RMatrix h = RMatrix::Zero(lay.total(), lay.total());
  if (lay.psd_total > 0) h.topLeftCorner(lay.psd_total, lay.psd_total) = dense_block_hessian(lay, st);
  if (lay.small() > 0) h.bottomRightCorner(lay.small(), lay.small()) += dv.D;
  if (dv.U.cols() > 0) h.selfadjointView<Eigen::Lower>().rankUpdate(dv.U);
  h = h.selfadjointView<Eigen::Lower>();
  Eigen::LLT<RMatrix> llt(h);
  if (llt.info() == Eigen::Success) {
    RVector out = llt.solve(rhs);
    if (out.allFinite()) return out;
  }
  Eigen::LDLT<RMatrix> ldlt(h);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  RVector out = ldlt.solve(rhs);
  if (!out.allFinite()) return std::nullopt;
  return out;
}

/// Conjugate gradients preconditioned by the block-diagonal part of H.
/// H is that part plus U U^T of rank k, so the preconditioned operator has
/// at most k + 1 distinct eigenvalues.
std::optional<RVector> pcg_solve(const Layout& lay, const State& st, const Derivatives& dv, const RVector& rhs,
                                 RVector x) {
  const auto np = lay.psd_total;
  const auto ns = lay.small();
  std::optional<Eigen::LDLT<RMatrix>> df;
  if (ns > 0) {
    df.emplace(dv.D);
    if (df->info() != Eigen::Success || !(df->vectorD().array() > 0.0).all()) return std::nullopt;
  }
  auto precond = [&](const RVector& r) {
    RVector z(r.size());
    z.head(np) = apply_block_inverse(lay, st, r.head(np));
    if (ns > 0) z.tail(ns) = df->solve(r.tail(ns));
    return z;
  };
  const double target = 1e-9 * rhs.norm();
  RVector r = rhs - hessian_apply(lay, st, dv, x);
  RVector z = precond(r);
  RVector p = z;
  double rz = r.dot(z);
  const int max_it = 3 * (static_cast<int>(dv.U.cols()) + 1) + 10;
  for (int it = 0; it < max_it; ++it) {
    if (!std::isfinite(rz)) return std::nullopt;
    if (r.norm() <= target) return x;
    const RVector hp = hessian_apply(lay, st, dv, p);
    const double php = p.dot(hp);
    if (!(php > 0.0)) return std::nullopt;
    const double alpha = rz / php;
    x += alpha * p;
    r -= alpha * hp;
    z = precond(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  // recursive residual can drift; confirm against the true one
  if ((rhs - hessian_apply(lay, st, dv, x)).norm() <= target) return x;
  return std::nullopt;
}

std::optional<RVector> woodbury_solve(const Layout& lay, const State& st, const Derivatives& dv,
                                      const RVector& rhs) {
  const auto np = lay.psd_total;
  const auto ns = lay.small();
  const RMatrix up = dv.U.topRows(np);
  const RMatrix us = dv.U.bottomRows(ns);
  const RMatrix y = apply_block_inverse(lay, st, up);
  RMatrix cmat = RMatrix::Identity(dv.U.cols(), dv.U.cols());
  cmat.noalias() += up.transpose() * y;
  Eigen::LDLT<RMatrix> cf(cmat);
  if (cf.info() != Eigen::Success) return std::nullopt;
  std::optional<Eigen::LDLT<RMatrix>> sf;
  if (ns > 0) {
    RMatrix sc = dv.D;
    sc.noalias() += us * cf.solve(us.transpose());
    sf.emplace(sc);
    if (sf->info() != Eigen::Success) return std::nullopt;
  }
  auto apply = [&](const RVector& r) {
    const RVector rp = r.head(np);
    const RVector rs = r.tail(ns);
    const RVector z = apply_block_inverse(lay, st, rp);
    RVector ds = RVector::Zero(ns);
    if (ns > 0) ds = sf->solve(rs - us * cf.solve(up.transpose() * z));
    const RVector w = rp - up * (us.transpose() * ds);
    const RVector zw = apply_block_inverse(lay, st, w);
    RVector out(lay.total());
    out.head(np) = zw - y * cf.solve(up.transpose() * zw);
    out.tail(ns) = ds;
    return out;
  };
  // Iterative refinement. With badly conditioned PSD blocks the Woodbury
  // operator loses digits but usually remains a contraction.
  const double target = 1e-9 * rhs.norm();
  RVector out = apply(rhs);
  double prev = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 8; ++round) {
    const RVector r = rhs - hessian_apply(lay, st, dv, out);
    const double res = r.norm();
    if (!std::isfinite(res)) return std::nullopt;
    if (res <= target) return out;
    if (!(res < 0.5 * prev)) break;
    prev = res;
    out += apply(r);
  }
  if (!out.allFinite()) out.setZero();
  return pcg_solve(lay, st, dv, rhs, out);
}

/// Solves H delta = rhs. Takes the Woodbury/Schur route when its flop
/// estimate is lower and it stays accurate, dense assembly otherwise.
std::optional<RVector> newton_solve(const Compiled& c, const State& st, const Derivatives& dv, const RVector& rhs) {
  const auto& lay = c.layout;
  const double p = lay.total();
  const double pp = lay.psd_total;
  const double k = static_cast<double>(dv.U.cols());
  double block_cost = 0.0;
  for (int d : lay.dim) block_cost += 2.0 * d * d * d;
  const double dense_cost = p * p * k + p * p * p / 3.0 + pp * block_cost / 4.0;
  const double wood_cost = pp * k * k + k * k * k / 3.0 + 2.0 * k * block_cost;
  if (lay.psd_total > 0 && wood_cost < dense_cost)
    if (auto w = woodbury_solve(lay, st, dv, rhs)) return w;
  return dense_solve(lay, st, dv, rhs);
}

// ---------------------------------------------------------------------------
// Barrier driver

struct RunResult {
  RVector x;
  double t = 1.0;
  double gap = std::numeric_limits<double>::infinity();
  int steps = 0;
  bool converged = false;
  bool stalled = false;
  bool early = false;
  bool centered = true;  // last stage ended on the decrement test
  std::optional<RVector> checkpoint;
  double checkpoint_t = 0.0;
};

using EarlyExit = std::function<bool(const State&)>;

RunResult run_barrier(const Compiled& c, const RVector& x0, const SolveOptions& opt, int step_budget,
                      const EarlyExit& early_exit, const char* phase) {
  RunResult res;
  res.x = x0;
  double t = opt.initial_barrier;
  State st;
  if (!evaluate(c, x0, t, st)) {
    res.stalled = true;
    return res;
  }
  if (early_exit && early_exit(st)) {
    res.early = true;
    return res;
  }
  constexpr double kCentering = 1e-9;
  while (true) {
    if (!evaluate(c, res.x, t, st)) {
      res.stalled = true;
      return res;
    }
    // centering
    res.centered = true;
    while (true) {
      if (res.steps >= step_budget) {
        res.t = t;
        res.gap = c.degree / t;
        return res;
      }
      const Derivatives dv = derivatives(c, st, t);
      const RVector rhs = -dv.grad;
      const auto delta = newton_solve(c, st, dv, rhs);
      if (!delta) {
        res.stalled = true;
        res.t = t;
        res.gap = c.degree / t;
        return res;
      }
      const double slope = dv.grad.dot(*delta);
      const double lambda2 = -slope;
      if (!(lambda2 > 0.0)) {
        res.centered = false;  // lost positive definiteness numerically
        break;
      }
      if (lambda2 / 2.0 <= kCentering) break;

      double alpha = 1.0;
      State trial;
      bool accepted = false;
      while (alpha > 1e-14) {
        const RVector xn = res.x + alpha * *delta;
        if (evaluate(c, xn, t, trial) && trial.phi <= st.phi + 0.01 * alpha * slope) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      ++res.steps;
      if (opt.debug) {
        nlohmann::json j{{"phase", phase}, {"t", t}, {"step", res.steps}, {"phi", st.phi},
                         {"objective", st.objective}, {"decrement", lambda2}, {"alpha", accepted ? alpha : 0.0}};
        *opt.debug << j.dump() << '\n';
      }
      if (!accepted) {
        res.centered = false;  // no progress possible at this t
        break;
      }
      res.x = trial.x;
      st = std::move(trial);
      if (early_exit && early_exit(st)) {
        res.early = true;
        res.t = t;
        return res;
      }
    }
    res.t = t;
    res.gap = c.degree / t;
    if (opt.checkpoint_barrier > 0.0 && !res.checkpoint && res.centered && t >= opt.checkpoint_barrier) {
      res.checkpoint = res.x;
      res.checkpoint_t = t;
    }
    if (res.gap <= opt.tolerance) {
      res.converged = res.centered;
      return res;
    }
    t *= opt.barrier_growth;
  }
}

// A warm start near the optimum of a neighbouring program sits close to the
// boundary; recentering it at t = 1 is badly conditioned. Start instead at
// the schedule point where its Newton decrement is smallest.
double warm_barrier(const Compiled& c, const RVector& x, const SolveOptions& opt) {
  double best_t = opt.initial_barrier;
  double best = std::numeric_limits<double>::infinity();
  for (double t = opt.initial_barrier;; t *= opt.barrier_growth) {
    State st;
    if (!evaluate(c, x, t, st)) break;
    const Derivatives dv = derivatives(c, st, t);
    const auto delta = newton_solve(c, st, dv, -dv.grad);
    if (delta) {
      const double lambda2 = -dv.grad.dot(*delta);
      if (lambda2 > 0.0 && lambda2 < best) {
        best = lambda2;
        best_t = t;
      }
    }
    if (c.degree / t <= opt.tolerance) break;
  }
  return best_t;
}

RVector pack(const Layout& lay, const Solution& s) {
  RVector x = RVector::Zero(lay.total());
  if (s.psd_values.size() != lay.dim.size() || static_cast<int>(s.scalar_values.size()) != lay.n_scalar ||
      static_cast<int>(s.rate_values.size()) != lay.n_rate)
    throw std::invalid_argument("solve: point does not match the program's variables");
  for (std::size_t b = 0; b < lay.dim.size(); ++b) {
    const int d = lay.dim[b];
    if (s.psd_values[b].rows() != d || s.psd_values[b].cols() != d)
      throw std::invalid_argument("solve: PSD value has wrong shape");
    linalg::to_params(linalg::hermitian_part(s.psd_values[b]),
                      std::span<double>(x.data() + lay.off[b], static_cast<std::size_t>(d) * d));
  }
  for (int k = 0; k < lay.n_scalar; ++k) x[lay.scalar_off() + k] = s.scalar_values[k];
  for (int m = 0; m < lay.n_rate; ++m) x[lay.rate_off() + m] = s.rate_values[m];
  return x;
}

Solution unpack(const Layout& lay, const RVector& x) {
  Solution s;
  for (std::size_t b = 0; b < lay.dim.size(); ++b) {
    const int d = lay.dim[b];
    s.psd_values.push_back(
        linalg::from_params(std::span<const double>(x.data() + lay.off[b], static_cast<std::size_t>(d) * d), d));
  }
  for (int k = 0; k < lay.n_scalar; ++k) s.scalar_values.push_back(x[lay.scalar_off() + k]);
  for (int m = 0; m < lay.n_rate; ++m) s.rate_values.push_back(x[lay.rate_off() + m]);
  return s;
}

/// Phase one: minimize s subject to g_c(x) - s <= b_c over the implicit
/// domain, stopping as soon as s < 0.
std::optional<RVector> phase_one(const ConvexProgram& program, const Compiled& c, const RVector& hint,
                                 const SolveOptions& opt, int& steps, bool& definitely_infeasible) {
  const auto& lay = c.layout;
  // interior start for the domain
  RVector x = hint;
  State st;
  for (std::size_t b = 0; b < lay.dim.size(); ++b) {
    const int d = lay.dim[b];
    const auto n = static_cast<std::size_t>(d) * d;
    CMatrix xb = linalg::from_params(std::span<const double>(x.data() + lay.off[b], n), d);
    const double lo = linalg::min_eigenvalue(xb);
    if (!(lo > 1e-9)) xb = linalg::clamp_psd(xb) + CMatrix::Identity(d, d) * std::max(1e-3, 1e-3 * xb.norm());
    linalg::to_params(linalg::hermitian_part(xb), std::span<double>(x.data() + lay.off[b], n));
  }
  for (int k = 0; k < lay.n_scalar; ++k) {
    double& s = x[lay.scalar_off() + k];
    if (!(s > c.scalar_floor[k])) s = c.scalar_floor[k] + 1.0;
  }
  for (int m = 0; m < lay.n_rate; ++m) {
    double& r = x[lay.rate_off() + m];
    if (c.rate_floor[m] && !(r > *c.rate_floor[m])) r = *c.rate_floor[m] + 1.0;
  }
  evaluate(c, x, 1.0, st, false);
  double worst = 0.0;
  for (double sl : st.slack) worst = std::max(worst, -sl);

  ConvexProgram aug = program;
  aug.objective_logdets.clear();
  aug.objective_affine = AffineForm{};
  const int s_var = aug.add_rate("phase_one_slack");
  aug.objective_affine.add_rate(s_var, -1.0);
  for (auto& con : aug.constraints) con.affine.add_rate(s_var, -1.0);
  const Compiled ca = compile(aug);

  RVector xa(ca.layout.total());
  xa.head(lay.total()) = x;
  xa[ca.layout.rate_off() + s_var] = worst + 1.0;

  const int s_index = ca.layout.rate_off() + s_var;
  const auto n_orig = lay.total();
  EarlyExit done = [&](const State& s) {
    if (!(s.x[s_index] < 0.0)) return false;
    State probe;
    return evaluate(c, s.x.head(n_orig), 1.0, probe);
  };
  SolveOptions po = opt;
  po.initial_barrier = 1.0;
  const RunResult r = run_barrier(ca, xa, po, opt.max_iterations, done, "phase-one");
  steps += r.steps;
  if (r.early) return RVector(r.x.head(n_orig));
  // converged without reaching s < 0: the best achievable s bounds infeasibility
  definitely_infeasible = r.converged;
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------

double evaluate_objective(const ConvexProgram& program, const Solution& point) {
  const Compiled c = compile(program);
  State st;
  evaluate(c, pack(c.layout, point), 1.0, st, false);
  return st.objective;
}

std::vector<double> constraint_values(const ConvexProgram& program, const Solution& point) {
  const Compiled c = compile(program);
  State st;
  evaluate(c, pack(c.layout, point), 1.0, st, false);
  // compiled constraints skip nothing, so indices line up
  return st.con_lhs;
}

double max_violation(const ConvexProgram& program, const Solution& point) {
  const Compiled c = compile(program);
  State st;
  evaluate(c, pack(c.layout, point), 1.0, st, false);
  double v = 0.0;
  for (std::size_t k = 0; k < c.cons.size(); ++k) v = std::max(v, st.con_lhs[k] - c.cons[k].bound);
  for (const auto& x : point.psd_values) v = std::max(v, -linalg::min_eigenvalue(x));
  for (std::size_t k = 0; k < c.scalar_floor.size(); ++k) v = std::max(v, c.scalar_floor[k] - point.scalar_values[k]);
  for (std::size_t m = 0; m < c.rate_floor.size(); ++m)
    if (c.rate_floor[m]) v = std::max(v, *c.rate_floor[m] - point.rate_values[m]);
  return v;
}

Solution solve(const ConvexProgram& program, const std::optional<Solution>& warm_start, const SolveOptions& options) {
  program.validate();
  if (!(options.tolerance > 0.0) || !(options.barrier_growth > 1.0) || !(options.initial_barrier > 0.0))
    throw std::invalid_argument("solve: invalid options");
  const Compiled c = compile(program);
  const auto& lay = c.layout;

  int steps = 0;
  RVector x0;
  bool warm_valid = false;
  double warm_objective = -std::numeric_limits<double>::infinity();
  if (warm_start) {
    x0 = pack(lay, *warm_start);
    State st;
    if (evaluate(c, x0, 1.0, st)) {
      warm_valid = true;
      warm_objective = st.objective;
    }
  }
  if (!warm_valid) {
    RVector hint = warm_start ? pack(lay, *warm_start) : RVector::Zero(lay.total());
    bool infeasible = false;
    auto found = phase_one(program, c, hint, options, steps, infeasible);
    if (!found) {
      Solution s = unpack(lay, hint);
      s.status = SolveStatus::Infeasible;
      s.newton_steps = steps;
      s.objective_value = std::numeric_limits<double>::quiet_NaN();
      s.kkt_residual = std::numeric_limits<double>::infinity();
      return s;
    }
    x0 = *found;
  }

  SolveOptions run_options = options;
  if (warm_valid && options.adapt_warm_barrier) run_options.initial_barrier = warm_barrier(c, x0, options);
  const RunResult r =
      run_barrier(c, x0, run_options, std::max(1, options.max_iterations - steps), nullptr, "barrier");
  steps += r.steps;

  State st;
  evaluate(c, r.x, r.t, st, false);
  Solution out = unpack(lay, r.x);
  out.objective_value = st.objective;
  out.kkt_residual = r.gap;
  out.newton_steps = steps;
  out.status = r.converged ? SolveStatus::Optimal : SolveStatus::MaxIterations;
  if (r.checkpoint) {
    out.checkpoint = std::make_shared<const Solution>(unpack(lay, *r.checkpoint));
    out.checkpoint_barrier = r.checkpoint_t;
  }
  if (warm_valid && warm_objective > out.objective_value) {
    Solution w = unpack(lay, x0);
    w.objective_value = warm_objective;
    w.kkt_residual = r.gap;
    w.newton_steps = steps;
    w.status = out.status;
    w.checkpoint = out.checkpoint;
    w.checkpoint_barrier = out.checkpoint_barrier;
    return w;
  }
  return out;
}

}  // namespace cran::convex
