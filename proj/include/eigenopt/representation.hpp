#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eigenopt/errors.hpp"
#include "eigenopt/gridworld.hpp"

namespace eigenopt {

enum class SRSource { ClosedForm, TDEstimate };

/// Successor representation Psi for a fixed policy and discount.
struct SRMatrix {
  Eigen::MatrixXd values;
  double gamma = 0.0;
  SRSource source = SRSource::ClosedForm;

  int num_states() const { return static_cast<int>(values.rows()); }
};

struct SRLearnerConfig {
  double eta = 0.1;
  double gamma = 0.99;
  int n_sweeps = 100;

  void validate() const {
    if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("SR step size must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("SR discount must lie in [0, 1)");
    if (n_sweeps < 1) throw ValidationError("SR sweep count must be at least 1");
  }
};

struct Eigenpair {
  Eigen::VectorXd vector;  // unit norm, first non-negligible component positive
  double value = 0.0;
  int rank = 0;            // 1-based, by descending eigenvalue
};

/// Psi = (I - gamma P)^{-1}, solved by partial-pivot LU.
inline SRMatrix sr_closed_form(const Eigen::MatrixXd& transition, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("SR discount must lie in [0, 1)");
  if (transition.rows() != transition.cols()) throw ValidationError("transition matrix must be square");
  const auto n = transition.rows();
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - gamma * transition;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  if (lu.determinant() == 0.0) throw ValidationError("singular SR system");
  return {lu.solve(Eigen::MatrixXd::Identity(n, n)), gamma, SRSource::ClosedForm};
}

/// Max-abs entry of (I - gamma P) Psi - I.
inline double sr_fixed_point_residual(const SRMatrix& psi, const Eigen::MatrixXd& transition) {
  const auto n = psi.values.rows();
  const Eigen::MatrixXd r =
      (Eigen::MatrixXd::Identity(n, n) - psi.gamma * transition) * psi.values - Eigen::MatrixXd::Identity(n, n);
  return r.cwiseAbs().maxCoeff();
}

/// One TD update of row `s` towards 1{s=j} + gamma Psi(s', j), for every column j.
inline void sr_td_update(SRMatrix& psi, State s, State s_next, const SRLearnerConfig& cfg) {
  const auto n = psi.values.cols();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double indicator = (j == s) ? 1.0 : 0.0;
    psi.values(s, j) += cfg.eta * (indicator + cfg.gamma * psi.values(s_next, j) - psi.values(s, j));
  }
}

/// TD(0) SR estimate from zero, sweeping the dataset in order cfg.n_sweeps times.
///
/// Columns of states that never appear as a source state stay exactly zero, so
/// only the columns that can change are touched. The result equals applying
/// sr_td_update over all columns.
inline SRMatrix learn_sr_from_dataset(std::span<const Transition> dataset, int num_states,
                                      const SRLearnerConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ValidationError("cannot learn an SR from an empty dataset");
  std::vector<bool> is_source(static_cast<std::size_t>(num_states), false);
  for (const Transition& t : dataset) is_source[t.state] = true;
  std::vector<int> active;
  for (int j = 0; j < num_states; ++j)
    if (is_source[j]) active.push_back(j);

  // Work in a compact row-major (state x active column) buffer.
  const std::size_t width = active.size();
  std::vector<int> column_of(static_cast<std::size_t>(num_states), -1);
  for (std::size_t k = 0; k < width; ++k) column_of[active[k]] = static_cast<int>(k);
  std::vector<double> buf(static_cast<std::size_t>(num_states) * width, 0.0);
  for (int sweep = 0; sweep < cfg.n_sweeps; ++sweep) {
    for (const Transition& t : dataset) {
      double* row = buf.data() + static_cast<std::size_t>(t.state) * width;
      const double* next = buf.data() + static_cast<std::size_t>(t.next_state) * width;
      // Branch-free sweep, then redo the diagonal entry with its indicator.
      // Bit-identical to the textbook form since 0.0 + x == x.
      const auto self = static_cast<std::size_t>(column_of[t.state]);
      const double row_self = row[self];
      const double next_self = next[self];
      for (std::size_t k = 0; k < width; ++k) row[k] += cfg.eta * (cfg.gamma * next[k] - row[k]);
      row[self] = row_self + cfg.eta * (1.0 + cfg.gamma * next_self - row_self);
    }
  }
  SRMatrix psi{Eigen::MatrixXd::Zero(num_states, num_states), cfg.gamma, SRSource::TDEstimate};
  for (int s = 0; s < num_states; ++s)
    for (std::size_t k = 0; k < width; ++k) psi.values(s, active[k]) = buf[static_cast<std::size_t>(s) * width + k];
  return psi;
}

namespace detail {

inline void normalize_sign(Eigen::VectorXd& v) {
  const double scale = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > 1e-12 * scale) {
      if (v(i) < 0.0) v = -v;
      return;
    }
}

// Larger component at the first differing index ranks first.
inline bool lexicographically_greater(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a(i) != b(i)) return a(i) > b(i);
  return false;
}

// Eigenvector of a well separated eigenvalue by shifted inverse iteration.
// Returns false when the iteration does not reach `tol`.
inline bool inverse_iteration(const Eigen::MatrixXd& m, double lambda, double tol, Eigen::VectorXd& v) {
  const Eigen::Index k = m.rows();
  Eigen::MatrixXd shifted = m;
  shifted.diagonal().array() -= lambda;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(shifted);
  v.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = 1.0 + 0.1 * static_cast<double>(i % 7);
  v.normalize();
  for (int it = 0; it < 6; ++it) {
    v = lu.solve(v);
    if (!v.allFinite() || v.norm() == 0.0) return false;
    v.normalize();
    const double rq = v.dot(m * v);
    if ((m * v - rq * v).cwiseAbs().maxCoeff() <= tol) return true;
  }
  return false;
}

// The `want` largest eigenpairs of the dense symmetric block `sub`, or all of
// them when only a full decomposition is safe.
inline std::vector<std::pair<double, Eigen::VectorXd>> block_eigenpairs(const Eigen::MatrixXd& sub, Eigen::Index want) {
  const Eigen::Index k = sub.rows();
  std::vector<std::pair<double, Eigen::VectorXd>> out;
  // Few vectors from a large block: eigenvalues first, then one inverse
  // iteration per vector. Near-degenerate eigenvalues take the full path.
  if (want * 4 <= k) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> values(sub, Eigen::EigenvaluesOnly);
    if (values.info() != Eigen::Success) throw ValidationError("symmetric eigensolver failed");
    const Eigen::VectorXd& ev = values.eigenvalues();  // ascending
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    bool ok = true;
    for (Eigen::Index j = k - 1; j >= k - want && ok; --j) {
      const double below = ev(j) - ev(j - 1);
      const double above = j + 1 < k ? ev(j + 1) - ev(j) : scale;
      // A positive, isolated value also keeps the pair ahead of any null state.
      Eigen::VectorXd v;
      ok = std::min({below, above, ev(j)}) > 1e-4 * scale && inverse_iteration(sub, ev(j), 1e-12 * scale, v);
      if (ok) out.emplace_back(v.dot(sub * v), std::move(v));
    }
    if (ok) return out;
    out.clear();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sub);
  if (solver.info() != Eigen::Success) throw ValidationError("symmetric eigensolver failed");
  for (Eigen::Index c = 0; c < k; ++c) out.emplace_back(solver.eigenvalues()(c), solver.eigenvectors().col(c));
  return out;
}

}  // namespace detail

/// Top-n eigenpairs of the symmetrised SR, M = (Psi + Psi^T) / 2.
///
/// Rows/columns that are identically zero (states absent from a learned SR)
/// are split off first; they contribute eigenvalue 0 with unit eigenvectors.
/// Exact eigenvalue ties are ordered lexicographically on the sign-normalised
/// vectors.
inline std::vector<Eigenpair> top_eigenvectors(const SRMatrix& psi, int n) {
  const int size = psi.num_states();
  if (n < 1 || n > size)
    throw ValidationError("requested " + std::to_string(n) + " eigenvectors of a " + std::to_string(size) +
                          "-state SR");
  const Eigen::MatrixXd m = 0.5 * (psi.values + psi.values.transpose());

  std::vector<int> support, null_states;
  for (int i = 0; i < size; ++i) (m.row(i).cwiseAbs().maxCoeff() > 0.0 ? support : null_states).push_back(i);

  std::vector<Eigenpair> pairs;
  if (!support.empty()) {
    const auto k = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd sub(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = m(support[a], support[b]);
    for (auto& [value, vec] : detail::block_eigenpairs(sub, std::min<Eigen::Index>(n, k))) {
      Eigenpair p;
      p.value = value;
      p.vector = Eigen::VectorXd::Zero(size);
      for (Eigen::Index a = 0; a < k; ++a) p.vector(support[a]) = vec(a);
      p.vector.normalize();
      detail::normalize_sign(p.vector);
      pairs.push_back(std::move(p));
    }
  }
  for (int i : null_states) {
    Eigenpair p;
    p.vector = Eigen::VectorXd::Unit(size, i);
    pairs.push_back(std::move(p));
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Eigenpair& a, const Eigenpair& b) {
    if (a.value != b.value) return a.value > b.value;
    return detail::lexicographically_greater(a.vector, b.vector);
  });
  pairs.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) pairs[r].rank = r + 1;
  return pairs;
}

// ---------------------------------------------------------------------------
// CSV export (row-major, 17 significant digits)

inline void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
}

/// Header `rank,eigenvalue,v0,...`; one eigenpair per row.
inline void write_eigenpairs_csv(std::ostream& out, std::span<const Eigenpair> pairs) {
  out << std::setprecision(17) << "rank,eigenvalue";
  const auto n = pairs.empty() ? 0 : pairs.front().vector.size();
  for (Eigen::Index i = 0; i < n; ++i) out << ",v" << i;
  out << '\n';
  for (const Eigenpair& p : pairs) {
    out << p.rank << ',' << p.value;
    for (Eigen::Index i = 0; i < p.vector.size(); ++i) out << ',' << p.vector(i);
    out << '\n';
  }
}

}  // namespace eigenopt
