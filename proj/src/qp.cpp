#include "ssqp/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ssqp {

namespace {

constexpr double kRidge = 1e-12;
constexpr double kPivotTol = 1e-10;

enum class VarState : char { Free, AtLower, AtUpper, Pinned };

std::vector<Index> free_indices(const std::vector<VarState>& state) {
  std::vector<Index> idx;
  for (Index i = 0; i < static_cast<Index>(state.size()); ++i) {
    if (state[i] == VarState::Free) idx.push_back(i);
  }
  return idx;
}

Matrix select_cols(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (Index j = 0; j < out.cols(); ++j) out.col(j) = m.col(cols[j]);
  return out;
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::Infeasible: return "Infeasible";
    case QpStatus::RankDeficient: return "RankDeficient";
    case QpStatus::IterationLimit: return "IterationLimit";
    case QpStatus::IndefiniteReduced: return "IndefiniteReduced";
  }
  return "Unknown";
}

void QpProblem::validate() const {
  const Index d = dim();
  require(d >= 1, ErrorCode::InvalidArgument, "QpProblem: empty problem");
  require(B.rows() == d && B.cols() == d, ErrorCode::DimensionMismatch,
          "QpProblem: B shape mismatch");
  require(lb.size() == d && ub.size() == d, ErrorCode::DimensionMismatch,
          "QpProblem: bound size mismatch");
  const Index me = num_eq();
  require(A.rows() == me && (me == 0 || A.cols() == d),
          ErrorCode::DimensionMismatch, "QpProblem: A shape mismatch");
  const double bscale = std::max(1.0, B.cwiseAbs().maxCoeff());
  require((B - B.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * bscale,
          ErrorCode::InvalidArgument, "QpProblem: B must be symmetric");
  for (Index i = 0; i < d; ++i) {
    require(lb[i] < ub[i], ErrorCode::InvalidArgument,
            "QpProblem: lb must be strictly below ub");
  }
}

BclsResult solve_bcls(const Matrix& M, const Vector& y, const Vector& lb,
                      const Vector& ub) {
  const Index n = M.cols();
  require(y.size() == M.rows(), ErrorCode::DimensionMismatch,
          "solve_bcls: y size mismatch");
  require(lb.size() == n && ub.size() == n, ErrorCode::DimensionMismatch,
          "solve_bcls: bound size mismatch");
  for (Index i = 0; i < n; ++i) {
    require(lb[i] <= ub[i], ErrorCode::InvalidArgument,
            "solve_bcls: lb must not exceed ub");
  }

  BclsResult out;
  out.z = Vector::Zero(n);
  if (n == 0) {
    out.value = y.squaredNorm();
    return out;
  }

  std::vector<VarState> state(n, VarState::Free);
  for (Index i = 0; i < n; ++i) {
    if (lb[i] == ub[i]) {
      state[i] = VarState::Pinned;
      out.z[i] = lb[i];
    } else if (0.0 <= lb[i]) {
      state[i] = VarState::AtLower;
      out.z[i] = lb[i];
    } else if (0.0 >= ub[i]) {
      state[i] = VarState::AtUpper;
      out.z[i] = ub[i];
    } else {
      state[i] = VarState::Free;  // zero is interior
      out.z[i] = 0.0;
    }
  }

  const double grad_scale =
      std::max(1.0, (M.transpose() * y).lpNorm<Eigen::Infinity>());
  const double opt_tol = 1e-11 * grad_scale;

  // Solve the free-set normal equations with the fixed part on the rhs.
  auto solve_free = [&](const std::vector<Index>& free_set) -> Vector {
    Vector rhs_vec = y;
    for (Index i = 0; i < n; ++i) {
      if (state[i] != VarState::Free) rhs_vec -= M.col(i) * out.z[i];
    }
    const Matrix mf = select_cols(M, free_set);
    Matrix gram = mf.transpose() * mf;
    gram.diagonal().array() += kRidge;
    const Vector rhs = mf.transpose() * rhs_vec;
    return gram.llt().solve(rhs).eval();
  };

  const int max_outer = static_cast<int>(10 * n + 30);
  std::vector<char> banned(n, 0);
  for (int outer = 0; outer < max_outer; ++outer) {
    // Inner loop: pull the free variables to their unconstrained optimum,
    // binding blockers until the candidate is feasible.
    for (int inner = 0; inner <= static_cast<int>(n); ++inner) {
      std::vector<Index> free_set = free_indices(state);
      if (free_set.empty()) break;
      const Vector cand = solve_free(free_set);
      double step = 1.0;
      Index blocker = -1;
      bool blocker_low = false;
      for (size_t j = 0; j < free_set.size(); ++j) {
        const Index i = free_set[j];
        const double delta = cand[j] - out.z[i];
        if (delta > 0.0 && std::isfinite(ub[i]) && cand[j] > ub[i]) {
          const double t = (ub[i] - out.z[i]) / delta;
          if (t < step - 1e-15) {
            step = t;
            blocker = i;
            blocker_low = false;
          }
        } else if (delta < 0.0 && std::isfinite(lb[i]) && cand[j] < lb[i]) {
          const double t = (lb[i] - out.z[i]) / delta;
          if (t < step - 1e-15) {
            step = t;
            blocker = i;
            blocker_low = true;
          }
        }
      }
      if (blocker < 0) {
        for (size_t j = 0; j < free_set.size(); ++j) out.z[free_set[j]] = cand[j];
        banned.assign(n, 0);
        break;
      }
      step = std::max(step, 0.0);
      for (size_t j = 0; j < free_set.size(); ++j) {
        const Index i = free_set[j];
        out.z[i] += step * (cand[j] - out.z[i]);
      }
      out.z[blocker] = blocker_low ? lb[blocker] : ub[blocker];
      state[blocker] = blocker_low ? VarState::AtLower : VarState::AtUpper;
      if (step > 1e-14) banned.assign(n, 0);
    }

    // Outer optimality test on the bound variables.
    const Vector grad = M.transpose() * (M * out.z - y);
    Index worst = -1;
    double worst_violation = opt_tol;
    for (Index i = 0; i < n; ++i) {
      if (banned[i]) continue;
      double violation = 0.0;
      if (state[i] == VarState::AtLower) violation = -grad[i];
      else if (state[i] == VarState::AtUpper) violation = grad[i];
      if (violation > worst_violation) {
        worst_violation = violation;
        worst = i;
      }
    }
    if (worst < 0) break;
    banned[worst] = 1;  // lifted until a strict move succeeds
    state[worst] = VarState::Free;
  }

  out.z = out.z.cwiseMax(lb).cwiseMin(ub);
  out.value = (M * out.z - y).squaredNorm();
  return out;
}

namespace {

struct SubSolve {
  Vector x;             // full-dimensional candidate
  bool indefinite = false;
  bool rank_deficient = false;
  Index eq_rank = 0;
};

// Minimizer over the current working set: free coordinates solve the
// equality-restricted problem through a null-space factorization, so an
// indefinite reduced Hessian is detected rather than silently inverted.
SubSolve solve_working_set(const QpProblem& qp,
                           const std::vector<VarState>& state,
                           const Vector& x_cur) {
  const Index d = qp.dim();
  const Index me = qp.num_eq();
  SubSolve out;
  out.x = x_cur;
  const std::vector<Index> free_set = free_indices(state);
  const Index nf = static_cast<Index>(free_set.size());
  if (nf == 0) {
    out.eq_rank = 0;
    out.rank_deficient = me > 0;
    return out;
  }

  Vector g_eff(nf);
  for (Index j = 0; j < nf; ++j) {
    double acc = qp.g[free_set[j]];
    for (Index i = 0; i < d; ++i) {
      if (state[i] != VarState::Free) acc += qp.B(free_set[j], i) * x_cur[i];
    }
    g_eff[j] = acc;
  }
  Matrix b_ff(nf, nf);
  for (Index r = 0; r < nf; ++r)
    for (Index c = 0; c < nf; ++c) b_ff(r, c) = qp.B(free_set[r], free_set[c]);

  if (me == 0) {
    Eigen::LLT<Matrix> llt(b_ff);
    if (llt.info() != Eigen::Success) {
      out.indefinite = true;
      return out;
    }
    const Vector xf = llt.solve(-g_eff);
    for (Index j = 0; j < nf; ++j) out.x[free_set[j]] = xf[j];
    return out;
  }

  Matrix a_f = select_cols(qp.A, free_set);  // me x nf
  Vector r_eq = qp.b;
  for (Index i = 0; i < d; ++i) {
    if (state[i] != VarState::Free) r_eq -= qp.A.col(i) * x_cur[i];
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(a_f.transpose());  // nf x me
  qr.setThreshold(kPivotTol);
  const Index rank = qr.rank();
  out.eq_rank = rank;
  out.rank_deficient = rank < me;
  const Matrix q_full = qr.householderQ();

  Vector x_part(nf);
  if (out.rank_deficient) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a_f);
    cod.setThreshold(kPivotTol);
    x_part = cod.solve(r_eq);
  } else {
    // Basic solution from the QR of A_F^T: x = Q [R1^-T P^T r ; 0].
    Matrix r_top = qr.matrixR().topRows(rank).triangularView<Eigen::Upper>();
    const Vector perm_rhs = qr.colsPermutation().inverse() * r_eq;
    const Vector w = r_top.topLeftCorner(rank, rank)
                         .transpose()
                         .triangularView<Eigen::Lower>()
                         .solve(perm_rhs);
    x_part = q_full.leftCols(rank) * w;
  }

  const Index nz = nf - rank;
  if (nz == 0) {
    for (Index j = 0; j < nf; ++j) out.x[free_set[j]] = x_part[j];
    return out;
  }
  const Matrix z_basis = q_full.rightCols(nz);
  const Matrix h_red = z_basis.transpose() * b_ff * z_basis;
  Eigen::LLT<Matrix> llt(h_red);
  if (llt.info() != Eigen::Success) {
    out.indefinite = true;
    return out;
  }
  const Vector rhs = -z_basis.transpose() * (g_eff + b_ff * x_part);
  const Vector w = llt.solve(rhs);
  const Vector xf = x_part + z_basis * w;
  for (Index j = 0; j < nf; ++j) out.x[free_set[j]] = xf[j];
  return out;
}

}  // namespace

QpSolution solve_qp(const QpProblem& qp, double tol, int max_iter,
                    const ActiveSets* warm) {
  qp.validate();
  const Index d = qp.dim();
  const Index me = qp.num_eq();

  QpSolution sol;
  sol.d = Vector::Zero(d);
  sol.lambda = Vector::Zero(me);
  sol.mu_lower = Vector::Zero(d);
  sol.mu_upper = Vector::Zero(d);

  std::vector<VarState> state(d, VarState::Free);

  // Warm start: restrict to the hinted working set and jump straight to its
  // minimizer when that point is box-feasible.
  bool warm_started = false;
  if (warm) {
    bool usable = true;
    for (Index i : warm->at_lower) {
      if (i < 0 || i >= d || !std::isfinite(qp.lb[i])) usable = false;
    }
    for (Index i : warm->at_upper) {
      if (i < 0 || i >= d || !std::isfinite(qp.ub[i])) usable = false;
    }
    if (usable) {
      for (Index i : warm->at_lower) state[i] = VarState::AtLower;
      for (Index i : warm->at_upper) state[i] = VarState::AtUpper;
      Vector probe = Vector::Zero(d);
      for (Index i : warm->at_lower) probe[i] = qp.lb[i];
      for (Index i : warm->at_upper) probe[i] = qp.ub[i];
      const SubSolve sub = solve_working_set(qp, state, probe);
      bool in_box = !sub.indefinite;
      if (in_box && me > 0) {
        in_box = (qp.A * sub.x - qp.b).lpNorm<Eigen::Infinity>() <=
                 1e-9 * std::max(1.0, qp.b.lpNorm<Eigen::Infinity>());
      }
      for (Index i = 0; in_box && i < d; ++i) {
        if (sub.x[i] < qp.lb[i] - 1e-12 || sub.x[i] > qp.ub[i] + 1e-12) {
          in_box = false;
        }
      }
      if (in_box) {
        sol.d = sub.x.cwiseMax(qp.lb).cwiseMin(qp.ub);
        warm_started = true;
      } else {
        state.assign(d, VarState::Free);
      }
    }
  }

  // Phase 1: box-feasible point minimizing the equality residual.
  if (!warm_started) {
    if (me > 0) {
      const BclsResult feas = solve_bcls(qp.A, qp.b, qp.lb, qp.ub);
      if (feas.value > 1e-14 * std::max(1.0, qp.b.squaredNorm())) {
        sol.status = QpStatus::Infeasible;
        return sol;
      }
      sol.d = feas.z;
    } else {
      for (Index i = 0; i < d; ++i)
        sol.d[i] = std::min(std::max(0.0, qp.lb[i]), qp.ub[i]);
    }
    for (Index i = 0; i < d; ++i) {
      if (sol.d[i] <= qp.lb[i]) {
        sol.d[i] = qp.lb[i];
        state[i] = VarState::AtLower;
      } else if (sol.d[i] >= qp.ub[i]) {
        sol.d[i] = qp.ub[i];
        state[i] = VarState::AtUpper;
      }
    }
  }

  bool final_rank_deficient = false;
  for (int iter = 0; iter < max_iter; ++iter) {
    sol.iterations = iter + 1;
    const SubSolve sub = solve_working_set(qp, state, sol.d);
    if (sub.indefinite) {
      sol.status = QpStatus::IndefiniteReduced;
      return sol;
    }
    final_rank_deficient = sub.rank_deficient;

    const Vector step = sub.x - sol.d;
    const double step_scale =
        step.lpNorm<Eigen::Infinity>() /
        std::max(1.0, sol.d.lpNorm<Eigen::Infinity>());
    if (step_scale > 1e-13) {
      // Ratio test toward the working-set minimizer.
      double t_max = 1.0;
      Index blocker = -1;
      bool blocker_low = false;
      for (Index i = 0; i < d; ++i) {
        if (state[i] != VarState::Free) continue;
        if (step[i] > 0.0 && std::isfinite(qp.ub[i])) {
          const double t = (qp.ub[i] - sol.d[i]) / step[i];
          if (t < t_max - 1e-15) {
            t_max = t;
            blocker = i;
            blocker_low = false;
          }
        } else if (step[i] < 0.0 && std::isfinite(qp.lb[i])) {
          const double t = (qp.lb[i] - sol.d[i]) / step[i];
          if (t < t_max - 1e-15) {
            t_max = t;
            blocker = i;
            blocker_low = true;
          }
        }
      }
      if (blocker < 0) {
        sol.d = sub.x;
      } else {
        t_max = std::max(t_max, 0.0);
        sol.d += t_max * step;
        sol.d[blocker] = blocker_low ? qp.lb[blocker] : qp.ub[blocker];
        state[blocker] = blocker_low ? VarState::AtLower : VarState::AtUpper;
      }
      sol.d = sol.d.cwiseMax(qp.lb).cwiseMin(qp.ub);
      continue;
    }

    // Stationary on the working set: recover multipliers and test signs.
    const Vector resid = qp.B * sol.d + qp.g;
    if (me > 0) {
      const std::vector<Index> free_set = free_indices(state);
      if (free_set.empty()) {
        sol.lambda.setZero();
      } else {
        Matrix a_f_t(static_cast<Index>(free_set.size()), me);
        Vector r_f(static_cast<Index>(free_set.size()));
        for (size_t j = 0; j < free_set.size(); ++j) {
          a_f_t.row(static_cast<Index>(j)) = qp.A.col(free_set[j]).transpose();
          r_f[static_cast<Index>(j)] = resid[free_set[j]];
        }
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a_f_t);
        cod.setThreshold(kPivotTol);
        sol.lambda = cod.solve(-r_f);
      }
    }
    const Vector stat = resid + (me > 0 ? Vector(qp.A.transpose() * sol.lambda)
                                        : Vector(Vector::Zero(d)));
    Index drop = -1;
    double worst = -tol;
    for (Index i = 0; i < d; ++i) {
      if (state[i] == VarState::AtLower && stat[i] < worst) {
        worst = stat[i];
        drop = i;
      } else if (state[i] == VarState::AtUpper && -stat[i] < worst) {
        worst = -stat[i];
        drop = i;
      }
    }
    if (drop >= 0) {
      state[drop] = VarState::Free;
      continue;
    }

    // Optimal on this working set.
    for (Index i = 0; i < d; ++i) {
      if (state[i] == VarState::AtLower) {
        sol.mu_lower[i] = std::max(0.0, stat[i]);
        sol.active.at_lower.push_back(i);
      } else if (state[i] == VarState::AtUpper) {
        sol.mu_upper[i] = std::max(0.0, -stat[i]);
        sol.active.at_upper.push_back(i);
      }
    }
    sol.objective = 0.5 * sol.d.dot(qp.B * sol.d) + qp.g.dot(sol.d);
    sol.status = final_rank_deficient ? QpStatus::RankDeficient
                                      : QpStatus::Optimal;
    return sol;
  }
  sol.status = QpStatus::IterationLimit;
  return sol;
}

QpSolution brute_force_qp(const QpProblem& qp) {
  qp.validate();
  const Index d = qp.dim();
  require(d <= 6, ErrorCode::TooLarge, "brute_force_qp: d must be <= 6");
  const Index me = qp.num_eq();

  QpSolution best;
  best.status = QpStatus::Infeasible;
  double best_obj = std::numeric_limits<double>::infinity();

  std::vector<int> assign(d, 0);  // 0 free, 1 lower, 2 upper
  long total = 1;
  for (Index i = 0; i < d; ++i) total *= 3;

  for (long code = 0; code < total; ++code) {
    long rem = code;
    bool valid = true;
    for (Index i = 0; i < d; ++i) {
      assign[i] = static_cast<int>(rem % 3);
      rem /= 3;
      if (assign[i] == 1 && !std::isfinite(qp.lb[i])) valid = false;
      if (assign[i] == 2 && !std::isfinite(qp.ub[i])) valid = false;
    }
    if (!valid) continue;

    std::vector<Index> free_set;
    Vector x = Vector::Zero(d);
    for (Index i = 0; i < d; ++i) {
      if (assign[i] == 0) free_set.push_back(i);
      else x[i] = assign[i] == 1 ? qp.lb[i] : qp.ub[i];
    }
    const Index nf = static_cast<Index>(free_set.size());
    const Index sys = nf + me;

    Vector lambda = Vector::Zero(me);
    if (sys > 0) {
      Matrix kkt = Matrix::Zero(sys, sys);
      Vector rhs = Vector::Zero(sys);
      for (Index r = 0; r < nf; ++r) {
        for (Index c = 0; c < nf; ++c)
          kkt(r, c) = qp.B(free_set[r], free_set[c]);
        for (Index c = 0; c < me; ++c)
          kkt(r, nf + c) = qp.A(c, free_set[r]);
        double acc = -qp.g[free_set[r]];
        for (Index i = 0; i < d; ++i)
          if (assign[i] != 0) acc -= qp.B(free_set[r], i) * x[i];
        rhs[r] = acc;
      }
      for (Index r = 0; r < me; ++r) {
        for (Index c = 0; c < nf; ++c) kkt(nf + r, c) = qp.A(r, free_set[c]);
        double acc = qp.b[r];
        for (Index i = 0; i < d; ++i)
          if (assign[i] != 0) acc -= qp.A(r, i) * x[i];
        rhs[nf + r] = acc;
      }
      Eigen::FullPivLU<Matrix> lu(kkt);
      lu.setThreshold(1e-12);
      if (lu.rank() < sys) continue;
      const Vector solvec = lu.solve(rhs);
      if ((kkt * solvec - rhs).lpNorm<Eigen::Infinity>() >
          1e-8 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) {
        continue;
      }
      for (Index j = 0; j < nf; ++j) x[free_set[j]] = solvec[j];
      lambda = solvec.tail(me);
    } else if (me > 0) {
      Vector gap = qp.b - qp.A * x;
      if (gap.lpNorm<Eigen::Infinity>() > 1e-9) continue;
    }

    bool feasible = true;
    for (Index j = 0; j < nf; ++j) {
      const Index i = free_set[j];
      if (x[i] < qp.lb[i] - 1e-9 || x[i] > qp.ub[i] + 1e-9) feasible = false;
    }
    if (!feasible) continue;
    if (me > 0 &&
        (qp.A * x - qp.b).lpNorm<Eigen::Infinity>() > 1e-7) {
      continue;
    }

    const Vector stat = qp.B * x + qp.g + (me > 0
                            ? Vector(qp.A.transpose() * lambda)
                            : Vector(Vector::Zero(d)));
    bool dual_ok = true;
    for (Index i = 0; i < d; ++i) {
      if (assign[i] == 1 && stat[i] < -1e-9) dual_ok = false;
      if (assign[i] == 2 && -stat[i] < -1e-9) dual_ok = false;
    }
    if (!dual_ok) continue;

    const double obj = 0.5 * x.dot(qp.B * x) + qp.g.dot(x);
    if (obj < best_obj - 1e-12) {
      best_obj = obj;
      best = QpSolution{};
      best.d = x;
      best.lambda = lambda;
      best.mu_lower = Vector::Zero(d);
      best.mu_upper = Vector::Zero(d);
      for (Index i = 0; i < d; ++i) {
        if (assign[i] == 1) {
          best.mu_lower[i] = std::max(0.0, stat[i]);
          best.active.at_lower.push_back(i);
        } else if (assign[i] == 2) {
          best.mu_upper[i] = std::max(0.0, -stat[i]);
          best.active.at_upper.push_back(i);
        }
      }
      best.objective = obj;
      best.status = QpStatus::Optimal;
    }
  }
  return best;
}

}  // namespace ssqp
