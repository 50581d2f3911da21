#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/SparseLU>

#include "celltrack/ilp.hpp"

namespace celltrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPrimalTol = 1e-9;
constexpr double kDualTol = 1e-9;
constexpr double kPivotTol = 1e-9;
// Dantzig rarely cycles; Bland is slow on degenerate vertices, so it is a late fallback.
constexpr long kCycleGuard = 5000;
constexpr int kRefactorPeriod = 64;

enum class State : unsigned char { Basic, Lower, Upper };

// Basis kept as a sparse LU factorization plus a product-form eta file.
// Columns: structurals [0, n), slacks [n, n+m), artificials [n+m, n+2m).
// Every row i reads  A_i x + s_i + sign_i * r_i = b_i.
class Simplex {
 public:
  explicit Simplex(const LpProblem& lp)
      : lp_(lp), m_(static_cast<int>(lp.A.rows())), n_(static_cast<int>(lp.A.cols())) {
    const int total = n_ + 2 * m_;
    lo_.resize(total);
    hi_.resize(total);
    x_.setZero(total);
    state_.assign(static_cast<std::size_t>(total), State::Lower);
    pos_.assign(static_cast<std::size_t>(total), -1);
    head_.assign(static_cast<std::size_t>(m_), -1);
    sign_.setOnes(m_);
    for (int j = 0; j < n_; ++j) {
      lo_(j) = lp.lo(j);
      hi_(j) = lp.hi(j);
      x_(j) = lo_(j);
    }
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      switch (lp.sense[static_cast<std::size_t>(i)]) {
        case RowSense::Equal: lo_(s) = 0; hi_(s) = 0; break;
        case RowSense::LessEqual: lo_(s) = 0; hi_(s) = kInf; break;
        case RowSense::GreaterEqual: lo_(s) = -kInf; hi_(s) = 0; state_[static_cast<std::size_t>(s)] = State::Upper; break;
      }
      lo_(n_ + m_ + i) = 0;
      hi_(n_ + m_ + i) = kInf;
    }
  }

  LpResult run_cold() {
    LpResult result;
    const Eigen::VectorXd r = lp_.rhs - lp_.A * x_.head(n_);
    bool need_phase1 = false;
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i, a = n_ + m_ + i;
      if (r(i) >= lo_(s) - kPrimalTol && r(i) <= hi_(s) + kPrimalTol) {
        make_basic(i, s, r(i));
        lo_(a) = hi_(a) = 0;
      } else {
        sign_(i) = r(i) >= 0 ? 1.0 : -1.0;
        make_basic(i, a, std::abs(r(i)));
        need_phase1 = true;
      }
    }
    refactor();
    if (need_phase1) {
      Eigen::VectorXd cost = Eigen::VectorXd::Zero(n_ + 2 * m_);
      cost.tail(m_).setOnes();
      iterate(cost);
      recompute_basic();
      if (x_.tail(m_).sum() > 1e-7) {
        result.iterations = iterations_;
        return result;
      }
      for (int i = 0; i < m_; ++i) {
        const int a = n_ + m_ + i;
        lo_(a) = hi_(a) = 0;
        if (state_[static_cast<std::size_t>(a)] != State::Basic) {
          state_[static_cast<std::size_t>(a)] = State::Lower;
          x_(a) = 0;
        }
      }
      drive_out_artificials();
    }
    return optimize();
  }

  // Starts from a previous optimal basis. Its reduced costs stay dual
  // feasible under new bounds, so the dual simplex repairs primal
  // feasibility. Returns nullopt when the basis is unusable.
  std::optional<LpResult> run_warm(const LpBasis& basis) {
    const int total = n_ + 2 * m_;
    if (static_cast<int>(basis.state.size()) != total || static_cast<int>(basis.head.size()) != m_ ||
        basis.sign.size() != m_)
      return std::nullopt;
    sign_ = basis.sign;
    for (int i = 0; i < m_; ++i) lo_(n_ + m_ + i) = hi_(n_ + m_ + i) = 0;
    for (int j = 0; j < total; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      pos_[sj] = -1;
      if (basis.state[sj] == 0) continue;
      state_[sj] = basis.state[sj] == 1 ? State::Lower : State::Upper;
      x_(j) = state_[sj] == State::Lower ? lo_(j) : hi_(j);
      if (!std::isfinite(x_(j))) return std::nullopt;
    }
    for (int i = 0; i < m_; ++i) {
      const int col = basis.head[static_cast<std::size_t>(i)];
      if (col < 0 || col >= total || basis.state[static_cast<std::size_t>(col)] != 0) return std::nullopt;
      make_basic(i, col, 0);
    }
    try {
      refactor();
      recompute_basic();
      Eigen::VectorXd cost = Eigen::VectorXd::Zero(total);
      cost.head(n_) = -lp_.c;
      if (!dual_iterate(cost)) {
        LpResult result;
        result.iterations = iterations_;
        return result;
      }
      return optimize();
    } catch (const Error&) {
      return std::nullopt;
    }
  }

 private:
  // Phase 2 from a primal feasible basis.
  LpResult optimize() {
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(n_ + 2 * m_);
    cost.head(n_) = -lp_.c;
    iterate(cost);
    recompute_basic();
    LpResult result;
    result.feasible = true;
    result.x = x_.head(n_);
    for (int j = 0; j < n_; ++j) result.x(j) = std::clamp(result.x(j), lo_(j), hi_(j));
    result.objective = lp_.c.dot(result.x);
    result.iterations = iterations_;
    result.basis.head = head_;
    result.basis.sign = sign_;
    result.basis.state.resize(state_.size());
    for (std::size_t j = 0; j < state_.size(); ++j)
      result.basis.state[j] = state_[j] == State::Basic ? 0 : state_[j] == State::Lower ? 1 : 2;
    return result;
  }

  // Bounded dual simplex. False when the bounds admit no feasible point.
  bool dual_iterate(const Eigen::VectorXd& cost) {
    const int total = n_ + 2 * m_;
    const long limit = 20L * (total + m_) + 1000;
    Eigen::VectorXd cb(m_), y(m_), rho(m_), alpha(m_);
    long since_check = 0;
    for (long it = 0; it < limit; ++it, ++iterations_) {
      int r = -1;
      double worst = kPrimalTol;
      for (int i = 0; i < m_; ++i) {
        const int col = head_[static_cast<std::size_t>(i)];
        const double v = std::max(lo_(col) - x_(col), x_(col) - hi_(col));
        if (v > worst) {
          worst = v;
          r = i;
        }
      }
      if (r < 0) return true;
      const int leaving = head_[static_cast<std::size_t>(r)];
      const bool to_lower = x_(leaving) < lo_(leaving);

      for (int i = 0; i < m_; ++i) cb(i) = cost(head_[static_cast<std::size_t>(i)]);
      y = cb;
      btran_vec(y);
      rho = Eigen::VectorXd::Unit(m_, r);
      btran_vec(rho);

      int q = -1;
      double best = kInf, q_alpha = 0;
      for (int j = 0; j < total; ++j) {
        const State st = state_[static_cast<std::size_t>(j)];
        if (st == State::Basic || lo_(j) == hi_(j)) continue;
        const double a = dot_column(rho, j);
        if (std::abs(a) <= kPivotTol) continue;
        // Moving x_j off its bound must push the leaving variable toward the violated bound.
        const bool up = st == State::Lower;
        if (to_lower != ((up && a < 0) || (!up && a > 0))) continue;
        const double d = cost(j) - dot_column(y, j);
        const double ratio = std::max(0.0, std::abs(d) / std::abs(a) * ((up ? d >= 0 : d <= 0) ? 1.0 : 0.0));
        if (ratio < best - 1e-12 || (ratio <= best + 1e-12 && std::abs(a) > q_alpha)) {
          best = ratio;
          q = j;
          q_alpha = std::abs(a);
        }
      }
      if (q < 0) return false;

      ftran(q, alpha);
      state_[static_cast<std::size_t>(leaving)] = to_lower ? State::Lower : State::Upper;
      x_(leaving) = to_lower ? lo_(leaving) : hi_(leaving);
      pos_[static_cast<std::size_t>(leaving)] = -1;
      pivot(r, alpha);
      make_basic(r, q, x_(q));
      if (++since_check >= kRefactorPeriod) {
        since_check = 0;
        refactor();
      }
      recompute_basic();
    }
    throw Error(ErrorCode::TooLarge, "dual simplex iteration limit reached");
  }

  void make_basic(int position, int col, double value) {
    head_[static_cast<std::size_t>(position)] = col;
    pos_[static_cast<std::size_t>(col)] = position;
    state_[static_cast<std::size_t>(col)] = State::Basic;
    x_(col) = value;
  }

  void column(int col, Eigen::VectorXd& out) const {
    out.setZero(m_);
    if (col < n_) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, col); it; ++it) out(it.row()) = it.value();
    } else if (col < n_ + m_) {
      out(col - n_) = 1.0;
    } else {
      out(col - n_ - m_) = sign_(col - n_ - m_);
    }
  }

  // Solves B z = v: factored basis, then the eta file in order.
  void ftran_vec(Eigen::VectorXd& v) const {
    v = lu_.solve(v).eval();
    for (const auto& eta : etas_) {
      const double zr = v(eta.r) / eta.alpha(eta.r);
      v.noalias() -= zr * eta.alpha;
      v(eta.r) = zr;
    }
  }

  // Solves B' y = v: the eta file backwards, then the factored basis.
  void btran_vec(Eigen::VectorXd& v) const {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      const double vr = v(it->r);
      v(it->r) = 0;
      v(it->r) = (vr - it->alpha.dot(v)) / it->alpha(it->r);
    }
    v = lu_.transpose().solve(v).eval();
  }

  void ftran(int col, Eigen::VectorXd& alpha) const {
    column(col, alpha);
    ftran_vec(alpha);
  }

  double dot_column(const Eigen::VectorXd& y, int col) const {
    if (col < n_) {
      double s = 0;
      for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, col); it; ++it) s += it.value() * y(it.row());
      return s;
    }
    if (col < n_ + m_) return y(col - n_);
    const int i = col - n_ - m_;
    return sign_(i) * y(i);
  }

  void recompute_basic() {
    Eigen::VectorXd rhs = lp_.rhs;
    for (int col = 0; col < n_ + 2 * m_; ++col) {
      if (state_[static_cast<std::size_t>(col)] == State::Basic || x_(col) == 0.0) continue;
      if (col < n_) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, col); it; ++it) rhs(it.row()) -= it.value() * x_(col);
      } else if (col < n_ + m_) {
        rhs(col - n_) -= x_(col);
      } else {
        rhs(col - n_ - m_) -= sign_(col - n_ - m_) * x_(col);
      }
    }
    ftran_vec(rhs);
    for (int i = 0; i < m_; ++i) x_(head_[static_cast<std::size_t>(i)]) = rhs(i);
  }

  void refactor() {
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < m_; ++i) {
      const int col = head_[static_cast<std::size_t>(i)];
      if (col < n_) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(lp_.A, col); it; ++it) trip.emplace_back(it.row(), i, it.value());
      } else if (col < n_ + m_) {
        trip.emplace_back(col - n_, i, 1.0);
      } else {
        trip.emplace_back(col - n_ - m_, i, sign_(col - n_ - m_));
      }
    }
    Eigen::SparseMatrix<double> B(m_, m_);
    B.setFromTriplets(trip.begin(), trip.end());
    B.makeCompressed();
    lu_.compute(B);
    if (lu_.info() != Eigen::Success) throw Error(ErrorCode::Infeasible, "simplex basis became singular");
    etas_.clear();
  }

  void pivot(int r, const Eigen::VectorXd& alpha) {
    etas_.push_back({r, alpha});
  }

  void drive_out_artificials() {
    for (int i = 0; i < m_; ++i) {
      const int col = head_[static_cast<std::size_t>(i)];
      if (col < n_ + m_) continue;
      Eigen::VectorXd row = Eigen::VectorXd::Unit(m_, i);
      btran_vec(row);
      for (int q = 0; q < n_ + m_; ++q) {
        if (state_[static_cast<std::size_t>(q)] == State::Basic) continue;
        if (std::abs(dot_column(row, q)) <= 1e-7) continue;
        Eigen::VectorXd alpha;
        ftran(q, alpha);
        pivot(i, alpha);
        state_[static_cast<std::size_t>(col)] = State::Lower;
        pos_[static_cast<std::size_t>(col)] = -1;
        x_(col) = 0;
        const double xq = x_(q);
        make_basic(i, q, xq);
        break;
      }
    }
    recompute_basic();
  }

  // Minimizes cost'x from the current basic feasible solution.
  void iterate(const Eigen::VectorXd& cost) {
    const int total = n_ + 2 * m_;
    const long limit = 100L * (total + m_) + 10000;
    Eigen::VectorXd cb(m_), y(m_), alpha(m_);
    int degenerate_run = 0;
    bool bland = false;
    long since_check = 0;
    for (long it = 0; it < limit; ++it, ++iterations_) {
      for (int i = 0; i < m_; ++i) cb(i) = cost(head_[static_cast<std::size_t>(i)]);
      y = cb;
      btran_vec(y);

      int q = -1;
      double best = 0;
      for (int j = 0; j < total; ++j) {
        const State st = state_[static_cast<std::size_t>(j)];
        if (st == State::Basic || lo_(j) == hi_(j)) continue;
        const double d = cost(j) - dot_column(y, j);
        const bool improving = (st == State::Lower && d < -kDualTol) || (st == State::Upper && d > kDualTol);
        if (!improving) continue;
        if (bland) {
          q = j;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          q = j;
        }
      }
      if (q < 0) return;

      const double dir = state_[static_cast<std::size_t>(q)] == State::Lower ? 1.0 : -1.0;
      ftran(q, alpha);
      double t = hi_(q) - lo_(q);
      int r = -1;
      double r_alpha = 0;
      for (int i = 0; i < m_; ++i) {
        const double delta = -dir * alpha(i);
        if (std::abs(delta) <= kPivotTol) continue;
        const int col = head_[static_cast<std::size_t>(i)];
        double lim;
        if (delta < 0) {
          if (lo_(col) == -kInf) continue;
          lim = std::max(0.0, (x_(col) - lo_(col)) / -delta);
        } else {
          if (hi_(col) == kInf) continue;
          lim = std::max(0.0, (hi_(col) - x_(col)) / delta);
        }
        const bool better = lim < t - 1e-12 ||
                            (lim <= t + 1e-12 && r >= 0 &&
                             (bland ? col < head_[static_cast<std::size_t>(r)] : std::abs(alpha(i)) > r_alpha));
        if (better || (r < 0 && lim < t)) {
          t = lim;
          r = i;
          r_alpha = std::abs(alpha(i));
        }
      }
      if (t == kInf) return;  // unbounded; cannot happen for box-bounded structurals

      if (t <= 1e-12) {
        if (++degenerate_run > kCycleGuard) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      x_(q) += dir * t;
      for (int i = 0; i < m_; ++i) x_(head_[static_cast<std::size_t>(i)]) -= dir * alpha(i) * t;
      if (r < 0) {
        state_[static_cast<std::size_t>(q)] = dir > 0 ? State::Upper : State::Lower;
        x_(q) = dir > 0 ? hi_(q) : lo_(q);
        continue;
      }
      const int leaving = head_[static_cast<std::size_t>(r)];
      const double delta_r = -dir * alpha(r);
      state_[static_cast<std::size_t>(leaving)] = delta_r < 0 ? State::Lower : State::Upper;
      x_(leaving) = delta_r < 0 ? lo_(leaving) : hi_(leaving);
      pos_[static_cast<std::size_t>(leaving)] = -1;
      pivot(r, alpha);
      make_basic(r, q, x_(q));

      if (++since_check >= kRefactorPeriod) {
        since_check = 0;
        refactor();
        recompute_basic();
      }
    }
    throw Error(ErrorCode::TooLarge, "simplex iteration limit reached");
  }

  Eigen::VectorXd basic_values() const {
    Eigen::VectorXd v(m_);
    for (int i = 0; i < m_; ++i) v(i) = x_(head_[static_cast<std::size_t>(i)]);
    return v;
  }

  const LpProblem& lp_;
  int m_, n_;
  Eigen::VectorXd lo_, hi_, x_, sign_;
  std::vector<State> state_;
  std::vector<int> pos_, head_;
  struct Eta {
    int r;
    Eigen::VectorXd alpha;
  };
  mutable Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  std::vector<Eta> etas_;
  long iterations_ = 0;
};

}  // namespace

LpResult simplex_maximize(const LpProblem& lp, const LpBasis* warm) {
  if (lp.A.cols() == 0) {
    LpResult r;
    r.feasible = true;
    for (Eigen::Index i = 0; i < lp.rhs.size(); ++i) {
      const auto s = lp.sense[static_cast<std::size_t>(i)];
      if ((s == RowSense::Equal && std::abs(lp.rhs(i)) > kPrimalTol) ||
          (s == RowSense::LessEqual && lp.rhs(i) < -kPrimalTol) ||
          (s == RowSense::GreaterEqual && lp.rhs(i) > kPrimalTol))
        r.feasible = false;
    }
    r.x.resize(0);
    return r;
  }
  if (warm && !warm->empty())
    if (auto res = Simplex(lp).run_warm(*warm)) return *std::move(res);
  return Simplex(lp).run_cold();
}

}  // namespace celltrack
