#include "kanc/train/optim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace kanc::train {

Adam::Adam(AdamOptions options, Eigen::Index size)
    : options_(options), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
  ++t_;
  Eigen::VectorXd g = grad;
  if (options_.weight_decay != 0.0) g += options_.weight_decay * x;
  m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * g;
  v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const double step = options_.lr / bc1;
  const Eigen::VectorXd denom = (v_.array().sqrt() / std::sqrt(bc2) + options_.eps).matrix();
  x.array() -= step * m_.array() / denom.array();
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Minimizer of the cubic through two points with slopes, clamped to bounds.
double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                         double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  if (!std::isfinite(f1) || !std::isfinite(f2) || !std::isfinite(g1) || !std::isfinite(g2)) {
    return mid;
  }
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2sq = d1 * d1 - g1 * g2;
  if (!(d2sq >= 0.0)) return mid;
  const double d2 = std::sqrt(d2sq);
  const double pos = x1 <= x2 ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                              : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
  if (!std::isfinite(pos)) return mid;
  return std::min(std::max(pos, lo), hi);
}

double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2) {
  return cubic_interpolate(x1, f1, g1, x2, f2, g2, std::min(x1, x2), std::max(x1, x2));
}

struct Trial {
  double f;
  Eigen::VectorXd g;
  double gtd;
};

Trial evaluate(const Objective& obj, const Eigen::VectorXd& x, double t, const Eigen::VectorXd& d) {
  Trial r;
  r.g.resize(x.size());
  r.f = obj(x + t * d, &r.g);
  if (!std::isfinite(r.f) || !r.g.allFinite()) {
    r.f = kInf;
    r.g.setZero();
    r.gtd = 0.0;
  } else {
    r.gtd = r.g.dot(d);
  }
  return r;
}

}  // namespace

LineSearchResult strong_wolfe(const Objective& obj, const Eigen::VectorXd& x, double t,
                              const Eigen::VectorXd& d, double f, const Eigen::VectorXd& g,
                              const LbfgsOptions& o) {
  const double gtd = g.dot(d);
  const double d_norm = d.cwiseAbs().maxCoeff();
  Trial cur = evaluate(obj, x, t, d);
  int evals = 1;
  double t_prev = 0.0;
  Trial prev{f, g, gtd};
  bool done = false;
  int ls_iter = 0;

  std::array<double, 2> bt{};
  std::array<Trial, 2> bk;
  bool single = false;

  while (ls_iter < o.max_line_search) {
    if (cur.f > f + o.c1 * t * gtd || (ls_iter > 1 && cur.f >= prev.f)) {
      bt = {t_prev, t};
      bk = {prev, cur};
      break;
    }
    if (std::abs(cur.gtd) <= -o.c2 * gtd) {
      bt = {t, t};
      bk = {cur, cur};
      single = true;
      done = true;
      break;
    }
    if (cur.gtd >= 0.0) {
      bt = {t_prev, t};
      bk = {prev, cur};
      break;
    }
    const double min_step = t + 0.01 * (t - t_prev);
    const double max_step = t * 10.0;
    const double tmp = t;
    t = cubic_interpolate(t_prev, prev.f, prev.gtd, t, cur.f, cur.gtd, min_step, max_step);
    t_prev = tmp;
    prev = cur;
    cur = evaluate(obj, x, t, d);
    ++evals;
    ++ls_iter;
  }
  if (ls_iter == o.max_line_search) {
    bt = {0.0, t};
    bk = {Trial{f, g, gtd}, cur};
  }

  // zoom
  bool insufficient = false;
  int low = bk[0].f <= bk[1].f ? 0 : 1;
  int high = 1 - low;
  while (!single && !done && ls_iter < o.max_line_search) {
    if (std::abs(bt[1] - bt[0]) * d_norm < o.tolerance_change) break;
    t = cubic_interpolate(bt[0], bk[0].f, bk[0].gtd, bt[1], bk[1].f, bk[1].gtd);
    const double hi_t = std::max(bt[0], bt[1]);
    const double lo_t = std::min(bt[0], bt[1]);
    const double eps = 0.1 * (hi_t - lo_t);
    if (std::min(hi_t - t, t - lo_t) < eps) {
      if (insufficient || t >= hi_t || t <= lo_t) {
        t = std::abs(t - hi_t) < std::abs(t - lo_t) ? hi_t - eps : lo_t + eps;
        insufficient = false;
      } else {
        insufficient = true;
      }
    } else {
      insufficient = false;
    }
    cur = evaluate(obj, x, t, d);
    ++evals;
    ++ls_iter;
    if (cur.f > f + o.c1 * t * gtd || cur.f >= bk[low].f) {
      bt[high] = t;
      bk[high] = cur;
      low = bk[0].f <= bk[1].f ? 0 : 1;
      high = 1 - low;
    } else {
      if (std::abs(cur.gtd) <= -o.c2 * gtd) {
        done = true;
      } else if (cur.gtd * (bt[high] - bt[low]) >= 0.0) {
        bt[high] = bt[low];
        bk[high] = bk[low];
      }
      bt[low] = t;
      bk[low] = cur;
    }
  }
  if (single) low = 0;
  LineSearchResult r;
  r.step = bt[low];
  r.loss = bk[low].f;
  r.grad = bk[low].g;
  r.evaluations = evals;
  return r;
}

void Lbfgs::reset() {
  s_.clear();
  y_.clear();
  iterations_ = 0;
}

Eigen::VectorXd Lbfgs::direction(const Eigen::VectorXd& grad) const {
  Eigen::VectorXd q = -grad;
  const std::size_t m = s_.size();
  if (m == 0) return q;
  std::vector<double> alpha(m), rho(m);
  for (std::size_t k = m; k-- > 0;) {
    rho[k] = 1.0 / y_[k].dot(s_[k]);
    alpha[k] = rho[k] * s_[k].dot(q);
    q -= alpha[k] * y_[k];
  }
  const double h0 = s_.back().dot(y_.back()) / y_.back().squaredNorm();
  Eigen::VectorXd r = h0 * q;
  for (std::size_t k = 0; k < m; ++k) {
    const double beta = rho[k] * y_[k].dot(r);
    r += s_[k] * (alpha[k] - beta);
  }
  return r;
}

bool Lbfgs::step(const Objective& obj, Eigen::VectorXd& x, double& loss, Eigen::VectorXd& grad) {
  Eigen::VectorXd d = direction(grad);
  double gtd = grad.dot(d);
  if (!(gtd < 0.0) && !s_.empty()) {
    // stale curvature pairs; fall back to steepest descent
    s_.clear();
    y_.clear();
    d = -grad;
    gtd = grad.dot(d);
  }
  if (!(gtd < -options_.tolerance_change * options_.tolerance_change)) return false;

  const double t0 = iterations_ == 0
                        ? std::min(1.0, 1.0 / grad.cwiseAbs().sum()) * options_.lr
                        : options_.lr;
  ++iterations_;
  const LineSearchResult ls = strong_wolfe(obj, x, t0, d, loss, grad, options_);
  if (!std::isfinite(ls.loss) || ls.step == 0.0) return false;

  const Eigen::VectorXd s = ls.step * d;
  const Eigen::VectorXd y = ls.grad - grad;
  if (y.dot(s) > 1e-10) {
    if (static_cast<int>(s_.size()) == options_.history) {
      s_.pop_front();
      y_.pop_front();
    }
    s_.push_back(s);
    y_.push_back(y);
  }
  x += s;
  loss = ls.loss;
  grad = ls.grad;
  return true;
}

}  // namespace kanc::train
