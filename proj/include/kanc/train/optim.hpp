#pragma once

#include <deque>
#include <functional>

#include <Eigen/Dense>

namespace kanc::train {

// Loss at x; writes the gradient when `grad` is non-null. Returns a
// non-finite value when the loss cannot be evaluated.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

class Adam {
 public:
  Adam(AdamOptions options, Eigen::Index size);

  void step(Eigen::VectorXd& x, const Eigen::VectorXd& grad);
  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  long steps() const { return t_; }

 private:
  AdamOptions options_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

struct LbfgsOptions {
  double lr = 1.0;
  int history = 10;
  int max_line_search = 25;
  double c1 = 1e-4;
  double c2 = 0.9;
  double tolerance_change = 1e-9;
};

struct LineSearchResult {
  double loss = 0.0;
  double step = 0.0;
  Eigen::VectorXd grad;
  int evaluations = 0;
};

// Strong Wolfe line search along d from x, with loss f and gradient g at x.
// Non-finite trial losses count as +infinity so the bracket shrinks away from them.
LineSearchResult strong_wolfe(const Objective& obj, const Eigen::VectorXd& x, double t,
                              const Eigen::VectorXd& d, double f, const Eigen::VectorXd& g,
                              const LbfgsOptions& options);

// Limited-memory BFGS. One call to step() is one quasi-Newton iteration.
class Lbfgs {
 public:
  explicit Lbfgs(LbfgsOptions options) : options_(options) {}

  // Advances x, loss and grad (which must hold the current loss and gradient).
  // Returns false when no descent direction exists.
  bool step(const Objective& obj, Eigen::VectorXd& x, double& loss, Eigen::VectorXd& grad);

  double lr() const { return options_.lr; }
  long iterations() const { return iterations_; }
  void reset();

 private:
  Eigen::VectorXd direction(const Eigen::VectorXd& grad) const;

  LbfgsOptions options_;
  std::deque<Eigen::VectorXd> s_;
  std::deque<Eigen::VectorXd> y_;
  long iterations_ = 0;
};

}  // namespace kanc::train
