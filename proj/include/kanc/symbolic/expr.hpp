#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanc/nn/network.hpp"
#include "kanc/symbolic/functions.hpp"

namespace kanc::symbolic {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Scale is value * child; Apply is function(child).
struct Expr {
  enum class Kind { Constant, Variable, Add, Scale, Apply };
  Kind kind = Kind::Constant;
  double value = 0.0;
  int variable = 0;
  const BasicFunction* function = nullptr;
  std::vector<ExprPtr> children;
};

// Builders fold constant subtrees.
ExprPtr constant(double v);
ExprPtr variable(int index);
ExprPtr add(std::vector<ExprPtr> terms);
ExprPtr scale(double factor, ExprPtr child);
ExprPtr apply(const BasicFunction& f, ExprPtr child);

inline constexpr std::array<const char*, 2> kVariableNames{"V_D", "V_G"};

double evaluate(const Expr& e, std::span<const double> vars);

struct Dual {
  double value = 0.0;
  double deriv = 0.0;
};
// Forward-mode derivative with respect to vars[wrt].
Dual differentiate(const Expr& e, std::span<const double> vars, int wrt);

// Infix text with constants at `digits` decimals.
std::string render(const Expr& e, int digits = 4);

nlohmann::json to_json(const Expr& e);
ExprPtr from_json(const nlohmann::json& j);

// y of a fully symbolic KAN over raw inputs V_D, V_G (input scaling folded
// in). Throws DomainError naming the first edge that is still a spline.
ExprPtr network_expression(const nn::Network& net);

struct Formula {
  ExprPtr y;
  nn::Conversion conversion = nn::Conversion::ChargeScale;
  std::string target;

  double evaluate_y(double vd, double vg) const;
  // "Q_S = ..." or "I_D = exp(...)"
  std::string text(int digits = 4) const;
  nlohmann::json json() const;
};

Formula extract_formula(const nn::Network& net, const std::string& target);

}  // namespace kanc::symbolic
