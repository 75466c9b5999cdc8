#include "kanc/symbolic/expr.hpp"

#include <cmath>

#include <fmt/format.h>

#include "kanc/error.hpp"

namespace kanc::symbolic {

namespace {

ExprPtr make(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

bool is_constant(const ExprPtr& e) { return e->kind == Expr::Kind::Constant; }

}  // namespace

ExprPtr constant(double v) { return make({Expr::Kind::Constant, v, 0, nullptr, {}}); }

ExprPtr variable(int index) {
  if (index < 0 || index >= static_cast<int>(kVariableNames.size())) {
    throw ConfigError(fmt::format("no input variable {}", index));
  }
  return make({Expr::Kind::Variable, 0.0, index, nullptr, {}});
}

ExprPtr add(std::vector<ExprPtr> terms) {
  std::vector<ExprPtr> flat;
  double folded = 0.0;
  bool any_constant = false;
  for (ExprPtr& t : terms) {
    if (is_constant(t)) {
      folded += t->value;
      any_constant = true;
    } else if (t->kind == Expr::Kind::Add) {
      for (const ExprPtr& c : t->children) {
        if (is_constant(c)) {
          folded += c->value;
          any_constant = true;
        } else {
          flat.push_back(c);
        }
      }
    } else {
      flat.push_back(std::move(t));
    }
  }
  if (any_constant && (folded != 0.0 || flat.empty())) flat.push_back(constant(folded));
  if (flat.empty()) return constant(0.0);
  if (flat.size() == 1) return flat.front();
  return make({Expr::Kind::Add, 0.0, 0, nullptr, std::move(flat)});
}

ExprPtr scale(double factor, ExprPtr child) {
  if (is_constant(child)) return constant(factor * child->value);
  if (factor == 0.0) return constant(0.0);
  if (child->kind == Expr::Kind::Scale) return scale(factor * child->value, child->children.front());
  return make({Expr::Kind::Scale, factor, 0, nullptr, {std::move(child)}});
}

ExprPtr apply(const BasicFunction& f, ExprPtr child) {
  if (is_constant(child)) return constant(f(child->value));
  if (f.name() == "x") return child;
  return make({Expr::Kind::Apply, 0.0, 0, &f, {std::move(child)}});
}

double evaluate(const Expr& e, std::span<const double> vars) {
  switch (e.kind) {
    case Expr::Kind::Constant: return e.value;
    case Expr::Kind::Variable: return vars[static_cast<std::size_t>(e.variable)];
    case Expr::Kind::Scale: return e.value * evaluate(*e.children.front(), vars);
    case Expr::Kind::Apply: return (*e.function)(evaluate(*e.children.front(), vars));
    case Expr::Kind::Add: {
      double s = 0.0;
      for (const ExprPtr& c : e.children) s += evaluate(*c, vars);
      return s;
    }
  }
  return 0.0;
}

Dual differentiate(const Expr& e, std::span<const double> vars, int wrt) {
  switch (e.kind) {
    case Expr::Kind::Constant: return {e.value, 0.0};
    case Expr::Kind::Variable:
      return {vars[static_cast<std::size_t>(e.variable)], e.variable == wrt ? 1.0 : 0.0};
    case Expr::Kind::Scale: {
      const Dual c = differentiate(*e.children.front(), vars, wrt);
      return {e.value * c.value, e.value * c.deriv};
    }
    case Expr::Kind::Apply: {
      const Dual c = differentiate(*e.children.front(), vars, wrt);
      return {(*e.function)(c.value), e.function->deriv(c.value) * c.deriv};
    }
    case Expr::Kind::Add: {
      Dual s;
      for (const ExprPtr& c : e.children) {
        const Dual d = differentiate(*c, vars, wrt);
        s.value += d.value;
        s.deriv += d.deriv;
      }
      return s;
    }
  }
  return {};
}

std::string render(const Expr& e, int digits) {
  switch (e.kind) {
    case Expr::Kind::Constant: return fmt::format("{:.{}f}", e.value, digits);
    case Expr::Kind::Variable: return kVariableNames[static_cast<std::size_t>(e.variable)];
    case Expr::Kind::Scale: {
      const Expr& c = *e.children.front();
      const std::string inner = render(c, digits);
      return fmt::format("{:.{}f}*{}", e.value, digits, c.kind == Expr::Kind::Add ? "(" + inner + ")" : inner);
    }
    case Expr::Kind::Apply: return e.function->render(render(*e.children.front(), digits));
    case Expr::Kind::Add: {
      std::string out;
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        const std::string t = render(*e.children[i], digits);
        if (i == 0) {
          out = t;
        } else if (t.starts_with('-')) {
          out += " - " + t.substr(1);
        } else {
          out += " + " + t;
        }
      }
      return out;
    }
  }
  return {};
}

nlohmann::json to_json(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Constant: return {{"op", "const"}, {"value", e.value}};
    case Expr::Kind::Variable:
      return {{"op", "var"}, {"name", kVariableNames[static_cast<std::size_t>(e.variable)]}};
    case Expr::Kind::Scale: return {{"op", "scale"}, {"factor", e.value}, {"arg", to_json(*e.children.front())}};
    case Expr::Kind::Apply:
      return {{"op", "apply"}, {"function", e.function->name()}, {"arg", to_json(*e.children.front())}};
    case Expr::Kind::Add: {
      nlohmann::json args = nlohmann::json::array();
      for (const ExprPtr& c : e.children) args.push_back(to_json(*c));
      return {{"op", "add"}, {"args", args}};
    }
  }
  return {};
}

ExprPtr from_json(const nlohmann::json& j) {
  try {
    const std::string op = j.at("op").get<std::string>();
    if (op == "const") return make({Expr::Kind::Constant, j.at("value").get<double>(), 0, nullptr, {}});
    if (op == "var") {
      const std::string name = j.at("name").get<std::string>();
      for (std::size_t i = 0; i < kVariableNames.size(); ++i) {
        if (name == kVariableNames[i]) return make({Expr::Kind::Variable, 0.0, static_cast<int>(i), nullptr, {}});
      }
      throw ConfigError(fmt::format("unknown variable '{}' in expression", name));
    }
    if (op == "scale") {
      return make({Expr::Kind::Scale, j.at("factor").get<double>(), 0, nullptr, {from_json(j.at("arg"))}});
    }
    if (op == "apply") {
      const BasicFunction& f = find_function(j.at("function").get<std::string>());
      return make({Expr::Kind::Apply, 0.0, 0, &f, {from_json(j.at("arg"))}});
    }
    if (op == "add") {
      std::vector<ExprPtr> args;
      for (const auto& a : j.at("args")) args.push_back(from_json(a));
      return make({Expr::Kind::Add, 0.0, 0, nullptr, std::move(args)});
    }
    throw ConfigError(fmt::format("unknown expression op '{}'", op));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(fmt::format("malformed expression: {}", ex.what()));
  }
}

ExprPtr network_expression(const nn::Network& net) {
  if (net.spec.family != nn::Family::Kan) throw DomainError("formulas are extracted from KAN networks only");
  std::vector<ExprPtr> nodes;
  for (int i = 0; i < net.spec.widths.front(); ++i) nodes.push_back(scale(net.spec.input_scale, variable(i)));
  for (std::size_t l = 0; l < net.kan.size(); ++l) {
    const nn::KanLayer& layer = net.kan[l];
    std::vector<ExprPtr> next;
    for (int j = 0; j < layer.out; ++j) {
      std::vector<ExprPtr> terms;
      for (int i = 0; i < layer.in; ++i) {
        const nn::KanEdge& edge = layer.edge(j, i);
        if (!edge.symbolic) {
          throw DomainError(fmt::format("edge {}->{} of layer {} is not fixed", i, j, l));
        }
        const Eigen::Vector4d& p = edge.symbolic->affine;
        const ExprPtr arg = add({scale(p[0], nodes[static_cast<std::size_t>(i)]), constant(p[1])});
        terms.push_back(add({scale(p[2], apply(*edge.symbolic->function, arg)), constant(p[3])}));
      }
      terms.push_back(constant(layer.bias[j]));
      next.push_back(add(std::move(terms)));
    }
    nodes = std::move(next);
  }
  return nodes.front();
}

double Formula::evaluate_y(double vd, double vg) const {
  const std::array<double, 2> v{vd, vg};
  return evaluate(*y, v);
}

std::string Formula::text(int digits) const {
  const std::string body = render(*y, digits);
  const std::string lhs = target.empty() ? "y" : target;
  if (conversion == nn::Conversion::ExpCurrent) return fmt::format("{} = exp({})", lhs, body);
  return fmt::format("{} = {}", lhs, body);
}

nlohmann::json Formula::json() const {
  return {{"target", target}, {"conversion", nn::conversion_name(conversion)}, {"y", to_json(*y)}};
}

Formula extract_formula(const nn::Network& net, const std::string& target) {
  return Formula{network_expression(net), net.spec.conversion, target};
}

}  // namespace kanc::symbolic
