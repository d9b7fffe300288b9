#ifndef SANDPILE_EXPRESSION_HPP
#define SANDPILE_EXPRESSION_HPP

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "sandpile/errors.hpp"
#include "sandpile/geometry.hpp"

namespace sandpile {

/// Small arithmetic expression in the plane coordinates, used for user supplied
/// support surfaces. Variables: x, y, r (= sqrt(x^2+y^2)), pi. Functions: abs,
/// sqrt, exp, sin, cos, min, max. Operators: + - * / ^ and parentheses.
class Expression {
public:
  explicit Expression(std::string text) : text_(std::move(text)) {
    pos_ = 0;
    root_ = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
  }

  double operator()(const Vec2& p) const { return root_(p); }
  const std::string& text() const { return text_; }

private:
  using Node = std::function<double(const Vec2&)>;

  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidArgument("expression '" + text_ + "' at column " + std::to_string(pos_ + 1) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Node parse_sum() {
    Node lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        Node rhs = parse_product();
        lhs = [lhs, rhs](const Vec2& p) { return lhs(p) + rhs(p); };
      } else if (accept('-')) {
        Node rhs = parse_product();
        lhs = [lhs, rhs](const Vec2& p) { return lhs(p) - rhs(p); };
      } else {
        return lhs;
      }
    }
  }

  Node parse_product() {
    Node lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        Node rhs = parse_unary();
        lhs = [lhs, rhs](const Vec2& p) { return lhs(p) * rhs(p); };
      } else if (accept('/')) {
        Node rhs = parse_unary();
        lhs = [lhs, rhs](const Vec2& p) { return lhs(p) / rhs(p); };
      } else {
        return lhs;
      }
    }
  }

  Node parse_unary() {
    if (accept('-')) {
      Node arg = parse_unary();
      return [arg](const Vec2& p) { return -arg(p); };
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Node parse_power() {
    Node base = parse_primary();
    if (accept('^')) {
      Node expo = parse_unary();
      return [base, expo](const Vec2& p) { return std::pow(base(p), expo(p)); };
    }
    return base;
  }

  Node parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    if (accept('(')) {
      Node inner = parse_sum();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(text_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return [value](const Vec2&) { return value; };
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      const std::string name = text_.substr(start, pos_ - start);
      if (accept('(')) return parse_call(name);
      if (name == "x") return [](const Vec2& p) { return p.x; };
      if (name == "y") return [](const Vec2& p) { return p.y; };
      if (name == "r") return [](const Vec2& p) { return norm(p); };
      if (name == "pi") return [](const Vec2&) { return std::numbers::pi; };
      fail("unknown variable '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Node parse_call(const std::string& name) {
    std::vector<Node> args;
    if (!accept(')')) {
      do {
        args.push_back(parse_sum());
      } while (accept(','));
      if (!accept(')')) fail("expected ')' after arguments of " + name);
    }
    const auto unary = [&](double (*fn)(double)) -> Node {
      if (args.size() != 1) fail(name + " takes one argument");
      Node a = args[0];
      return [a, fn](const Vec2& p) { return fn(a(p)); };
    };
    if (name == "abs") return unary([](double v) { return std::abs(v); });
    if (name == "sqrt") return unary([](double v) { return std::sqrt(v); });
    if (name == "exp") return unary([](double v) { return std::exp(v); });
    if (name == "sin") return unary([](double v) { return std::sin(v); });
    if (name == "cos") return unary([](double v) { return std::cos(v); });
    if (name == "min" || name == "max") {
      if (args.size() < 2) fail(name + " takes at least two arguments");
      const bool is_max = name == "max";
      return [args, is_max](const Vec2& p) {
        double v = args[0](p);
        for (std::size_t i = 1; i < args.size(); ++i) v = is_max ? std::max(v, args[i](p)) : std::min(v, args[i](p));
        return v;
      };
    }
    fail("unknown function '" + name + "'");
  }

  std::string text_;
  std::size_t pos_ = 0;
  Node root_;
};

}  // namespace sandpile

#endif  // SANDPILE_EXPRESSION_HPP
