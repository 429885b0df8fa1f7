/**
 * @file expr.hpp
 * @brief Arithmetic expression interpreter for config-supplied rates, matrices and perturbations.
 *
 * Grammar (usual precedence, '^' right-associative and binding tighter than unary minus):
 *   expr    := term (('+' | '-') term)*
 *   term    := unary (('*' | '/') unary)*
 *   unary   := ('-' | '+') unary | power
 *   power   := primary ('^' unary)?
 *   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
 *
 * Functions: exp, log, sqrt, abs, sin, cos, tan, pow(x, y), min(x, y), max(x, y).
 * Constants: pi, e. Variables are declared when compiling.
 */
#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lpm {

class ExprError : public std::runtime_error {
 public:
  ExprError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " at position " + std::to_string(pos)), pos_(pos) {}
  [[nodiscard]] std::size_t position() const noexcept { return pos_; }

 private:
  std::size_t pos_;
};

/// Compiled expression; immutable and safe to evaluate concurrently.
class Expr {
 public:
  static constexpr std::size_t kMaxStack = 64;

  Expr() = default;

  /// Compiles @p text with the given variable names (evaluation order of the values span).
  [[nodiscard]] static Expr compile(std::string_view text, std::vector<std::string> variables) {
    Expr e;
    e.text_ = std::string(text);
    e.vars_ = std::move(variables);
    Parser p{text, e.vars_, e.code_};
    p.parse();
    e.check_stack();
    return e;
  }

  [[nodiscard]] double operator()(std::span<const double> values) const {
    std::array<double, kMaxStack> st{};
    std::size_t sp = 0;
    for (const Op& op : code_) {
      switch (op.kind) {
        case Kind::constant: st[sp++] = op.value; break;
        case Kind::variable: st[sp++] = values[op.index]; break;
        case Kind::neg: st[sp - 1] = -st[sp - 1]; break;
        case Kind::add: --sp; st[sp - 1] += st[sp]; break;
        case Kind::sub: --sp; st[sp - 1] -= st[sp]; break;
        case Kind::mul: --sp; st[sp - 1] *= st[sp]; break;
        case Kind::div: --sp; st[sp - 1] /= st[sp]; break;
        case Kind::pow: --sp; st[sp - 1] = power(st[sp - 1], st[sp]); break;
        case Kind::min: --sp; st[sp - 1] = std::min(st[sp - 1], st[sp]); break;
        case Kind::max: --sp; st[sp - 1] = std::max(st[sp - 1], st[sp]); break;
        case Kind::exp: st[sp - 1] = std::exp(st[sp - 1]); break;
        case Kind::log: st[sp - 1] = std::log(st[sp - 1]); break;
        case Kind::sqrt: st[sp - 1] = std::sqrt(st[sp - 1]); break;
        case Kind::abs: st[sp - 1] = std::abs(st[sp - 1]); break;
        case Kind::sin: st[sp - 1] = std::sin(st[sp - 1]); break;
        case Kind::cos: st[sp - 1] = std::cos(st[sp - 1]); break;
        case Kind::tan: st[sp - 1] = std::tan(st[sp - 1]); break;
      }
    }
    return st[0];
  }

  /// Convenience for single-variable expressions.
  [[nodiscard]] double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }

  [[nodiscard]] const std::string& text() const noexcept { return text_; }
  [[nodiscard]] const std::vector<std::string>& variables() const noexcept { return vars_; }
  [[nodiscard]] bool empty() const noexcept { return code_.empty(); }

 private:
  enum class Kind { constant, variable, neg, add, sub, mul, div, pow, min, max, exp, log, sqrt, abs, sin, cos, tan };

  struct Op {
    Kind kind;
    double value = 0.0;
    std::size_t index = 0;
  };

  // Integer exponents go through repeated multiplication so that (-x)^3 stays real.
  static double power(double base, double ex) {
    if (ex == std::round(ex) && std::abs(ex) <= 64.0) {
      const int n = static_cast<int>(ex);
      double r = 1.0;
      double b = base;
      for (int k = std::abs(n); k > 0; k >>= 1) {
        if (k & 1) {
          r *= b;
        }
        b *= b;
      }
      return n < 0 ? 1.0 / r : r;
    }
    return std::pow(base, ex);
  }

  void check_stack() const {
    std::size_t depth = 0;
    std::size_t worst = 0;
    for (const Op& op : code_) {
      switch (op.kind) {
        case Kind::constant:
        case Kind::variable: ++depth; break;
        case Kind::add: case Kind::sub: case Kind::mul: case Kind::div:
        case Kind::pow: case Kind::min: case Kind::max: --depth; break;
        default: break;
      }
      worst = std::max(worst, depth);
    }
    if (worst > kMaxStack) {
      throw ExprError("expression too deeply nested", 0);
    }
  }

  struct Parser {
    std::string_view src;
    const std::vector<std::string>& vars;
    std::vector<Op>& out;
    std::size_t pos = 0;

    void parse() {
      skip();
      if (pos >= src.size()) {
        throw ExprError("empty expression", pos);
      }
      expr();
      skip();
      if (pos != src.size()) {
        throw ExprError(std::string("unexpected '") + src[pos] + "'", pos);
      }
    }

    void skip() {
      while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) {
        ++pos;
      }
    }

    bool accept(char c) {
      skip();
      if (pos < src.size() && src[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    void expect(char c) {
      if (!accept(c)) {
        throw ExprError(std::string("expected '") + c + "'", pos);
      }
    }

    void expr() {
      term();
      for (;;) {
        if (accept('+')) {
          term();
          out.push_back({Kind::add});
        } else if (accept('-')) {
          term();
          out.push_back({Kind::sub});
        } else {
          return;
        }
      }
    }

    void term() {
      unary();
      for (;;) {
        if (accept('*')) {
          unary();
          out.push_back({Kind::mul});
        } else if (accept('/')) {
          unary();
          out.push_back({Kind::div});
        } else {
          return;
        }
      }
    }

    void unary() {
      if (accept('-')) {
        unary();
        out.push_back({Kind::neg});
      } else if (accept('+')) {
        unary();
      } else {
        power();
      }
    }

    void power() {
      primary();
      if (accept('^')) {
        unary();
        out.push_back({Kind::pow});
      }
    }

    void primary() {
      skip();
      if (pos >= src.size()) {
        throw ExprError("unexpected end of expression", pos);
      }
      const char ch = src[pos];
      if (ch == '(') {
        ++pos;
        expr();
        expect(')');
        return;
      }
      if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
        number();
        return;
      }
      if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
        const std::size_t start = pos;
        while (pos < src.size() && (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_')) {
          ++pos;
        }
        const std::string name(src.substr(start, pos - start));
        if (accept('(')) {
          call(name, start);
          return;
        }
        for (std::size_t i = 0; i < vars.size(); ++i) {
          if (vars[i] == name) {
            out.push_back({Kind::variable, 0.0, i});
            return;
          }
        }
        if (name == "pi") {
          out.push_back({Kind::constant, std::numbers::pi});
          return;
        }
        if (name == "e") {
          out.push_back({Kind::constant, std::numbers::e});
          return;
        }
        throw ExprError("unknown identifier '" + name + "'", start);
      }
      throw ExprError(std::string("unexpected '") + ch + "'", pos);
    }

    void number() {
      const std::size_t start = pos;
      while (pos < src.size() && (std::isdigit(static_cast<unsigned char>(src[pos])) || src[pos] == '.')) {
        ++pos;
      }
      if (pos < src.size() && (src[pos] == 'e' || src[pos] == 'E')) {
        std::size_t look = pos + 1;
        if (look < src.size() && (src[look] == '+' || src[look] == '-')) {
          ++look;
        }
        if (look < src.size() && std::isdigit(static_cast<unsigned char>(src[look]))) {
          pos = look;
          while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) {
            ++pos;
          }
        }
      }
      const std::string tok(src.substr(start, pos - start));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        throw ExprError("malformed number '" + tok + "'", start);
      }
      if (used != tok.size()) {
        throw ExprError("malformed number '" + tok + "'", start);
      }
      out.push_back({Kind::constant, v});
    }

    void call(const std::string& name, std::size_t at) {
      std::size_t argc = 0;
      if (!accept(')')) {
        do {
          expr();
          ++argc;
        } while (accept(','));
        expect(')');
      }
      struct Fn {
        const char* name;
        Kind kind;
        std::size_t arity;
      };
      static constexpr std::array<Fn, 10> table{{{"exp", Kind::exp, 1},
                                                 {"log", Kind::log, 1},
                                                 {"sqrt", Kind::sqrt, 1},
                                                 {"abs", Kind::abs, 1},
                                                 {"sin", Kind::sin, 1},
                                                 {"cos", Kind::cos, 1},
                                                 {"tan", Kind::tan, 1},
                                                 {"pow", Kind::pow, 2},
                                                 {"min", Kind::min, 2},
                                                 {"max", Kind::max, 2}}};
      for (const Fn& fn : table) {
        if (name == fn.name) {
          if (argc != fn.arity) {
            throw ExprError(name + " expects " + std::to_string(fn.arity) + " argument(s)", at);
          }
          out.push_back({fn.kind});
          return;
        }
      }
      throw ExprError("unknown function '" + name + "'", at);
    }
  };

  std::string text_;
  std::vector<std::string> vars_;
  std::vector<Op> code_;
};

}  // namespace lpm
