// Closed-form scalar expressions in (t, x, p) with forward-mode gradients.
#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hjminmax {

enum class Var : std::uint8_t { t = 0, x = 1, p = 2 };

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string what, std::size_t pos)
      : std::runtime_error(what + " at position " + std::to_string(pos)), pos_(pos) {}
  std::size_t position() const noexcept { return pos_; }

 private:
  std::size_t pos_;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Value plus partials in (t, x, p).
struct Dual3 {
  double v = 0.0;
  std::array<double, 3> d{0.0, 0.0, 0.0};

  static Dual3 constant(double c) { return {c, {0.0, 0.0, 0.0}}; }
  static Dual3 variable(double c, Var which) {
    Dual3 r{c, {0.0, 0.0, 0.0}};
    r.d[static_cast<int>(which)] = 1.0;
    return r;
  }
};

inline Dual3 operator+(const Dual3& a, const Dual3& b) {
  return {a.v + b.v, {a.d[0] + b.d[0], a.d[1] + b.d[1], a.d[2] + b.d[2]}};
}
inline Dual3 operator-(const Dual3& a, const Dual3& b) {
  return {a.v - b.v, {a.d[0] - b.d[0], a.d[1] - b.d[1], a.d[2] - b.d[2]}};
}
inline Dual3 operator-(const Dual3& a) { return {-a.v, {-a.d[0], -a.d[1], -a.d[2]}}; }
inline Dual3 operator*(const Dual3& a, const Dual3& b) {
  return {a.v * b.v,
          {a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1], a.d[2] * b.v + a.v * b.d[2]}};
}
inline Dual3 operator/(const Dual3& a, const Dual3& b) {
  const double q = a.v / b.v;
  const double inv = 1.0 / b.v;
  return {q,
          {(a.d[0] - q * b.d[0]) * inv, (a.d[1] - q * b.d[1]) * inv, (a.d[2] - q * b.d[2]) * inv}};
}
inline Dual3 chain(const Dual3& a, double value, double slope) {
  return {value, {slope * a.d[0], slope * a.d[1], slope * a.d[2]}};
}

// Result of eval_with_grad.
struct ValueGrad {
  double value = 0.0;
  double dt = 0.0;
  double dx = 0.0;
  double dp = 0.0;
};

// Parsed expression stored as a postfix program.
//
// Grammar, loosest binding first:
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' exponent)?        right associative
//   primary := number | t | x | p | func '(' sum ')' | '(' sum ')'
// Exponents must fold to an integer constant; func is sin, cos, exp or tanh.
class Expression {
 public:
  enum class Op : std::uint8_t { konst, var, add, sub, mul, div, neg, pow, sin, cos, exp, tanh };

  struct Instr {
    Op op;
    Var var = Var::t;
    int n = 0;
    double c = 0.0;
  };

  Expression() = default;

  static Expression parse(std::string_view src) {
    Parser ps{src, 0, {}};
    ps.program.reserve(src.size());
    ps.skip_ws();
    if (ps.pos >= src.size()) throw ParseError("empty expression", 0);
    ps.sum();
    ps.skip_ws();
    if (ps.pos != src.size()) throw ParseError("unexpected character '" + std::string(1, src[ps.pos]) + "'", ps.pos);
    Expression e;
    e.code_ = std::move(ps.program);
    e.source_ = std::string(src);
    return e;
  }

  const std::string& source() const noexcept { return source_; }
  const std::vector<Instr>& program() const noexcept { return code_; }

  bool mentions(Var v) const {
    for (const auto& in : code_)
      if (in.op == Op::var && in.var == v) return true;
    return false;
  }

  // Value only. Throws EvalError on division by zero or a non-finite result.
  double eval(double t, double x, double p) const {
    double small[32];
    std::vector<double> big;
    double* st = small;
    if (code_.size() > 32) {
      big.resize(code_.size());
      st = big.data();
    }
    int sp = 0;
    for (const auto& in : code_) {
      switch (in.op) {
        case Op::konst: st[sp++] = in.c; break;
        case Op::var: st[sp++] = in.var == Var::t ? t : (in.var == Var::x ? x : p); break;
        case Op::add: --sp; st[sp - 1] += st[sp]; break;
        case Op::sub: --sp; st[sp - 1] -= st[sp]; break;
        case Op::mul: --sp; st[sp - 1] *= st[sp]; break;
        case Op::div:
          --sp;
          if (st[sp] == 0.0) throw EvalError("division by zero in '" + source_ + "'");
          st[sp - 1] /= st[sp];
          break;
        case Op::neg: st[sp - 1] = -st[sp - 1]; break;
        case Op::pow: st[sp - 1] = powi(st[sp - 1], in.n); break;
        case Op::sin: st[sp - 1] = std::sin(st[sp - 1]); break;
        case Op::cos: st[sp - 1] = std::cos(st[sp - 1]); break;
        case Op::exp: st[sp - 1] = std::exp(st[sp - 1]); break;
        case Op::tanh: st[sp - 1] = std::tanh(st[sp - 1]); break;
      }
    }
    if (!std::isfinite(st[0])) throw EvalError("non-finite value in '" + source_ + "'");
    return st[0];
  }

  Dual3 eval_dual(double t, double x, double p) const {
    std::vector<Dual3> st;
    st.reserve(code_.size());
    for (const auto& in : code_) {
      switch (in.op) {
        case Op::konst: st.push_back(Dual3::constant(in.c)); break;
        case Op::var:
          st.push_back(Dual3::variable(in.var == Var::t ? t : (in.var == Var::x ? x : p), in.var));
          break;
        case Op::add: binary(st, [](const Dual3& a, const Dual3& b) { return a + b; }); break;
        case Op::sub: binary(st, [](const Dual3& a, const Dual3& b) { return a - b; }); break;
        case Op::mul: binary(st, [](const Dual3& a, const Dual3& b) { return a * b; }); break;
        case Op::div:
          if (st.back().v == 0.0) throw EvalError("division by zero in '" + source_ + "'");
          binary(st, [](const Dual3& a, const Dual3& b) { return a / b; });
          break;
        case Op::neg: st.back() = -st.back(); break;
        case Op::pow: {
          const Dual3 a = st.back();
          const double r = powi(a.v, in.n);
          const double slope = in.n == 0 ? 0.0 : in.n * powi(a.v, in.n - 1);
          st.back() = chain(a, r, slope);
          break;
        }
        case Op::sin: st.back() = chain(st.back(), std::sin(st.back().v), std::cos(st.back().v)); break;
        case Op::cos: st.back() = chain(st.back(), std::cos(st.back().v), -std::sin(st.back().v)); break;
        case Op::exp: {
          const double e = std::exp(st.back().v);
          st.back() = chain(st.back(), e, e);
          break;
        }
        case Op::tanh: {
          const double th = std::tanh(st.back().v);
          st.back() = chain(st.back(), th, 1.0 - th * th);
          break;
        }
      }
    }
    const Dual3 r = st.back();
    if (!std::isfinite(r.v) || !std::isfinite(r.d[0]) || !std::isfinite(r.d[1]) || !std::isfinite(r.d[2]))
      throw EvalError("non-finite value in '" + source_ + "'");
    return r;
  }

  ValueGrad eval_with_grad(double t, double x, double p) const {
    const Dual3 r = eval_dual(t, x, p);
    return {r.v, r.d[0], r.d[1], r.d[2]};
  }

  // Fully parenthesized form; parsing it back gives an identical program.
  std::string print() const {
    std::vector<std::string> st;
    for (const auto& in : code_) {
      switch (in.op) {
        case Op::konst: st.push_back(format_number(in.c)); break;
        case Op::var: st.push_back(in.var == Var::t ? "t" : (in.var == Var::x ? "x" : "p")); break;
        case Op::add: join(st, "+"); break;
        case Op::sub: join(st, "-"); break;
        case Op::mul: join(st, "*"); break;
        case Op::div: join(st, "/"); break;
        case Op::neg: st.back() = "(-" + st.back() + ")"; break;
        case Op::pow: st.back() = "(" + st.back() + "^" + std::to_string(in.n) + ")"; break;
        case Op::sin: st.back() = "sin(" + st.back() + ")"; break;
        case Op::cos: st.back() = "cos(" + st.back() + ")"; break;
        case Op::exp: st.back() = "exp(" + st.back() + ")"; break;
        case Op::tanh: st.back() = "tanh(" + st.back() + ")"; break;
      }
    }
    return st.empty() ? std::string() : st.back();
  }

  static double powi(double base, int n) {
    if (n < 0) {
      const double d = powi(base, -n);
      if (d == 0.0) throw EvalError("division by zero in negative power");
      return 1.0 / d;
    }
    double r = 1.0;
    double b = base;
    unsigned k = static_cast<unsigned>(n);
    while (k) {
      if (k & 1u) r *= b;
      b *= b;
      k >>= 1u;
    }
    return r;
  }

 private:
  std::vector<Instr> code_;
  std::string source_;

  template <class F>
  static void binary(std::vector<Dual3>& st, F f) {
    const Dual3 b = st.back();
    st.pop_back();
    st.back() = f(st.back(), b);
  }

  static void join(std::vector<std::string>& st, const char* op) {
    std::string b = std::move(st.back());
    st.pop_back();
    st.back() = "(" + st.back() + op + b + ")";
  }

  static std::string format_number(double c) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", c);
    return buf;
  }

  struct Parser {
    std::string_view s;
    std::size_t pos;
    std::vector<Instr> program;

    void skip_ws() {
      while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' || s[pos] == '\r')) ++pos;
    }
    bool accept(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    void emit(Op op) { program.push_back({op}); }

    void sum() {
      product();
      for (;;) {
        if (accept('+')) {
          product();
          emit(Op::add);
        } else if (accept('-')) {
          product();
          emit(Op::sub);
        } else {
          return;
        }
      }
    }

    void product() {
      unary();
      for (;;) {
        if (accept('*')) {
          unary();
          emit(Op::mul);
        } else if (accept('/')) {
          unary();
          emit(Op::div);
        } else {
          return;
        }
      }
    }

    void unary() {
      if (accept('-')) {
        unary();
        emit(Op::neg);
        return;
      }
      power();
    }

    void power() {
      primary();
      skip_ws();
      if (accept('^')) {
        const std::size_t at = pos;
        const int n = exponent(at);
        program.push_back({Op::pow, Var::t, n, 0.0});
      }
    }

    // Parses the right operand of '^' in a scratch program and folds it.
    int exponent(std::size_t at) {
      std::vector<Instr> saved = std::move(program);
      program.clear();
      bool negate = false;
      while (accept('-')) negate = !negate;
      power();
      std::vector<Instr> sub = std::move(program);
      program = std::move(saved);
      double val = 0.0;
      if (!fold(sub, val)) throw ParseError("non-integer exponent (must fold to an integer constant)", at);
      if (negate) val = -val;
      if (val != std::nearbyint(val) || std::fabs(val) > 1024.0) throw ParseError("non-integer exponent", at);
      return static_cast<int>(val);
    }

    static bool fold(const std::vector<Instr>& code, double& out) {
      for (const auto& in : code)
        if (in.op == Op::var) return false;
      Expression e;
      e.code_ = code;
      try {
        out = e.eval(0.0, 0.0, 0.0);
      } catch (const EvalError&) {
        return false;
      }
      return true;
    }

    void primary() {
      skip_ws();
      if (pos >= s.size()) throw ParseError("unexpected end of input", pos);
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        sum();
        if (!accept(')')) throw ParseError("expected ')'", pos);
        return;
      }
      if ((c >= '0' && c <= '9') || c == '.') {
        number();
        return;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        const std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        const std::string_view id = s.substr(start, pos - start);
        if (id == "t" || id == "x" || id == "p") {
          program.push_back({Op::var, id == "t" ? Var::t : (id == "x" ? Var::x : Var::p)});
          return;
        }
        Op f;
        if (id == "sin") f = Op::sin;
        else if (id == "cos") f = Op::cos;
        else if (id == "exp") f = Op::exp;
        else if (id == "tanh") f = Op::tanh;
        else throw ParseError("unknown identifier '" + std::string(id) + "'", start);
        if (!accept('(')) throw ParseError("expected '(' after " + std::string(id), pos);
        sum();
        if (!accept(')')) throw ParseError("expected ')'", pos);
        emit(f);
        return;
      }
      throw ParseError("unexpected character '" + std::string(1, c) + "'", pos);
    }

    void number() {
      const std::size_t start = pos;
      while (pos < s.size() && ((s[pos] >= '0' && s[pos] <= '9') || s[pos] == '.')) ++pos;
      if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
        std::size_t q = pos + 1;
        if (q < s.size() && (s[q] == '+' || s[q] == '-')) ++q;
        if (q < s.size() && s[q] >= '0' && s[q] <= '9') {
          pos = q;
          while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        }
      }
      double val = 0.0;
      const auto res = std::from_chars(s.data() + start, s.data() + pos, val);
      if (res.ec != std::errc() || res.ptr != s.data() + pos) throw ParseError("malformed number", start);
      program.push_back({Op::konst, Var::t, 0, val});
    }
  };
};

}  // namespace hjminmax
