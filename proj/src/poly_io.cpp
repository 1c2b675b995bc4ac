#include "sdrep/poly_io.hpp"

#include <cctype>
#include <sstream>
#include <stdexcept>

namespace sdrep::poly {

namespace {

struct Cursor {
  const std::string& s;
  size_t i = 0;

  void skip_ws() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool done() {
    skip_ws();
    return i >= s.size();
  }
  char peek() {
    skip_ws();
    return i < s.size() ? s[i] : '\0';
  }
  bool eat(char c) {
    skip_ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("polynomial parse error at position " + std::to_string(i) + ": " +
                                what);
  }

  long parse_uint() {
    skip_ws();
    if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) fail("expected integer");
    long v = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
      v = v * 10 + (s[i] - '0');
      if (v > 1000000000L) fail("integer literal too large");
      ++i;
    }
    return v;
  }

  // digits [ '/' digits | '.' digits ]
  Rational parse_number() {
    skip_ws();
    size_t start = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == start) fail("expected number");
    if (i < s.size() && s[i] == '.') {
      ++i;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      return rat_from_string(s.substr(start, i - start));
    }
    Rational num(s.substr(start, i - start));
    size_t save = i;
    skip_ws();
    if (i < s.size() && s[i] == '/') {
      ++i;
      skip_ws();
      size_t ds = i;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      if (i == ds) {
        // '/' belonged to something else (e.g. rational-function slash)
        i = save;
        return num;
      }
      Rational den(s.substr(ds, i - ds));
      if (den == 0) fail("zero denominator");
      num /= den;
    } else {
      i = save;
    }
    num.canonicalize();
    return num;
  }

  // x<k> [^ e]; returns (index, exponent)
  std::pair<int, int> parse_factor() {
    skip_ws();
    if (peek() != 'x') fail("expected variable");
    ++i;
    long idx = parse_uint();
    if (idx < 1) fail("variable indices start at x1");
    int e = 1;
    if (eat('^')) e = static_cast<int>(parse_uint());
    return {static_cast<int>(idx) - 1, e};
  }
};

Polynomial parse_poly_impl(Cursor& cur, int nvars_hint) {
  struct RawTerm {
    Rational c;
    std::vector<std::pair<int, int>> factors;
  };
  std::vector<RawTerm> terms;
  int max_var = -1;

  bool first = true;
  while (!cur.done()) {
    int sign = 1;
    if (cur.eat('+')) {
    } else if (cur.eat('-')) {
      sign = -1;
    } else if (!first) {
      break;  // delimiter for caller (e.g. '/')
    }
    first = false;
    // allow chains like "- -x1"
    while (true) {
      if (cur.eat('-'))
        sign = -sign;
      else if (cur.eat('+')) {
      } else
        break;
    }

    RawTerm t;
    t.c = sign;
    bool saw_anything = false;
    char c = cur.peek();
    if (std::isdigit(static_cast<unsigned char>(c))) {
      t.c *= cur.parse_number();
      saw_anything = true;
      cur.eat('*');
    }
    while (cur.peek() == 'x') {
      auto [idx, e] = cur.parse_factor();
      t.factors.emplace_back(idx, e);
      max_var = std::max(max_var, idx);
      saw_anything = true;
      cur.eat('*');
    }
    if (!saw_anything) cur.fail("expected term");
    terms.push_back(std::move(t));
  }
  if (terms.empty()) cur.fail("empty polynomial");

  int n = nvars_hint >= 0 ? nvars_hint : max_var + 1;
  if (n < max_var + 1) throw std::invalid_argument("polynomial uses more variables than declared");
  if (n == 0) n = 1;  // constants live in a 1-variable ring by default

  Polynomial out(n);
  for (const auto& t : terms) {
    Exponent e(n, 0);
    for (auto [idx, k] : t.factors) e[idx] += k;
    out.add_term(e, t.c);
  }
  return out;
}

void append_term_text(std::ostream& os, const Exponent& e, const Rational& c, bool leading) {
  Rational a = c;
  if (rat_sign(a) < 0) {
    os << (leading ? "-" : " - ");
    a = -a;
  } else if (!leading) {
    os << " + ";
  }
  bool has_mono = exp_deg(e) > 0;
  bool wrote_coeff = false;
  if (!has_mono || a != 1) {
    os << rat_to_string(a);
    wrote_coeff = true;
  }
  for (size_t j = 0; j < e.size(); ++j) {
    if (e[j] == 0) continue;
    if (wrote_coeff) os << "*";
    wrote_coeff = true;
    os << "x" << (j + 1);
    if (e[j] != 1) os << "^" << e[j];
  }
}

}  // namespace

Polynomial parse_polynomial(const std::string& text, int nvars) {
  Cursor cur{text};
  Polynomial p = parse_poly_impl(cur, nvars);
  if (!cur.done()) cur.fail("trailing input");
  return p;
}

RationalFunction parse_rational_function(const std::string& text, int nvars) {
  // Try plain polynomial first; otherwise split at the top-level '/' between
  // a parenthesized or simple numerator and denominator: "(num) / (den)".
  // Accepted shapes: "poly", "(poly)/(poly)", "poly / (poly)", "(poly)/poly".
  auto strip = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::string t = strip(text);

  // Split on a '/' at paren depth 0 that is not inside a coefficient p/q:
  // a coefficient slash is always preceded and followed (modulo spaces) by digits.
  int depth = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    char ch = t[i];
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch != '/' || depth != 0) continue;
    size_t l = i;
    while (l > 0 && std::isspace(static_cast<unsigned char>(t[l - 1]))) --l;
    size_t r = i + 1;
    while (r < t.size() && std::isspace(static_cast<unsigned char>(t[r]))) ++r;
    bool digit_l = l > 0 && std::isdigit(static_cast<unsigned char>(t[l - 1]));
    bool digit_r = r < t.size() && std::isdigit(static_cast<unsigned char>(t[r]));
    if (digit_l && digit_r) continue;  // p/q coefficient
    std::string ns = strip(t.substr(0, i)), ds = strip(t.substr(i + 1));
    auto unparen = [&strip](std::string s) {
      if (s.size() >= 2 && s.front() == '(' && s.back() == ')') {
        int d = 0;
        for (size_t k = 0; k + 1 < s.size(); ++k) {
          if (s[k] == '(') ++d;
          if (s[k] == ')') --d;
          if (d == 0) return s;  // outer parens do not match each other
        }
        return strip(s.substr(1, s.size() - 2));
      }
      return s;
    };
    ns = unparen(ns);
    ds = unparen(ds);
    Polynomial num = parse_polynomial(ns, nvars);
    Polynomial den = parse_polynomial(ds, std::max(nvars, num.nvars()));
    if (num.nvars() < den.nvars()) num = num.embed(den.nvars(), {});
    return RationalFunction{num, den};
  }
  return RationalFunction::from_poly(parse_polynomial(t, nvars));
}

std::string to_text(const Polynomial& f) {
  if (f.is_zero()) return "0";
  std::ostringstream os;
  bool leading = true;
  // degree descending; within a degree keep the natural x1-major order
  std::map<int, std::vector<const std::pair<const Exponent, Rational>*>> by_deg;
  for (const auto& t : f.terms()) by_deg[exp_deg(t.first)].push_back(&t);
  for (auto it = by_deg.rbegin(); it != by_deg.rend(); ++it)
    for (const auto* t : it->second) {
      append_term_text(os, t->first, t->second, leading);
      leading = false;
    }
  return os.str();
}

std::string to_text(const RationalFunction& f) {
  if (f.is_polynomial()) return to_text(f.num);
  return "(" + to_text(f.num) + ") / (" + to_text(f.den) + ")";
}

nlohmann::json to_json(const Polynomial& f) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [e, c] : f.terms()) {
    nlohmann::json t;
    t["exp"] = e;
    t["num"] = c.get_num().get_str();
    t["den"] = c.get_den().get_str();
    terms.push_back(std::move(t));
  }
  return {{"nvars", f.nvars()}, {"terms", std::move(terms)}};
}

Polynomial polynomial_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_polynomial(j.get<std::string>());
  Polynomial p(j.at("nvars").get<int>());
  for (const auto& t : j.at("terms")) {
    Exponent e = t.at("exp").get<Exponent>();
    if (static_cast<int>(e.size()) != p.nvars())
      throw std::invalid_argument("polynomial JSON: exponent length != nvars");
    Rational num(t.at("num").is_string() ? t.at("num").get<std::string>()
                                         : std::to_string(t.at("num").get<long>()));
    Rational den(t.at("den").is_string() ? t.at("den").get<std::string>()
                                         : std::to_string(t.at("den").get<long>()));
    if (den == 0) throw std::invalid_argument("polynomial JSON: zero denominator");
    Rational c = num / den;
    c.canonicalize();
    p.add_term(e, c);
  }
  return p;
}

nlohmann::json to_json(const RationalFunction& f) {
  return {{"num", to_json(f.num)}, {"den", to_json(f.den)}};
}

RationalFunction rational_function_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_rational_function(j.get<std::string>());
  if (j.contains("num") && j.contains("den"))
    return RationalFunction{polynomial_from_json(j.at("num")), polynomial_from_json(j.at("den"))};
  return RationalFunction::from_poly(polynomial_from_json(j));
}

}  // namespace sdrep::poly
