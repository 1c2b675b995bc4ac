#include "sdrep/polynomial.hpp"

#include <algorithm>
#include <stdexcept>

namespace sdrep::poly {

Polynomial Polynomial::constant(int nvars, const Rational& c) {
  Polynomial p(nvars);
  p.add_term(Exponent(nvars, 0), c);
  return p;
}

Polynomial Polynomial::variable(int nvars, int i) {
  if (i < 0 || i >= nvars) throw std::out_of_range("variable index");
  Exponent e(nvars, 0);
  e[i] = 1;
  return monomial(nvars, e, Rational(1));
}

Polynomial Polynomial::monomial(int nvars, const Exponent& e, const Rational& c) {
  if (static_cast<int>(e.size()) != nvars) throw std::invalid_argument("exponent arity");
  Polynomial p(nvars);
  p.add_term(e, c);
  return p;
}

Rational Polynomial::coeff(const Exponent& e) const {
  auto it = terms_.find(e);
  return it == terms_.end() ? Rational(0) : it->second;
}

void Polynomial::add_term(const Exponent& e, const Rational& c) {
  if (static_cast<int>(e.size()) != nvars_) throw std::invalid_argument("exponent arity");
  if (c == 0) return;
  auto [it, inserted] = terms_.emplace(e, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0) terms_.erase(it);
  }
}

int Polynomial::degree() const {
  if (terms_.empty()) return -1;
  return exp_deg(terms_.rbegin()->first);  // graded order: last term has max degree
}

int Polynomial::degree_in(int first, int count) const {
  int d = 0;
  for (const auto& [e, c] : terms_) {
    int s = 0;
    for (int i = first; i < first + count; ++i) s += e[i];
    d = std::max(d, s);
  }
  return d;
}

int Polynomial::degree_in_var(int v) const {
  int d = 0;
  for (const auto& [e, c] : terms_) d = std::max(d, e[v]);
  return d;
}

Polynomial Polynomial::operator-() const {
  Polynomial r(nvars_);
  for (const auto& [e, c] : terms_) r.terms_.emplace(e, -c);
  return r;
}

Polynomial& Polynomial::operator+=(const Polynomial& o) {
  if (nvars_ != o.nvars_) throw std::invalid_argument("ring mismatch");
  for (const auto& [e, c] : o.terms_) add_term(e, c);
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& o) {
  if (nvars_ != o.nvars_) throw std::invalid_argument("ring mismatch");
  for (const auto& [e, c] : o.terms_) add_term(e, -c);
  return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  if (a.nvars_ != b.nvars_) throw std::invalid_argument("ring mismatch");
  Polynomial r(a.nvars_);
  for (const auto& [ea, ca] : a.terms_)
    for (const auto& [eb, cb] : b.terms_) r.add_term(exp_add(ea, eb), ca * cb);
  return r;
}

Polynomial& Polynomial::operator*=(const Rational& c) {
  if (c == 0) {
    terms_.clear();
    return *this;
  }
  for (auto& [e, v] : terms_) v *= c;
  return *this;
}

Polynomial Polynomial::pow(int e) const {
  if (e < 0) throw std::invalid_argument("negative power");
  Polynomial r = Polynomial::constant(nvars_, Rational(1));
  Polynomial base = *this;
  while (e) {
    if (e & 1) r = r * base;
    if (e >>= 1) base = base * base;
  }
  return r;
}

Rational Polynomial::eval(std::span<const Rational> x) const {
  if (static_cast<int>(x.size()) != nvars_) throw std::invalid_argument("point arity");
  Rational acc(0);
  for (const auto& [e, c] : terms_) {
    Rational t = c;
    for (int i = 0; i < nvars_; ++i)
      if (e[i]) t *= rat_pow(x[i], e[i]);
    acc += t;
  }
  return acc;
}

double Polynomial::eval_d(std::span<const double> x) const {
  double acc = 0;
  for (const auto& [e, c] : terms_) {
    double t = rat_to_double(c);
    for (int i = 0; i < nvars_; ++i)
      for (int k = 0; k < e[i]; ++k) t *= x[i];
    acc += t;
  }
  return acc;
}

Polynomial Polynomial::derivative(int var) const {
  Polynomial r(nvars_);
  for (const auto& [e, c] : terms_) {
    if (e[var] == 0) continue;
    Exponent d = e;
    d[var] -= 1;
    r.add_term(d, c * e[var]);
  }
  return r;
}

Polynomial Polynomial::substitute(const std::vector<Polynomial>& images) const {
  if (static_cast<int>(images.size()) != nvars_) throw std::invalid_argument("image count");
  int target_n = nvars_ ? images[0].nvars() : 0;
  Polynomial r(target_n);
  // cache powers of each image
  std::vector<std::vector<Polynomial>> powers(nvars_);
  for (int i = 0; i < nvars_; ++i) powers[i].push_back(Polynomial::constant(target_n, Rational(1)));
  for (const auto& [e, c] : terms_) {
    Polynomial t = Polynomial::constant(target_n, c);
    for (int i = 0; i < nvars_; ++i) {
      while (static_cast<int>(powers[i].size()) <= e[i])
        powers[i].push_back(powers[i].back() * images[i]);
      if (e[i]) t = t * powers[i][e[i]];
    }
    r += t;
  }
  return r;
}

Polynomial Polynomial::embed(int new_nvars, const std::vector<int>& var_map) const {
  if (static_cast<int>(var_map.size()) != nvars_) throw std::invalid_argument("var map arity");
  Polynomial r(new_nvars);
  for (const auto& [e, c] : terms_) {
    Exponent ne(new_nvars, 0);
    for (int i = 0; i < nvars_; ++i) {
      if (e[i] == 0) continue;
      if (var_map[i] < 0 || var_map[i] >= new_nvars) throw std::out_of_range("var map");
      ne[var_map[i]] += e[i];
    }
    r.add_term(ne, c);
  }
  return r;
}

std::map<int, Polynomial> Polynomial::homogeneous_parts() const {
  std::map<int, Polynomial> parts;
  for (const auto& [e, c] : terms_) {
    int d = exp_deg(e);
    auto it = parts.find(d);
    if (it == parts.end()) it = parts.emplace(d, Polynomial(nvars_)).first;
    it->second.add_term(e, c);
  }
  return parts;
}

Exponent Polynomial::lex_leading_exponent() const {
  if (terms_.empty()) throw std::domain_error("lex leading exponent of zero polynomial");
  auto it = terms_.begin();
  Exponent best = it->first;
  for (++it; it != terms_.end(); ++it)
    if (lex_greater(it->first, best)) best = it->first;
  return best;
}

Rational Polynomial::lex_leading_coeff() const { return coeff(lex_leading_exponent()); }

namespace {
void enumerate(int nvars, int pos, int remaining, Exponent& cur, std::vector<Exponent>& out) {
  if (pos == nvars) {
    out.push_back(cur);
    return;
  }
  for (int k = 0; k <= remaining; ++k) {
    cur[pos] = k;
    enumerate(nvars, pos + 1, remaining - k, cur, out);
  }
  cur[pos] = 0;
}
}  // namespace

std::vector<Exponent> monomial_exponents(int nvars, int total_cap) {
  std::vector<Exponent> out;
  Exponent cur(nvars, 0);
  enumerate(nvars, 0, total_cap, cur, out);
  std::sort(out.begin(), out.end(), GradedLexLess());
  return out;
}

std::vector<Exponent> monomial_exponents_split(int nvars, int nx, int cap_x, int cap_u,
                                               int total_cap) {
  std::vector<Exponent> out;
  for (auto& e : monomial_exponents(nvars, total_cap)) {
    int dx = 0, du = 0;
    for (int i = 0; i < nx; ++i) dx += e[i];
    for (int i = nx; i < nvars; ++i) du += e[i];
    if (dx <= cap_x && du <= cap_u) out.push_back(e);
  }
  return out;
}

std::vector<Polynomial> gradient(const Polynomial& f) {
  std::vector<Polynomial> g;
  g.reserve(f.nvars());
  for (int i = 0; i < f.nvars(); ++i) g.push_back(f.derivative(i));
  return g;
}

std::vector<std::vector<Polynomial>> hessian(const Polynomial& f) {
  int n = f.nvars();
  std::vector<std::vector<Polynomial>> h(n, std::vector<Polynomial>(n, Polynomial(n)));
  for (int i = 0; i < n; ++i) {
    Polynomial fi = f.derivative(i);
    for (int j = i; j < n; ++j) {
      h[i][j] = fi.derivative(j);
      if (j != i) h[j][i] = h[i][j];
    }
  }
  return h;
}

Polynomial lagrange_remainder(const Polynomial& f) {
  int n = f.nvars();
  std::vector<int> to_x(n), to_u(n);
  for (int i = 0; i < n; ++i) {
    to_x[i] = i;
    to_u[i] = n + i;
  }
  Polynomial fx = f.embed(2 * n, to_x);
  Polynomial fu = f.embed(2 * n, to_u);
  Polynomial r = fx - fu;
  for (int i = 0; i < n; ++i) {
    Polynomial gi = f.derivative(i).embed(2 * n, to_u);
    Polynomial diff = Polynomial::variable(2 * n, i) - Polynomial::variable(2 * n, n + i);
    r -= gi * diff;
  }
  return r;
}

std::optional<Polynomial> exact_divide(const Polynomial& a, const Polynomial& b) {
  if (b.is_zero()) return std::nullopt;
  if (a.nvars() != b.nvars()) throw std::invalid_argument("ring mismatch");
  Polynomial rem = a, quot(a.nvars());
  Exponent lb = b.lex_leading_exponent();
  Rational cb = b.lex_leading_coeff();
  while (!rem.is_zero()) {
    Exponent la = rem.lex_leading_exponent();
    if (!exp_divides(lb, la)) return std::nullopt;
    Rational q = rem.coeff(la) / cb;
    Polynomial t = Polynomial::monomial(a.nvars(), exp_sub(la, lb), q);
    quot += t;
    rem -= t * b;
  }
  return quot;
}

Polynomial affine_substitute(const Polynomial& f, const std::vector<std::vector<Rational>>& A,
                             const std::vector<Rational>& b) {
  int n = f.nvars();
  if (static_cast<int>(A.size()) != n || static_cast<int>(b.size()) != n)
    throw std::invalid_argument("affine map arity");
  std::vector<Polynomial> images;
  images.reserve(n);
  for (int i = 0; i < n; ++i) {
    Polynomial im = Polynomial::constant(n, b[i]);
    for (int j = 0; j < n; ++j)
      if (A[i][j] != 0) im += Polynomial::variable(n, j) * A[i][j];
    images.push_back(im);
  }
  return f.substitute(images);
}

Polynomial translate(const Polynomial& f, const std::vector<Rational>& t) {
  int n = f.nvars();
  std::vector<std::vector<Rational>> A(n, std::vector<Rational>(n, Rational(0)));
  for (int i = 0; i < n; ++i) A[i][i] = 1;
  return affine_substitute(f, A, t);
}

}  // namespace sdrep::poly
