#pragma once

#include <string>

#include "json.hpp"
#include "sdrep/rational_function.hpp"

namespace sdrep::poly {

// Text form: sum of terms `c * x1^a1 x2^a2 ...`; `c` a rational literal
// (`p`, `p/q`, or decimal), `*` optional, whitespace insignificant, exponent 1
// and factor `c = 1` omissible.  `nvars < 0` infers the ring from the largest
// variable index present.
Polynomial parse_polynomial(const std::string& text, int nvars = -1);

// `num / den` with either side in the text form above; a plain polynomial
// parses as itself over 1.
RationalFunction parse_rational_function(const std::string& text, int nvars = -1);

std::string to_text(const Polynomial& f);
std::string to_text(const RationalFunction& f);

// {"nvars": n, "terms": [{"exp": [a1,...,an], "num": "...", "den": "..."}]}
nlohmann::json to_json(const Polynomial& f);
Polynomial polynomial_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RationalFunction& f);  // {"num": {...}, "den": {...}}
RationalFunction rational_function_from_json(const nlohmann::json& j);

}  // namespace sdrep::poly
