#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace rarma {

enum class LinkType { Log };

// g : (0, inf) -> R, strictly monotonic and twice differentiable. All model
// formulas are written against this table, so further links are additive.
struct LinkOps {
  double (*apply)(double);    // g(x)
  double (*inverse)(double);  // g^{-1}(v)
  double (*deriv)(double);    // g'(x)
};

inline const LinkOps& link_ops(LinkType link) {
  switch (link) {
    case LinkType::Log: {
      static constexpr LinkOps ops{
          [](double x) { return std::log(x); },
          [](double v) { return std::exp(v); },
          [](double x) { return 1.0 / x; },
      };
      return ops;
    }
  }
  throw std::logic_error("link_ops: unknown link");
}

inline double link_apply(LinkType link, double x) {
  if (!(x > 0.0)) throw std::domain_error("link_apply: x must be > 0");
  return link_ops(link).apply(x);
}

inline double link_inverse(LinkType link, double v) { return link_ops(link).inverse(v); }

inline double link_deriv(LinkType link, double x) {
  if (!(x > 0.0)) throw std::domain_error("link_deriv: x must be > 0");
  return link_ops(link).deriv(x);
}

inline const char* link_name(LinkType link) {
  switch (link) {
    case LinkType::Log:
      return "log";
  }
  return "?";
}

inline LinkType link_from_name(const std::string& name) {
  if (name == "log") return LinkType::Log;
  throw std::invalid_argument("unknown link: " + name);
}

}  // namespace rarma
