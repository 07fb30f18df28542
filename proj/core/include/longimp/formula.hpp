#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longimp/dataset.hpp"

namespace longimp {

struct FixedTerm {
  std::string name;
  bool factor = false;

  bool operator==(const FixedTerm&) const = default;
};

/// `resp ~ a + factor(b) + (1 | outer/inner)`. Random groups are listed
/// outermost first; the last one is the innermost nesting level.
struct ModelFormula {
  std::string response;
  std::vector<FixedTerm> fixed;
  std::vector<std::string> groups;

  /// Throws UnknownColumn for any referenced column absent from `d`, and
  /// InvalidSpec when a grouping column has missing cells.
  void bind(const Dataset& d) const;
  /// Every referenced column, response first.
  std::vector<std::string> variables() const;
  std::string to_string() const;
};

/// Throws ParseFailure carrying the byte offset of the offending token.
ModelFormula parse_formula(const std::string& text);

/// Fixed-effect design with a leading intercept. factor(x) expands to
/// indicators for every level but the first, named `factor(x)<label>`.
/// Non-factor binary and categorical columns enter as their level index.
struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> names;
};

/// Rows with a missing cell in any model variable raise InvalidSpec.
Design build_design(const ModelFormula& f, const Dataset& d);

}  // namespace longimp
