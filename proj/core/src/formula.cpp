#include "longimp/formula.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "longimp/error.hpp"

namespace longimp {

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  ModelFormula parse() {
    ModelFormula f;
    f.response = name("response");
    expect('~');
    bool first = true;
    for (;;) {
      skip();
      if (peek() == '(') {
        random(f);
        break;
      }
      if (!first && at_end()) break;
      FixedTerm t = term();
      if (t.factor || t.name != "1") f.fixed.push_back(std::move(t));  // explicit intercept
      first = false;
      skip();
      if (at_end()) break;
      expect('+');
    }
    skip();
    if (!at_end()) fail("unexpected trailing input");
    for (const auto& t : f.fixed) {
      if (t.name == f.response) throw ParseFailure(0, "response '" + f.response + "' is also a fixed term");
    }
    return f;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseFailure(pos_, what + " at offset " + std::to_string(pos_));
  }

  void expect(char c) {
    skip();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  std::string name(const char* what) {
    skip();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && name_char(s_[pos_])) ++pos_;
    if (start == pos_) fail(std::string("expected ") + what);
    return s_.substr(start, pos_ - start);
  }

  FixedTerm term() {
    std::string n = name("term");
    skip();
    if (n == "factor" && peek() == '(') {
      ++pos_;
      FixedTerm t{name("column"), true};
      expect(')');
      return t;
    }
    return {n, false};
  }

  void random(ModelFormula& f) {
    expect('(');
    skip();
    if (peek() != '1') fail("expected '1'");
    ++pos_;
    expect('|');
    f.groups.push_back(name("grouping factor"));
    skip();
    if (peek() == '/') {
      ++pos_;
      f.groups.push_back(name("grouping factor"));
    }
    expect(')');
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

ModelFormula parse_formula(const std::string& text) { return Parser(text).parse(); }

std::vector<std::string> ModelFormula::variables() const {
  std::vector<std::string> out{response};
  for (const auto& t : fixed) out.push_back(t.name);
  for (const auto& g : groups) out.push_back(g);
  return out;
}

std::string ModelFormula::to_string() const {
  std::string out = response + " ~ ";
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (i) out += " + ";
    out += fixed[i].factor ? "factor(" + fixed[i].name + ")" : fixed[i].name;
  }
  if (!groups.empty()) {
    if (!fixed.empty()) out += " + ";
    out += "(1 | " + groups[0];
    for (std::size_t i = 1; i < groups.size(); ++i) out += "/" + groups[i];
    out += ")";
  }
  return out;
}

void ModelFormula::bind(const Dataset& d) const {
  for (const auto& v : variables()) d.index_of(v);
  for (const auto& g : groups) {
    if (!d.column_complete(d.index_of(g))) {
      throw Error(ErrorKind::InvalidSpec, "grouping column '" + g + "' has missing cells");
    }
  }
}

Design build_design(const ModelFormula& f, const Dataset& d) {
  f.bind(d);
  const std::size_t n = d.n_rows();
  for (const auto& v : f.variables()) {
    if (!d.column_complete(d.index_of(v))) {
      throw Error(ErrorKind::InvalidSpec,
                  "model variable '" + v + "' has missing cells; filter or impute first");
    }
  }
  std::vector<std::vector<double>> cols;
  Design out;
  out.names.push_back("(Intercept)");
  cols.emplace_back(n, 1.0);
  for (const auto& t : f.fixed) {
    const std::size_t c = d.index_of(t.name);
    const auto& spec = d.column(c);
    auto v = d.values(c);
    if (!t.factor) {
      out.names.push_back(t.name);
      cols.emplace_back(v.begin(), v.end());
      continue;
    }
    std::vector<double> levels;
    std::vector<std::string> labels;
    if (spec.is_factor()) {
      for (std::size_t k = 0; k < spec.levels.size(); ++k) {
        levels.push_back(static_cast<double>(k));
        labels.push_back(spec.levels[k]);
      }
    } else {
      std::set<double> distinct(v.begin(), v.end());
      for (double x : distinct) {
        levels.push_back(x);
        labels.push_back(d.format_cell(static_cast<std::size_t>(
                                           std::find(v.begin(), v.end(), x) - v.begin()),
                                       c));
      }
    }
    for (std::size_t k = 1; k < levels.size(); ++k) {
      std::vector<double> ind(n);
      for (std::size_t r = 0; r < n; ++r) ind[r] = v[r] == levels[k] ? 1.0 : 0.0;
      out.names.push_back("factor(" + t.name + ")" + labels[k]);
      cols.push_back(std::move(ind));
    }
  }
  out.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t r = 0; r < n; ++r) out.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = cols[j][r];
  }
  auto y = d.values(d.index_of(f.response));
  out.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
  return out;
}

}  // namespace longimp
