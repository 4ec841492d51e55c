#pragma once

/**
 * @file cli.hpp
 * @brief Config loading, report types and the simulate / compare / verify /
 * curvature commands behind the `bsep` executable.
 *
 * Config files are INI-style: `[section]` headers, `key = value` lines,
 * comment lines starting with ';' or '#'. Values are JSON (numbers, quoted
 * strings, row lists); a bare word such as `pendula` is read as a string.
 * The grammar is documented in README.md.
 */

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bsep/catalog.hpp"
#include "bsep/dynamics.hpp"
#include "bsep/geometry.hpp"
#include "bsep/svg.hpp"
#include "json.hpp"

namespace bsep::cli {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kVerificationFailed = 1, kConfigInvalid = 2, kNumericalFailure = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- raw INI -----------------------------------------------------------------

struct RawValue {
  json value;
  int line = 0;
};

/// section -> key -> value, with the line each key was read from.
struct RawConfig {
  std::string source;
  std::map<std::string, std::map<std::string, RawValue>> sections;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool bare_word(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'; });
}

}  // namespace detail

inline RawConfig parse_ini(const std::string& text, const std::string& source = "<config>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  // Boost keeps no line numbers for keys, so locate them with a second pass.
  std::map<std::string, std::map<std::string, int>> lines;
  {
    std::istringstream scan(text);
    std::string line, section;
    for (int no = 1; std::getline(scan, line); ++no) {
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == ';' || t[0] == '#') continue;
      if (t[0] == '[') {
        section = detail::trim(t.substr(1, t.find(']') - 1));
        continue;
      }
      const auto eq = t.find('=');
      if (eq != std::string::npos) lines[section][detail::trim(t.substr(0, eq))] = no;
    }
  }
  RawConfig raw;
  raw.source = source;
  for (const auto& [section, child] : tree) {
    if (child.empty()) {
      throw ConfigError(source + ":" + std::to_string(lines[""][section]) + ": key '" + section +
                        "' outside any [section]");
    }
    auto& out = raw.sections[section];
    for (const auto& [key, node] : child) {
      const int no = lines[section][key];
      const std::string text_value = node.get_value<std::string>();
      RawValue v;
      v.line = no;
      try {
        v.value = json::parse(text_value);
      } catch (const json::parse_error& e) {
        if (!detail::bare_word(text_value))
          throw ConfigError(source + ":" + std::to_string(no) + ": [" + section + "] " + key +
                            ": value is neither JSON nor a bare word: " + text_value);
        v.value = text_value;
      }
      out[key] = std::move(v);
    }
  }
  return raw;
}

// --- run configuration -----------------------------------------------------------

struct SystemSpec {
  std::string catalog = "custom";
  // oscillators
  std::vector<double> omega{1.0, 1.5, 0.7};
  std::vector<double> alpha{0.8, 1.2, 2.0};
  // E^3 families (case ii uses c1, c2); defaults depend on the family
  std::optional<double> c0, c1, c2, c3;
  std::string f;
  double a = 0.5;
  std::string g = "1";
  // custom
  std::vector<std::size_t> blocks;
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> stackel;
  std::vector<std::vector<std::vector<std::string>>> metrics;
  std::vector<std::string> potentials;
  // any system: separate matrix for the integrals, sampling box override
  std::optional<std::vector<std::vector<std::string>>> candidate_stackel;
  std::optional<Box> box;
};

struct RunSpec {
  double t0 = 0.0;
  double t1 = 0.0;  // resolved from the catalog entry when absent
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t block = 1;  // 1-based
  std::size_t samples = 1000;
  SignChangePolicy policy = SignChangePolicy::FullSpan;
};

struct OutputSpec {
  std::string dir = "bsep-out";
  bool svg = false;
  std::vector<std::pair<std::string, std::string>> plots;  // phase-portrait axes, by name
};

struct VerifySpec {
  std::uint64_t seed = kDefaultSeed;
  std::size_t points = 100;
  double bracket_tol = 1e-8;
  double residual_tol = 1e-7;
  double killing_tol = 1e-10;
  double normality_tol = 1e-8;
  double agreement_tol = 1e-9;
  double compare_tol = 1e-6;
  double curvature_tol = 1e-6;
};

struct RunConfig {
  std::string source;
  SystemSpec system;
  PhasePoint initial;
  RunSpec run;
  OutputSpec output;
  VerifySpec verify;

  // resolved
  CatalogEntry entry;
  std::optional<E3Metric> e3;

  const TwistedSystem& sys() const { return *entry.system; }
};

namespace detail {

class Reader {
 public:
  explicit Reader(RawConfig raw) : raw_(std::move(raw)) {}

  bool has(const std::string& sec, const std::string& key) const {
    auto s = raw_.sections.find(sec);
    return s != raw_.sections.end() && s->second.count(key);
  }

  [[noreturn]] void fail(const std::string& sec, const std::string& key, const std::string& msg) const {
    std::string where = raw_.source;
    if (has(sec, key)) where += ":" + std::to_string(raw_.sections.at(sec).at(key).line);
    throw ConfigError(where + ": [" + sec + "] " + key + ": " + msg);
  }

  const json* find(const std::string& sec, const std::string& key) {
    if (!has(sec, key)) return nullptr;
    used_.insert(sec + "." + key);
    return &raw_.sections.at(sec).at(key).value;
  }

  template <typename T>
  void read(const std::string& sec, const std::string& key, T& out) {
    const json* v = find(sec, key);
    if (!v) return;
    try {
      out = v->get<T>();
    } catch (const json::exception& e) {
      fail(sec, key, std::string("wrong type (") + e.what() + ")");
    }
  }

  /// Expression strings; numbers are accepted and rendered exactly.
  std::string expr_string(const std::string& sec, const std::string& key, const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return bsep::detail::format_number(v.get<double>());
    fail(sec, key, "expected an expression string or a number, got " + v.dump());
  }

  std::vector<std::vector<std::string>> matrix(const std::string& sec, const std::string& key, const json& v) {
    if (!v.is_array()) fail(sec, key, "expected a list of rows");
    std::vector<std::vector<std::string>> out;
    for (const auto& row : v) {
      if (!row.is_array()) fail(sec, key, "expected a list of rows, got row " + row.dump());
      std::vector<std::string> r;
      for (const auto& x : row) r.push_back(expr_string(sec, key, x));
      out.push_back(std::move(r));
    }
    return out;
  }

  std::vector<std::string> keys(const std::string& sec) const {
    std::vector<std::string> out;
    auto s = raw_.sections.find(sec);
    if (s != raw_.sections.end())
      for (const auto& [k, v] : s->second) out.push_back(k);
    return out;
  }

  void check_all_used() const {
    for (const auto& [sec, entries] : raw_.sections) {
      static const std::set<std::string> known{"system", "initial", "run", "output", "verify"};
      if (!known.count(sec)) {
        const int line = entries.empty() ? 0 : entries.begin()->second.line;
        throw ConfigError(raw_.source + ":" + std::to_string(line) + ": unknown section [" + sec + "]");
      }
      for (const auto& [key, v] : entries)
        if (!used_.count(sec + "." + key))
          throw ConfigError(raw_.source + ":" + std::to_string(v.line) + ": [" + sec + "] unknown key '" + key +
                            "'");
    }
  }

  const std::string& source() const { return raw_.source; }

 private:
  RawConfig raw_;
  std::set<std::string> used_;
};

inline PhasePoint default_e3_initial(const Box& box) {
  PhasePoint x;
  for (std::size_t i = 0; i < box.dim(); ++i) x.q.push_back(0.5 * (box.lo[i] + box.hi[i]));
  x.p = {0.3, 0.2, -0.1};
  return x;
}

}  // namespace detail

/// Builds the system described by cfg.system and fills cfg.entry (and
/// cfg.e3 for the E^3 families). Library errors become ConfigError.
inline void resolve(RunConfig& cfg, const std::optional<std::vector<double>>& q0,
                    const std::optional<std::vector<double>>& p0, bool have_t1) {
  const std::string where = cfg.source + ": [system] ";
  auto& s = cfg.system;
  try {
    if (s.catalog == "pendula") {
      cfg.entry = pendula();
    } else if (s.catalog == "oscillators") {
      cfg.entry = oscillators(s.omega, s.alpha);
    } else if (s.catalog == "calogero4") {
      cfg.entry = calogero4();
    } else if (s.catalog == "e3-case-i" || s.catalog == "e3-case-ii") {
      const bool one = s.catalog == "e3-case-i";
      // flat exponential preset for case i, spherical leaves for case ii
      if (s.f.empty()) s.f = one ? "exp(-0.7*v)*cos(0.7*w)" : "(1 + v^2 + w^2)/2";
      if (one) {
        s.c0 = s.c0.value_or(0.0), s.c1 = s.c1.value_or(0.7), s.c2 = s.c2.value_or(1.3), s.c3 = s.c3.value_or(0.0);
      } else {
        if (s.c0 || s.c3) throw ConfigError(where + "c0 and c3 belong to e3-case-i");
        s.c1 = s.c1.value_or(1.0), s.c2 = s.c2.value_or(0.5);
      }
      E3Metric m = one ? e3_case_i(*s.c0, *s.c1, *s.c2, *s.c3, parse(s.f)) : e3_case_ii(*s.c1, *s.c2, parse(s.f));
      CatalogEntry e;
      e.name = m.name;
      e.system = std::make_shared<const TwistedSystem>(one ? e3_case_i_system(m, s.a, s.g)
                                                           : e3_case_ii_system(m, s.a, s.g));
      e.box = m.box;
      e.initial = detail::default_e3_initial(m.box);
      e.t_end = 1.0;
      e.singular_sets = one ? "f = 0" : "u = -c2/c1 (pole of l), f = 0";
      cfg.e3 = std::move(m);
      cfg.entry = std::move(e);
    } else if (s.catalog == "custom") {
      if (s.blocks.empty()) throw ConfigError(where + "custom system needs 'blocks'");
      BlockStructure st(s.blocks, s.names);
      if (s.names.empty()) s.names = st.names();
      if (s.metrics.size() != s.blocks.size())
        throw ConfigError(where + "expected metric_1 .. metric_" + std::to_string(s.blocks.size()));
      s.potentials.resize(s.blocks.size(), "0");
      for (auto& v : s.potentials)
        if (v.empty()) v = "0";
      std::vector<NaturalBlock> blocks;
      for (std::size_t r = 0; r < s.blocks.size(); ++r)
        blocks.push_back(NaturalBlock::from_strings(s.metrics[r], s.potentials[r]));
      if (!q0) throw ConfigError(cfg.source + ": [initial] q is required for custom systems");
      if (q0->size() != st.dim())
        throw ConfigError(cfg.source + ": [initial] q has " + std::to_string(q0->size()) + " entries, system has " +
                          std::to_string(st.dim()) + " coordinates");
      CatalogEntry e;
      e.name = "custom";
      if (s.box) {
        e.box = *s.box;
      } else {
        for (double x : *q0) e.box.lo.push_back(x - 0.1), e.box.hi.push_back(x + 0.1);
      }
      ProbeSpec probes{{*q0}, e.box, 20, cfg.verify.seed};
      e.system = std::make_shared<const TwistedSystem>(
          build_system(st, StackelMatrix::from_strings(s.stackel), std::move(blocks), probes, std::nullopt));
      e.initial.q = *q0;
      e.initial.p.assign(st.dim(), 0.0);
      e.t_end = 10.0;
      cfg.entry = std::move(e);
    } else {
      std::string names;
      for (const auto& n : catalog_names()) names += " " + n;
      throw ConfigError(where + "unknown catalog '" + s.catalog + "' (known:" + names + ", custom)");
    }
    if (s.box && s.catalog != "custom") {
      if (s.box->dim() != cfg.entry.system->dim()) throw ConfigError(where + "box dimension does not match the system");
      cfg.entry.box = *s.box;
    }
    if (s.candidate_stackel) {
      cfg.entry.system = std::make_shared<const TwistedSystem>(
          with_candidate_stackel(*cfg.entry.system, StackelMatrix::from_strings(*s.candidate_stackel)));
      cfg.entry.name += " (candidate integrals)";
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const ModelError& e) {
    throw ConfigError(where + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(where + "expression: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + e.what());
  } catch (const EvalError& e) {
    throw ConfigError(where + "evaluation: " + e.what());
  }

  const std::size_t N = cfg.entry.system->dim();
  cfg.initial = cfg.entry.initial;
  if (q0) cfg.initial.q = *q0;
  if (p0) cfg.initial.p = *p0;
  if (cfg.initial.q.size() != N || cfg.initial.p.size() != N)
    throw ConfigError(cfg.source + ": [initial] q and p need " + std::to_string(N) + " entries each");
  if (!have_t1) cfg.run.t1 = cfg.run.t0 + cfg.entry.t_end;
  if (cfg.output.plots.empty()) {
    const auto& st = cfg.entry.system->structure();
    for (std::size_t r = 0; r < st.blocks(); ++r) {
      const auto& n = st.names()[st.offset(r)];
      cfg.output.plots.emplace_back(n, momentum_name(n));
    }
  }
}

/// Range and consistency checks that do not need the system.
inline void validate(const RunConfig& cfg) {
  auto positive = [&](const char* sec, const char* key, double v) {
    if (!(v > 0)) throw ConfigError(cfg.source + ": [" + sec + "] " + key + " must be positive");
  };
  positive("run", "rtol", cfg.run.rtol);
  if (!(cfg.run.atol >= 0)) throw ConfigError(cfg.source + ": [run] atol must be nonnegative");
  positive("run", "max_step", cfg.run.max_step);
  if (!(cfg.run.t1 != cfg.run.t0)) throw ConfigError(cfg.source + ": [run] t1 must differ from t0");
  if (cfg.run.samples == 0) throw ConfigError(cfg.source + ": [run] samples must be positive");
  if (cfg.verify.points == 0) throw ConfigError(cfg.source + ": [verify] points must be positive");
  positive("verify", "bracket_tol", cfg.verify.bracket_tol);
  positive("verify", "residual_tol", cfg.verify.residual_tol);
  positive("verify", "killing_tol", cfg.verify.killing_tol);
  positive("verify", "normality_tol", cfg.verify.normality_tol);
  positive("verify", "agreement_tol", cfg.verify.agreement_tol);
  positive("verify", "compare_tol", cfg.verify.compare_tol);
  positive("verify", "curvature_tol", cfg.verify.curvature_tol);
  if (cfg.entry.system) {
    const std::size_t n = cfg.entry.system->block_count();
    if (cfg.run.block < 1 || cfg.run.block > n)
      throw ConfigError(cfg.source + ": [run] block " + std::to_string(cfg.run.block) + " out of range 1.." +
                        std::to_string(n));
    const auto& names = cfg.entry.system->structure().names();
    auto known = [&](const std::string& n) {
      for (const auto& q : names)
        if (n == q || n == momentum_name(q)) return true;
      return false;
    };
    for (const auto& [x, y] : cfg.output.plots)
      if (!known(x) || !known(y)) throw ConfigError(cfg.source + ": [output] plots: unknown axis " + (known(x) ? y : x));
  }
}

inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  detail::Reader rd(parse_ini(text, source));
  RunConfig cfg;
  cfg.source = source;
  auto& s = cfg.system;

  rd.read("system", "catalog", s.catalog);
  rd.read("system", "omega", s.omega);
  rd.read("system", "alpha", s.alpha);
  for (auto [key, slot] : {std::pair{"c0", &s.c0}, {"c1", &s.c1}, {"c2", &s.c2}, {"c3", &s.c3}})
    if (rd.has("system", key)) slot->emplace(), rd.read("system", key, **slot);
  if (auto v = rd.find("system", "f")) s.f = rd.expr_string("system", "f", *v);
  rd.read("system", "a", s.a);
  if (auto v = rd.find("system", "g")) s.g = rd.expr_string("system", "g", *v);
  rd.read("system", "blocks", s.blocks);
  rd.read("system", "names", s.names);
  if (auto v = rd.find("system", "stackel")) s.stackel = rd.matrix("system", "stackel", *v);
  if (auto v = rd.find("system", "candidate_stackel"))
    s.candidate_stackel = rd.matrix("system", "candidate_stackel", *v);
  for (const auto& key : rd.keys("system")) {
    for (const char* prefix : {"metric_", "potential_"}) {
      const std::string pre(prefix);
      if (key.rfind(pre, 0) != 0) continue;
      std::size_t r = 0;
      try {
        std::size_t used = 0;
        r = std::stoul(key.substr(pre.size()), &used);
        if (used != key.size() - pre.size()) r = 0;
      } catch (const std::exception&) {
        r = 0;
      }
      if (r == 0) rd.fail("system", key, "block suffix must be a positive integer");
      const json* v = rd.find("system", key);
      if (pre == "metric_") {
        if (s.metrics.size() < r) s.metrics.resize(r);
        s.metrics[r - 1] = rd.matrix("system", key, *v);
      } else {
        if (s.potentials.size() < r) s.potentials.resize(r);
        s.potentials[r - 1] = rd.expr_string("system", key, *v);
      }
    }
  }
  if (rd.has("system", "box_lo") != rd.has("system", "box_hi"))
    rd.fail("system", rd.has("system", "box_lo") ? "box_lo" : "box_hi", "box_lo and box_hi go together");
  if (rd.has("system", "box_lo")) {
    Box b;
    rd.read("system", "box_lo", b.lo);
    rd.read("system", "box_hi", b.hi);
    if (b.lo.size() != b.hi.size()) rd.fail("system", "box_hi", "box_lo and box_hi differ in length");
    for (std::size_t i = 0; i < b.lo.size(); ++i)
      if (!(b.lo[i] < b.hi[i])) rd.fail("system", "box_hi", "box_hi must exceed box_lo componentwise");
    s.box = b;
  }

  std::optional<std::vector<double>> q0, p0;
  if (rd.has("initial", "q")) q0.emplace(), rd.read("initial", "q", *q0);
  if (rd.has("initial", "p")) p0.emplace(), rd.read("initial", "p", *p0);

  rd.read("run", "t0", cfg.run.t0);
  const bool have_t1 = rd.has("run", "t1");
  rd.read("run", "t1", cfg.run.t1);
  rd.read("run", "rtol", cfg.run.rtol);
  rd.read("run", "atol", cfg.run.atol);
  rd.read("run", "max_step", cfg.run.max_step);
  rd.read("run", "block", cfg.run.block);
  rd.read("run", "samples", cfg.run.samples);
  if (rd.has("run", "policy")) {
    std::string p;
    rd.read("run", "policy", p);
    if (p == "full-span") cfg.run.policy = SignChangePolicy::FullSpan;
    else if (p == "monotone") cfg.run.policy = SignChangePolicy::MonotoneSegment;
    else rd.fail("run", "policy", "expected full-span or monotone, got '" + p + "'");
  }

  rd.read("output", "dir", cfg.output.dir);
  rd.read("output", "svg", cfg.output.svg);
  if (rd.has("output", "plots")) {
    std::vector<std::vector<std::string>> pairs;
    rd.read("output", "plots", pairs);
    for (const auto& p : pairs) {
      if (p.size() != 2) rd.fail("output", "plots", "each plot is a pair of axis names");
      cfg.output.plots.emplace_back(p[0], p[1]);
    }
  }

  rd.read("verify", "seed", cfg.verify.seed);
  rd.read("verify", "points", cfg.verify.points);
  rd.read("verify", "bracket_tol", cfg.verify.bracket_tol);
  rd.read("verify", "residual_tol", cfg.verify.residual_tol);
  rd.read("verify", "killing_tol", cfg.verify.killing_tol);
  rd.read("verify", "normality_tol", cfg.verify.normality_tol);
  rd.read("verify", "agreement_tol", cfg.verify.agreement_tol);
  rd.read("verify", "compare_tol", cfg.verify.compare_tol);
  rd.read("verify", "curvature_tol", cfg.verify.curvature_tol);

  rd.check_all_used();
  resolve(cfg, q0, p0, have_t1);
  validate(cfg);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Command-line overrides; applied after loading and re-validated.
struct Overrides {
  std::optional<std::size_t> block;
  std::optional<std::string> out;
  bool svg = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> rtol, atol;
};

inline void apply(RunConfig& cfg, const Overrides& o) {
  if (o.block) cfg.run.block = *o.block;
  if (o.out) cfg.output.dir = *o.out;
  if (o.svg) cfg.output.svg = true;
  if (o.seed) cfg.verify.seed = *o.seed;
  if (o.rtol) cfg.run.rtol = *o.rtol;
  if (o.atol) cfg.run.atol = *o.atol;
  validate(cfg);
}

/// The resolved configuration, defaults included, in the input grammar.
inline std::string echo(const RunConfig& cfg) {
  std::ostringstream os;
  auto kv = [&](const std::string& k, const json& v) { os << k << " = " << v.dump() << "\n"; };
  const auto& s = cfg.system;
  os << "; resolved configuration (" << cfg.source << ")\n[system]\n";
  kv("catalog", s.catalog);
  if (s.catalog == "oscillators") kv("omega", s.omega), kv("alpha", s.alpha);
  if (s.catalog == "e3-case-i") kv("c0", *s.c0), kv("c1", *s.c1), kv("c2", *s.c2), kv("c3", *s.c3);
  if (s.catalog == "e3-case-ii") kv("c1", *s.c1), kv("c2", *s.c2);
  if (cfg.e3) kv("f", s.f), kv("a", s.a), kv("g", s.g);
  if (s.catalog == "custom") {
    kv("blocks", s.blocks);
    kv("names", s.names);
    kv("stackel", s.stackel);
    for (std::size_t r = 0; r < s.metrics.size(); ++r) {
      kv("metric_" + std::to_string(r + 1), s.metrics[r]);
      kv("potential_" + std::to_string(r + 1), s.potentials[r]);
    }
  }
  if (s.candidate_stackel) kv("candidate_stackel", *s.candidate_stackel);
  kv("box_lo", cfg.entry.box.lo);
  kv("box_hi", cfg.entry.box.hi);
  os << "\n[initial]\n";
  kv("q", cfg.initial.q);
  kv("p", cfg.initial.p);
  os << "\n[run]\n";
  kv("t0", cfg.run.t0);
  kv("t1", cfg.run.t1);
  kv("rtol", cfg.run.rtol);
  kv("atol", cfg.run.atol);
  kv("max_step", std::isfinite(cfg.run.max_step) ? json(cfg.run.max_step) : json(1e308));
  kv("block", cfg.run.block);
  kv("samples", cfg.run.samples);
  kv("policy", cfg.run.policy == SignChangePolicy::FullSpan ? "full-span" : "monotone");
  os << "\n[output]\n";
  kv("dir", cfg.output.dir);
  kv("svg", cfg.output.svg);
  json plots = json::array();
  for (const auto& [x, y] : cfg.output.plots) plots.push_back({x, y});
  kv("plots", plots);
  os << "\n[verify]\n";
  kv("seed", cfg.verify.seed);
  kv("points", cfg.verify.points);
  kv("bracket_tol", cfg.verify.bracket_tol);
  kv("residual_tol", cfg.verify.residual_tol);
  kv("killing_tol", cfg.verify.killing_tol);
  kv("normality_tol", cfg.verify.normality_tol);
  kv("agreement_tol", cfg.verify.agreement_tol);
  kv("compare_tol", cfg.verify.compare_tol);
  kv("curvature_tol", cfg.verify.curvature_tol);
  return os.str();
}

// --- reports -----------------------------------------------------------------------

struct Check {
  std::string name;
  double residual = 0.0;
  double threshold = 0.0;
  bool passed = true;
  Point worst;            // where the residual was attained (empty if not pointwise)
  std::size_t points = 0;
  std::size_t skipped = 0;
  std::string note;
};

struct VerificationReport {
  std::string title;
  std::string config;  // echo() of the resolved config
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  std::string text() const {
    std::ostringstream os;
    os << config << "\n" << title << "\n";
    os << std::left << std::setw(44) << "check" << std::setw(14) << "residual" << std::setw(12) << "threshold"
       << "result\n";
    for (const auto& c : checks) {
      os << std::left << std::setw(44) << c.name << std::setw(14) << std::setprecision(4) << std::scientific
         << c.residual << std::setw(12) << std::setprecision(1) << c.threshold << (c.passed ? "PASS" : "FAIL");
      os << std::defaultfloat;
      if (!c.passed && !c.worst.empty()) os << "  at " << bsep::detail::format_point(c.worst);
      if (c.skipped) os << "  (" << c.skipped << " points skipped)";
      if (!c.note.empty()) os << "  " << c.note;
      os << "\n";
    }
    os << "overall: " << (passed() ? "PASS" : "FAIL") << "\n";
    return os.str();
  }

  ojson to_json() const {
    ojson j;
    j["title"] = title;
    j["passed"] = passed();
    j["checks"] = ojson::array();
    for (const auto& c : checks) {
      ojson e;
      e["name"] = c.name;
      e["residual"] = c.residual;
      e["threshold"] = c.threshold;
      e["passed"] = c.passed;
      e["worst_point"] = c.worst;
      e["points"] = c.points;
      e["skipped"] = c.skipped;
      if (!c.note.empty()) e["note"] = c.note;
      j["checks"].push_back(std::move(e));
    }
    return j;
  }
};

namespace detail {

/// One residual per point, or the reason the point could not be evaluated.
struct PointValue {
  double value = 0.0;
  bool skipped = false;  // expected degeneracy (vanishing twist)
  std::string error;     // domain error
};

/// Sweeps fn over the points in parallel and folds the results into a Check.
inline Check sweep_check(const std::string& name, double threshold, const std::vector<Point>& pts,
                         const std::function<double(const Point&)>& fn) {
  const std::function<PointValue(const Point&)> guarded = [&fn](const Point& q) {
    PointValue v;
    try {
      v.value = fn(q);
    } catch (const VanishingTwistError&) {
      v.skipped = true;
    } catch (const EvalError& e) {
      v.error = e.what();
    } catch (const SingularMatrixError& e) {
      v.error = e.what();
    }
    return v;
  };
  auto vals = parallel_map<PointValue>(pts, guarded);
  Check c;
  c.name = name;
  c.threshold = threshold;
  c.points = pts.size();
  std::size_t errors = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (vals[i].skipped) {
      ++c.skipped;
      continue;
    }
    if (!vals[i].error.empty()) {
      if (errors++ == 0) c.note = "domain error at " + bsep::detail::format_point(pts[i]) + ": " + vals[i].error;
      continue;
    }
    if (!(vals[i].value <= c.residual)) {
      c.residual = vals[i].value;
      c.worst = pts[i];
    }
  }
  if (errors > 1) c.note += " (" + std::to_string(errors) + " points failed)";
  if (c.skipped) c.note = "vanishing twist at skipped points" + (c.note.empty() ? "" : "; " + c.note);
  c.passed = errors == 0 && c.residual <= threshold && c.skipped < c.points;
  return c;
}

inline Point flat_point(const PhasePoint& x) { return x.flat(); }

}  // namespace detail

/// The residual battery at seeded phase points.
inline VerificationReport verify(const RunConfig& cfg) {
  const TwistedSystem& sys = cfg.sys();
  const std::size_t N = sys.dim(), n = sys.block_count();
  const auto& v = cfg.verify;
  VerificationReport rep;
  rep.title = "verify: " + cfg.entry.name + " (" + std::to_string(v.points) + " points, seed " +
              std::to_string(v.seed) + ")";
  rep.config = echo(cfg);

  std::vector<Point> phase;
  for (const auto& x : cfg.entry.sample_phase(v.points, v.seed)) phase.push_back(x.flat());
  std::vector<Point> config;
  for (const auto& y : phase) config.emplace_back(y.begin(), y.begin() + long(N));
  auto at = [N](const Point& y) { return PhasePoint::from_flat(y, N); };

  std::vector<PhaseScalar> k;
  for (std::size_t a = 0; a < n; ++a) k.push_back(system_integral(sys, a));
  rep.checks.push_back(detail::sweep_check("involution {K_a, K_b}", v.bracket_tol, phase, [&](const Point& y) {
    const PhasePoint x = at(y);
    double worst = 0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) worst = std::max(worst, std::abs(poisson_bracket(k[a], k[b], x)));
    return worst;
  }));
  rep.checks.push_back(detail::sweep_check("vector field (X_H)_r = alpha^r X_{H~_r}", v.residual_tol, phase,
                                           [&](const Point& y) { return vector_field_identity_residual(sys, at(y)); }));
  for (std::size_t a = 1; a < n; ++a)
    rep.checks.push_back(detail::sweep_check("block-Eisenhart K_" + std::to_string(a + 1), v.residual_tol, config,
                                             [&, a](const Point& q) { return block_eisenhart_residual(sys, a, q); }));
  if (n > 1) {
    rep.checks.push_back(detail::sweep_check("block-Levi-Civita (twist functions)", v.residual_tol, config,
                                             [&](const Point& q) { return block_levi_civita_residual(sys, q).metric; }));
    rep.checks.push_back(detail::sweep_check("block-Levi-Civita (potential)", v.residual_tol, config, [&](const Point& q) {
      return block_levi_civita_residual(sys, q).potential;
    }));
  }
  const MetricField gm = system_metric(sys);
  for (std::size_t a = 1; a < n; ++a) {
    const TensorField2 ka = system_killing_tensor(sys, a);
    rep.checks.push_back(detail::sweep_check("Killing equation k_" + std::to_string(a + 1), v.residual_tol, config,
                                             [&, ka](const Point& q) { return killing_residual(gm, ka, q); }));
  }

  if (cfg.entry.cartesian && !sys.has_candidate_stackel()) {
    const auto& ref = *cfg.entry.cartesian;
    const MetricField eu = MetricField::euclidean(ref.names.size());
    std::vector<Point> cart;
    for (const auto& q : config) cart.push_back(ref.transform.inverse_positions(q));
    rep.checks.push_back(detail::sweep_check("Cartesian vs separated integrals (relative)", v.agreement_tol, phase,
                                             [&](const Point& y) {
                                               const PhasePoint x = at(y);
                                               const PhasePoint xc = ref.transform.backward(x);
                                               double worst = 0;
                                               for (std::size_t a = 0; a < ref.integrals.size(); ++a) {
                                                 const double s = sys.first_integral(a, x);
                                                 const double c = ref.integrals[a].value(xc);
                                                 worst = std::max(worst, std::abs(s - c) / std::max(1.0, std::abs(s)));
                                               }
                                               return worst;
                                             }));
    for (std::size_t i = 0; i < ref.killing.size(); ++i) {
      const auto& kt = ref.killing[i];
      const std::string tag = "k" + std::to_string(i + 1);
      rep.checks.push_back(detail::sweep_check("Killing equation " + tag + " (Cartesian)", v.killing_tol, cart,
                                               [&](const Point& x) { return killing_residual(eu, kt, x); }));
      Check ch = detail::sweep_check("characteristic condition d(" + tag + " dV)", v.normality_tol, cart,
                                     [&](const Point& x) {
                                       const double scale = std::max(
                                           1.0, ref.potential.eval(x, 2).hess.cwiseAbs().maxCoeff() *
                                                    kt.value(x).cwiseAbs().maxCoeff());
                                       return characteristic_condition(kt, ref.potential, x, &eu) / scale;
                                     });
      ch.note = "relative to max|ddV| max|k|";
      rep.checks.push_back(std::move(ch));
      rep.checks.push_back(detail::sweep_check("Haantjes condition " + tag, v.normality_tol, cart,
                                               [&](const Point& x) { return haantjes(kt, x, &eu).condition_max; }));
      rep.checks.push_back(detail::sweep_check("Tonolo-Schouten-Nijenhuis " + tag, v.normality_tol, cart,
                                               [&](const Point& x) { return tsn_residuals(kt, eu, x).max(); }));
    }
  }
  return rep;
}

/// Riemann flatness and the family equations for the E^3 entries.
inline VerificationReport curvature(const RunConfig& cfg) {
  if (!cfg.e3) throw ConfigError(cfg.source + ": curvature needs catalog e3-case-i or e3-case-ii");
  const E3Metric& m = *cfg.e3;
  const auto& v = cfg.verify;
  VerificationReport rep;
  rep.title = "curvature: " + m.name + " (" + std::to_string(v.points) + " points, seed " + std::to_string(v.seed) + ")";
  rep.config = echo(cfg);
  const auto pts = sample_box(cfg.entry.box, v.points, v.seed);
  auto max_abs = [](const std::vector<double>& xs) {
    double w = 0;
    for (double x : xs) w = std::max(w, std::abs(x));
    return w;
  };
  rep.checks.push_back(detail::sweep_check("max |Riemann|", v.curvature_tol, pts,
                                           [&](const Point& q) { return riemann(m.metric, q).max_abs(); }));
  if (m.name == "e3-case-i") {
    rep.checks.push_back(detail::sweep_check("equations for l and f", v.residual_tol, pts, [&](const Point& q) {
      return max_abs(case_i_compatibility_residuals(m, q));
    }));
    rep.checks.push_back(detail::sweep_check("linear system for f", v.residual_tol, pts,
                                             [&](const Point& q) { return max_abs(case_i_f_residuals(m, q)); }));
  } else {
    rep.checks.push_back(detail::sweep_check("equations for l and f", v.residual_tol, pts,
                                             [&](const Point& q) { return max_abs(case_ii_residuals(m, q)); }));
    rep.checks.push_back(detail::sweep_check("leaf condition on f", v.residual_tol, pts,
                                             [&](const Point& q) { return std::abs(case_ii_leaf_residual(m, q)); }));
    const Program l(m.l, m.names), f(m.f, m.names);
    const double c1 = m.c1;
    auto rel = [](double got, double want) { return std::abs(got - want) / (want != 0.0 ? std::abs(want) : 1.0); };
    Check leaf = detail::sweep_check("leaf scalar curvature vs 2 l^2 c1^2", v.curvature_tol, pts, [&](const Point& q) {
      const double lv = l.value(q);
      const std::vector<double> y{q[1], q[2]};
      return rel(scalar_curvature(leaf_metric(m.metric, 0, q[0]), y), 2 * lv * lv * c1 * c1);
    });
    leaf.note = "relative";
    rep.checks.push_back(std::move(leaf));
    Check rv = detail::sweep_check("leaf R^v_wvw vs c1^2/f^2", v.curvature_tol, pts, [&](const Point& q) {
      const double fv = f.value(q);
      const std::vector<double> y{q[1], q[2]};
      return rel(riemann(leaf_metric(m.metric, 0, q[0]), y)(0, 1, 0, 1), c1 * c1 / (fv * fv));
    });
    rv.note = "relative";
    rep.checks.push_back(std::move(rv));
  }
  return rep;
}

// --- output helpers ------------------------------------------------------------------

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << std::setprecision(17);
  return out;
}

inline std::string color(std::size_t i) {
  static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return c[i % 6];
}

}  // namespace detail

/// CSV columns: t, positions, momenta, tau_1..tau_n, H, K_2..K_n.
inline std::vector<std::string> csv_header(const TwistedSystem& sys) {
  std::vector<std::string> h{"t"};
  const auto& names = sys.structure().names();
  for (const auto& q : names) h.push_back(q);
  for (const auto& q : names) h.push_back(momentum_name(q));
  for (std::size_t r = 0; r < sys.block_count(); ++r) h.push_back("tau_" + std::to_string(r + 1));
  h.push_back("H");
  for (std::size_t a = 1; a < sys.block_count(); ++a) h.push_back("K_" + std::to_string(a + 1));
  return h;
}

/// Rows of the simulate CSV, `samples` + 1 equally spaced dense-output times.
inline std::vector<std::vector<double>> csv_rows(const TwistedSystem& sys, const Trajectory& tr, std::size_t samples) {
  const std::size_t N = sys.dim(), n = sys.block_count();
  std::vector<double> ts;
  auto states = tr.resample(samples, &ts);
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const auto& y = states[j];
    std::vector<double> row{ts[j]};
    row.insert(row.end(), y.begin(), y.end());
    const PhasePoint x = PhasePoint::from_flat(y, N);
    for (std::size_t a = 0; a < n; ++a) row.push_back(sys.first_integral(a, x));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

namespace detail {

inline void phase_portraits(const RunConfig& cfg, const std::vector<std::string>& header,
                            const std::vector<std::vector<double>>& rows, std::ostream& log) {
  for (const auto& [xn, yn] : cfg.output.plots) {
    const auto xi = std::size_t(std::find(header.begin(), header.end(), xn) - header.begin());
    const auto yi = std::size_t(std::find(header.begin(), header.end(), yn) - header.begin());
    svg::Series s;
    for (const auto& r : rows) s.x.push_back(r[xi]), s.y.push_back(r[yi]);
    svg::Plot p{cfg.entry.name + ": projection on (" + xn + ", " + yn + ")", xn, yn, {s}};
    const auto path = std::filesystem::path(cfg.output.dir) / ("phase_" + xn + "_" + yn + ".svg");
    open_out(path) << svg::render(p);
    log << "wrote " << path.string() << "\n";
  }
}

inline IntegratorConfig integrator(const RunConfig& cfg) {
  IntegratorConfig ic;
  ic.rtol = cfg.run.rtol;
  ic.atol = cfg.run.atol;
  ic.max_step = cfg.run.max_step;
  return ic;
}

}  // namespace detail

// --- commands --------------------------------------------------------------------------

inline int cmd_list(std::ostream& out) {
  for (const auto& n : catalog_names()) out << n << "\n";
  return kOk;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  out << echo(cfg) << "\n";
  const TwistedSystem& sys = cfg.sys();
  const auto header = csv_header(sys);
  const auto csv_path = std::filesystem::path(cfg.output.dir) / "simulate.csv";
  Trajectory tr;
  bool failed = false;
  try {
    tr = simulate(sys, cfg.initial, cfg.run.t0, cfg.run.t1, detail::integrator(cfg));
  } catch (const IntegrationError& e) {
    failed = true;
    tr = e.partial();
    err << "simulate: FAILED at t = " << std::setprecision(17) << e.last_good_time() << ": " << e.what() << "\n";
  }
  std::vector<std::vector<double>> rows;
  if (tr.size() > 1) {
    const double frac = std::abs((tr.t_end() - tr.t_begin()) / (cfg.run.t1 - cfg.run.t0));
    rows = csv_rows(sys, tr, std::max<std::size_t>(1, std::size_t(std::ceil(double(cfg.run.samples) * frac))));
  }
  {
    auto f = detail::open_out(csv_path);
    write_csv(f, header, rows);
  }
  out << "wrote " << csv_path.string() << " (" << rows.size() << " rows" << (failed ? ", partial" : "") << ")\n";
  if (failed) return kNumericalFailure;
  const auto& st = tr.stats();
  out << "steps: " << st.accepted << " accepted, " << st.rejected << " rejected\n";
  if (!rows.empty()) {
    const std::size_t hcol = 1 + 2 * sys.dim() + sys.block_count();
    double drift = 0;
    for (const auto& r : rows) drift = std::max(drift, std::abs(r[hcol] - rows.front()[hcol]));
    out << "max |H - H(t0)|: " << std::scientific << std::setprecision(3) << drift << std::defaultfloat << "\n";
  }
  if (cfg.output.svg) detail::phase_portraits(cfg, header, rows, out);
  return kOk;
}

inline int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  out << echo(cfg) << "\n";
  const TwistedSystem& sys = cfg.sys();
  const std::size_t r = cfg.run.block - 1;
  CompareOptions opt;
  opt.integrator = detail::integrator(cfg);
  opt.samples = cfg.run.samples;
  opt.policy = cfg.run.policy;
  ComparisonReport rep;
  try {
    rep = compare_block_orbits(sys, cfg.initial, r, cfg.run.t1 - cfg.run.t0, opt);
  } catch (const IntegrationError& e) {
    err << "compare: integration FAILED at t = " << e.last_good_time() << ": " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const ComparisonError& e) {
    err << "compare: " << e.what() << "\n";
    return kNumericalFailure;
  }

  VerificationReport vr;
  vr.title = "compare: " + cfg.entry.name + " block " + std::to_string(cfg.run.block) + " over t in [0, " +
             bsep::detail::format_number(rep.t_end) + "]";
  for (std::size_t k = 0; k < rep.components.size(); ++k) {
    Check c;
    c.name = "sup |" + rep.components[k] + " full - reduced|";
    c.residual = rep.sup[k];
    c.threshold = cfg.verify.compare_tol;
    c.passed = rep.sup[k] <= c.threshold;
    c.points = rep.samples;
    c.note = "rms " + bsep::detail::format_number(rep.rms[k]);
    vr.checks.push_back(std::move(c));
  }
  out << vr.title << "\n";
  out << "tau range: [" << rep.tau_min << ", " << rep.tau_max << "]"
      << (rep.sign_changed ? ", alpha changes sign along the orbit" : "")
      << (rep.restricted ? " (restricted to the first monotone segment)" : "") << "\n";
  out << "separation constants:";
  for (double c : rep.constants) out << " " << std::setprecision(12) << c;
  out << std::setprecision(6) << "\n";
  for (const auto& c : vr.checks)
    out << std::left << std::setw(28) << c.name << std::scientific << std::setprecision(4) << c.residual << "  <= "
        << std::setprecision(1) << c.threshold << "  " << (c.passed ? "PASS" : "FAIL") << std::defaultfloat << "\n";
  out << "overall: " << (vr.passed() ? "PASS" : "FAIL") << "\n";

  std::vector<std::string> header{"t", "tau"};
  for (const auto& c : rep.components) header.push_back(c + "_full");
  for (const auto& c : rep.components) header.push_back(c + "_reduced");
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < rep.t.size(); ++j) {
    std::vector<double> row{rep.t[j], rep.tau[j]};
    row.insert(row.end(), rep.full[j].begin(), rep.full[j].end());
    row.insert(row.end(), rep.reduced[j].begin(), rep.reduced[j].end());
    rows.push_back(std::move(row));
  }
  const auto dir = std::filesystem::path(cfg.output.dir);
  {
    auto f = detail::open_out(dir / "compare.csv");
    write_csv(f, header, rows);
  }
  out << "wrote " << (dir / "compare.csv").string() << "\n";
  if (cfg.output.svg) {
    const std::size_t nr = rep.components.size() / 2;
    const std::string qn = rep.components[0], pn = rep.components[nr];
    svg::Series full{"projected full orbit", {}, {}, detail::color(0), false};
    svg::Series red{"reduced orbit", {}, {}, detail::color(1), true};
    svg::Series qt{qn + "(t)", {}, {}, detail::color(0), false};
    svg::Series qtau{qn + "(tau)", {}, {}, detail::color(1), false};
    for (std::size_t j = 0; j < rep.t.size(); ++j) {
      full.x.push_back(rep.full[j][0]), full.y.push_back(rep.full[j][nr]);
      red.x.push_back(rep.reduced[j][0]), red.y.push_back(rep.reduced[j][nr]);
      qt.x.push_back(rep.t[j]), qt.y.push_back(rep.full[j][0]);
      qtau.x.push_back(rep.tau[j]), qtau.y.push_back(rep.reduced[j][0]);
    }
    const std::string b = std::to_string(cfg.run.block);
    detail::open_out(dir / ("compare_overlay_b" + b + ".svg"))
        << svg::render({cfg.entry.name + ": block " + b + " orbits", qn, pn, {full, red}});
    detail::open_out(dir / ("compare_t_b" + b + ".svg"))
        << svg::render({cfg.entry.name + ": " + qn + " against t", "t", qn, {qt}});
    detail::open_out(dir / ("compare_tau_b" + b + ".svg"))
        << svg::render({cfg.entry.name + ": " + qn + " against tau_" + b, "tau_" + b, qn, {qtau}});
    out << "wrote " << (dir / ("compare_*_b" + b + ".svg")).string() << "\n";
  }
  return vr.passed() ? kOk : kVerificationFailed;
}

namespace detail {

inline int finish(const VerificationReport& rep, const RunConfig& cfg, const std::string& stem, std::ostream& out) {
  out << rep.text();
  const auto path = std::filesystem::path(cfg.output.dir) / (stem + ".json");
  open_out(path) << rep.to_json().dump(2) << "\n";
  out << "wrote " << path.string() << "\n";
  return rep.passed() ? kOk : kVerificationFailed;
}

}  // namespace detail

inline int cmd_verify(const RunConfig& cfg, std::ostream& out) { return detail::finish(verify(cfg), cfg, "verify", out); }

inline int cmd_curvature(const RunConfig& cfg, std::ostream& out) {
  return detail::finish(curvature(cfg), cfg, "curvature", out);
}

}  // namespace bsep::cli
