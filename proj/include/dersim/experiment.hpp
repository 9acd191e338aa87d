#pragma once

// Case files, random instances, experiment configs and the seed loop that
// writes trace_<seed>.csv and summary.csv.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dersim/errors.hpp"
#include "dersim/metrics.hpp"
#include "dersim/network.hpp"
#include "dersim/oracle.hpp"
#include "dersim/problem.hpp"
#include "dersim/rng.hpp"
#include "dersim/run.hpp"

namespace dersim {

// --- Case files ---

struct Case {
  ProblemInstance instance;
  NominalGraph graph;
};

/// Line 1: n. Then one line per agent: a b c p_lo p_hi load, for the cost
/// a p^2 + b p + c. Then a graph section. '#' starts a comment.
inline Case read_case(std::istream& in) {
  std::size_t line_no = 0;
  std::string line;
  if (!detail::next_content_line(in, line, line_no)) throw ParseError("empty case file", 1);
  long long n = -1;
  {
    std::istringstream head(line);
    std::string extra;
    if (!(head >> n) || n <= 0 || (head >> extra)) throw ParseError("first line must be the agent count n > 0", line_no, 1);
  }
  const auto ni = static_cast<Eigen::Index>(n);
  Vector a(ni), b(ni), c(ni), lo(ni), hi(ni), load(ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    if (!detail::next_content_line(in, line, line_no)) {
      throw ParseError("expected " + std::to_string(n) + " agent lines, found " + std::to_string(i), line_no + 1);
    }
    std::istringstream row(line);
    double* fields[] = {&a[i], &b[i], &c[i], &lo[i], &hi[i], &load[i]};
    for (std::size_t f = 0; f < 6; ++f) {
      std::string token;
      if (!(row >> token)) throw ParseError("expected 6 fields 'a b c p_lo p_hi load'", line_no, line.size() + 1);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value)) {
        throw ParseError("malformed number '" + token + "'", line_no, detail::column_of_field(line, f));
      }
      *fields[f] = value;
    }
    std::string extra;
    if (row >> extra) throw ParseError("trailing field '" + extra + "'", line_no, detail::column_of_field(line, 6));
    if (!(a[i] > 0.0)) throw InvalidInstanceError("line " + std::to_string(line_no) + ": quadratic coefficient a must be positive");
    if (lo[i] > hi[i]) {
      throw InvalidInstanceError("line " + std::to_string(line_no) + ": p_lo " + std::to_string(lo[i]) +
                                 " exceeds p_hi " + std::to_string(hi[i]));
    }
  }
  NominalGraph graph = read_graph(in, line_no);
  if (graph.size() != static_cast<std::size_t>(n)) {
    throw ParseError("graph has " + std::to_string(graph.size()) + " nodes, case has " + std::to_string(n), line_no);
  }
  if (detail::next_content_line(in, line, line_no)) throw ParseError("unexpected content after graph section", line_no, 1);
  ProblemInstance inst{load, lo, hi, CostModel::quadratic(a, b, c)};
  validate(inst);
  return {std::move(inst), std::move(graph)};
}

inline Case load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open case file '" + path.string() + "'");
  try {
    return read_case(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line(), e.column());
  }
}

/// Shortest decimal that round-trips, at most 17 significant digits.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline void write_case(std::ostream& out, const ProblemInstance& inst, const NominalGraph& g) {
  const auto* q = inst.cost.quadratic_coefficients();
  if (q == nullptr) throw ConfigError("write_case: only quadratic costs can be written");
  out << inst.size() << '\n';
  for (std::size_t i = 0; i < inst.size(); ++i) {
    out << format_double(q->a[i]) << ' ' << format_double(q->b[i]) << ' ' << format_double(q->c[i]) << ' '
        << format_double(inst.lower[i]) << ' ' << format_double(inst.upper[i]) << ' ' << format_double(inst.load[i])
        << '\n';
  }
  write_graph(out, g);
}

// --- Random instances ---

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// f_i(p) = a_i p^2 with a_i, loads and capacities drawn uniformly.
struct InstanceSpec {
  std::size_t n = 39;
  Range a{0.5, 2.0};
  Range load{0.5, 1.5};
  Range lower{0.0, 0.0};
  Range upper{1.0, 3.0};
};

struct GeneratedInstance {
  ProblemInstance instance;
  std::size_t attempts = 0;
};

inline void check_spec(const InstanceSpec& spec) {
  auto ordered = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
      throw ConfigError(std::string("generator range ") + name + " must be finite with lo <= hi");
    }
  };
  if (spec.n == 0) throw ConfigError("generator needs n > 0");
  ordered(spec.a, "a");
  ordered(spec.load, "load");
  ordered(spec.lower, "lower");
  ordered(spec.upper, "upper");
  if (!(spec.a.lo > 0.0)) throw ConfigError("generator range a must be positive");
  if (spec.lower.hi > spec.upper.lo) throw ConfigError("generator lower range overlaps upper range");
}

inline GeneratedInstance generate_instance(const InstanceSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  constexpr std::size_t kMaxRejections = 1000;
  const auto n = static_cast<Eigen::Index>(spec.n);
  for (std::size_t attempt = 0; attempt < kMaxRejections; ++attempt) {
    rng::Sequence draw(seed, rng::Stream::instance, attempt);
    Vector a(n), lo(n), hi(n), load(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a[i] = draw.uniform(spec.a.lo, spec.a.hi);
      load[i] = draw.uniform(spec.load.lo, spec.load.hi);
      lo[i] = draw.uniform(spec.lower.lo, spec.lower.hi);
      hi[i] = draw.uniform(spec.upper.lo, spec.upper.hi);
    }
    const double demand = load.sum();
    if (lo.sum() <= demand && demand <= hi.sum()) {
      ProblemInstance inst{load, lo, hi, CostModel::pure_quadratic(a)};
      validate(inst);
      return {std::move(inst), attempt + 1};
    }
  }
  throw ConfigError("generator spec rejected " + std::to_string(kMaxRejections) +
                    " consecutive draws as infeasible; widen the capacity ranges");
}

// --- Configuration ---

enum class InstanceSource { case_file, generator };
enum class GraphSource { case_file, file, ieee39, random };

struct ExperimentConfig {
  InstanceSource instance_source = InstanceSource::case_file;
  std::filesystem::path case_path;
  InstanceSpec generator;
  std::optional<std::uint64_t> instance_seed;

  GraphSource graph_source = GraphSource::case_file;
  std::filesystem::path graph_path;
  GraphMode mode = GraphMode::undirected;
  double random_extra = 0.1;
  std::uint64_t graph_seed = 1;

  double failure_probability = 0.0;
  std::size_t connectivity_window = 0;
  std::vector<std::uint64_t> seeds;
  Algorithm algorithm = Algorithm::pd1;
  AlgorithmParams params;
  std::filesystem::path out_dir = "out";
};

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    const auto first = token.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = token.find_last_not_of(" \t");
    token = token.substr(first, last - first + 1);
    const auto dash = token.find('-', 1);
    auto number = [&](const std::string& s) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("malformed seed '" + s + "'");
      return v;
    };
    if (dash == std::string::npos) {
      seeds.push_back(number(token));
    } else {
      const auto from = number(token.substr(0, dash));
      const auto to = number(token.substr(dash + 1));
      if (to < from) throw ConfigError("seed range '" + token + "' is decreasing");
      for (auto s = from; s <= to; ++s) seeds.push_back(s);
    }
  }
  return seeds;
}

namespace detail {

using Tree = boost::property_tree::ptree;

template <class T>
T required(const Tree& tree, const std::string& key) {
  const auto value = tree.get_optional<std::string>(key);
  if (!value) throw ConfigError("missing required key '" + key + "'");
  try {
    return boost::lexical_cast<T>(*value);
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError("key '" + key + "' has malformed value '" + *value + "'");
  }
}

template <class T>
T optional_value(const Tree& tree, const std::string& key, T fallback) {
  return tree.get_optional<std::string>(key) ? required<T>(tree, key) : fallback;
}

inline Range range(const Tree& tree, const std::string& prefix, Range fallback) {
  return {optional_value(tree, prefix + "_min", fallback.lo), optional_value(tree, prefix + "_max", fallback.hi)};
}

inline void reject_unknown(const Tree& tree, const std::vector<std::string>& sections,
                           const std::vector<std::vector<std::string>>& keys) {
  for (const auto& [section, body] : tree) {
    const auto it = std::find(sections.begin(), sections.end(), section);
    if (it == sections.end()) throw ConfigError("unknown section [" + section + "]");
    const auto& allowed = keys[static_cast<std::size_t>(it - sections.begin())];
    for (const auto& entry : body) {
      if (std::find(allowed.begin(), allowed.end(), entry.first) == allowed.end()) {
        throw ConfigError("unknown key '" + entry.first + "' in section [" + section + "]");
      }
    }
  }
}

}  // namespace detail

/// Parses the INI config; relative file paths resolve against `base_dir`.
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  detail::Tree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  detail::reject_unknown(
      tree, {"instance", "graph", "network", "run"},
      {{"source", "case", "seed", "n", "a_min", "a_max", "load_min", "load_max", "lower_min", "lower_max", "upper_min",
        "upper_max"},
       {"source", "file", "mode", "extra", "seed"},
       {"failure_probability", "connectivity_window"},
       {"algorithm", "seeds", "horizon", "stepsize", "stepsize_a", "stepsize_b", "xi", "n_hat", "gamma", "out"}});

  ExperimentConfig cfg;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  const auto inst = tree.get_child("instance", detail::Tree());
  const auto source = detail::required<std::string>(inst, "source");
  if (source == "case") {
    cfg.instance_source = InstanceSource::case_file;
    cfg.case_path = resolve(detail::required<std::string>(inst, "case"));
  } else if (source == "generator") {
    cfg.instance_source = InstanceSource::generator;
    InstanceSpec spec;
    spec.n = detail::required<std::size_t>(inst, "n");
    spec.a = detail::range(inst, "a", spec.a);
    spec.load = detail::range(inst, "load", spec.load);
    spec.lower = detail::range(inst, "lower", spec.lower);
    spec.upper = detail::range(inst, "upper", spec.upper);
    check_spec(spec);
    cfg.generator = spec;
    if (inst.get_optional<std::string>("seed")) cfg.instance_seed = detail::required<std::uint64_t>(inst, "seed");
  } else {
    throw ConfigError("instance source must be 'case' or 'generator', got '" + source + "'");
  }

  const auto graph = tree.get_child("graph", detail::Tree());
  const auto gsource = detail::optional_value<std::string>(graph, "source", "case");
  cfg.mode = parse_graph_mode(detail::required<std::string>(graph, "mode"));
  if (gsource == "case") {
    if (cfg.instance_source != InstanceSource::case_file) throw ConfigError("graph source 'case' needs a case instance");
    cfg.graph_source = GraphSource::case_file;
  } else if (gsource == "file") {
    cfg.graph_source = GraphSource::file;
    cfg.graph_path = resolve(detail::required<std::string>(graph, "file"));
  } else if (gsource == "ieee39") {
    cfg.graph_source = GraphSource::ieee39;
  } else if (gsource == "random") {
    cfg.graph_source = GraphSource::random;
    cfg.random_extra = detail::optional_value(graph, "extra", cfg.random_extra);
    cfg.graph_seed = detail::optional_value<std::uint64_t>(graph, "seed", cfg.graph_seed);
  } else {
    throw ConfigError("graph source must be case, file, ieee39 or random, got '" + gsource + "'");
  }

  const auto net = tree.get_child("network", detail::Tree());
  cfg.failure_probability = detail::required<double>(net, "failure_probability");
  if (!(cfg.failure_probability >= 0.0 && cfg.failure_probability < 1.0)) {
    throw ConfigError("failure_probability must lie in [0, 1)");
  }
  cfg.connectivity_window = detail::optional_value<std::size_t>(net, "connectivity_window", 0);

  const auto run_section = tree.get_child("run", detail::Tree());
  cfg.algorithm = parse_algorithm(detail::required<std::string>(run_section, "algorithm"));
  cfg.seeds = parse_seed_list(detail::required<std::string>(run_section, "seeds"));
  cfg.params.horizon = detail::required<std::size_t>(run_section, "horizon");
  const auto stepsize = detail::required<std::string>(run_section, "stepsize");
  if (stepsize == "diminishing") {
    cfg.params.stepsize = Stepsize::diminishing(detail::required<double>(run_section, "stepsize_a"),
                                                detail::required<double>(run_section, "stepsize_b"));
  } else {
    try {
      cfg.params.stepsize = Stepsize::constant(boost::lexical_cast<double>(stepsize));
    } catch (const boost::bad_lexical_cast&) {
      throw ConfigError("stepsize must be a number or 'diminishing', got '" + stepsize + "'");
    }
  }
  cfg.params.xi = detail::required<double>(run_section, "xi");
  cfg.params.n_hat = detail::required<double>(run_section, "n_hat");
  cfg.params.gamma = detail::optional_value(run_section, "gamma", cfg.params.gamma);
  cfg.out_dir = detail::optional_value<std::string>(run_section, "out", cfg.out_dir.string());
  if (cfg.params.horizon == 0) throw ConfigError("horizon must be positive");
  if (cfg.seeds.empty()) throw ConfigError("seed list is empty");
  check_params(cfg.params, 1);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.parent_path());
}

// --- Running ---

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t steps = 0;
  double initial_error = kNotApplicable;
  double final_error = kNotApplicable;
  RateEstimate rate;
  InvariantReport invariants;
  std::size_t warnings = 0;
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  int exit_code = 0;
};

/// Writes to a sibling temp file and renames it over the target.
inline void write_atomically(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << contents;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string trace_csv(const RunTrace& trace) {
  std::ostringstream out;
  out << "k,err_p,consensus_spread,conservation_residual,mass_residual,min_v\n";
  for (const auto& r : trace.records) {
    out << r.k << ',' << format_double(r.err_p) << ',' << format_double(r.consensus_spread) << ','
        << format_double(r.conservation_residual) << ',' << format_double(r.mass_residual) << ','
        << format_double(r.min_v) << '\n';
  }
  return out.str();
}

/// Reads one column of a trace CSV back as doubles.
inline Series read_trace_column(std::istream& in, const std::string& column) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trace", 1);
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string name;
    while (std::getline(h, name, ',')) header.push_back(name);
  }
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw ParseError("trace has no column '" + column + "'", 1);
  const auto index = static_cast<std::size_t>(it - header.begin());
  Series out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream row(line);
    std::string field;
    for (std::size_t f = 0; f <= index; ++f) {
      if (!std::getline(row, field, ',')) throw ParseError("short row", line_no);
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) throw ParseError("bad number '" + field + "'", line_no);
    out.push_back(value);
  }
  return out;
}

inline Case materialize(const ExperimentConfig& cfg, std::uint64_t seed) {
  ProblemInstance inst;
  std::optional<NominalGraph> graph;
  if (cfg.instance_source == InstanceSource::case_file) {
    Case c = load_case(cfg.case_path);
    inst = std::move(c.instance);
    graph = std::move(c.graph);
  } else {
    inst = generate_instance(cfg.generator, cfg.instance_seed.value_or(seed)).instance;
  }
  const std::size_t n = inst.size();
  switch (cfg.graph_source) {
    case GraphSource::case_file:
      break;
    case GraphSource::file: {
      std::ifstream in(cfg.graph_path);
      if (!in) throw ConfigError("cannot open graph file '" + cfg.graph_path.string() + "'");
      graph = read_graph(in);
      break;
    }
    case GraphSource::ieee39: {
      if (n != 39) throw ConfigError("ieee39 graph needs a 39-agent instance");
      const auto lines = ieee39_lines();
      graph = cfg.mode == GraphMode::directed ? NominalGraph(n, orient_strongly_connected(n, lines), cfg.mode)
                                              : NominalGraph(n, lines, cfg.mode);
      break;
    }
    case GraphSource::random:
      graph = random_graph(n, cfg.random_extra, cfg.mode, cfg.graph_seed);
      break;
  }
  if (graph->mode() != cfg.mode) {
    throw ConfigError(std::string("graph is ") + to_string(graph->mode()) + " but config mode is " +
                      to_string(cfg.mode));
  }
  return {std::move(inst), std::move(*graph)};
}

inline std::string summary_csv(const std::vector<SeedResult>& results) {
  std::ostringstream out;
  out << "seed,status,steps,initial_error,final_error,relative_error,rate_a,rate_r2,fit_k0,fit_K,"
         "max_conservation,max_mass,max_stochasticity,min_v,max_consensus_spread,warnings,message\n";
  for (const auto& r : results) {
    auto quote = [](std::string s) {
      std::replace(s.begin(), s.end(), '"', '\'');
      std::replace(s.begin(), s.end(), '\n', ' ');
      return "\"" + s + "\"";
    };
    const auto& inv = r.invariants;
    auto maxres = [](const InvariantCheck& c) { return c.applicable ? c.max_residual : kNotApplicable; };
    out << r.seed << ',' << (r.ok ? "ok" : "error") << ',' << r.steps << ',' << format_double(r.initial_error) << ','
        << format_double(r.final_error) << ','
        << format_double(r.initial_error > 0.0 ? r.final_error / r.initial_error : kNotApplicable) << ','
        << format_double(r.rate.a) << ',' << format_double(r.rate.r2) << ',' << r.rate.k0 << ',' << r.rate.K << ','
        << format_double(maxres(inv.conservation)) << ',' << format_double(maxres(inv.mass)) << ','
        << format_double(maxres(inv.stochasticity)) << ',' << format_double(inv.min_v) << ','
        << format_double(maxres(inv.consensus_spread)) << ',' << r.warnings << ',' << quote(r.error) << '\n';
  }
  return out.str();
}

/// Runs every seed, writing trace_<seed>.csv per successful run and
/// summary.csv at the end. Exit code 3 when any seed failed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  if (cfg.seeds.empty()) throw ConfigError("seed list is empty");
  {
    const Case probe = materialize(cfg, cfg.seeds.front());
    if (needs_directed_graph(cfg.algorithm) != probe.graph.directed()) {
      throw ConfigError(std::string(to_string(cfg.algorithm)) + " needs a " +
                        (needs_directed_graph(cfg.algorithm) ? "directed" : "undirected") + " graph");
    }
    check_params(cfg.params, probe.instance.size());
  }
  std::filesystem::create_directories(cfg.out_dir);
  ExperimentResult result;
  for (const auto seed : cfg.seeds) {
    SeedResult sr;
    sr.seed = seed;
    try {
      const Case c = materialize(cfg, seed);
      const GraphSchedule schedule(c.graph, cfg.failure_probability, seed, cfg.params.horizon);
      const DispatchSolution sol = solve_bisection(c.instance, cfg.params.xi, cfg.params.n_hat);
      RunOptions opts;
      opts.solution = sol;
      opts.connectivity_window = cfg.connectivity_window;
      const RunTrace trace = run(cfg.algorithm, c.instance, schedule, cfg.params, {}, opts);
      const std::string csv = trace_csv(trace);
      write_atomically(cfg.out_dir / ("trace_" + std::to_string(seed) + ".csv"), csv);

      // Fit from the values exactly as written, so the summary matches the file.
      std::istringstream back(csv);
      const Series err = read_trace_column(back, "err_p");
      sr.steps = trace.records.size() - 1;
      sr.initial_error = err.front();
      sr.final_error = err.back();
      try {
        sr.rate = fit_rate(err);
      } catch (const WindowError& e) {
        if (log) *log << "seed " << seed << ": rate fit skipped: " << e.what() << '\n';
      }
      sr.invariants = invariant_report(trace);
      sr.warnings = trace.warnings.size();
      if (log) {
        for (const auto& w : trace.warnings) *log << "seed " << seed << ": warning: " << w << '\n';
      }
      sr.ok = true;
    } catch (const std::exception& e) {
      sr.error = e.what();
      result.exit_code = 3;
      if (log) *log << "seed " << seed << ": error: " << e.what() << '\n';
    }
    result.seeds.push_back(std::move(sr));
  }
  write_atomically(cfg.out_dir / "summary.csv", summary_csv(result.seeds));
  return result;
}

}  // namespace dersim
