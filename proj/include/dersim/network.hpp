#pragma once

// Communication model: a nominal graph whose links fail independently at each
// synchronous round, and the mixing matrices built from the surviving links.
//
// Metropolis weights need no tuning constant: with nominal degrees
// d_i = |N_i| + 1, the off-diagonal row sum is at most (d_i - 1)/d_i, so the
// diagonal is at least 1/max_i d_i on every round.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dersim/errors.hpp"
#include "dersim/problem.hpp"
#include "dersim/rng.hpp"

namespace dersim {

enum class GraphMode { undirected, directed };

inline const char* to_string(GraphMode mode) { return mode == GraphMode::directed ? "directed" : "undirected"; }

inline GraphMode parse_graph_mode(const std::string& token) {
  if (token == "undirected") return GraphMode::undirected;
  if (token == "directed") return GraphMode::directed;
  throw ConfigError("unknown graph mode '" + token + "' (expected undirected or directed)");
}

/// Undirected edge {from, to} or directed arc from -> to.
struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// One flag per nominal edge, in nominal edge order.
using ActiveSet = std::vector<bool>;

/// Connectivity of the subgraph formed by the edges whose mask bit is set
/// (every edge when the mask is empty). Directed mode tests strong connectivity.
inline bool is_connected(std::size_t n, const std::vector<Edge>& edges, GraphMode mode, const ActiveSet& mask = {}) {
  if (n <= 1) return true;
  std::vector<std::vector<std::size_t>> fwd(n);
  std::vector<std::vector<std::size_t>> bwd(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!mask.empty() && !mask[e]) continue;
    fwd[edges[e].from].push_back(edges[e].to);
    bwd[edges[e].to].push_back(edges[e].from);
    if (mode == GraphMode::undirected) {
      fwd[edges[e].to].push_back(edges[e].from);
      bwd[edges[e].from].push_back(edges[e].to);
    }
  }
  auto reaches_all = [n](const std::vector<std::vector<std::size_t>>& adj) {
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (const std::size_t w : adj[u]) {
        if (!seen[w]) {
          seen[w] = true;
          ++count;
          stack.push_back(w);
        }
      }
    }
    return count == n;
  };
  return reaches_all(fwd) && (mode == GraphMode::undirected || reaches_all(bwd));
}

class NominalGraph {
 public:
  NominalGraph() = default;

  /// Validates indices, self-loops, duplicates and (strong) connectivity.
  NominalGraph(std::size_t n, std::vector<Edge> edges, GraphMode mode)
      : n_(n), edges_(std::move(edges)), mode_(mode), out_(n_), in_(n_) {
    if (n_ == 0) throw InvalidInstanceError("graph has no nodes");
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto [u, w] = edges_[e];
      if (u >= n_ || w >= n_) {
        throw InvalidInstanceError("edge " + std::to_string(e) + " references a node outside [0, " +
                                   std::to_string(n_) + ")");
      }
      if (u == w) throw InvalidInstanceError("edge " + std::to_string(e) + " is a self-loop at node " + std::to_string(u));
      const std::pair<std::size_t, std::size_t> key =
          mode_ == GraphMode::undirected ? std::pair{std::min(u, w), std::max(u, w)} : std::pair{u, w};
      if (!seen.emplace(key, e).second) {
        throw InvalidInstanceError("edge " + std::to_string(e) + " duplicates edge " + std::to_string(seen[key]));
      }
      out_[u].push_back(e);
      in_[w].push_back(e);
    }
    if (!is_connected(n_, edges_, mode_)) {
      throw InvalidInstanceError(mode_ == GraphMode::directed ? "nominal graph is not strongly connected"
                                                              : "nominal graph is not connected");
    }
  }

  std::size_t size() const { return n_; }
  GraphMode mode() const { return mode_; }
  bool directed() const { return mode_ == GraphMode::directed; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  /// Undirected nominal degree |N_i| + 1.
  std::size_t degree(std::size_t i) const { return out_[i].size() + in_[i].size() + 1; }

  /// Directed nominal out-degree |N_i^+| + 1.
  std::size_t out_degree(std::size_t i) const { return out_[i].size() + 1; }

  /// Indices of arcs leaving / entering node i (directed); for undirected graphs
  /// these split the incident edges by stored orientation.
  const std::vector<std::size_t>& out_edges(std::size_t i) const { return out_[i]; }
  const std::vector<std::size_t>& in_edges(std::size_t i) const { return in_[i]; }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  GraphMode mode_ = GraphMode::undirected;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
};

/// Nominal graph plus independent per-round link failures with probability q.
/// Undirected edges fail as a unit; directed arcs fail independently.
struct GraphSchedule {
  NominalGraph nominal;
  double failure_probability = 0.0;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;
  /// Edges that are down on every round regardless of the draw.
  std::vector<std::size_t> forced_down;

  GraphSchedule() = default;
  GraphSchedule(NominalGraph graph, double q, std::uint64_t seed_value, std::size_t horizon_value,
                std::vector<std::size_t> always_down = {})
      : nominal(std::move(graph)),
        failure_probability(q),
        seed(seed_value),
        horizon(horizon_value),
        forced_down(std::move(always_down)) {
    if (!(q >= 0.0 && q < 1.0)) throw ConfigError("failure probability must lie in [0, 1)");
    for (const auto e : forced_down) {
      if (e >= nominal.edge_count()) throw ConfigError("forced-down edge index out of range");
    }
  }

  ActiveSet sample_active(std::size_t k) const {
    if (k >= horizon) {
      throw ConfigError("sample_active: round " + std::to_string(k) + " is beyond horizon " + std::to_string(horizon));
    }
    const std::size_t m = nominal.edge_count();
    ActiveSet active(m);
    for (std::size_t e = 0; e < m; ++e) {
      active[e] = rng::to_unit(rng::draw(seed, rng::Stream::link_failure, k, e)) >= failure_probability;
    }
    for (const auto e : forced_down) active[e] = false;
    return active;
  }

  /// FNV-1a over everything that determines the sampled sets.
  std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t word) {
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (word >> (8 * byte)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    };
    for (const char c : rng::kGeneratorName) mix(static_cast<unsigned char>(c));
    mix(seed);
    mix(std::bit_cast<std::uint64_t>(failure_probability));
    mix(horizon);
    mix(nominal.size());
    mix(nominal.directed() ? 1 : 0);
    for (const auto& e : nominal.edges()) {
      mix(e.from);
      mix(e.to);
    }
    for (const auto e : forced_down) mix(e);
    return h;
  }
};

/// Verdict per complete window [jB, (j+1)B - 1] of the horizon: is the union of
/// active sets (strongly) connected?
inline std::vector<bool> check_B_connectivity(const GraphSchedule& schedule, std::size_t B) {
  if (B == 0) throw ConfigError("connectivity window B must be positive");
  const auto& g = schedule.nominal;
  std::vector<bool> verdicts;
  for (std::size_t start = 0; start + B <= schedule.horizon; start += B) {
    ActiveSet unioned(g.edge_count(), false);
    for (std::size_t k = start; k < start + B; ++k) {
      const ActiveSet a = schedule.sample_active(k);
      for (std::size_t e = 0; e < a.size(); ++e) unioned[e] = unioned[e] || a[e];
    }
    verdicts.push_back(is_connected(g.size(), g.edges(), g.mode(), unioned));
  }
  return verdicts;
}

/// Smallest B <= max_window for which every complete window of the horizon is
/// (strongly) connected, if any.
inline std::optional<std::size_t> smallest_connectivity_window(const GraphSchedule& schedule,
                                                               std::size_t max_window) {
  for (std::size_t B = 1; B <= std::min(max_window, schedule.horizon); ++B) {
    const auto verdicts = check_B_connectivity(schedule, B);
    if (std::all_of(verdicts.begin(), verdicts.end(), [](bool ok) { return ok; })) return B;
  }
  return std::nullopt;
}

/// w_ij = 1 / max(d_i, d_j) on active edges, w_ii = 1 - sum_j w_ij.
inline Matrix metropolis_weights(const NominalGraph& g, const ActiveSet& active) {
  if (g.directed()) throw ConfigError("metropolis_weights requires an undirected graph");
  if (active.size() != g.edge_count()) throw DimensionError("active edge set", g.edge_count(), active.size());
  const auto n = static_cast<Eigen::Index>(g.size());
  Matrix w = Matrix::Zero(n, n);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    if (!active[e]) continue;
    const auto [i, j] = g.edges()[e];
    const double weight = 1.0 / static_cast<double>(std::max(g.degree(i), g.degree(j)));
    w(i, j) = weight;
    w(j, i) = weight;
  }
  for (Eigen::Index i = 0; i < n; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return w;
}

/// P_ij = 1 / D_j^+[k] for active arcs j -> i and for i = j, where D_j^+[k]
/// counts node j's active out-arcs plus itself. Column stochastic.
inline Matrix push_matrix(const NominalGraph& g, const ActiveSet& active) {
  if (!g.directed()) throw ConfigError("push_matrix requires a directed graph");
  if (active.size() != g.edge_count()) throw DimensionError("active arc set", g.edge_count(), active.size());
  const auto n = static_cast<Eigen::Index>(g.size());
  std::vector<double> out_degree(g.size(), 1.0);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    if (active[e]) out_degree[g.edges()[e].from] += 1.0;
  }
  Matrix p = Matrix::Zero(n, n);
  for (std::size_t j = 0; j < g.size(); ++j) p(j, j) = 1.0 / out_degree[j];
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    if (!active[e]) continue;
    const auto [j, i] = g.edges()[e];
    p(i, j) = 1.0 / out_degree[j];
  }
  return p;
}

/// Bijection between nominal arcs and virtual nodes n, ..., N - 1 (0-based),
/// N = n + |E|. Arc e maps to virtual node n + e.
class VirtualIndexMap {
 public:
  VirtualIndexMap() = default;

  explicit VirtualIndexMap(const NominalGraph& g) : n_(g.size()) {
    if (!g.directed()) throw ConfigError("virtual nodes are defined for directed graphs only");
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
      by_arc_.emplace(std::pair{g.edges()[e].from, g.edges()[e].to}, n_ + e);
      arcs_.push_back(g.edges()[e]);
    }
  }

  std::size_t real_count() const { return n_; }
  std::size_t size() const { return n_ + arcs_.size(); }
  std::size_t virtual_of_edge(std::size_t e) const { return n_ + e; }

  std::size_t virtual_of(std::size_t from, std::size_t to) const {
    const auto it = by_arc_.find({from, to});
    if (it == by_arc_.end()) {
      throw InvalidInstanceError("no nominal arc " + std::to_string(from) + " -> " + std::to_string(to));
    }
    return it->second;
  }

  /// Arc carried by virtual node `index`.
  Edge arc_of(std::size_t index) const {
    if (index < n_ || index >= size()) throw InvalidInstanceError("index " + std::to_string(index) + " is not virtual");
    return arcs_[index - n_];
  }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> arcs_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> by_arc_;
};

/// N x N column-stochastic matrix over real and virtual nodes, using nominal
/// out-degrees d_j^+ only. For arc j -> i with virtual node l:
///   active:   P(i,j) = gamma/d_j, P(l,j) = (1-gamma)/d_j, P(i,l) = gamma, P(l,l) = 1-gamma
///   inactive: P(l,j) = 1/d_j, P(l,l) = 1
/// and P(j,j) = 1/d_j for every real node.
inline Matrix augmented_push_matrix(const NominalGraph& g, const ActiveSet& active, double gamma,
                                    const VirtualIndexMap& map) {
  if (!g.directed()) throw ConfigError("augmented_push_matrix requires a directed graph");
  if (active.size() != g.edge_count()) throw DimensionError("active arc set", g.edge_count(), active.size());
  if (map.size() != g.size() + g.edge_count()) throw DimensionError("virtual index map", g.size() + g.edge_count(), map.size());
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  const auto big_n = static_cast<Eigen::Index>(map.size());
  Matrix p = Matrix::Zero(big_n, big_n);
  for (std::size_t j = 0; j < g.size(); ++j) p(j, j) = 1.0 / static_cast<double>(g.out_degree(j));
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto [j, i] = g.edges()[e];
    const auto l = static_cast<Eigen::Index>(map.virtual_of_edge(e));
    const double share = 1.0 / static_cast<double>(g.out_degree(j));
    if (active[e]) {
      p(i, j) = gamma * share;
      p(l, j) = (1.0 - gamma) * share;
      p(i, l) = gamma;
      p(l, l) = 1.0 - gamma;
    } else {
      p(l, j) = share;
      p(l, l) = 1.0;
    }
  }
  return p;
}

/// Largest |column sum - 1| of a matrix.
inline double column_stochasticity_defect(const Matrix& m) {
  return (m.colwise().sum().array() - 1.0).abs().maxCoeff();
}

// --- Text format: header "n m mode", then m lines "i j" (0-based). ---

namespace detail {

/// Next non-blank, non-comment line; tracks 1-based line numbers.
inline bool next_content_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

/// Column (1-based) of the first character of the field that failed to parse.
inline std::size_t column_of_field(const std::string& line, std::size_t field) {
  std::size_t pos = 0;
  for (std::size_t f = 0;; ++f) {
    pos = line.find_first_not_of(" \t", pos);
    if (pos == std::string::npos) return line.size() + 1;
    if (f == field) return pos + 1;
    pos = line.find_first_of(" \t", pos);
    if (pos == std::string::npos) return line.size() + 1;
  }
}

}  // namespace detail

inline NominalGraph read_graph(std::istream& in, std::size_t& line_no) {
  std::string line;
  if (!detail::next_content_line(in, line, line_no)) throw ParseError("missing graph header 'n m mode'", line_no + 1);
  std::istringstream header(line);
  long long n = -1;
  long long m = -1;
  std::string mode_token;
  if (!(header >> n >> m >> mode_token) || n <= 0 || m < 0) {
    throw ParseError("graph header must be 'n m mode' with n > 0, m >= 0", line_no, 1);
  }
  GraphMode mode;
  try {
    mode = parse_graph_mode(mode_token);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), line_no, detail::column_of_field(line, 2));
  }
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(m));
  for (long long e = 0; e < m; ++e) {
    if (!detail::next_content_line(in, line, line_no)) {
      throw ParseError("expected " + std::to_string(m) + " edges, found " + std::to_string(e), line_no + 1);
    }
    std::istringstream row(line);
    long long i = -1;
    long long j = -1;
    if (!(row >> i) || i < 0) throw ParseError("bad edge endpoint", line_no, detail::column_of_field(line, 0));
    if (!(row >> j) || j < 0) throw ParseError("bad edge endpoint", line_no, detail::column_of_field(line, 1));
    edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
  }
  try {
    return NominalGraph(static_cast<std::size_t>(n), std::move(edges), mode);
  } catch (const InvalidInstanceError& e) {
    throw ParseError(std::string("invalid graph: ") + e.what(), line_no);
  }
}

inline NominalGraph read_graph(std::istream& in) {
  std::size_t line_no = 0;
  return read_graph(in, line_no);
}

inline void write_graph(std::ostream& out, const NominalGraph& g) {
  out << g.size() << ' ' << g.edge_count() << ' ' << to_string(g.mode()) << '\n';
  for (const auto& e : g.edges()) out << e.from << ' ' << e.to << '\n';
}

// --- Generators ---

/// Branch list of the IEEE 39-bus system (0-based bus indices), used only as
/// a communication topology.
inline std::vector<Edge> ieee39_lines() {
  static constexpr std::pair<int, int> kLines[] = {
      {1, 2},   {1, 39},  {2, 3},   {2, 25},  {2, 30},  {3, 4},   {3, 18},  {4, 5},   {4, 14},  {5, 6},
      {5, 8},   {6, 7},   {6, 11},  {6, 31},  {7, 8},   {8, 9},   {9, 39},  {10, 11}, {10, 13}, {10, 32},
      {12, 11}, {12, 13}, {13, 14}, {14, 15}, {15, 16}, {16, 17}, {16, 19}, {16, 21}, {16, 24}, {17, 18},
      {17, 27}, {19, 20}, {19, 33}, {20, 34}, {21, 22}, {22, 23}, {22, 35}, {23, 24}, {23, 36}, {25, 26},
      {25, 37}, {26, 27}, {26, 28}, {26, 29}, {28, 29}, {29, 38}};
  std::vector<Edge> edges;
  for (const auto& [a, b] : kLines) edges.push_back({static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1)});
  return edges;
}

/// Turns undirected lines into arcs: both directions everywhere, then greedily
/// drops the reverse arc of each line (in order) while strong connectivity
/// survives. Bridges keep both directions.
inline std::vector<Edge> orient_strongly_connected(std::size_t n, const std::vector<Edge>& lines) {
  std::vector<Edge> arcs;
  for (const auto& e : lines) {
    arcs.push_back({e.from, e.to});
    arcs.push_back({e.to, e.from});
  }
  ActiveSet keep(arcs.size(), true);
  for (std::size_t e = 1; e < arcs.size(); e += 2) {
    keep[e] = false;
    if (!is_connected(n, arcs, GraphMode::directed, keep)) keep[e] = true;
  }
  std::vector<Edge> out;
  for (std::size_t e = 0; e < arcs.size(); ++e) {
    if (keep[e]) out.push_back(arcs[e]);
  }
  return out;
}

/// Random connected graph: a random spanning tree (node i attaches to a random
/// earlier node) plus each remaining pair with probability `extra`. Directed
/// mode starts from a Hamiltonian cycle instead so the result is strongly connected.
inline NominalGraph random_graph(std::size_t n, double extra, GraphMode mode, std::uint64_t seed) {
  rng::Sequence draw(seed, rng::Stream::graph);
  std::vector<Edge> edges;
  std::map<std::pair<std::size_t, std::size_t>, bool> used;
  auto add = [&](std::size_t a, std::size_t b) {
    const std::pair<std::size_t, std::size_t> key =
        mode == GraphMode::undirected ? std::pair{std::min(a, b), std::max(a, b)} : std::pair{a, b};
    if (a == b || used.count(key) != 0) return;
    used[key] = true;
    edges.push_back({a, b});
  };
  if (mode == GraphMode::undirected) {
    for (std::size_t i = 1; i < n; ++i) add(static_cast<std::size_t>(draw.below(i)), i);
  } else if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) add(i, (i + 1) % n);
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b || (mode == GraphMode::undirected && b < a)) continue;
      if (draw.uniform() < extra) add(a, b);
    }
  }
  return NominalGraph(n, std::move(edges), mode);
}

}  // namespace dersim
