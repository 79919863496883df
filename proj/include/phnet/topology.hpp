#pragma once

// Benchmark graphs: complete, Erdos-Renyi, square lattice and Watts-Strogatz.

#include <cstddef>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "phnet/error.hpp"
#include "phnet/numerics.hpp"
#include "phnet/rng.hpp"

namespace phnet {

/// Undirected simple graph on nodes [0, n). Edges are stored as (i, j), i < j.
struct Graph {
  std::size_t n = 0;
  std::set<std::pair<std::size_t, std::size_t>> edges;

  void add_edge(std::size_t i, std::size_t j) {
    require(i != j, ErrorKind::structure, "Graph: self-loops are not allowed");
    require(i < n && j < n, ErrorKind::structure, "Graph: node index out of range");
    edges.emplace(std::min(i, j), std::max(i, j));
  }
  void remove_edge(std::size_t i, std::size_t j) { edges.erase({std::min(i, j), std::max(i, j)}); }
  bool has_edge(std::size_t i, std::size_t j) const { return edges.count({std::min(i, j), std::max(i, j)}) > 0; }

  std::size_t degree(std::size_t i) const {
    std::size_t d = 0;
    for (const auto& [a, b] : edges) d += (a == i) + (b == i);
    return d;
  }

  friend bool operator==(const Graph&, const Graph&) = default;
};

namespace topo {
struct Complete {};
struct ErdosRenyi {
  double p = 0.3;
};
struct SquareLattice {
  std::size_t rows = 0;
  std::size_t cols = 0;
};
struct WattsStrogatz {
  std::size_t k = 5;
  double p_rewire = 0.3;
};
}  // namespace topo

using TopologyKind = std::variant<topo::Complete, topo::ErdosRenyi, topo::SquareLattice, topo::WattsStrogatz>;

inline std::string topology_name(const TopologyKind& kind) {
  struct {
    std::string operator()(const topo::Complete&) const { return "complete"; }
    std::string operator()(const topo::ErdosRenyi&) const { return "erdos_renyi"; }
    std::string operator()(const topo::SquareLattice&) const { return "square_lattice"; }
    std::string operator()(const topo::WattsStrogatz&) const { return "watts_strogatz"; }
  } visitor;
  return std::visit(visitor, kind);
}

namespace detail {

inline void check_probability(double p, const char* what) {
  require(p >= 0.0 && p <= 1.0, ErrorKind::configuration, std::string(what) + " must lie in [0, 1]");
}

// Offsets from node i to its clockwise ring neighbours. Odd k adds the
// antipodal chord so every node has degree exactly k before rewiring.
inline std::vector<std::size_t> ring_offsets(std::size_t n, std::size_t k) {
  std::vector<std::size_t> off;
  for (std::size_t o = 1; o <= k / 2; ++o) off.push_back(o);
  if (k % 2 == 1) off.push_back(n / 2);
  return off;
}

}  // namespace detail

/// Ring lattice used as the Watts-Strogatz starting point.
inline Graph ring_lattice(std::size_t n, std::size_t k) {
  require(k > 0 && k < n, ErrorKind::configuration, "watts_strogatz: need 0 < k < n");
  require(k % 2 == 0 || n % 2 == 0, ErrorKind::configuration,
          "watts_strogatz: odd degree k needs an even node count");
  Graph g{n, {}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o : detail::ring_offsets(n, k)) g.add_edge(i, (i + o) % n);
  return g;
}

inline Graph generate(const TopologyKind& kind, std::size_t n, SeededRng& rng) {
  require(n > 0, ErrorKind::configuration, "topology: node count must be positive");
  Graph g{n, {}};
  if (std::holds_alternative<topo::Complete>(kind)) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) g.add_edge(i, j);
  } else if (const auto* er = std::get_if<topo::ErdosRenyi>(&kind)) {
    detail::check_probability(er->p, "erdos_renyi p");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < er->p) g.add_edge(i, j);
  } else if (const auto* sq = std::get_if<topo::SquareLattice>(&kind)) {
    require(sq->rows * sq->cols == n, ErrorKind::configuration, "square_lattice: rows*cols must equal n");
    for (std::size_t r = 0; r < sq->rows; ++r)
      for (std::size_t c = 0; c < sq->cols; ++c) {
        const std::size_t v = r * sq->cols + c;
        if (c + 1 < sq->cols) g.add_edge(v, v + 1);
        if (r + 1 < sq->rows) g.add_edge(v, v + sq->cols);
      }
  } else {
    const auto& ws = std::get<topo::WattsStrogatz>(kind);
    detail::check_probability(ws.p_rewire, "watts_strogatz p_rewire");
    g = ring_lattice(n, ws.k);
    const auto offsets = detail::ring_offsets(n, ws.k);
    // Rewire in (node, offset) order; the antipodal chord is owned by the lower half.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o : offsets) {
        if (ws.k % 2 == 1 && o == n / 2 && i >= n / 2) continue;
        if (rng.uniform() >= ws.p_rewire) continue;
        const std::size_t far = (i + o) % n;
        std::vector<std::size_t> candidates;
        for (std::size_t w = 0; w < n; ++w)
          if (w != i && !g.has_edge(i, w)) candidates.push_back(w);
        if (candidates.empty()) continue;
        const std::size_t w = candidates[rng.index(candidates.size())];
        g.remove_edge(i, far);
        g.add_edge(i, w);
      }
    }
  }
  return g;
}

/// Symmetric 0/1 matrix with zero diagonal.
inline Mat adjacency(const Graph& g) {
  Mat p(g.n, g.n);
  for (const auto& [i, j] : g.edges) {
    p(i, j) = 1.0;
    p(j, i) = 1.0;
  }
  return p;
}

/// Communication pattern: the adjacency with the diagonal switched on, so each
/// sub-controller always sees its own subsystem.
inline BlockMask comm_mask(const Graph& g) {
  std::vector<std::uint8_t> m(g.n * g.n, 0);
  for (std::size_t i = 0; i < g.n; ++i) m[i * g.n + i] = 1;
  for (const auto& [i, j] : g.edges) {
    m[i * g.n + j] = 1;
    m[j * g.n + i] = 1;
  }
  return BlockMask::scalar(g.n, std::move(m));
}

inline Graph empty_graph(std::size_t n) { return Graph{n, {}}; }

/// "n <count>" followed by one ascending "i j" line per edge.
inline std::string to_edge_list(const Graph& g) {
  std::ostringstream os;
  os << "n " << g.n << '\n';
  for (const auto& [i, j] : g.edges) os << i << ' ' << j << '\n';
  return os.str();
}

inline Graph parse_edge_list(const std::string& text) {
  std::istringstream is(text);
  std::string tag;
  Graph g;
  require(static_cast<bool>(is >> tag >> g.n) && tag == "n", ErrorKind::configuration,
          "edge list: first line must be 'n <count>'");
  std::size_t i = 0, j = 0;
  while (is >> i >> j) g.add_edge(i, j);
  require(is.eof(), ErrorKind::configuration, "edge list: malformed edge line");
  return g;
}

}  // namespace phnet
