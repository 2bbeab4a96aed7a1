#pragma once

#include <cstdint>
#include <vector>

namespace lesionseg {

// Sentinel treated as an uncuttable capacity; strictly larger than any
// finite cut the callers can produce.
inline constexpr double kInfiniteCapacity = 1e18;

enum class CutSide : std::uint8_t { source = 0, sink = 1 };

struct MaxFlowResult;

// Capacitated s/t network over explicit nodes plus per-node terminal links.
// One instance is solved once; solving consumes the residual capacities.
class FlowNetwork {
 public:
  explicit FlowNetwork(int node_count);

  // Adds the arc pair u->v / v->u with the given capacities (>= 0).
  void add_edge(int u, int v, double cap_uv, double cap_vu);
  // Accumulates terminal capacities for a node.
  void add_terminal(int node, double to_source, double to_sink);

  int node_count() const { return static_cast<int>(first_arc_.size()); }
  int edge_count() const { return static_cast<int>(arcs_.size() / 2); }

 private:
  struct Arc {
    int head;      // target node
    int next;      // next arc out of the same tail node, -1 terminates
    double r_cap;  // residual capacity
  };
  std::vector<Arc> arcs_;           // sibling of arc a is a ^ 1
  std::vector<int> first_arc_;      // per-node arc list head
  std::vector<double> source_cap_;  // raw accumulated terminal capacities
  std::vector<double> sink_cap_;

  friend struct MaxFlowSolver;
  friend MaxFlowResult max_flow(FlowNetwork net);
};

struct MaxFlowResult {
  double flow = 0.0;
  std::vector<CutSide> side;
  // Residual accounting for audits: net flow along each added edge (positive
  // in the u->v direction, indexed by add_edge order) and net flow received
  // from the terminals per node (positive = from source).
  std::vector<double> edge_net_flow;
  std::vector<double> terminal_net_flow;
};

// Exact max-flow / min-cut (Boykov-Kolmogorov style augmenting search with
// tree reuse). The labeling is the residual-reachability cut, so its cut
// value equals the returned flow. Throws on a node clamped to both
// terminals.
MaxFlowResult max_flow(FlowNetwork net);

// Pairwise weights of a grid graph, one array per neighbor direction.
// east:       (x, y) - (x+1, y),   size (w-1) * h,      index y*(w-1) + x
// south:      (x, y) - (x, y+1),   size w * (h-1),      index y*w + x
// south_east: (x, y) - (x+1, y+1), size (w-1) * (h-1),  index y*(w-1) + x
// south_west: (x, y) - (x-1, y+1), size (w-1) * (h-1),  index y*(w-1) + (x-1)
struct GridWeights {
  std::vector<double> east;
  std::vector<double> south;
  std::vector<double> south_east;
  std::vector<double> south_west;
};

// One node per pixel (id = y*w + x), symmetric n-links from the weight
// arrays, t-links from the unary arrays (size w*h). connectivity is 4 or 8;
// diagonal arrays must be empty for 4.
FlowNetwork build_grid(int width, int height,
                       const std::vector<double>& unary_source,
                       const std::vector<double>& unary_sink,
                       const GridWeights& weights, int connectivity);

}  // namespace lesionseg
