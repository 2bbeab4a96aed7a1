#include "lesionseg/graphcut.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

namespace lesionseg {

FlowNetwork::FlowNetwork(int node_count) {
  if (node_count < 1) throw std::invalid_argument("network needs nodes");
  first_arc_.assign(node_count, -1);
  source_cap_.assign(node_count, 0.0);
  sink_cap_.assign(node_count, 0.0);
}

void FlowNetwork::add_edge(int u, int v, double cap_uv, double cap_vu) {
  if (u < 0 || v < 0 || u >= node_count() || v >= node_count() || u == v)
    throw std::invalid_argument("bad edge endpoints");
  if (cap_uv < 0.0 || cap_vu < 0.0)
    throw std::invalid_argument("negative capacity");
  const int a = static_cast<int>(arcs_.size());
  arcs_.push_back({v, first_arc_[u], cap_uv});
  first_arc_[u] = a;
  arcs_.push_back({u, first_arc_[v], cap_vu});
  first_arc_[v] = a + 1;
}

void FlowNetwork::add_terminal(int node, double to_source, double to_sink) {
  if (node < 0 || node >= node_count())
    throw std::invalid_argument("bad terminal node");
  if (to_source < 0.0 || to_sink < 0.0)
    throw std::invalid_argument("negative terminal capacity");
  source_cap_[node] += to_source;
  sink_cap_[node] += to_sink;
}

namespace {
constexpr int kParentNone = -1;
constexpr int kParentTerminal = -2;
enum : std::uint8_t { kFree = 0, kS = 1, kT = 2 };
}  // namespace

// Boykov-Kolmogorov augmenting search with S/T tree reuse.
struct MaxFlowSolver {
  FlowNetwork& g;
  std::vector<double> t_resid;   // merged terminal residual (+source, -sink)
  std::vector<std::uint8_t> tree;
  std::vector<int> parent;       // arc from node toward its parent
  std::vector<int> dist;
  std::vector<long> stamp;
  long time = 0;
  double flow = 0.0;
  std::deque<int> active;
  std::deque<int> orphans;
  std::vector<int> walk_buf;

  explicit MaxFlowSolver(FlowNetwork& net) : g(net) {
    const int n = g.node_count();
    t_resid.resize(n);
    tree.assign(n, kFree);
    parent.assign(n, kParentNone);
    dist.assign(n, 0);
    stamp.assign(n, -1);
    for (int p = 0; p < n; ++p) {
      if (g.source_cap_[p] >= kInfiniteCapacity &&
          g.sink_cap_[p] >= kInfiniteCapacity)
        throw std::runtime_error("contradictory clamp: node " +
                                 std::to_string(p) +
                                 " tied to both terminals");
      flow += std::min(g.source_cap_[p], g.sink_cap_[p]);
      t_resid[p] = g.source_cap_[p] - g.sink_cap_[p];
      if (t_resid[p] > 0.0) {
        tree[p] = kS;
        parent[p] = kParentTerminal;
        dist[p] = 1;
        active.push_back(p);
      } else if (t_resid[p] < 0.0) {
        tree[p] = kT;
        parent[p] = kParentTerminal;
        dist[p] = 1;
        active.push_back(p);
      }
    }
  }

  double residual_toward(int node, int arc) const {
    // Residual available for sending flow toward `node` along `arc` when the
    // node sits in the S tree (flow arrives) or from it when in the T tree.
    return tree[node] == kS ? g.arcs_[arc ^ 1].r_cap : g.arcs_[arc].r_cap;
  }

  // Grow the trees from active nodes until an S->T bridge arc is found.
  int grow() {
    while (!active.empty()) {
      const int p = active.front();
      if (tree[p] == kFree) {
        active.pop_front();
        continue;
      }
      bool bridge_found = false;
      int bridge = -1;
      for (int a = g.first_arc_[p]; a != -1; a = g.arcs_[a].next) {
        const int q = g.arcs_[a].head;
        const double usable =
            tree[p] == kS ? g.arcs_[a].r_cap : g.arcs_[a ^ 1].r_cap;
        if (usable <= 0.0) continue;
        if (tree[q] == kFree) {
          tree[q] = tree[p];
          parent[q] = a ^ 1;  // arc q -> p
          dist[q] = dist[p] + 1;
          stamp[q] = stamp[p];
          active.push_back(q);
        } else if (tree[q] != tree[p]) {
          bridge = tree[p] == kS ? a : (a ^ 1);
          bridge_found = true;
          break;
        }
      }
      if (bridge_found) return bridge;
      active.pop_front();
    }
    return -1;
  }

  void augment(int bridge) {
    const int u = g.arcs_[bridge ^ 1].head;  // tail (S side)
    const int v = g.arcs_[bridge].head;      // head (T side)

    double bottleneck = g.arcs_[bridge].r_cap;
    int s_root = u;
    while (parent[s_root] != kParentTerminal) {
      bottleneck = std::min(bottleneck, g.arcs_[parent[s_root] ^ 1].r_cap);
      s_root = g.arcs_[parent[s_root]].head;
    }
    bottleneck = std::min(bottleneck, t_resid[s_root]);
    int t_root = v;
    while (parent[t_root] != kParentTerminal) {
      bottleneck = std::min(bottleneck, g.arcs_[parent[t_root]].r_cap);
      t_root = g.arcs_[parent[t_root]].head;
    }
    bottleneck = std::min(bottleneck, -t_resid[t_root]);

    g.arcs_[bridge].r_cap -= bottleneck;
    g.arcs_[bridge ^ 1].r_cap += bottleneck;

    for (int x = u; parent[x] != kParentTerminal;) {
      const int pa = parent[x];
      g.arcs_[pa ^ 1].r_cap -= bottleneck;
      g.arcs_[pa].r_cap += bottleneck;
      const int next = g.arcs_[pa].head;
      if (g.arcs_[pa ^ 1].r_cap <= 0.0) {
        parent[x] = kParentNone;
        orphans.push_back(x);
      }
      x = next;
    }
    t_resid[s_root] -= bottleneck;
    if (t_resid[s_root] <= 0.0) {
      parent[s_root] = kParentNone;
      orphans.push_back(s_root);
    }
    for (int x = v; parent[x] != kParentTerminal;) {
      const int pa = parent[x];
      g.arcs_[pa].r_cap -= bottleneck;
      g.arcs_[pa ^ 1].r_cap += bottleneck;
      const int next = g.arcs_[pa].head;
      if (g.arcs_[pa].r_cap <= 0.0) {
        parent[x] = kParentNone;
        orphans.push_back(x);
      }
      x = next;
    }
    t_resid[t_root] += bottleneck;
    if (t_resid[t_root] >= 0.0) {
      parent[t_root] = kParentNone;
      orphans.push_back(t_root);
    }
    flow += bottleneck;
  }

  // Distance to a terminal through valid parents; -1 when the chain dead-ends
  // in an orphan. Stamps the walked path for reuse within one adoption pass.
  int origin_distance(int q) {
    walk_buf.clear();
    int x = q;
    int tail_dist;
    while (true) {
      if (stamp[x] == time) {
        tail_dist = dist[x];
        break;
      }
      const int pa = parent[x];
      if (pa == kParentNone) return -1;
      if (pa == kParentTerminal) {
        stamp[x] = time;
        dist[x] = 1;
        tail_dist = 1;
        break;
      }
      walk_buf.push_back(x);
      x = g.arcs_[pa].head;
    }
    int d = tail_dist + static_cast<int>(walk_buf.size());
    int dd = d;
    for (int node : walk_buf) {
      stamp[node] = time;
      dist[node] = dd--;
    }
    return d;
  }

  void adopt() {
    ++time;
    while (!orphans.empty()) {
      const int p = orphans.front();
      orphans.pop_front();
      const std::uint8_t t = tree[p];

      int best_arc = -1;
      int best_dist = std::numeric_limits<int>::max();
      for (int a = g.first_arc_[p]; a != -1; a = g.arcs_[a].next) {
        const int q = g.arcs_[a].head;
        if (tree[q] != t) continue;
        const double resid = t == kS ? g.arcs_[a ^ 1].r_cap : g.arcs_[a].r_cap;
        if (resid <= 0.0) continue;
        const int d = origin_distance(q);
        if (d >= 0 && d < best_dist) {
          best_dist = d;
          best_arc = a;
        }
      }
      if (best_arc != -1) {
        parent[p] = best_arc;
        stamp[p] = time;
        dist[p] = best_dist + 1;
        continue;
      }

      // No parent: p leaves the tree; neighbors may need to re-grow or become
      // orphans themselves.
      for (int a = g.first_arc_[p]; a != -1; a = g.arcs_[a].next) {
        const int q = g.arcs_[a].head;
        if (tree[q] != t) continue;
        const double resid = t == kS ? g.arcs_[a ^ 1].r_cap : g.arcs_[a].r_cap;
        if (resid > 0.0) active.push_back(q);
        if (parent[q] == (a ^ 1)) {
          parent[q] = kParentNone;
          orphans.push_back(q);
        }
      }
      tree[p] = kFree;
      parent[p] = kParentNone;
    }
  }

  void run() {
    while (true) {
      const int bridge = grow();
      if (bridge < 0) break;
      augment(bridge);
      adopt();
    }
  }
};

MaxFlowResult max_flow(FlowNetwork net) {
  const int n = net.node_count();
  // Capture originals for the flow accounting exposed to callers.
  std::vector<double> orig_arc_cap(net.arcs_.size());
  for (std::size_t a = 0; a < net.arcs_.size(); ++a)
    orig_arc_cap[a] = net.arcs_[a].r_cap;
  std::vector<double> orig_t(n);
  for (int p = 0; p < n; ++p)
    orig_t[p] = net.source_cap_[p] - net.sink_cap_[p];

  MaxFlowSolver solver(net);
  solver.run();

  MaxFlowResult res;
  res.flow = solver.flow;

  // Labeling from residual reachability; its cut value equals the flow.
  res.side.assign(n, CutSide::sink);
  std::deque<int> queue;
  for (int p = 0; p < n; ++p) {
    if (solver.t_resid[p] > 0.0) {
      res.side[p] = CutSide::source;
      queue.push_back(p);
    }
  }
  while (!queue.empty()) {
    const int p = queue.front();
    queue.pop_front();
    for (int a = net.first_arc_[p]; a != -1; a = net.arcs_[a].next) {
      const int q = net.arcs_[a].head;
      if (res.side[q] == CutSide::sink && net.arcs_[a].r_cap > 0.0) {
        res.side[q] = CutSide::source;
        queue.push_back(q);
      }
    }
  }

  res.edge_net_flow.resize(net.arcs_.size() / 2);
  for (std::size_t e = 0; e < res.edge_net_flow.size(); ++e)
    res.edge_net_flow[e] = orig_arc_cap[2 * e] - net.arcs_[2 * e].r_cap;
  res.terminal_net_flow.resize(n);
  for (int p = 0; p < n; ++p)
    res.terminal_net_flow[p] = orig_t[p] - solver.t_resid[p];
  return res;
}

FlowNetwork build_grid(int width, int height,
                       const std::vector<double>& unary_source,
                       const std::vector<double>& unary_sink,
                       const GridWeights& weights, int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    throw std::invalid_argument("connectivity must be 4 or 8");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (unary_source.size() != n || unary_sink.size() != n)
    throw std::invalid_argument("unary shape mismatch");
  const std::size_t ne = static_cast<std::size_t>(width - 1) * height;
  const std::size_t ns = static_cast<std::size_t>(width) * (height - 1);
  const std::size_t nd = static_cast<std::size_t>(width - 1) * (height - 1);
  if (weights.east.size() != ne || weights.south.size() != ns)
    throw std::invalid_argument("pairwise shape mismatch");
  if (connectivity == 8) {
    if (weights.south_east.size() != nd || weights.south_west.size() != nd)
      throw std::invalid_argument("pairwise shape mismatch");
  } else if (!weights.south_east.empty() || !weights.south_west.empty()) {
    throw std::invalid_argument("diagonal weights given for 4-connectivity");
  }

  FlowNetwork net(static_cast<int>(n));
  for (std::size_t i = 0; i < n; ++i)
    net.add_terminal(static_cast<int>(i), unary_source[i], unary_sink[i]);
  const auto id = [width](int x, int y) { return y * width + x; };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x + 1 < width; ++x) {
      const double w = weights.east[static_cast<std::size_t>(y) * (width - 1) + x];
      net.add_edge(id(x, y), id(x + 1, y), w, w);
    }
  for (int y = 0; y + 1 < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double w = weights.south[static_cast<std::size_t>(y) * width + x];
      net.add_edge(id(x, y), id(x, y + 1), w, w);
    }
  if (connectivity == 8) {
    for (int y = 0; y + 1 < height; ++y)
      for (int x = 0; x + 1 < width; ++x) {
        const double wse =
            weights.south_east[static_cast<std::size_t>(y) * (width - 1) + x];
        net.add_edge(id(x, y), id(x + 1, y + 1), wse, wse);
        const double wsw =
            weights.south_west[static_cast<std::size_t>(y) * (width - 1) + x];
        net.add_edge(id(x + 1, y), id(x, y + 1), wsw, wsw);
      }
  }
  return net;
}

}  // namespace lesionseg
