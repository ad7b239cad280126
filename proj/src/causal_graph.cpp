#include "cde/causal_graph.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "cde/kv.hpp"

namespace cde {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::observed: return "observed";
    case NodeKind::latent: return "latent";
    case NodeKind::outcome: return "outcome";
    case NodeKind::selection: return "selection";
    case NodeKind::intervention: return "intervention";
  }
  return "observed";
}

std::optional<NodeKind> parse_node_kind(std::string_view token) {
  for (auto k : {NodeKind::observed, NodeKind::latent, NodeKind::outcome,
                 NodeKind::selection, NodeKind::intervention}) {
    if (to_string(k) == token) return k;
  }
  return std::nullopt;
}

bool is_identifier(std::string_view name) {
  if (name.empty()) return false;
  auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!alpha(name.front())) return false;
  return std::all_of(name.begin() + 1, name.end(), [&](char c) { return alpha(c) || digit(c); });
}

namespace {

// Returns one directed cycle (first node repeated at the end), or empty.
std::vector<NodeId> find_cycle(const std::vector<std::vector<NodeId>>& children) {
  const std::size_t n = children.size();
  enum class Mark { white, grey, black };
  std::vector<Mark> mark(n, Mark::white);
  std::vector<NodeId> stack;
  std::vector<NodeId> cycle;

  // Iterative DFS with an explicit (node, next-child) frame stack.
  for (NodeId root = 0; root < n && cycle.empty(); ++root) {
    if (mark[root] != Mark::white) continue;
    std::vector<std::pair<NodeId, std::size_t>> frames{{root, 0}};
    mark[root] = Mark::grey;
    stack.assign(1, root);
    while (!frames.empty() && cycle.empty()) {
      auto& [v, next] = frames.back();
      if (next == children[v].size()) {
        mark[v] = Mark::black;
        frames.pop_back();
        stack.pop_back();
        continue;
      }
      const NodeId c = children[v][next++];
      if (mark[c] == Mark::grey) {
        auto it = std::find(stack.begin(), stack.end(), c);
        cycle.assign(it, stack.end());
        cycle.push_back(c);
      } else if (mark[c] == Mark::white) {
        mark[c] = Mark::grey;
        stack.push_back(c);
        frames.emplace_back(c, 0);
      }
    }
  }
  return cycle;
}

}  // namespace

CausalDag::CausalDag(std::vector<Node> nodes, const std::vector<Edge>& edges) {
  std::sort(nodes.begin(), nodes.end(),
            [](const Node& a, const Node& b) { return a.name < b.name; });
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!is_identifier(nodes[i].name)) {
      throw GraphError("invalid node name '" + nodes[i].name + "'");
    }
    if (i > 0 && nodes[i].name == nodes[i - 1].name) {
      throw GraphError("duplicate node '" + nodes[i].name + "'");
    }
  }
  nodes_ = std::move(nodes);
  parents_.assign(nodes_.size(), {});
  children_.assign(nodes_.size(), {});

  for (const auto& e : edges) {
    const auto from = find(e.from);
    const auto to = find(e.to);
    if (!from) throw GraphError("unknown edge endpoint '" + e.from + "'");
    if (!to) throw GraphError("unknown edge endpoint '" + e.to + "'");
    if (*from == *to) throw GraphError("cycle detected: " + e.from + " -> " + e.to);
    auto& ch = children_[*from];
    if (std::find(ch.begin(), ch.end(), *to) != ch.end()) {
      throw GraphError("duplicate edge " + e.from + " -> " + e.to);
    }
    ch.push_back(*to);
    parents_[*to].push_back(*from);
    ++edge_count_;
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());
  for (auto& c : children_) std::sort(c.begin(), c.end());

  if (const auto cycle = find_cycle(children_); !cycle.empty()) {
    std::string msg = "cycle detected: ";
    for (std::size_t i = 0; i < cycle.size(); ++i) {
      if (i > 0) msg += " -> ";
      msg += nodes_[cycle[i]].name;
    }
    throw GraphError(msg);
  }

  std::optional<NodeId> sel;
  for (NodeId v = 0; v < nodes_.size(); ++v) {
    switch (nodes_[v].kind) {
      case NodeKind::selection:
        if (sel) {
          throw GraphError("two selection nodes: '" + nodes_[*sel].name + "' and '" +
                           nodes_[v].name + "'");
        }
        sel = v;
        if (!children_[v].empty()) {
          throw GraphError("selection node '" + nodes_[v].name + "' has a child");
        }
        break;
      case NodeKind::intervention:
        if (!parents_[v].empty() || children_[v].size() != 1) {
          throw GraphError("intervention node '" + nodes_[v].name +
                           "' must have no parents and exactly one child");
        }
        break;
      default:
        break;
    }
  }
}

std::vector<Edge> CausalDag::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count_);
  for (NodeId v = 0; v < nodes_.size(); ++v) {
    for (NodeId c : children_[v]) out.push_back({nodes_[v].name, nodes_[c].name});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<NodeId> CausalDag::find(std::string_view name) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), name,
                             [](const Node& n, std::string_view key) { return n.name < key; });
  if (it == nodes_.end() || it->name != name) return std::nullopt;
  return static_cast<NodeId>(it - nodes_.begin());
}

NodeId CausalDag::id(std::string_view name) const {
  if (auto v = find(name)) return *v;
  throw GraphError("unknown node '" + std::string(name) + "'");
}

bool CausalDag::has_edge(NodeId from, NodeId to) const {
  const auto& ch = children_.at(from);
  return std::binary_search(ch.begin(), ch.end(), to);
}

std::optional<NodeId> CausalDag::selection() const {
  for (NodeId v = 0; v < nodes_.size(); ++v) {
    if (nodes_[v].kind == NodeKind::selection) return v;
  }
  return std::nullopt;
}

std::vector<NodeId> CausalDag::nodes_of_kind(NodeKind kind) const {
  std::vector<NodeId> out;
  for (NodeId v = 0; v < nodes_.size(); ++v) {
    if (nodes_[v].kind == kind) out.push_back(v);
  }
  return out;
}

namespace {

std::vector<bool> closure(const std::vector<std::vector<NodeId>>& next,
                          const std::vector<NodeId>& seeds) {
  std::vector<bool> seen(next.size(), false);
  std::deque<NodeId> queue;
  for (NodeId s : seeds) {
    if (!seen.at(s)) {
      seen[s] = true;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    for (NodeId w : next[v]) {
      if (!seen[w]) {
        seen[w] = true;
        queue.push_back(w);
      }
    }
  }
  return seen;
}

}  // namespace

std::vector<bool> CausalDag::ancestor_mask(const std::vector<NodeId>& seeds) const {
  return closure(parents_, seeds);
}

std::vector<bool> CausalDag::descendant_mask(const std::vector<NodeId>& seeds) const {
  return closure(children_, seeds);
}

CausalDag parse_graph(std::string_view text) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    std::istringstream in{std::string(trim(line))};
    std::vector<std::string> tok;
    for (std::string t; in >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    const auto where = "line " + std::to_string(line_no) + ": ";
    if (tok[0] == "node") {
      if (tok.size() < 2 || tok.size() > 3) {
        throw GraphError(where + "expected 'node NAME [kind]'");
      }
      NodeKind kind = NodeKind::observed;
      if (tok.size() == 3) {
        const auto k = parse_node_kind(tok[2]);
        if (!k) throw GraphError(where + "unknown node kind '" + tok[2] + "'");
        kind = *k;
      }
      if (!is_identifier(tok[1])) throw GraphError(where + "invalid node name '" + tok[1] + "'");
      nodes.push_back({tok[1], kind});
    } else if (tok[0] == "edge") {
      if (tok.size() != 3) throw GraphError(where + "expected 'edge FROM TO'");
      edges.push_back({tok[1], tok[2]});
    } else {
      throw GraphError(where + "unknown directive '" + tok[0] + "'");
    }
  }
  return CausalDag(std::move(nodes), edges);
}

std::string serialize_graph(const CausalDag& dag) {
  std::string out;
  for (const auto& n : dag.nodes()) {
    out += "node " + n.name;
    if (n.kind != NodeKind::observed) {
      out += ' ';
      out += to_string(n.kind);
    }
    out += '\n';
  }
  for (const auto& e : dag.edges()) out += "edge " + e.from + ' ' + e.to + '\n';
  return out;
}

std::string intervention_name(std::string_view target) {
  return "sigma_" + std::string(target);
}

CausalDag augment_with_interventions(const CausalDag& dag,
                                     const std::vector<std::string>& targets) {
  std::vector<Node> nodes = dag.nodes();
  std::vector<Edge> edges = dag.edges();
  NodeSet added;
  for (const auto& t : targets) {
    const NodeId v = dag.id(t);
    if (dag.kind(v) != NodeKind::observed) {
      throw GraphError("cannot add intervention for " + std::string(to_string(dag.kind(v))) +
                       " node '" + t + "'");
    }
    const auto sigma = intervention_name(t);
    if (dag.contains(sigma) || !added.insert(sigma).second) {
      throw GraphError("intervention node name '" + sigma + "' collides with an existing node");
    }
    nodes.push_back({sigma, NodeKind::intervention});
    edges.push_back({sigma, t});
  }
  return CausalDag(std::move(nodes), edges);
}

std::optional<NodeId> intervention_for(const CausalDag& dag, NodeId target) {
  for (NodeId p : dag.parents(target)) {
    if (dag.kind(p) == NodeKind::intervention) return p;
  }
  return std::nullopt;
}

NodeSet to_names(const CausalDag& dag, const std::vector<bool>& mask) {
  NodeSet out;
  for (NodeId v = 0; v < mask.size(); ++v) {
    if (mask[v]) out.insert(dag.name(v));
  }
  return out;
}

NodeSet ancestors(const CausalDag& dag, std::string_view node) {
  return to_names(dag, dag.ancestor_mask({dag.id(node)}));
}

NodeSet descendants(const CausalDag& dag, std::string_view node) {
  return to_names(dag, dag.descendant_mask({dag.id(node)}));
}

std::string format_set(const NodeSet& set) {
  std::string out = "{";
  bool first = true;
  for (const auto& s : set) {
    if (!first) out += ',';
    out += s;
    first = false;
  }
  return out + "}";
}

}  // namespace cde
