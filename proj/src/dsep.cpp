#include "cde/dsep.hpp"

#include <algorithm>

namespace cde {

namespace {

std::vector<NodeId> resolve_path(const CausalDag& dag, const Path& path) {
  if (path.size() < 2) throw QueryError("invalid path: fewer than two nodes");
  std::vector<NodeId> ids;
  ids.reserve(path.size());
  for (const auto& name : path) ids.push_back(dag.id(name));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      if (ids[i] == ids[j]) throw QueryError("invalid path: repeated node '" + path[i] + "'");
    }
    if (i + 1 < ids.size() && !dag.adjacent(ids[i], ids[i + 1])) {
      throw QueryError("invalid path: '" + path[i] + "' and '" + path[i + 1] +
                       "' are not adjacent");
    }
  }
  return ids;
}

std::vector<bool> mask_of(const CausalDag& dag, const NodeSet& set) {
  std::vector<bool> mask(dag.size(), false);
  for (const auto& n : set) mask[dag.id(n)] = true;
  return mask;
}

bool triple_blocks(const CausalDag& dag, NodeId prev, NodeId mid, NodeId next,
                   const std::vector<bool>& in_c, const std::vector<bool>& anc_c) {
  const bool collider = dag.has_edge(prev, mid) && dag.has_edge(next, mid);
  // mid has a descendant in C iff mid is an ancestor of C.
  return collider ? !anc_c[mid] : in_c[mid];
}

std::vector<NodeId> neighbours(const CausalDag& dag, NodeId v) {
  std::vector<NodeId> out = dag.parents(v);
  out.insert(out.end(), dag.children(v).begin(), dag.children(v).end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

bool is_collider(const CausalDag& dag, const Path& path, std::size_t index) {
  const auto ids = resolve_path(dag, path);
  if (index < 1 || index + 1 >= ids.size()) {
    throw QueryError("invalid collider index " + std::to_string(index) + " for path of length " +
                     std::to_string(ids.size()));
  }
  return dag.has_edge(ids[index - 1], ids[index]) && dag.has_edge(ids[index + 1], ids[index]);
}

bool path_blocked(const CausalDag& dag, const Path& path, const NodeSet& conditioning) {
  const auto ids = resolve_path(dag, path);
  const auto in_c = mask_of(dag, conditioning);
  std::vector<NodeId> seeds;
  for (NodeId v = 0; v < in_c.size(); ++v) {
    if (in_c[v]) seeds.push_back(v);
  }
  const auto anc_c = dag.ancestor_mask(seeds);
  for (std::size_t i = 1; i + 1 < ids.size(); ++i) {
    if (triple_blocks(dag, ids[i - 1], ids[i], ids[i + 1], in_c, anc_c)) return true;
  }
  return false;
}

bool d_separated(const CausalDag& dag, const NodeSet& a, const NodeSet& b, const NodeSet& c) {
  if (a.empty() || b.empty()) throw QueryError("d-separation query needs nonempty node sets");
  const auto in_a = mask_of(dag, a);
  const auto in_b = mask_of(dag, b);
  const auto in_c = mask_of(dag, c);
  for (NodeId v = 0; v < dag.size(); ++v) {
    if ((in_a[v] && in_b[v]) || (in_a[v] && in_c[v]) || (in_b[v] && in_c[v])) {
      throw QueryError("d-separation sets overlap at '" + dag.name(v) + "'");
    }
  }
  std::vector<NodeId> c_ids;
  for (NodeId v = 0; v < dag.size(); ++v) {
    if (in_c[v]) c_ids.push_back(v);
  }
  const auto anc_c = dag.ancestor_mask(c_ids);

  // State (v, up): reached v from one of its children, i.e. travelling
  // against edge direction. (v, down): reached v from a parent.
  const std::size_t n = dag.size();
  std::vector<bool> seen_up(n, false), seen_down(n, false);
  std::vector<std::pair<NodeId, bool>> stack;
  for (NodeId v = 0; v < n; ++v) {
    if (in_a[v]) stack.emplace_back(v, true);
  }
  while (!stack.empty()) {
    const auto [v, up] = stack.back();
    stack.pop_back();
    auto& seen = up ? seen_up : seen_down;
    if (seen[v]) continue;
    seen[v] = true;
    if (!in_c[v] && in_b[v]) return false;

    if (up) {
      if (in_c[v]) continue;
      for (NodeId p : dag.parents(v)) stack.emplace_back(p, true);
      for (NodeId ch : dag.children(v)) stack.emplace_back(ch, false);
    } else {
      if (!in_c[v]) {
        for (NodeId ch : dag.children(v)) stack.emplace_back(ch, false);
      }
      // A collider at v is open when v has a descendant in C.
      if (anc_c[v]) {
        for (NodeId p : dag.parents(v)) stack.emplace_back(p, true);
      }
    }
  }
  return true;
}

std::vector<Path> enumerate_paths(const CausalDag& dag, std::string_view a, std::string_view b) {
  if (dag.size() > kPathEnumerationNodeLimit) {
    throw QueryError("path enumeration limited to " + std::to_string(kPathEnumerationNodeLimit) +
                     " nodes (graph has " + std::to_string(dag.size()) + ")");
  }
  const NodeId src = dag.id(a);
  const NodeId dst = dag.id(b);
  std::vector<Path> out;
  if (src == dst) return out;

  std::vector<std::vector<NodeId>> nbr(dag.size());
  for (NodeId v = 0; v < dag.size(); ++v) nbr[v] = neighbours(dag, v);

  std::vector<NodeId> current{src};
  std::vector<bool> on_path(dag.size(), false);
  on_path[src] = true;
  auto dfs = [&](auto&& self, NodeId v) -> void {
    for (NodeId w : nbr[v]) {
      if (on_path[w]) continue;
      current.push_back(w);
      if (w == dst) {
        Path p;
        for (NodeId id : current) p.push_back(dag.name(id));
        out.push_back(std::move(p));
      } else {
        on_path[w] = true;
        self(self, w);
        on_path[w] = false;
      }
      current.pop_back();
    }
  };
  dfs(dfs, src);
  return out;
}

std::optional<Path> find_open_path(const CausalDag& dag, const NodeSet& a, const NodeSet& b,
                                   const NodeSet& c) {
  const auto in_a = mask_of(dag, a);
  const auto in_b = mask_of(dag, b);
  const auto in_c = mask_of(dag, c);
  std::vector<NodeId> c_ids;
  for (NodeId v = 0; v < dag.size(); ++v) {
    if (in_c[v]) c_ids.push_back(v);
  }
  const auto anc_c = dag.ancestor_mask(c_ids);

  std::vector<std::vector<NodeId>> nbr(dag.size());
  for (NodeId v = 0; v < dag.size(); ++v) nbr[v] = neighbours(dag, v);

  std::vector<NodeId> current;
  std::vector<bool> on_path(dag.size(), false);
  auto dfs = [&](auto&& self) -> bool {
    const NodeId v = current.back();
    for (NodeId w : nbr[v]) {
      if (on_path[w] || in_a[w]) continue;
      if (current.size() >= 2 &&
          triple_blocks(dag, current[current.size() - 2], v, w, in_c, anc_c)) {
        continue;
      }
      current.push_back(w);
      if (in_b[w]) return true;
      on_path[w] = true;
      if (self(self)) return true;
      on_path[w] = false;
      current.pop_back();
    }
    return false;
  };
  for (NodeId s = 0; s < dag.size(); ++s) {
    if (!in_a[s]) continue;
    current.assign(1, s);
    on_path[s] = true;
    if (dfs(dfs)) {
      Path p;
      for (NodeId id : current) p.push_back(dag.name(id));
      return p;
    }
    on_path[s] = false;
  }
  return std::nullopt;
}

std::string format_path(const CausalDag& dag, const Path& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) {
      const bool forward = dag.has_edge(dag.id(path[i - 1]), dag.id(path[i]));
      out += forward ? " -> " : " <- ";
    }
    out += path[i];
  }
  return out;
}

}  // namespace cde
