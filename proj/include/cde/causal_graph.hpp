#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cde/error.hpp"

namespace cde {

enum class NodeKind { observed, latent, outcome, selection, intervention };

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> parse_node_kind(std::string_view token);

using NodeId = std::size_t;
using NodeSet = std::set<std::string>;

struct Node {
  std::string name;
  NodeKind kind = NodeKind::observed;

  friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
  std::string from;
  std::string to;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

bool is_identifier(std::string_view name);

/// Directed acyclic graph with typed nodes.
///
/// Nodes are stored sorted by name, so NodeIds are canonical for a given
/// node set and two graphs compare equal iff they have the same nodes,
/// kinds and edges regardless of declaration order. Immutable once built.
class CausalDag {
 public:
  CausalDag() = default;

  /// Validates and builds; throws GraphError on duplicate nodes, bad names,
  /// unknown or duplicate edges, cycles, more than one selection node, a
  /// selection node with children, or a malformed intervention node.
  CausalDag(std::vector<Node> nodes, const std::vector<Edge>& edges);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  std::size_t edge_count() const noexcept { return edge_count_; }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::vector<Edge> edges() const;

  std::optional<NodeId> find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name).has_value(); }
  /// Throws GraphError("unknown node ...") if absent.
  NodeId id(std::string_view name) const;

  const std::string& name(NodeId v) const { return nodes_.at(v).name; }
  NodeKind kind(NodeId v) const { return nodes_.at(v).kind; }
  const std::vector<NodeId>& parents(NodeId v) const { return parents_.at(v); }
  const std::vector<NodeId>& children(NodeId v) const { return children_.at(v); }

  bool has_edge(NodeId from, NodeId to) const;
  bool adjacent(NodeId a, NodeId b) const { return has_edge(a, b) || has_edge(b, a); }

  std::optional<NodeId> selection() const;
  std::vector<NodeId> nodes_of_kind(NodeKind kind) const;

  // Reflexive closures: every seed is its own ancestor and descendant.
  std::vector<bool> ancestor_mask(const std::vector<NodeId>& seeds) const;
  std::vector<bool> descendant_mask(const std::vector<NodeId>& seeds) const;

  friend bool operator==(const CausalDag& a, const CausalDag& b) {
    return a.nodes_ == b.nodes_ && a.parents_ == b.parents_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<std::vector<NodeId>> parents_;
  std::vector<std::vector<NodeId>> children_;
  std::size_t edge_count_ = 0;
};

/// Line format: `# comment`, `node NAME [observed|latent|outcome|selection|intervention]`,
/// `edge FROM TO`. Blank lines ignored.
CausalDag parse_graph(std::string_view text);

/// Nodes sorted by name, then edges sorted lexicographically.
std::string serialize_graph(const CausalDag& dag);

std::string intervention_name(std::string_view target);

/// Adds a parentless node `sigma_T` with the single edge sigma_T -> T for each
/// target. Targets must be observed nodes.
CausalDag augment_with_interventions(const CausalDag& dag,
                                     const std::vector<std::string>& targets);

/// The intervention node whose only child is `target`, if present.
std::optional<NodeId> intervention_for(const CausalDag& dag, NodeId target);

NodeSet ancestors(const CausalDag& dag, std::string_view node);
NodeSet descendants(const CausalDag& dag, std::string_view node);

NodeSet to_names(const CausalDag& dag, const std::vector<bool>& mask);
std::string format_set(const NodeSet& set);

}  // namespace cde
