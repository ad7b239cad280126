#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cde/causal_graph.hpp"

namespace cde {

/// Sequence of distinct node names, consecutive members adjacent in either direction.
using Path = std::vector<std::string>;

inline constexpr std::size_t kPathEnumerationNodeLimit = 16;

/// True iff both path neighbours of path[index] point into it.
bool is_collider(const CausalDag& dag, const Path& path, std::size_t index);

/// A path is blocked by C if some non-collider middle node is in C, or some
/// collider has no (reflexive) descendant in C.
bool path_blocked(const CausalDag& dag, const Path& path, const NodeSet& conditioning);

/// Linear-time reachability over (node, direction) states. The three sets must
/// be pairwise disjoint, a and b nonempty.
bool d_separated(const CausalDag& dag, const NodeSet& a, const NodeSet& b, const NodeSet& c);

/// All simple paths from a to b in deterministic (name-ordered DFS) order.
/// Guarded to graphs of at most kPathEnumerationNodeLimit nodes.
std::vector<Path> enumerate_paths(const CausalDag& dag, std::string_view a, std::string_view b);

/// First path between a member of a and a member of b that c leaves unblocked,
/// found by DFS that prunes partial paths as soon as they are blocked.
std::optional<Path> find_open_path(const CausalDag& dag, const NodeSet& a, const NodeSet& b,
                                   const NodeSet& c);

/// Renders with arrows, e.g. "GENO -> BEHAVE <- UNOBSERVED".
std::string format_path(const CausalDag& dag, const Path& path);

}  // namespace cde
