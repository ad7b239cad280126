#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cde/causal_graph.hpp"

namespace cde {

/// Contrast of interest: set X from x0 to x1 while holding M at m0. The
/// reference values document the contrast; the log-linear model used for
/// estimation has no interaction, so they do not enter any computation.
struct DirectEffectQuery {
  std::string x;
  std::string m;
  std::string y;
  double x0 = 0.0;
  double x1 = 1.0;
  double m0 = 0.0;
};

enum class Route { regression, g_estimation, none };
std::string_view to_string(Route route);

struct ConditionResult {
  std::string name;
  bool holds = false;
  std::string query;  // the d-separation statement that decided it
};

struct IdentificationReport {
  Route route = Route::none;
  NodeSet w;
  NodeSet z;
  std::vector<ConditionResult> conditions;
  std::vector<std::string> caveats;
};

inline constexpr std::size_t kAdjustmentCandidateLimit = 16;

/// x and m observed, y observed or outcome, all distinct; if the graph
/// declares an outcome node it must be y.
void validate_query(const CausalDag& dag, const DirectEffectQuery& query);

/// Adds sigma nodes for x and m unless already present.
CausalDag augment_for_query(const CausalDag& dag, const DirectEffectQuery& query);

/// c0a: W indep (sigma_X, sigma_M); c0b: Y indep (sigma_X, sigma_M) | (X, M, W).
std::vector<ConditionResult> check_regression_conditions(const CausalDag& dag,
                                                         const DirectEffectQuery& query,
                                                         const NodeSet& w);

/// c1: W indep sigma_X; c2: Z indep sigma_M; c3: Y indep sigma_X | (X, W);
/// c4: Y indep sigma_M | (X, M, Z, W).
std::vector<ConditionResult> check_gcomp_conditions(const CausalDag& dag,
                                                    const DirectEffectQuery& query,
                                                    const NodeSet& w, const NodeSet& z);

/// X indep S | (Y, M, W). Requires a selection node.
ConditionResult check_collapsibility(const CausalDag& dag, const DirectEffectQuery& query,
                                     const NodeSet& w);

/// Enumerates candidate sets over the observed nodes other than x, m, y.
/// Regression is preferred over g-estimation; within a route smaller sets
/// win, then lexicographic order.
IdentificationReport search_adjustment_sets(const CausalDag& dag,
                                            const DirectEffectQuery& query);

std::string render_text(const IdentificationReport& report);
std::string render_kv(const IdentificationReport& report);

}  // namespace cde
