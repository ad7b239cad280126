#include "cde/identify.hpp"

#include <algorithm>
#include <cstdint>
#include <map>

#include "cde/dsep.hpp"
#include "cde/kv.hpp"

namespace cde {

std::string_view to_string(Route route) {
  switch (route) {
    case Route::regression: return "regression";
    case Route::g_estimation: return "g-estimation";
    case Route::none: return "none";
  }
  return "none";
}

namespace {

bool is_plain_observed(NodeKind k) { return k == NodeKind::observed; }

struct Sigmas {
  std::string x;
  std::string m;
};

Sigmas sigma_nodes(const CausalDag& dag, const DirectEffectQuery& q) {
  const auto sx = intervention_for(dag, dag.id(q.x));
  const auto sm = intervention_for(dag, dag.id(q.m));
  if (!sx) throw QueryError("graph not augmented: no intervention node for '" + q.x + "'");
  if (!sm) throw QueryError("graph not augmented: no intervention node for '" + q.m + "'");
  return {dag.name(*sx), dag.name(*sm)};
}

void validate_adjustment(const CausalDag& dag, const DirectEffectQuery& q, const NodeSet& set,
                         std::string_view label) {
  for (const auto& n : set) {
    if (n == q.x || n == q.m || n == q.y) {
      throw QueryError(std::string(label) + " overlaps query node '" + n + "'");
    }
    const NodeKind k = dag.kind(dag.id(n));
    if (!is_plain_observed(k)) {
      throw QueryError(std::string(label) + " member '" + n + "' is a " +
                       std::string(to_string(k)) + " node");
    }
  }
}

NodeSet united(std::initializer_list<NodeSet> sets) {
  NodeSet out;
  for (const auto& s : sets) out.insert(s.begin(), s.end());
  return out;
}

std::string statement(const NodeSet& a, const NodeSet& b, const NodeSet& c) {
  return format_set(a) + " _||_ " + format_set(b) + " | " + format_set(c);
}

ConditionResult dsep_condition(const CausalDag& dag, std::string name, const NodeSet& a,
                               const NodeSet& b, const NodeSet& c) {
  if (a.empty() || b.empty()) {
    return {std::move(name), true, "vacuous: " + statement(a, b, c)};
  }
  return {std::move(name), d_separated(dag, a, b, c), statement(a, b, c)};
}

bool all_hold(const std::vector<ConditionResult>& v) {
  return std::all_of(v.begin(), v.end(), [](const ConditionResult& r) { return r.holds; });
}

// All subsets of a pool of `pool_size` name-sorted nodes as bitmasks, bucketed
// by size; each bucket is in lexicographic order of member names.
std::vector<std::vector<std::uint32_t>> subsets_by_size(std::size_t pool_size) {
  std::vector<std::vector<std::uint32_t>> buckets(pool_size + 1);
  const std::uint32_t count = 1u << pool_size;
  for (std::uint32_t s = 0; s < count; ++s) {
    buckets[static_cast<std::size_t>(__builtin_popcount(s))].push_back(s);
  }
  auto members = [pool_size](std::uint32_t s) {
    std::vector<std::size_t> m;
    for (std::size_t i = 0; i < pool_size; ++i) {
      if (s & (1u << i)) m.push_back(i);
    }
    return m;
  };
  for (auto& b : buckets) {
    std::sort(b.begin(), b.end(),
              [&](std::uint32_t a, std::uint32_t c) { return members(a) < members(c); });
  }
  return buckets;
}

NodeSet subset_names(const std::vector<std::string>& pool, std::uint32_t mask) {
  NodeSet out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (mask & (1u << i)) out.insert(pool[i]);
  }
  return out;
}

}  // namespace

void validate_query(const CausalDag& dag, const DirectEffectQuery& q) {
  const NodeId x = dag.id(q.x);
  const NodeId m = dag.id(q.m);
  const NodeId y = dag.id(q.y);
  if (x == m || x == y || m == y) throw QueryError("x, m and y must be distinct nodes");
  if (!is_plain_observed(dag.kind(x))) throw QueryError("exposure '" + q.x + "' must be observed");
  if (!is_plain_observed(dag.kind(m))) throw QueryError("mediator '" + q.m + "' must be observed");
  const NodeKind yk = dag.kind(y);
  if (yk != NodeKind::outcome && yk != NodeKind::observed) {
    throw QueryError("outcome '" + q.y + "' must be observed");
  }
  for (NodeId v : dag.nodes_of_kind(NodeKind::outcome)) {
    if (v != y) {
      throw QueryError("graph declares outcome node '" + dag.name(v) + "' but query outcome is '" +
                       q.y + "'");
    }
  }
}

CausalDag augment_for_query(const CausalDag& dag, const DirectEffectQuery& q) {
  validate_query(dag, q);
  std::vector<std::string> targets;
  if (!intervention_for(dag, dag.id(q.x))) targets.push_back(q.x);
  if (!intervention_for(dag, dag.id(q.m))) targets.push_back(q.m);
  return targets.empty() ? dag : augment_with_interventions(dag, targets);
}

std::vector<ConditionResult> check_regression_conditions(const CausalDag& dag,
                                                         const DirectEffectQuery& q,
                                                         const NodeSet& w) {
  validate_query(dag, q);
  validate_adjustment(dag, q, w, "W");
  const auto s = sigma_nodes(dag, q);
  const NodeSet sig{s.x, s.m};
  return {dsep_condition(dag, "c0a", w, sig, {}),
          dsep_condition(dag, "c0b", {q.y}, sig, united({{q.x, q.m}, w}))};
}

std::vector<ConditionResult> check_gcomp_conditions(const CausalDag& dag,
                                                    const DirectEffectQuery& q, const NodeSet& w,
                                                    const NodeSet& z) {
  validate_query(dag, q);
  validate_adjustment(dag, q, w, "W");
  validate_adjustment(dag, q, z, "Z");
  for (const auto& n : w) {
    if (z.count(n)) throw QueryError("W and Z overlap at '" + n + "'");
  }
  const auto s = sigma_nodes(dag, q);
  return {dsep_condition(dag, "c1", w, {s.x}, {}),
          dsep_condition(dag, "c2", z, {s.m}, {}),
          dsep_condition(dag, "c3", {q.y}, {s.x}, united({{q.x}, w})),
          dsep_condition(dag, "c4", {q.y}, {s.m}, united({{q.x, q.m}, z, w}))};
}

ConditionResult check_collapsibility(const CausalDag& dag, const DirectEffectQuery& q,
                                     const NodeSet& w) {
  validate_query(dag, q);
  validate_adjustment(dag, q, w, "W");
  const auto sel = dag.selection();
  if (!sel) throw QueryError("collapsibility needs a selection node");
  return dsep_condition(dag, "collapsibility", {q.x}, {dag.name(*sel)},
                        united({{q.y, q.m}, w}));
}

IdentificationReport search_adjustment_sets(const CausalDag& dag, const DirectEffectQuery& q) {
  validate_query(dag, q);
  sigma_nodes(dag, q);

  std::vector<std::string> pool;
  for (const auto& n : dag.nodes()) {
    if (is_plain_observed(n.kind) && n.name != q.x && n.name != q.m && n.name != q.y) {
      pool.push_back(n.name);
    }
  }
  if (pool.size() > kAdjustmentCandidateLimit) {
    throw QueryError("adjustment search limited to " + std::to_string(kAdjustmentCandidateLimit) +
                     " candidate nodes (graph has " + std::to_string(pool.size()) + ")");
  }
  const bool has_selection = dag.selection().has_value();
  const auto by_size = subsets_by_size(pool.size());

  IdentificationReport report;
  if (has_selection) {
    report.caveats.push_back(
        "rare-disease assumption required for case-control data; it cannot be checked "
        "on the graph");
  }

  for (const auto& bucket : by_size) {
    for (std::uint32_t wm : bucket) {
      const NodeSet w = subset_names(pool, wm);
      auto conds = check_regression_conditions(dag, q, w);
      if (has_selection) conds.push_back(check_collapsibility(dag, q, w));
      if (all_hold(conds)) {
        report.route = Route::regression;
        report.w = w;
        report.conditions = std::move(conds);
        return report;
      }
    }
  }

  // (W, Z) disjoint pairs ordered by total size, then |W|, then W, then Z.
  // c1, c3 and collapsibility depend on W only and are cached per W.
  std::map<std::uint32_t, bool> w_ok;
  auto w_passes = [&](std::uint32_t wm) {
    if (auto it = w_ok.find(wm); it != w_ok.end()) return it->second;
    const NodeSet w = subset_names(pool, wm);
    auto conds = check_gcomp_conditions(dag, q, w, {});
    bool ok = conds[0].holds && conds[2].holds;
    if (ok && has_selection) ok = check_collapsibility(dag, q, w).holds;
    w_ok.emplace(wm, ok);
    return ok;
  };
  for (std::size_t total = 0; total <= pool.size(); ++total) {
    for (std::size_t wsize = 0; wsize <= total; ++wsize) {
      for (std::uint32_t wm : by_size[wsize]) {
        if (!w_passes(wm)) continue;
        const NodeSet w = subset_names(pool, wm);
        for (std::uint32_t zm : by_size[total - wsize]) {
          if (zm & wm) continue;
          const NodeSet z = subset_names(pool, zm);
          auto conds = check_gcomp_conditions(dag, q, w, z);
          if (has_selection) conds.push_back(check_collapsibility(dag, q, w));
          if (all_hold(conds)) {
            report.route = Route::g_estimation;
            report.w = w;
            report.z = z;
            report.conditions = std::move(conds);
            return report;
          }
        }
      }
    }
  }

  report.route = Route::none;
  auto conds = check_regression_conditions(dag, q, {});
  auto g = check_gcomp_conditions(dag, q, {}, {});
  conds.insert(conds.end(), g.begin(), g.end());
  if (has_selection) conds.push_back(check_collapsibility(dag, q, {}));
  report.conditions = std::move(conds);
  return report;
}

std::string render_text(const IdentificationReport& r) {
  std::string out;
  out += "route: " + std::string(to_string(r.route)) + "\n";
  out += "W: " + format_set(r.w) + "\n";
  out += "Z: " + format_set(r.z) + "\n";
  out += "conditions:\n";
  for (const auto& c : r.conditions) {
    out += "  " + c.name + (c.holds ? "  holds   " : "  FAILS   ") + c.query + "\n";
  }
  for (const auto& c : r.caveats) out += "caveat: " + c + "\n";
  return out;
}

std::string render_kv(const IdentificationReport& r) {
  auto csv = [](const NodeSet& s) {
    std::string o;
    for (const auto& n : s) o += (o.empty() ? "" : ",") + n;
    return o;
  };
  KvEntries kv{{"route", std::string(to_string(r.route))}, {"w", csv(r.w)}, {"z", csv(r.z)}};
  for (const auto& c : r.conditions) {
    kv.emplace_back("condition." + c.name, std::string(c.holds ? "true" : "false") + ";" + c.query);
  }
  for (const auto& c : r.caveats) kv.emplace_back("caveat", c);
  return write_kv(kv);
}

}  // namespace cde
