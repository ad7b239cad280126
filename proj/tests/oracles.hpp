#pragma once

// Reference implementations used only by the tests. They follow different
// algorithms from the library code they check.

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cde/causal_graph.hpp"
#include "cde/matched_data.hpp"

namespace oracle {

inline std::string data_path(const std::string& rel) { return std::string(CDE_DATA_DIR) + "/" + rel; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline cde::CausalDag load_graph(const std::string& rel) {
  return cde::parse_graph(slurp(data_path(rel)));
}

/// Random DAG on nodes V0..V{n-1}; edges only go from lower to higher index
/// in a random permutation, each present with probability p.
inline cde::CausalDag random_dag(std::mt19937_64& rng, int n, double p) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::bernoulli_distribution coin(p);
  std::vector<cde::Node> nodes;
  std::vector<cde::Edge> edges;
  for (int i = 0; i < n; ++i) nodes.push_back({"V" + std::to_string(i), cde::NodeKind::observed});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (coin(rng)) edges.push_back({"V" + std::to_string(order[i]), "V" + std::to_string(order[j])});
    }
  }
  return cde::CausalDag(nodes, edges);
}

/// Moralised ancestral graph criterion: A and B are d-separated by C iff
/// they are disconnected in the moral graph of An(A u B u C) after deleting C.
inline bool moral_dsep(const cde::CausalDag& dag, const cde::NodeSet& a, const cde::NodeSet& b,
                       const cde::NodeSet& c) {
  const std::size_t n = dag.size();
  std::vector<bool> keep(n, false);
  std::vector<std::size_t> stack;
  for (const auto* s : {&a, &b, &c}) {
    for (const auto& name : *s) stack.push_back(dag.id(name));
  }
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    if (keep[v]) continue;
    keep[v] = true;
    for (auto p : dag.parents(v)) stack.push_back(p);
  }
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t v = 0; v < n; ++v) {
    if (!keep[v]) continue;
    const auto& ps = dag.parents(v);
    for (auto p : ps) adj[p][v] = adj[v][p] = true;
    for (auto p : ps) {
      for (auto q : ps) {
        if (p != q) adj[p][q] = true;
      }
    }
  }
  std::vector<bool> blocked(n, false), seen(n, false);
  for (const auto& name : c) blocked[dag.id(name)] = true;
  for (const auto& name : a) stack.push_back(dag.id(name));
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = true;
    for (std::size_t u = 0; u < n; ++u) {
      if (adj[v][u] && keep[u] && !blocked[u] && !seen[u]) stack.push_back(u);
    }
  }
  for (const auto& name : b) {
    if (seen[dag.id(name)]) return false;
  }
  return true;
}

/// Exact joint distribution of binary variables Markov to `dag`, with CPT
/// entries drawn uniformly from [0.05, 0.95]. Index bit v holds node v.
inline std::vector<double> random_markov_joint(const cde::CausalDag& dag, std::mt19937_64& rng) {
  const std::size_t n = dag.size();
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<std::vector<double>> cpt(n);
  for (std::size_t v = 0; v < n; ++v) {
    cpt[v].resize(std::size_t{1} << dag.parents(v).size());
    for (auto& p : cpt[v]) p = u(rng);
  }
  std::vector<double> joint(std::size_t{1} << n);
  for (std::size_t s = 0; s < joint.size(); ++s) {
    double prob = 1.0;
    for (std::size_t v = 0; v < n; ++v) {
      std::size_t key = 0;
      const auto& ps = dag.parents(v);
      for (std::size_t k = 0; k < ps.size(); ++k) key |= ((s >> ps[k]) & 1U) << k;
      const double p1 = cpt[v][key];
      prob *= ((s >> v) & 1U) ? p1 : 1.0 - p1;
    }
    joint[s] = prob;
  }
  return joint;
}

/// max over configurations of |P(a,b,c) P(c) - P(a,c) P(b,c)|.
inline double ci_deviation(const std::vector<double>& joint, std::size_t n,
                           const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                           const std::vector<std::size_t>& c) {
  auto mask_of = [](const std::vector<std::size_t>& vs) {
    std::size_t m = 0;
    for (auto v : vs) m |= std::size_t{1} << v;
    return m;
  };
  const std::size_t ma = mask_of(a), mb = mask_of(b), mc = mask_of(c);
  std::map<std::size_t, double> pabc, pac, pbc, pc;
  for (std::size_t s = 0; s < (std::size_t{1} << n); ++s) {
    pabc[s & (ma | mb | mc)] += joint[s];
    pac[s & (ma | mc)] += joint[s];
    pbc[s & (mb | mc)] += joint[s];
    pc[s & mc] += joint[s];
  }
  double dev = 0.0;
  for (const auto& [key, p] : pabc) {
    const double rhs = pac[key & (ma | mc)] * pbc[key & (mb | mc)];
    dev = std::max(dev, std::abs(p * pc[key & mc] - rhs));
  }
  return dev;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& at, double h = 1e-6) {
  Eigen::VectorXd g(at.size());
  for (Eigen::Index j = 0; j < at.size(); ++j) {
    Eigen::VectorXd lo = at, hi = at;
    lo(j) -= h;
    hi(j) += h;
    g(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

/// Central finite-difference Jacobian of a vector function.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& at, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(at);
  Eigen::MatrixXd jac(f0.size(), at.size());
  for (Eigen::Index j = 0; j < at.size(); ++j) {
    Eigen::VectorXd lo = at, hi = at;
    lo(j) -= h;
    hi(j) += h;
    jac.col(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return jac;
}

/// Matched pairs from per-pair (case, control) values of x, m and z.
struct PairSpec {
  double case_x, case_m, control_x, control_m;
  std::vector<double> case_z{}, control_z{};
};

inline cde::MatchedDataset make_dataset(const std::vector<PairSpec>& specs,
                                        std::vector<std::string> z_names = {}) {
  std::vector<cde::MatchedPair> pairs;
  int i = 0;
  for (const auto& s : specs) {
    const std::string id = "q" + std::to_string(++i);
    pairs.push_back({{id, 1, s.case_x, s.case_m, s.case_z}, {id, 0, s.control_x, s.control_m, s.control_z}});
  }
  return cde::MatchedDataset(std::move(pairs), std::move(z_names));
}

/// Random matched data with one covariate; binary or 0/1/2 exposure.
inline cde::MatchedDataset random_dataset(std::mt19937_64& rng, int n_pairs, bool binary_x) {
  std::uniform_int_distribution<int> xdist(0, binary_x ? 1 : 2);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<PairSpec> specs;
  for (int i = 0; i < n_pairs; ++i) {
    PairSpec s{double(xdist(rng)), norm(rng), double(xdist(rng)), norm(rng), {coin(rng) ? 1.0 : 0.0},
               {coin(rng) ? 1.0 : 0.0}};
    specs.push_back(s);
  }
  // Guarantee variation in every difference column and both exposure signs.
  specs.push_back({1, 0.5, 0, -0.5, {1}, {0}});
  specs.push_back({0, -0.3, 1, 0.4, {0}, {1}});
  return make_dataset(specs, {"z"});
}

}  // namespace oracle
