#include "cde/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cde/causal_graph.hpp"
#include "cde/dsep.hpp"
#include "cde/error.hpp"
#include "cde/gest.hpp"
#include "cde/identify.hpp"
#include "cde/kv.hpp"
#include "cde/matched_data.hpp"
#include "cde/study_sim.hpp"

namespace cde {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("write failed for '" + path + "'");
}

std::vector<std::string> comma_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  for (const auto& item : split(s, ',')) {
    const auto t = trim(item);
    if (t.empty()) throw QueryError("empty name in list '" + s + "'");
    out.emplace_back(t);
  }
  return out;
}

NodeSet name_set(const std::string& s) {
  const auto v = comma_list(s);
  return NodeSet(v.begin(), v.end());
}

SimConfig load_config(const std::string& path, std::uint64_t seed) {
  SimConfig config = path.empty() ? SimConfig{} : parse_sim_config(read_file(path));
  config.seed = seed;
  validate(config);
  return config;
}

struct Options {
  std::string format = "text";

  std::string graph;
  std::string a, b, given, augment;

  std::string x, m, y;

  std::string data;
  ColumnRoles roles;
  std::string z_cols;
  double ci_level = 0.95;
  double prevalence_hint = -1.0;

  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t reps = 200;
  std::size_t threads = 1;
  std::string out_csv;
};

void add_format(CLI::App* cmd, Options& o) {
  cmd->add_option("--format", o.format, "Output format")
      ->check(CLI::IsMember({"text", "kv"}))
      ->capture_default_str();
}

void cmd_dsep(const Options& o, std::ostream& out) {
  CausalDag dag = parse_graph(read_file(o.graph));
  if (!o.augment.empty()) dag = augment_with_interventions(dag, comma_list(o.augment));
  const NodeSet a = name_set(o.a), b = name_set(o.b), c = name_set(o.given);
  const bool separated = d_separated(dag, a, b, c);
  std::optional<Path> path;
  if (!separated) path = find_open_path(dag, a, b, c);
  if (o.format == "kv") {
    KvEntries kv{{"separated", separated ? "true" : "false"},
                 {"a", format_set(a)},
                 {"b", format_set(b)},
                 {"given", format_set(c)}};
    if (path) kv.emplace_back("path", format_path(dag, *path));
    out << write_kv(kv);
  } else {
    out << (separated ? "separated" : "connected") << '\n';
    if (path) out << "open path: " << format_path(dag, *path) << '\n';
  }
}

void cmd_check(const Options& o, std::ostream& out) {
  const CausalDag dag = parse_graph(read_file(o.graph));
  const DirectEffectQuery query{o.x, o.m, o.y};
  const IdentificationReport report = search_adjustment_sets(augment_for_query(dag, query), query);
  out << (o.format == "kv" ? render_kv(report) : render_text(report));
}

void cmd_fit(const Options& o, std::ostream& out) {
  ColumnRoles roles = o.roles;
  roles.z = comma_list(o.z_cols);
  const MatchedDataset data = load_matched_csv(read_file(o.data), roles);
  EstimateOptions opts;
  if (!(o.ci_level > 0.0 && o.ci_level < 1.0)) throw DataError("--ci-level must lie in (0, 1)");
  opts.ci_level = o.ci_level;
  if (o.prevalence_hint >= 0.0) opts.prevalence_hint = o.prevalence_hint;
  const DirectEffectEstimate est = estimate_direct_effect(data, opts);
  std::vector<std::string> names{roles.x, roles.m};
  names.insert(names.end(), roles.z.begin(), roles.z.end());
  out << (o.format == "kv" ? render_kv(est, names) : render_text(est, names));
}

void cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  const SimConfig config = load_config(o.config, o.seed);
  const Cohort cohort = simulate_cohort(config);
  const MatchedSample sample = sample_matched(cohort, config);
  for (const auto& w : sample.warnings) err << "warning: " << w << '\n';
  const std::string csv = write_matched_csv(sample.dataset);
  if (o.out.empty()) {
    out << csv;
  } else {
    write_file(o.out, csv);
    out << "wrote " << sample.dataset.size() << " pairs to " << o.out << '\n';
  }
}

void cmd_calibrate(const Options& o, std::ostream& out) {
  const SimConfig config = load_config(o.config, o.seed);
  const CalibrationReport report = replicate_study(config, o.reps, o.threads);
  if (!o.out_csv.empty()) write_file(o.out_csv, calibration_csv(report));
  out << (o.format == "kv" ? render_kv(report) : render_text(report));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Controlled direct effects from matched case-control data", "cde"};
  app.require_subcommand(1, 1);

  auto* dsep = app.add_subcommand("dsep", "Test d-separation of two node sets");
  dsep->add_option("--graph", o.graph, "Graph file")->required();
  dsep->add_option("--a", o.a, "First node set (comma separated)")->required();
  dsep->add_option("--b", o.b, "Second node set (comma separated)")->required();
  dsep->add_option("--given", o.given, "Conditioning set (comma separated)");
  dsep->add_option("--augment", o.augment, "Add sigma nodes for these targets first");
  add_format(dsep, o);

  auto* check = app.add_subcommand("check", "Search adjustment sets for a direct effect");
  check->add_option("--graph", o.graph, "Graph file")->required();
  check->add_option("--x", o.x, "Exposure node")->required();
  check->add_option("--m", o.m, "Mediator node")->required();
  check->add_option("--y", o.y, "Outcome node")->required();
  add_format(check, o);

  auto* fit = app.add_subcommand("fit", "Estimate the direct effect from matched pairs");
  fit->add_option("--data", o.data, "Matched-pair CSV file")->required();
  fit->add_option("--pair-col", o.roles.pair, "Pair id column")->capture_default_str();
  fit->add_option("--y-col", o.roles.y, "Case indicator column")->capture_default_str();
  fit->add_option("--x-col", o.roles.x, "Exposure column")->capture_default_str();
  fit->add_option("--m-col", o.roles.m, "Mediator column")->capture_default_str();
  fit->add_option("--z-cols", o.z_cols, "Covariate columns (comma separated)");
  fit->add_option("--ci-level", o.ci_level, "Confidence level")->capture_default_str();
  fit->add_option("--prevalence-hint", o.prevalence_hint, "Outcome prevalence in the source population")
      ->check(CLI::Range(0.0, 1.0));
  add_format(fit, o);

  auto* simulate = app.add_subcommand("simulate", "Simulate a matched case-control dataset");
  simulate->add_option("--config", o.config, "Simulation config (key=value)");
  simulate->add_option("--seed", o.seed, "RNG seed")->required();
  simulate->add_option("--out", o.out, "Output CSV (default stdout)");

  auto* calibrate = app.add_subcommand("calibrate", "Run a replicated simulation study");
  calibrate->add_option("--config", o.config, "Simulation config (key=value)");
  calibrate->add_option("--seed", o.seed, "RNG seed")->required();
  calibrate->add_option("--reps", o.reps, "Number of replicates")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  calibrate->add_option("--threads", o.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  calibrate->add_option("--out-csv", o.out_csv, "Per-replicate CSV output");
  add_format(calibrate, o);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    err << "run with --help for usage\n";
    return kExitUsageError;
  }

  try {
    if (dsep->parsed()) {
      cmd_dsep(o, out);
    } else if (check->parsed()) {
      cmd_check(o, out);
    } else if (fit->parsed()) {
      cmd_fit(o, out);
    } else if (simulate->parsed()) {
      cmd_simulate(o, out, err);
    } else if (calibrate->parsed()) {
      cmd_calibrate(o, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
  return kExitOk;
}

}  // namespace cde
