#include "cde/matched_data.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>

#include "cde/kv.hpp"

namespace cde {

namespace {

void check_record(const PairRecord& r, std::size_t arity) {
  if (r.y != 0 && r.y != 1) throw DataError("pair '" + r.pair_id + "': y must be 0 or 1");
  if (!std::isfinite(r.x) || !std::isfinite(r.m)) {
    throw DataError("pair '" + r.pair_id + "': non-finite value");
  }
  if (r.z.size() != arity) {
    throw DataError("pair '" + r.pair_id + "': expected " + std::to_string(arity) +
                    " covariates, got " + std::to_string(r.z.size()));
  }
  for (double v : r.z) {
    if (!std::isfinite(v)) throw DataError("pair '" + r.pair_id + "': non-finite covariate");
  }
}

// Splits one CSV line; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> csv_fields(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && trim(field).empty()) {
      quoted = true;
      was_quoted = true;
      field.clear();
    } else if (c == ',') {
      out.push_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(was_quoted ? field : std::string(trim(field)));
  return out;
}

}  // namespace

MatchedDataset::MatchedDataset(std::vector<MatchedPair> pairs,
                               std::vector<std::string> covariate_names, std::string provenance)
    : pairs_(std::move(pairs)),
      covariate_names_(std::move(covariate_names)),
      provenance_(std::move(provenance)) {
  std::set<std::string> ids;
  for (const auto& p : pairs_) {
    const auto& c = p.case_record;
    const auto& k = p.control_record;
    check_record(c, covariate_names_.size());
    check_record(k, covariate_names_.size());
    if (c.pair_id != k.pair_id) {
      throw DataError("pair ids differ: '" + c.pair_id + "' vs '" + k.pair_id + "'");
    }
    if (c.y != 1 || k.y != 0) throw DataError("unbalanced pair '" + c.pair_id + "'");
    if (!ids.insert(c.pair_id).second) throw DataError("duplicate pair id '" + c.pair_id + "'");
  }
}

MatchedDataset load_matched_csv(std::string_view text, const ColumnRoles& roles) {
  const auto lines = split(text, '\n');
  std::size_t line_no = 0;
  std::vector<std::string> header;
  for (; line_no < lines.size(); ++line_no) {
    if (!trim(lines[line_no]).empty()) {
      header = csv_fields(lines[line_no], line_no + 1);
      ++line_no;
      break;
    }
  }
  if (header.empty()) throw DataError("empty CSV: missing header line");

  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DataError("missing column '" + name + "'");
  };
  const std::size_t pc = column(roles.pair);
  const std::size_t yc = column(roles.y);
  const std::size_t xc = column(roles.x);
  const std::size_t mc = column(roles.m);
  std::vector<std::size_t> zc;
  for (const auto& z : roles.z) zc.push_back(column(z));

  struct Group {
    std::optional<PairRecord> case_record;
    std::optional<PairRecord> control_record;
    std::size_t rows = 0;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Group> groups;

  for (; line_no < lines.size(); ++line_no) {
    if (trim(lines[line_no]).empty()) continue;
    const std::string where = "line " + std::to_string(line_no + 1) + ": ";
    const auto f = csv_fields(lines[line_no], line_no + 1);
    if (f.size() != header.size()) {
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(f.size()));
    }
    auto number = [&](std::size_t col) {
      double v = 0.0;
      if (!parse_double(f[col], v)) {
        throw DataError(where + "column '" + header[col] + "': non-numeric or non-finite value '" +
                        f[col] + "'");
      }
      return v;
    };
    PairRecord r;
    r.pair_id = f[pc];
    if (r.pair_id.empty()) throw DataError(where + "empty pair id");
    if (f[yc] == "1") {
      r.y = 1;
    } else if (f[yc] == "0") {
      r.y = 0;
    } else {
      throw DataError(where + "column '" + header[yc] + "' must be 0 or 1, got '" + f[yc] + "'");
    }
    r.x = number(xc);
    r.m = number(mc);
    for (std::size_t c : zc) r.z.push_back(number(c));

    auto [it, inserted] = groups.try_emplace(r.pair_id);
    if (inserted) order.push_back(r.pair_id);
    Group& g = it->second;
    if (++g.rows > 2) throw DataError("pair '" + r.pair_id + "' has more than 2 rows");
    auto& slot = r.y == 1 ? g.case_record : g.control_record;
    if (slot) {
      throw DataError(std::string("unbalanced pair '") + r.pair_id + "': two " +
                      (r.y == 1 ? "cases" : "controls"));
    }
    slot = std::move(r);
  }

  std::vector<MatchedPair> pairs;
  pairs.reserve(order.size());
  for (const auto& id : order) {
    Group& g = groups.at(id);
    if (g.rows != 2) throw DataError("pair '" + id + "' has 1 row");
    pairs.push_back({std::move(*g.case_record), std::move(*g.control_record)});
  }
  return MatchedDataset(std::move(pairs), roles.z);
}

ColumnRoles default_roles(const MatchedDataset& dataset) {
  ColumnRoles roles;
  roles.z = dataset.covariate_names();
  return roles;
}

std::string write_matched_csv(const MatchedDataset& dataset) {
  std::string out = "pair,y,x,m";
  for (const auto& n : dataset.covariate_names()) out += "," + n;
  out += '\n';
  auto row = [&out](const PairRecord& r) {
    out += r.pair_id;
    out += r.y == 1 ? ",1," : ",0,";
    out += format_double(r.x) + ',' + format_double(r.m);
    for (double v : r.z) out += ',' + format_double(v);
    out += '\n';
  };
  for (const auto& p : dataset.pairs()) {
    row(p.case_record);
    row(p.control_record);
  }
  return out;
}

PairDifferences pair_differences(const MatchedDataset& dataset) {
  const auto n = static_cast<Eigen::Index>(dataset.size());
  const auto k = static_cast<Eigen::Index>(dataset.covariate_names().size());
  PairDifferences d;
  d.design.resize(n, 2 + k);
  d.case_x.resize(n);
  d.case_m.resize(n);
  d.control_x.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = dataset.pairs()[static_cast<std::size_t>(i)];
    const auto& c = p.case_record;
    const auto& k0 = p.control_record;
    d.design(i, 0) = c.x - k0.x;
    d.design(i, 1) = c.m - k0.m;
    for (Eigen::Index j = 0; j < k; ++j) {
      d.design(i, 2 + j) = c.z[static_cast<std::size_t>(j)] - k0.z[static_cast<std::size_t>(j)];
    }
    d.case_x(i) = c.x;
    d.case_m(i) = c.m;
    d.control_x(i) = k0.x;
  }
  return d;
}

namespace {

std::size_t genotype_index(double x, const std::string& id) {
  if (x == 0.0) return 0;
  if (x == 1.0) return 1;
  if (x == 2.0) return 2;
  throw DataError("pair '" + id + "': exposure " + format_double(x) + " is not a 0/1/2 genotype");
}

double allele_freq(const std::array<std::size_t, 3>& c) {
  const double n = static_cast<double>(c[0] + c[1] + c[2]);
  return n == 0.0 ? 0.0 : (2.0 * static_cast<double>(c[2]) + static_cast<double>(c[1])) / (2.0 * n);
}

}  // namespace

GenotypeSummary genotype_summary(const MatchedDataset& dataset) {
  GenotypeSummary s;
  for (const auto& p : dataset.pairs()) {
    ++s.cases[genotype_index(p.case_record.x, p.case_record.pair_id)];
    ++s.controls[genotype_index(p.control_record.x, p.control_record.pair_id)];
  }
  s.control_allele_freq = allele_freq(s.controls);
  s.case_allele_freq = allele_freq(s.cases);

  const double n = static_cast<double>(s.controls[0] + s.controls[1] + s.controls[2]);
  const double p = s.control_allele_freq;
  const double q = 1.0 - p;
  const std::array<double, 3> expected{q * q * n, 2.0 * p * q * n, p * p * n};
  double chi = 0.0;
  for (std::size_t g = 0; g < 3; ++g) {
    if (expected[g] > 0.0) {
      const double diff = static_cast<double>(s.controls[g]) - expected[g];
      chi += diff * diff / expected[g];
    }
  }
  s.hwe_chi_square = chi;
  s.hwe_p_value = std::erfc(std::sqrt(chi / 2.0));
  return s;
}

std::string render_text(const GenotypeSummary& s) {
  std::string out = "copies  controls  cases\n";
  for (std::size_t g = 0; g < 3; ++g) {
    out += "  " + std::to_string(g) + "     " + std::to_string(s.controls[g]) + "     " +
           std::to_string(s.cases[g]) + "\n";
  }
  out += "allele frequency (controls): " + format_double(s.control_allele_freq) + "\n";
  out += "allele frequency (cases): " + format_double(s.case_allele_freq) + "\n";
  out += "HWE chi-square (controls, 1 df): " + format_double(s.hwe_chi_square) +
         "  p = " + format_double(s.hwe_p_value) + "\n";
  return out;
}

}  // namespace cde
