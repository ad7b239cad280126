#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cde/error.hpp"

namespace cde {

struct PairRecord {
  std::string pair_id;
  int y = 0;
  double x = 0.0;
  double m = 0.0;
  std::vector<double> z;
};

struct MatchedPair {
  PairRecord case_record;
  PairRecord control_record;
};

/// 1-to-1 matched case-control pairs. Matching variables are not stored;
/// `provenance` records them as free text.
class MatchedDataset {
 public:
  MatchedDataset() = default;
  /// Throws DataError if a pair is not (case y=1, control y=0) with a shared
  /// id, ids repeat, covariate arity differs from the names, or a value is
  /// not finite.
  MatchedDataset(std::vector<MatchedPair> pairs, std::vector<std::string> covariate_names,
                 std::string provenance = {});

  const std::vector<MatchedPair>& pairs() const noexcept { return pairs_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  const std::string& provenance() const noexcept { return provenance_; }

 private:
  std::vector<MatchedPair> pairs_;
  std::vector<std::string> covariate_names_;
  std::string provenance_;
};

struct ColumnRoles {
  std::string pair = "pair";
  std::string y = "y";
  std::string x = "x";
  std::string m = "m";
  std::vector<std::string> z;
};

/// Comma-separated, header line first. Rows may come in any order; rows are
/// paired by the pair column and the y column (literal 0/1) decides case and
/// control.
MatchedDataset load_matched_csv(std::string_view text, const ColumnRoles& roles);

/// Writes case then control for each pair with the header `pair,y,x,m,<z...>`
/// using the dataset's covariate names. Numbers use the shortest round-trip form.
std::string write_matched_csv(const MatchedDataset& dataset);

/// Roles matching the columns written by write_matched_csv.
ColumnRoles default_roles(const MatchedDataset& dataset);

/// Case-minus-control differences, one row per pair.
struct PairDifferences {
  Eigen::MatrixXd design;   // columns: dx, dm, dz_1..dz_k
  Eigen::VectorXd case_x;   // x of the case member
  Eigen::VectorXd case_m;   // m of the case member
  Eigen::VectorXd control_x;

  std::size_t size() const noexcept { return static_cast<std::size_t>(design.rows()); }
  std::size_t covariate_count() const noexcept {
    return design.cols() >= 2 ? static_cast<std::size_t>(design.cols() - 2) : 0;
  }
  auto dx() const { return design.col(0); }
};

PairDifferences pair_differences(const MatchedDataset& dataset);

struct GenotypeSummary {
  std::array<std::size_t, 3> controls{};  // indexed by copies of the counted allele
  std::array<std::size_t, 3> cases{};
  double control_allele_freq = 0.0;      // (2 n2 + n1) / 2n among controls
  double case_allele_freq = 0.0;
  double hwe_chi_square = 0.0;           // controls, 1 df
  double hwe_p_value = 1.0;
};

/// Exposure must be coded 0/1/2.
GenotypeSummary genotype_summary(const MatchedDataset& dataset);

std::string render_text(const GenotypeSummary& summary);

}  // namespace cde
