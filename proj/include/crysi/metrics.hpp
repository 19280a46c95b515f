#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crysi/structure.hpp"

namespace crysi {

struct MatchTolerances {
  double stol = 0.5;
  double ltol = 0.3;
  double angletol = 10.0;  // degrees
};

void check_tolerances(const MatchTolerances& tol);

struct MatchResult {
  bool matched = false;
  std::optional<double> rmse;
};

// Compositions must agree as multisets, lattice lengths within ltol (relative
// to their mean) and angles within angletol. Sites are then assigned within
// species by Hungarian matching after the best global fractional translation;
// the pair matches when the largest site displacement, divided by (V/N)^(1/3)
// of the mean cell, is at most stol. The reported rmse is normalised by the
// reference cell's (V/N)^(1/3).
MatchResult match_pair(const Structure& gen, const Structure& ref, const MatchTolerances& tol = {});

struct MatchSummary {
  double rate = 0.0;
  std::optional<double> mean_rmse;  // empty when nothing matched
  std::vector<MatchResult> pairs;
};

MatchSummary match_rate(std::span<const Structure> gen, std::span<const Structure> ref,
                        const MatchTolerances& tol = {});

// Every pairwise distance, including each atom's distance to its own periodic
// images, exceeds min_dist.
bool structural_validity(const Structure& s, double min_dist = 0.5);

// W1 between empirical distributions, integrating |F_a - F_b|.
double wasserstein1(std::span<const double> a, std::span<const double> b);

// Standard atomic weights indexed by atomic number (index 0 unused), Z = 1..100.
const std::vector<double>& standard_masses();

struct Properties {
  double density = 0.0;  // total mass / cell volume
  int n_ary = 0;         // distinct species
  double mean_cn = 0.0;  // cutoff coordination number
};

// Coordination counts every periodic image of every atom (other than the atom
// itself) closer than cn_cutoff.
Properties properties(const Structure& s, std::span<const double> masses, double cn_cutoff);
double mean_coordination(const Structure& s, double cutoff);

struct EvalRow {
  std::size_t id = 0;
  MatchResult match;
  bool valid = false;
  Properties props;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double match_rate = 0.0;
  std::optional<double> mean_rmse;
  double validity_rate = 0.0;
  double w1_density = 0.0, w1_n_ary = 0.0, w1_cn = 0.0;
};

struct EvalOptions {
  MatchTolerances tol;
  double min_dist = 0.5;
  double cn_cutoff = 3.0;
};

// Generated and reference lists are aligned pairwise; properties are compared
// as distributions.
EvalReport evaluate(std::span<const Structure> gen, std::span<const Structure> ref, const EvalOptions& opt = {});

std::string report_csv(const EvalReport& r);
nlohmann::json report_summary(const EvalReport& r, const EvalOptions& opt);

// Histogram of two samples over shared equal-width bins, as CSV
// (bin_lo,bin_hi,generated,reference).
std::string histogram_csv(std::span<const double> gen, std::span<const double> ref, int bins = 20);

}  // namespace crysi
