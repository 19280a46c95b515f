#include "crysi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "crysi/hungarian.hpp"

namespace crysi {

void check_tolerances(const MatchTolerances& tol) {
  if (!(tol.stol > 0.0 && tol.ltol > 0.0 && tol.angletol > 0.0))
    throw std::invalid_argument("match tolerances must all be positive");
  if (tol.angletol >= 180.0) throw std::invalid_argument("angletol must be below 180 degrees");
}

namespace {

constexpr int kGrid = 16;

Mat3 mean_lattice(const Mat3& a, const Mat3& b) {
  Mat3 m{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[r][c] = 0.5 * (a[r][c] + b[r][c]);
  return m;
}

// Atom indices grouped by species.
std::map<int, std::vector<std::size_t>> groups_of(const Structure& s) {
  std::map<int, std::vector<std::size_t>> g;
  for (std::size_t i = 0; i < s.size(); ++i) g[s.species[i]].push_back(i);
  return g;
}

struct SiteFit {
  std::vector<std::size_t> ref_of_gen;
  std::vector<double> disp;  // Cartesian displacement per gen atom
};

// Species-respecting assignment of shifted gen sites to ref sites under the
// Cartesian length of the nearest fractional image (cheap) or the exact
// 27-image minimum.
SiteFit assign(const Structure& gen, const Structure& ref, const Vec3& shift, const Mat3& L,
               const std::map<int, std::vector<std::size_t>>& gg, const std::map<int, std::vector<std::size_t>>& rg,
               bool exact) {
  SiteFit fit;
  fit.ref_of_gen.assign(gen.size(), 0);
  fit.disp.assign(gen.size(), 0.0);
  for (const auto& [sp, gi] : gg) {
    const auto& ri = rg.at(sp);
    const std::size_t n = gi.size();
    std::vector<double> cost(n * n);
    for (std::size_t a = 0; a < n; ++a) {
      const auto& x = gen.coords[gi[a]];
      const Vec3 xs{x[0] + shift[0], x[1] + shift[1], x[2] + shift[2]};
      for (std::size_t b = 0; b < n; ++b) {
        const double d = exact ? periodic_distance(xs, ref.coords[ri[b]], L)
                               : norm(to_cartesian(torus_displacement(xs, ref.coords[ri[b]]), L));
        cost[a * n + b] = d * d;
      }
    }
    const Assignment as = solve_assignment(cost, n);
    for (std::size_t a = 0; a < n; ++a) {
      fit.ref_of_gen[gi[a]] = ri[as.col_of_row[a]];
      fit.disp[gi[a]] = std::sqrt(cost[a * n + as.col_of_row[a]]);
    }
  }
  return fit;
}

// Moves the shift by the mean nearest-image residual of the assignment.
Vec3 refine(const Structure& gen, const Structure& ref, const Vec3& shift, const SiteFit& fit) {
  Vec3 mean{};
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const auto& x = gen.coords[i];
    const Vec3 d = torus_displacement(Vec3{x[0] + shift[0], x[1] + shift[1], x[2] + shift[2]},
                                      ref.coords[fit.ref_of_gen[i]]);
    for (int k = 0; k < 3; ++k) mean[k] += d[k] / static_cast<double>(gen.size());
  }
  return {shift[0] + mean[0], shift[1] + mean[1], shift[2] + mean[2]};
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace

MatchResult match_pair(const Structure& gen, const Structure& ref, const MatchTolerances& tol) {
  check_tolerances(tol);
  MatchResult res;
  if (gen.size() != ref.size() || gen.size() == 0) return res;
  auto sg = gen.species, sr = ref.species;
  std::sort(sg.begin(), sg.end());
  std::sort(sr.begin(), sr.end());
  if (sg != sr) return res;

  const Vec3 lg = lattice_lengths(gen.lattice), lr = lattice_lengths(ref.lattice);
  const Vec3 ag = lattice_angles_deg(gen.lattice), ar = lattice_angles_deg(ref.lattice);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(lg[k] - lr[k]) > tol.ltol * 0.5 * (lg[k] + lr[k])) return res;
    if (std::abs(ag[k] - ar[k]) > tol.angletol) return res;
  }

  const double n = static_cast<double>(gen.size());
  const Mat3 L = mean_lattice(gen.lattice, ref.lattice);
  const double scale_flag = std::cbrt(0.5 * (volume(gen.lattice) + volume(ref.lattice)) / n);
  const double scale_rmse = std::cbrt(volume(ref.lattice) / n);
  const auto gg = groups_of(gen), rg = groups_of(ref);

  // Candidate shifts: a uniform grid plus every shift that lands an atom of the
  // rarest species exactly on a reference atom of that species.
  std::vector<Vec3> shifts;
  for (int i = 0; i < kGrid; ++i)
    for (int j = 0; j < kGrid; ++j)
      for (int k = 0; k < kGrid; ++k)
        shifts.push_back({static_cast<double>(i) / kGrid, static_cast<double>(j) / kGrid,
                          static_cast<double>(k) / kGrid});
  const auto rarest = std::min_element(rg.begin(), rg.end(), [](const auto& a, const auto& b) {
    return a.second.size() < b.second.size();
  });
  for (auto gi : gg.at(rarest->first))
    for (auto ri : rarest->second) {
      const auto& x = gen.coords[gi];
      const auto& y = ref.coords[ri];
      shifts.push_back({y[0] - x[0], y[1] - x[1], y[2] - x[2]});
    }

  double best_max = std::numeric_limits<double>::infinity();
  Vec3 best_shift{};
  for (const auto& s0 : shifts) {
    const SiteFit f0 = assign(gen, ref, s0, L, gg, rg, false);
    const Vec3 s1 = refine(gen, ref, s0, f0);
    const SiteFit f1 = assign(gen, ref, s1, L, gg, rg, false);
    const double m0 = max_of(f0.disp), m1 = max_of(f1.disp);
    if (m0 < best_max) {
      best_max = m0;
      best_shift = s0;
    }
    if (m1 < best_max) {
      best_max = m1;
      best_shift = s1;
    }
  }
  const SiteFit fit = assign(gen, ref, best_shift, L, gg, rg, true);
  if (max_of(fit.disp) / scale_flag > tol.stol) return res;
  double ss = 0.0;
  for (double d : fit.disp) ss += d * d;
  res.matched = true;
  res.rmse = std::sqrt(ss / n) / scale_rmse;
  return res;
}

MatchSummary match_rate(std::span<const Structure> gen, std::span<const Structure> ref, const MatchTolerances& tol) {
  if (gen.size() != ref.size())
    throw std::invalid_argument("match_rate: " + std::to_string(gen.size()) + " generated vs " +
                                std::to_string(ref.size()) + " reference structures");
  MatchSummary out;
  double rmse_sum = 0.0;
  std::size_t matched = 0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    out.pairs.push_back(match_pair(gen[i], ref[i], tol));
    if (out.pairs.back().matched) {
      ++matched;
      rmse_sum += *out.pairs.back().rmse;
    }
  }
  out.rate = gen.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(gen.size());
  if (matched > 0) out.mean_rmse = rmse_sum / static_cast<double>(matched);
  return out;
}

bool structural_validity(const Structure& s, double min_dist) {
  if (!(min_dist > 0.0)) throw std::invalid_argument("structural_validity: min_dist must be > 0");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(periodic_distance(s.coords[i], s.coords[i], s.lattice, true) > min_dist)) return false;
    for (std::size_t j = i + 1; j < s.size(); ++j)
      if (!(periodic_distance(s.coords[i], s.coords[j], s.lattice) > min_dist)) return false;
  }
  return true;
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1: empty sample");
  std::vector<double> xa(a.begin(), a.end()), xb(b.begin(), b.end());
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  std::vector<double> all(xa);
  all.insert(all.end(), xb.begin(), xb.end());
  std::sort(all.begin(), all.end());
  const double na = static_cast<double>(xa.size()), nb = static_cast<double>(xb.size());
  double w = 0.0;
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k + 1 < all.size(); ++k) {
    while (ia < xa.size() && xa[ia] <= all[k]) ++ia;
    while (ib < xb.size() && xb[ib] <= all[k]) ++ib;
    w += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (all[k + 1] - all[k]);
  }
  return w;
}

const std::vector<double>& standard_masses() {
  static const std::vector<double> m{
      0.0,     1.008,   4.0026,  6.94,    9.0122,  10.81,   12.011,  14.007,  15.999,  18.998,  20.180,
      22.990,  24.305,  26.982,  28.085,  30.974,  32.06,   35.45,   39.948,  39.098,  40.078,  44.956,
      47.867,  50.942,  51.996,  54.938,  55.845,  58.933,  58.693,  63.546,  65.38,   69.723,  72.630,
      74.922,  78.971,  79.904,  83.798,  85.468,  87.62,   88.906,  91.224,  92.906,  95.95,   98.0,
      101.07,  102.91,  106.42,  107.87,  112.41,  114.82,  118.71,  121.76,  127.60,  126.90,  131.29,
      132.91,  137.33,  138.91,  140.12,  140.91,  144.24,  145.0,   150.36,  151.96,  157.25,  158.93,
      162.50,  164.93,  167.26,  168.93,  173.05,  174.97,  178.49,  180.95,  183.84,  186.21,  190.23,
      192.22,  195.08,  196.97,  200.59,  204.38,  207.2,   208.98,  209.0,   210.0,   222.0,   223.0,
      226.0,   227.0,   232.04,  231.04,  238.03,  237.0,   244.0,   243.0,   247.0,   247.0,   251.0,
      252.0,   257.0};
  return m;
}

double mean_coordination(const Structure& s, double cutoff) {
  if (s.size() == 0) return 0.0;
  const Mat3& L = s.lattice;
  const double v = volume(L);
  // Image range per axis from the spacing of the lattice planes.
  auto cross = [](const Vec3& a, const Vec3& b) {
    return Vec3{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  };
  int range[3];
  for (int k = 0; k < 3; ++k) {
    const double h = v / norm(cross(L[(k + 1) % 3], L[(k + 2) % 3]));
    range[k] = static_cast<int>(std::ceil(cutoff / h)) + 1;
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      const Vec3 d = torus_displacement(s.coords[i], s.coords[j]);
      for (int a = -range[0]; a <= range[0]; ++a)
        for (int b = -range[1]; b <= range[1]; ++b)
          for (int c = -range[2]; c <= range[2]; ++c) {
            if (i == j && a == 0 && b == 0 && c == 0) continue;
            if (norm(to_cartesian(Vec3{d[0] + a, d[1] + b, d[2] + c}, L)) < cutoff) ++total;
          }
    }
  return static_cast<double>(total) / static_cast<double>(s.size());
}

Properties properties(const Structure& s, std::span<const double> masses, double cn_cutoff) {
  Properties p;
  double mass = 0.0;
  for (int a : s.species) {
    if (a < 1 || static_cast<std::size_t>(a) >= masses.size())
      throw std::invalid_argument("properties: no mass for species " + std::to_string(a));
    mass += masses[static_cast<std::size_t>(a)];
  }
  p.density = mass / volume(s.lattice);
  p.n_ary = static_cast<int>(std::set<int>(s.species.begin(), s.species.end()).size());
  p.mean_cn = mean_coordination(s, cn_cutoff);
  return p;
}

EvalReport evaluate(std::span<const Structure> gen, std::span<const Structure> ref, const EvalOptions& opt) {
  const MatchSummary ms = match_rate(gen, ref, opt.tol);
  EvalReport r;
  r.match_rate = ms.rate;
  r.mean_rmse = ms.mean_rmse;
  std::vector<double> dg, dr, ng, nr, cg, cr;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    EvalRow row;
    row.id = i;
    row.match = ms.pairs[i];
    row.valid = structural_validity(gen[i], opt.min_dist);
    row.props = properties(gen[i], standard_masses(), opt.cn_cutoff);
    valid += row.valid;
    dg.push_back(row.props.density);
    ng.push_back(row.props.n_ary);
    cg.push_back(row.props.mean_cn);
    r.rows.push_back(row);
  }
  for (const auto& s : ref) {
    const Properties p = properties(s, standard_masses(), opt.cn_cutoff);
    dr.push_back(p.density);
    nr.push_back(p.n_ary);
    cr.push_back(p.mean_cn);
  }
  if (!gen.empty()) {
    r.validity_rate = static_cast<double>(valid) / static_cast<double>(gen.size());
    r.w1_density = wasserstein1(dg, dr);
    r.w1_n_ary = wasserstein1(ng, nr);
    r.w1_cn = wasserstein1(cg, cr);
  }
  return r;
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "id,matched,rmse,valid,rho,n_ary,mean_cn\n";
  for (const auto& row : r.rows) {
    out << row.id << ',' << (row.match.matched ? 1 : 0) << ',';
    if (row.match.rmse) out << *row.match.rmse;
    out << ',' << (row.valid ? 1 : 0) << ',' << row.props.density << ',' << row.props.n_ary << ','
        << row.props.mean_cn << '\n';
  }
  return out.str();
}

nlohmann::json report_summary(const EvalReport& r, const EvalOptions& opt) {
  nlohmann::json j;
  j["n"] = r.rows.size();
  j["match_rate"] = r.match_rate;
  j["mean_rmse"] = r.mean_rmse ? nlohmann::json(*r.mean_rmse) : nlohmann::json(nullptr);
  j["validity_rate"] = r.validity_rate;
  j["w1_density"] = r.w1_density;
  j["w1_n_ary"] = r.w1_n_ary;
  j["w1_cutoff_cn"] = r.w1_cn;
  j["tolerances"] = {{"stol", opt.tol.stol}, {"ltol", opt.tol.ltol}, {"angletol", opt.tol.angletol}};
  j["min_dist"] = opt.min_dist;
  j["cn_cutoff"] = opt.cn_cutoff;
  return j;
}

std::string histogram_csv(std::span<const double> gen, std::span<const double> ref, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram: bins must be >= 1");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto s : {gen, ref})
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  std::ostringstream out;
  out.precision(17);
  out << "bin_lo,bin_hi,generated,reference\n";
  if (!(lo <= hi)) return out.str();
  if (hi == lo) hi = lo + 1.0;
  const double w = (hi - lo) / bins;
  std::vector<std::size_t> cg(static_cast<std::size_t>(bins)), cr(static_cast<std::size_t>(bins));
  auto bin = [&](double v) { return std::min<std::size_t>(static_cast<std::size_t>((v - lo) / w), bins - 1); };
  for (double v : gen) ++cg[bin(v)];
  for (double v : ref) ++cr[bin(v)];
  for (int b = 0; b < bins; ++b)
    out << lo + b * w << ',' << lo + (b + 1) * w << ',' << cg[static_cast<std::size_t>(b)] << ','
        << cr[static_cast<std::size_t>(b)] << '\n';
  return out.str();
}

}  // namespace crysi
