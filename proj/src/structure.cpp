#include "crysi/structure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace crysi {

void check_invariants(const Structure& s, int n_elements) {
  if (s.coords.size() != s.species.size()) {
    throw InvariantError("structure has " + std::to_string(s.species.size()) + " species but " +
                         std::to_string(s.coords.size()) + " coordinates");
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    const int a = s.species[i];
    if (a != kMask && (a < 1 || a > n_elements)) {
      throw InvariantError("species token " + std::to_string(a) + " of atom " + std::to_string(i) +
                           " outside vocabulary");
    }
    for (double c : s.coords[i]) {
      if (!(c >= 0.0 && c < 1.0)) {
        throw InvariantError("coordinate " + std::to_string(c) + " of atom " + std::to_string(i) +
                             " outside [0,1)");
      }
    }
  }
  const double d = det(s.lattice);
  if (!(d > 0.0)) throw InvariantError("lattice determinant " + std::to_string(d) + " is not positive");
}

double wrap(double x) {
  if (std::isnan(x)) throw std::domain_error("wrap: NaN coordinate");
  if (!std::isfinite(x)) throw std::domain_error("wrap: infinite coordinate");
  double w = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.
  if (w >= 1.0) w = 0.0;
  return w;
}

Vec3 wrap(const Vec3& x) { return {wrap(x[0]), wrap(x[1]), wrap(x[2])}; }

double nearest_image_unwrap(double x0, double x1) {
  const double d = x1 - x0;
  if (d > 0.5) return x1 - 1.0;
  if (d < -0.5) return x1 + 1.0;
  return x1;
}

Vec3 nearest_image_unwrap(const Vec3& x0, const Vec3& x1) {
  return {nearest_image_unwrap(x0[0], x1[0]), nearest_image_unwrap(x0[1], x1[1]),
          nearest_image_unwrap(x0[2], x1[2])};
}

Vec3 torus_displacement(const Vec3& x0, const Vec3& x1) {
  const Vec3 u = nearest_image_unwrap(x0, x1);
  return {u[0] - x0[0], u[1] - x0[1], u[2] - x0[2]};
}

double torus_distance(const Vec3& x0, const Vec3& x1) { return norm(torus_displacement(x0, x1)); }

double det(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Vec3 to_cartesian(const Vec3& f, const Mat3& L) {
  Vec3 r{};
  for (int j = 0; j < 3; ++j) r[j] = f[0] * L[0][j] + f[1] * L[1][j] + f[2] * L[2][j];
  return r;
}

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

Vec3 lattice_lengths(const Mat3& L) { return {norm(L[0]), norm(L[1]), norm(L[2])}; }

Vec3 lattice_angles_deg(const Mat3& L) {
  auto angle = [](const Vec3& u, const Vec3& v) {
    const double c = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]) / (norm(u) * norm(v));
    return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
  };
  return {angle(L[1], L[2]), angle(L[0], L[2]), angle(L[0], L[1])};
}

Mat3 lattice_from_parameters(const Vec3& len, const Vec3& ang) {
  const double ca = std::cos(ang[0]), cb = std::cos(ang[1]), cg = std::cos(ang[2]), sg = std::sin(ang[2]);
  Mat3 L{};
  L[0] = {len[0], 0.0, 0.0};
  L[1] = {len[1] * cg, len[1] * sg, 0.0};
  const double cx = cb;
  const double cy = (ca - cb * cg) / sg;
  const double cz2 = 1.0 - cx * cx - cy * cy;
  const double cz = cz2 > 0.0 ? std::sqrt(cz2) : 0.0;
  L[2] = {len[2] * cx, len[2] * cy, len[2] * cz};
  return L;
}

double volume(const Mat3& L) { return std::abs(det(L)); }

double periodic_distance(const Vec3& x0, const Vec3& x1, const Mat3& L, bool skip_zero_offset) {
  const Vec3 d = torus_displacement(x0, x1);
  double best = std::numeric_limits<double>::infinity();
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) {
        if (skip_zero_offset && i == 0 && j == 0 && k == 0) continue;
        const Vec3 f{d[0] + i, d[1] + j, d[2] + k};
        best = std::min(best, norm(to_cartesian(f, L)));
      }
  return best;
}

nlohmann::json to_json(const Structure& s) {
  nlohmann::json j;
  j["species"] = s.species;
  auto coords = nlohmann::json::array();
  for (const auto& c : s.coords) coords.push_back({c[0], c[1], c[2]});
  j["coords"] = std::move(coords);
  auto lat = nlohmann::json::array();
  for (const auto& r : s.lattice) lat.push_back({r[0], r[1], r[2]});
  j["lattice"] = std::move(lat);
  return j;
}

namespace {

Vec3 vec3_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(std::string(what) + " must be a 3-element array");
  Vec3 v{};
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) throw std::invalid_argument(std::string(what) + " entries must be numbers");
    v[k] = j[k].get<double>();
  }
  return v;
}

}  // namespace

Structure structure_from_json(const nlohmann::json& j, int n_elements) {
  if (!j.is_object()) throw std::invalid_argument("structure record must be an object");
  for (const char* key : {"species", "coords", "lattice"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
  Structure s;
  for (const auto& a : j.at("species")) {
    if (!a.is_number_integer()) throw std::invalid_argument("species entries must be integers");
    s.species.push_back(a.get<int>());
  }
  for (const auto& c : j.at("coords")) s.coords.push_back(vec3_from_json(c, "coords row"));
  const auto& lat = j.at("lattice");
  if (!lat.is_array() || lat.size() != 3) throw std::invalid_argument("lattice must have 3 rows");
  for (int r = 0; r < 3; ++r) s.lattice[r] = vec3_from_json(lat[r], "lattice row");
  check_invariants(s, n_elements);
  return s;
}

}  // namespace crysi
