#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace crysi {

using Vec3 = std::array<double, 3>;
// Rows are lattice vectors.
using Mat3 = std::array<Vec3, 3>;

// Species token reserved for a masked (not yet generated) atom. Real elements
// are 1..n_elements.
inline constexpr int kMask = 0;
inline constexpr int kDefaultElements = 100;

class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Structure {
  std::vector<int> species;
  std::vector<Vec3> coords;  // fractional, each component in [0, 1)
  Mat3 lattice{};

  std::size_t size() const { return species.size(); }
  bool operator==(const Structure&) const = default;
};

// Throws InvariantError naming the violated condition.
void check_invariants(const Structure& s, int n_elements = kDefaultElements);

// ---------------------------------------------------------------------------
// Torus geometry

double wrap(double x);
Vec3 wrap(const Vec3& x);

// Image x1 + k, k in {-1, 0, 1}, closest to x0. An exact half-box tie keeps
// the in-box image (k = 0).
double nearest_image_unwrap(double x0, double x1);
Vec3 nearest_image_unwrap(const Vec3& x0, const Vec3& x1);

// Nearest-image displacement x1' - x0, each component in [-0.5, 0.5].
Vec3 torus_displacement(const Vec3& x0, const Vec3& x1);

// Euclidean length of the nearest-image fractional displacement.
double torus_distance(const Vec3& x0, const Vec3& x1);

// ---------------------------------------------------------------------------
// Lattice helpers

double det(const Mat3& m);
Vec3 to_cartesian(const Vec3& frac, const Mat3& lattice);
double norm(const Vec3& v);
Vec3 lattice_lengths(const Mat3& lattice);
// (alpha, beta, gamma) in degrees: alpha between b and c, beta a-c, gamma a-b.
Vec3 lattice_angles_deg(const Mat3& lattice);
// Lattice from lengths and angles (radians); a along x, b in the xy plane.
Mat3 lattice_from_parameters(const Vec3& lengths, const Vec3& angles_rad);
double volume(const Mat3& lattice);

// Shortest Cartesian distance between x0 and any periodic image of x1,
// searching the 27 neighbouring cells around the nearest fractional image.
// With skip_zero_offset the zero cell offset is excluded (self-image distance).
double periodic_distance(const Vec3& x0, const Vec3& x1, const Mat3& lattice, bool skip_zero_offset = false);

// ---------------------------------------------------------------------------
// JSON record: {"species": [int], "coords": [[f,f,f]], "lattice": [[f,f,f] x3]}

nlohmann::json to_json(const Structure& s);
// Validates shape and invariants; throws InvariantError / std::invalid_argument.
Structure structure_from_json(const nlohmann::json& j, int n_elements = kDefaultElements);

}  // namespace crysi
