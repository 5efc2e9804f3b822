#pragma once

#include "embgeo/dataset.hpp"

#include <nlohmann/json_fwd.hpp>

#include <random>

namespace embgeo {

enum class ManifoldKind { flat_subspace, swiss_roll, sphere, heterogeneous_patchwork };

std::string_view manifold_kind_name(ManifoldKind kind);
ManifoldKind parse_manifold_kind(std::string_view name);

struct PatchSpec {
  std::size_t dim = 2;
  double weight = 1.0;
};

struct ManifoldSpec {
  ManifoldKind kind = ManifoldKind::flat_subspace;
  std::size_t d = 2;        // intrinsic dimension (ignored for patchwork)
  std::size_t D = 64;       // ambient dimension
  std::size_t n = 1000;
  double noise = 0.0;       // isotropic Gaussian std per ambient coordinate
  std::uint64_t seed = 0;
  std::vector<PatchSpec> patches;
  // Flat subspace: side length of each cube axis (empty = all `scale`).
  std::vector<double> axis_scales;
  double scale = 1.0;          // cube side, sphere radius, patch side
  double center_spread = 0.0;  // patchwork: std of random patch centers
  int year = 2020;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Ground truth retained alongside a synthetic dataset.
struct ManifoldOracle {
  ManifoldSpec spec;
  // One frame per patch (a single entry for non-patchwork kinds). For swiss
  // roll and sphere the frame spans the host space of the curved surface.
  std::vector<Matrix> frames;
  std::vector<Vector> centers;
  std::vector<std::size_t> patch_dims;
  std::vector<std::size_t> patch_of_row;
  // Generating coordinates, N x max latent dim, zero-padded. For swiss roll
  // (t, h); for sphere the unit-sphere point scaled by the radius.
  Matrix latent;
  // Planted properties: name and ambient direction (global) ...
  std::vector<std::string> planted_names;
  std::vector<Vector> planted_directions;
  // ... or one direction per patch.
  std::vector<std::string> patch_property_names;
  std::vector<std::vector<Vector>> patch_directions;

  /// Noise-free ambient position of a row, in double precision.
  Vector clean_point(std::size_t row) const;
  /// Exact tangent frame (D x m) at a row for flat kinds.
  const Matrix& tangent_frame(std::size_t row) const;
};

struct SynthResult {
  EmbeddingDataset dataset;
  ManifoldOracle oracle;
};

/// D x m matrix with orthonormal columns, Haar-distributed.
Matrix random_orthonormal_frame(std::size_t D, std::size_t m, std::mt19937_64& rng);

/// Synthetic lat/lon for row i of n: a ceil(sqrt(n)) grid over the unit square, lon-major.
std::pair<double, double> grid_coordinate(std::size_t i, std::size_t n);

SynthResult generate_manifold(const ManifoldSpec& spec);

/**
 * Append covariates y_j = <x_j-row, u_j> + eps for unit directions u_j.
 * Names default to planted_0, planted_1, ...
 */
SynthResult attach_planted_properties(SynthResult base, const std::vector<Vector>& directions,
                                      double noise, std::uint64_t seed,
                                      std::vector<std::string> names = {});

/**
 * Patchwork only: for each of `count` properties draw an independent unit
 * direction u_p inside every patch's span and append y = <x - c_p, u_p> + eps.
 */
SynthResult attach_patch_properties(SynthResult base, std::size_t count, double noise,
                                    std::uint64_t seed, std::vector<std::string> names = {});

/// Patchwork with `count` equal-weight patches, dimensions cycled from `dims`.
std::vector<PatchSpec> equal_patches(std::size_t count, const std::vector<std::size_t>& dims);

nlohmann::json oracle_to_json(const ManifoldOracle& oracle, bool include_latent = true);
ManifoldSpec manifold_spec_from_json(const nlohmann::json& j);
nlohmann::json manifold_spec_to_json(const ManifoldSpec& spec);

}  // namespace embgeo
