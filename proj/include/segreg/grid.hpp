#pragma once

// Axis-aligned voxel grids, interpolation, resampling and intensity normalization.
//
// Every volume in the library shares one linearization: x fastest, then y, then z.
// Continuous voxel indices ("q") place integer values at voxel centers.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace segreg {

using Vec3 = std::array<double, 3>;
using Dims = std::array<int, 3>;

enum class Structure : std::int32_t {
    background = 0,
    bladder = 1,
    rectum = 2,
    ctv = 3,
    urethra = 4,
};

inline constexpr std::int32_t max_label_code = 4;

std::string_view structure_name(Structure s);
/// Accepts "bladder", "rectum", "ctv" (or "prostate"/"prostate-ctv"), "urethra", "background".
Structure parse_structure(std::string_view name);

struct GridGeometry {
    Dims dims{2, 2, 2};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    /// Throws std::invalid_argument unless dims >= 2, spacing > 0 and everything is finite.
    void validate() const;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims[1]) +
                static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(dims[0]) +
               static_cast<std::size_t>(i);
    }
    Vec3 world(int i, int j, int k) const {
        return {origin[0] + i * spacing[0], origin[1] + j * spacing[1], origin[2] + k * spacing[2]};
    }
    Vec3 to_index(const Vec3 &x) const {
        return {(x[0] - origin[0]) / spacing[0], (x[1] - origin[1]) / spacing[1],
                (x[2] - origin[2]) / spacing[2]};
    }

    bool operator==(const GridGeometry &) const = default;
};

/// Index-space affine map from the voxels of one grid into continuous indices of another:
/// q = offset + scale * p. Identical geometries give offset 0 and scale 1 exactly, so
/// co-located lookups land on integer indices without rounding.
struct IndexMap {
    Vec3 scale{1.0, 1.0, 1.0};
    Vec3 offset{0.0, 0.0, 0.0};
    Vec3 inv_spacing{1.0, 1.0, 1.0}; // of the target ("into") grid, for mm displacements

    static IndexMap between(const GridGeometry &from, const GridGeometry &into);

    Vec3 apply(int i, int j, int k) const {
        return {offset[0] + scale[0] * i, offset[1] + scale[1] * j, offset[2] + scale[2] * k};
    }
    /// Same as apply() followed by a displacement given in mm.
    Vec3 apply(int i, int j, int k, const Vec3 &u_mm) const {
        return {offset[0] + scale[0] * i + u_mm[0] * inv_spacing[0],
                offset[1] + scale[1] * j + u_mm[1] * inv_spacing[1],
                offset[2] + scale[2] * k + u_mm[2] * inv_spacing[2]};
    }
};

struct ScalarVolume {
    GridGeometry geometry;
    std::vector<double> data;

    ScalarVolume() = default;
    ScalarVolume(GridGeometry g, double fill = 0.0);
    ScalarVolume(GridGeometry g, std::vector<double> values);

    double &operator()(int i, int j, int k) { return data[geometry.index(i, j, k)]; }
    double operator()(int i, int j, int k) const { return data[geometry.index(i, j, k)]; }

    /// Throws if the geometry is invalid, the length is wrong or any value is non-finite.
    void validate() const;

    bool operator==(const ScalarVolume &) const = default;
};

struct LabelVolume {
    GridGeometry geometry;
    std::vector<std::int32_t> data;

    LabelVolume() = default;
    LabelVolume(GridGeometry g, std::int32_t fill = 0);
    LabelVolume(GridGeometry g, std::vector<std::int32_t> values);

    std::int32_t &operator()(int i, int j, int k) { return data[geometry.index(i, j, k)]; }
    std::int32_t operator()(int i, int j, int k) const { return data[geometry.index(i, j, k)]; }

    void validate() const;
    /// Additionally requires every label to be a known structure code (0..4).
    void validate_codes() const;

    bool operator==(const LabelVolume &) const = default;
};

/// Sorted set of label codes present in the volume.
std::vector<std::int32_t> label_set(const LabelVolume &labels);

// --- sampling ---------------------------------------------------------------

/// Trilinear interpolation at continuous index q with edge-clamp extension.
double sample_trilinear(const ScalarVolume &vol, const Vec3 &q);

/// Trilinear interpolation on a raw x-fastest buffer. No argument checks.
double sample_trilinear(std::span<const double> data, const Dims &dims, const Vec3 &q);

/// Value plus derivative with respect to q (per index unit). On a clamped axis the
/// derivative is zero; at exact integer positions the right-hand cell is used.
double sample_trilinear_grad(std::span<const double> data, const Dims &dims, const Vec3 &q,
                             Vec3 &dq);

/// Nearest voxel, ties broken toward the lower index on each axis, clamped to the grid.
std::int32_t sample_nearest(const LabelVolume &vol, const Vec3 &q);

/// Rounds q to the nearest voxel with the lower-index tie rule and clamps.
std::array<int, 3> nearest_voxel(const Dims &dims, const Vec3 &q);

// --- resampling -------------------------------------------------------------

ScalarVolume resample(const ScalarVolume &vol, const GridGeometry &target);
LabelVolume resample(const LabelVolume &vol, const GridGeometry &target);

/// Grid with the given dims covering the same field of view as `source`
/// (spacing scaled by the dims ratio, voxel-edge extents preserved).
GridGeometry rescaled_geometry(const GridGeometry &source, const Dims &dims);

// --- filtering --------------------------------------------------------------

/// Separable Gaussian smoothing with sigma in voxels (per axis), edge-clamped and
/// kernel truncated at 3 sigma. sigma <= 0 on an axis leaves that axis untouched.
std::vector<double> gaussian_smooth(std::span<const double> data, const Dims &dims,
                                    const Vec3 &sigma_voxels);

ScalarVolume gaussian_smooth(const ScalarVolume &vol, double sigma_voxels);

// --- intensity normalization -------------------------------------------------

struct NormalizedVolume {
    ScalarVolume volume;
    double lo_value = 0.0;
    double hi_value = 0.0;
    bool degenerate = false; // lo == hi; volume is all zeros
};

/// Nearest-rank percentile (1-based rank ceil(p/100 * n), clamped to [1, n]).
double percentile_nearest_rank(std::span<const double> values, double pct);

/// Clip to the [lo_pct, hi_pct] percentile values and rescale into [0, 1].
NormalizedVolume normalize_percentile(const ScalarVolume &vol, double lo_pct = 10.0,
                                      double hi_pct = 90.0);

} // namespace segreg
