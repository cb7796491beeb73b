#pragma once

// Overlap and surface-distance metrics on binary masks.

#include "segreg/grid.hpp"

#include <cstdint>
#include <vector>

namespace segreg {

struct BinaryMask {
    GridGeometry geometry;
    std::vector<std::uint8_t> data; // 0 or 1

    BinaryMask() = default;
    explicit BinaryMask(GridGeometry g, std::uint8_t fill = 0);

    std::uint8_t &operator()(int i, int j, int k) { return data[geometry.index(i, j, k)]; }
    std::uint8_t operator()(int i, int j, int k) const { return data[geometry.index(i, j, k)]; }
    std::size_t count() const;
    bool operator==(const BinaryMask &) const = default;
};

BinaryMask structure_mask(const LabelVolume &labels, Structure s);

/// 2|A and B| / (|A| + |B|); 1 when both are empty.
double dsc_binary(const BinaryMask &a, const BinaryMask &b);

struct SurfacePointSet {
    std::vector<std::array<int, 3>> voxels;
    std::vector<Vec3> points; // voxel centers, mm
};

/// Foreground voxels with a 6-neighbour that is background or outside the volume.
SurfacePointSet extract_surface(const BinaryMask &mask);

/// Distances from every point of `from` to its nearest point of `to`, in `from` order.
/// Uses a bucket grid over `to`; the result equals the all-pairs minimum exactly.
std::vector<double> directed_surface_distances(const SurfacePointSet &from, const SurfacePointSet &to,
                                               const GridGeometry &geometry);

/// Pooled A->B and B->A surface distances.
std::vector<double> pooled_surface_distances(const BinaryMask &a, const BinaryMask &b);

/// Nearest-rank 95th percentile of the pooled distances, mm.
double hd95(const BinaryMask &a, const BinaryMask &b);

/// Mean of the pooled distances, mm.
double mda(const BinaryMask &a, const BinaryMask &b);

/// Squared distance between two points, summed x, y, z. Shared with the test oracle.
inline double squared_distance(const Vec3 &p, const Vec3 &q) {
    const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
    return dx * dx + dy * dy + dz * dz;
}

} // namespace segreg
