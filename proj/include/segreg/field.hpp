#pragma once

// Dense displacement fields in the pull-back convention: u(p) lives on the fixed
// (reference) grid and points, in mm, to where p's content is found in the moving image.
// The transform is phi(p) = x(p) + u(p).

#include "segreg/grid.hpp"

#include <array>
#include <vector>

namespace segreg {

using Mat3 = std::array<std::array<double, 3>, 3>;

struct DisplacementField {
    GridGeometry geometry;
    std::vector<Vec3> u; // mm, x-fastest

    DisplacementField() = default;
    explicit DisplacementField(GridGeometry g, Vec3 fill = {0.0, 0.0, 0.0});
    DisplacementField(GridGeometry g, std::vector<Vec3> values);

    Vec3 &operator()(int i, int j, int k) { return u[geometry.index(i, j, k)]; }
    const Vec3 &operator()(int i, int j, int k) const { return u[geometry.index(i, j, k)]; }

    void validate() const;

    bool operator==(const DisplacementField &) const = default;
};

/// Component-wise trilinear sample of the field at continuous index q (edge-clamped).
Vec3 sample_field(const DisplacementField &field, const Vec3 &q);

/// Sample plus d(u)/d(q): jac[c][a] = d u_c / d q_a, per index unit.
Vec3 sample_field_jacobian(const DisplacementField &field, const Vec3 &q, Mat3 &jac);

/// Moving image resampled onto the field grid: out(p) = moving(phi(p)), trilinear.
ScalarVolume warp_image(const ScalarVolume &moving, const DisplacementField &field);

/// Label propagation with nearest-neighbour lookup.
LabelVolume warp_labels(const LabelVolume &moving, const DisplacementField &field);

/// Field equivalent to warping by `total` first and then by `increment`:
/// u'(p) = u_inc(p) + u_total(p + u_inc(p) / spacing). Both fields must share a grid.
DisplacementField compose(const DisplacementField &total, const DisplacementField &increment);

/// det(I + grad u) per voxel. Central differences inside, first-order one-sided on
/// the boundary, derivatives taken per mm.
ScalarVolume jacobian_determinant(const DisplacementField &field);

/// |u(p)| in mm.
ScalarVolume displacement_magnitude(const DisplacementField &field);

/// Trilinear resampling of each component onto another grid. Displacements stay in mm.
DisplacementField resample_field(const DisplacementField &field, const GridGeometry &target);

} // namespace segreg
