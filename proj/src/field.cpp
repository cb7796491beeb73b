#include "segreg/field.hpp"

#include "interp.hpp"

#include <cmath>
#include <stdexcept>

namespace segreg {

using detail::flat;
using detail::lerp;
constexpr auto cell = detail::axis_cell;

DisplacementField::DisplacementField(GridGeometry g, Vec3 fill) : geometry(g), u(g.voxel_count(), fill) {}

DisplacementField::DisplacementField(GridGeometry g, std::vector<Vec3> values)
    : geometry(g), u(std::move(values)) {
    if (u.size() != geometry.voxel_count()) {
        throw std::invalid_argument("displacement field length does not match geometry");
    }
}

void DisplacementField::validate() const {
    geometry.validate();
    if (u.size() != geometry.voxel_count()) {
        throw std::invalid_argument("displacement field length does not match geometry");
    }
    for (const auto &v : u) {
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
            throw std::invalid_argument("displacement field contains non-finite values");
        }
    }
}

Vec3 sample_field(const DisplacementField &field, const Vec3 &q) {
    const auto &g = field.geometry;
    const auto cx = cell(q[0], g.dims[0]);
    const auto cy = cell(q[1], g.dims[1]);
    const auto cz = cell(q[2], g.dims[2]);
    const auto &v000 = field.u[g.index(cx.i0, cy.i0, cz.i0)];
    const auto &v100 = field.u[g.index(cx.i1, cy.i0, cz.i0)];
    const auto &v010 = field.u[g.index(cx.i0, cy.i1, cz.i0)];
    const auto &v110 = field.u[g.index(cx.i1, cy.i1, cz.i0)];
    const auto &v001 = field.u[g.index(cx.i0, cy.i0, cz.i1)];
    const auto &v101 = field.u[g.index(cx.i1, cy.i0, cz.i1)];
    const auto &v011 = field.u[g.index(cx.i0, cy.i1, cz.i1)];
    const auto &v111 = field.u[g.index(cx.i1, cy.i1, cz.i1)];
    Vec3 out{};
    for (int c = 0; c < 3; ++c) {
        if (flat(v000[c], v100[c], v010[c], v110[c], v001[c], v101[c], v011[c], v111[c])) {
            out[c] = v000[c];
            continue;
        }
        const double c00 = lerp(v000[c], v100[c], cx.t);
        const double c10 = lerp(v010[c], v110[c], cx.t);
        const double c01 = lerp(v001[c], v101[c], cx.t);
        const double c11 = lerp(v011[c], v111[c], cx.t);
        out[c] = lerp(lerp(c00, c10, cy.t), lerp(c01, c11, cy.t), cz.t);
    }
    return out;
}

Vec3 sample_field_jacobian(const DisplacementField &field, const Vec3 &q, Mat3 &jac) {
    const auto &g = field.geometry;
    const auto cx = cell(q[0], g.dims[0]);
    const auto cy = cell(q[1], g.dims[1]);
    const auto cz = cell(q[2], g.dims[2]);
    const auto &v000 = field.u[g.index(cx.i0, cy.i0, cz.i0)];
    const auto &v100 = field.u[g.index(cx.i1, cy.i0, cz.i0)];
    const auto &v010 = field.u[g.index(cx.i0, cy.i1, cz.i0)];
    const auto &v110 = field.u[g.index(cx.i1, cy.i1, cz.i0)];
    const auto &v001 = field.u[g.index(cx.i0, cy.i0, cz.i1)];
    const auto &v101 = field.u[g.index(cx.i1, cy.i0, cz.i1)];
    const auto &v011 = field.u[g.index(cx.i0, cy.i1, cz.i1)];
    const auto &v111 = field.u[g.index(cx.i1, cy.i1, cz.i1)];
    const double tx = cx.t, ty = cy.t, tz = cz.t;
    Vec3 out{};
    for (int c = 0; c < 3; ++c) {
        if (flat(v000[c], v100[c], v010[c], v110[c], v001[c], v101[c], v011[c], v111[c])) {
            out[c] = v000[c];
            jac[c] = {0.0, 0.0, 0.0};
            continue;
        }
        const double c00 = lerp(v000[c], v100[c], tx);
        const double c10 = lerp(v010[c], v110[c], tx);
        const double c01 = lerp(v001[c], v101[c], tx);
        const double c11 = lerp(v011[c], v111[c], tx);
        const double c0 = lerp(c00, c10, ty);
        const double c1 = lerp(c01, c11, ty);
        out[c] = lerp(c0, c1, tz);
        const double gx = (1 - ty) * (1 - tz) * (v100[c] - v000[c]) + ty * (1 - tz) * (v110[c] - v010[c]) +
                          (1 - ty) * tz * (v101[c] - v001[c]) + ty * tz * (v111[c] - v011[c]);
        const double gy = (1 - tx) * (1 - tz) * (v010[c] - v000[c]) + tx * (1 - tz) * (v110[c] - v100[c]) +
                          (1 - tx) * tz * (v011[c] - v001[c]) + tx * tz * (v111[c] - v101[c]);
        jac[c] = {cx.clamped ? 0.0 : gx, cy.clamped ? 0.0 : gy, cz.clamped ? 0.0 : c1 - c0};
    }
    return out;
}

ScalarVolume warp_image(const ScalarVolume &moving, const DisplacementField &field) {
    moving.geometry.validate();
    field.geometry.validate();
    const auto map = IndexMap::between(field.geometry, moving.geometry);
    const auto &g = field.geometry;
    ScalarVolume out(g);
    std::size_t n = 0;
    for (int k = 0; k < g.dims[2]; ++k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int i = 0; i < g.dims[0]; ++i, ++n) {
                out.data[n] = sample_trilinear(moving.data, moving.geometry.dims, map.apply(i, j, k, field.u[n]));
            }
        }
    }
    return out;
}

LabelVolume warp_labels(const LabelVolume &moving, const DisplacementField &field) {
    moving.geometry.validate();
    field.geometry.validate();
    const auto map = IndexMap::between(field.geometry, moving.geometry);
    const auto &g = field.geometry;
    LabelVolume out(g);
    std::size_t n = 0;
    for (int k = 0; k < g.dims[2]; ++k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int i = 0; i < g.dims[0]; ++i, ++n) {
                const auto idx = nearest_voxel(moving.geometry.dims, map.apply(i, j, k, field.u[n]));
                out.data[n] = moving.data[moving.geometry.index(idx[0], idx[1], idx[2])];
            }
        }
    }
    return out;
}

DisplacementField compose(const DisplacementField &total, const DisplacementField &increment) {
    if (!(total.geometry == increment.geometry)) {
        throw std::invalid_argument("compose: fields are defined on different grids");
    }
    const auto &g = total.geometry;
    const Vec3 inv{1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
    DisplacementField out(g);
    std::size_t n = 0;
    for (int k = 0; k < g.dims[2]; ++k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int i = 0; i < g.dims[0]; ++i, ++n) {
                const auto &d = increment.u[n];
                const Vec3 q{i + d[0] * inv[0], j + d[1] * inv[1], k + d[2] * inv[2]};
                const Vec3 t = sample_field(total, q);
                out.u[n] = {d[0] + t[0], d[1] + t[1], d[2] + t[2]};
            }
        }
    }
    return out;
}

ScalarVolume jacobian_determinant(const DisplacementField &field) {
    field.geometry.validate();
    const auto &g = field.geometry;
    ScalarVolume out(g);
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];

    // d u_c / d x_axis at (i,j,k)
    auto deriv = [&](int i, int j, int k, int axis, int c) {
        const int n = g.dims[axis];
        const int pos = axis == 0 ? i : axis == 1 ? j : k;
        auto at = [&](int p) {
            const int ii = axis == 0 ? p : i;
            const int jj = axis == 1 ? p : j;
            const int kk = axis == 2 ? p : k;
            return field.u[g.index(ii, jj, kk)][c];
        };
        if (pos == 0) return (at(1) - at(0)) / g.spacing[axis];
        if (pos == n - 1) return (at(n - 1) - at(n - 2)) / g.spacing[axis];
        return (at(pos + 1) - at(pos - 1)) / (2.0 * g.spacing[axis]);
    };

    std::size_t idx = 0;
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i, ++idx) {
                Mat3 m{};
                for (int c = 0; c < 3; ++c) {
                    for (int a = 0; a < 3; ++a) {
                        m[c][a] = (c == a ? 1.0 : 0.0) + deriv(i, j, k, a, c);
                    }
                }
                out.data[idx] = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                                m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                                m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            }
        }
    }
    return out;
}

ScalarVolume displacement_magnitude(const DisplacementField &field) {
    ScalarVolume out(field.geometry);
    for (std::size_t n = 0; n < field.u.size(); ++n) {
        const auto &v = field.u[n];
        out.data[n] = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    }
    return out;
}

DisplacementField resample_field(const DisplacementField &field, const GridGeometry &target) {
    target.validate();
    if (field.geometry == target) return field;
    const auto map = IndexMap::between(target, field.geometry);
    DisplacementField out(target);
    std::size_t n = 0;
    for (int k = 0; k < target.dims[2]; ++k) {
        for (int j = 0; j < target.dims[1]; ++j) {
            for (int i = 0; i < target.dims[0]; ++i, ++n) {
                out.u[n] = sample_field(field, map.apply(i, j, k));
            }
        }
    }
    return out;
}

} // namespace segreg
