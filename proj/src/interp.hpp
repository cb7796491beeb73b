#pragma once

// Shared trilinear building blocks for volume and field sampling.

#include "segreg/grid.hpp"

#include <algorithm>
#include <cstddef>

namespace segreg::detail {

// Cell lookup on one axis: lower index, fractional weight, and whether q was clamped.
struct AxisCell {
    int i0;
    int i1;
    double t;
    bool clamped;
};

inline AxisCell axis_cell(double q, int n) {
    const double hi = static_cast<double>(n - 1);
    AxisCell c{0, 0, 0.0, false};
    if (q <= 0.0) {
        c.clamped = q < 0.0;
        q = 0.0;
    } else if (q >= hi) {
        c.clamped = q > hi;
        q = hi;
    }
    if (n == 1) return c;
    int i0 = static_cast<int>(q); // q >= 0 here, so truncation is floor
    if (i0 >= n - 1) i0 = n - 2;
    c.i0 = i0;
    c.i1 = i0 + 1;
    c.t = q - i0;
    return c;
}

// Exact at t = 0 and t = 1 and never leaves [min(a, b), max(a, b)].
inline double lerp(double a, double b, double t) {
    if (t == 1.0) return b;
    const double x = a + t * (b - a);
    return std::min(std::max(x, std::min(a, b)), std::max(a, b));
}

// All eight corners equal: every lerp in the cell would return v000 exactly.
inline bool flat(double v000, double v100, double v010, double v110, double v001, double v101, double v011,
                 double v111) {
    return v000 == v100 && v000 == v010 && v000 == v110 && v000 == v001 && v000 == v101 && v000 == v011 &&
           v000 == v111;
}

// The eight corner offsets and weights of one trilinear sample, shareable between
// volumes on the same grid.
struct Cell3 {
    std::size_t o000, o100, o010, o110, o001, o101, o011, o111;
    double tx, ty, tz;
    bool cx, cy, cz; // clamped per axis
};

inline Cell3 make_cell(const Dims &dims, const Vec3 &q) {
    const auto ax = axis_cell(q[0], dims[0]);
    const auto ay = axis_cell(q[1], dims[1]);
    const auto az = axis_cell(q[2], dims[2]);
    const std::size_t nx = dims[0];
    const std::size_t nxy = nx * static_cast<std::size_t>(dims[1]);
    const std::size_t z0 = az.i0 * nxy, z1 = az.i1 * nxy;
    const std::size_t y0 = ay.i0 * nx, y1 = ay.i1 * nx;
    const std::size_t x0 = static_cast<std::size_t>(ax.i0), x1 = static_cast<std::size_t>(ax.i1);
    return {z0 + y0 + x0, z0 + y0 + x1, z0 + y1 + x0, z0 + y1 + x1, z1 + y0 + x0, z1 + y0 + x1, z1 + y1 + x0,
            z1 + y1 + x1, ax.t, ay.t, az.t, ax.clamped, ay.clamped, az.clamped};
}

inline double cell_value(const double *data, const Cell3 &c) {
    const double v000 = data[c.o000], v100 = data[c.o100], v010 = data[c.o010], v110 = data[c.o110];
    const double v001 = data[c.o001], v101 = data[c.o101], v011 = data[c.o011], v111 = data[c.o111];
    if (flat(v000, v100, v010, v110, v001, v101, v011, v111)) return v000;
    const double c00 = lerp(v000, v100, c.tx);
    const double c10 = lerp(v010, v110, c.tx);
    const double c01 = lerp(v001, v101, c.tx);
    const double c11 = lerp(v011, v111, c.tx);
    return lerp(lerp(c00, c10, c.ty), lerp(c01, c11, c.ty), c.tz);
}

// Value and gradient with respect to the index position; zero on clamped axes.
inline double cell_value_grad(const double *data, const Cell3 &c, Vec3 &dq) {
    const double v000 = data[c.o000], v100 = data[c.o100], v010 = data[c.o010], v110 = data[c.o110];
    const double v001 = data[c.o001], v101 = data[c.o101], v011 = data[c.o011], v111 = data[c.o111];
    if (flat(v000, v100, v010, v110, v001, v101, v011, v111)) {
        dq = {0.0, 0.0, 0.0};
        return v000;
    }
    const double tx = c.tx, ty = c.ty, tz = c.tz;
    const double c00 = lerp(v000, v100, tx);
    const double c10 = lerp(v010, v110, tx);
    const double c01 = lerp(v001, v101, tx);
    const double c11 = lerp(v011, v111, tx);
    const double c0 = lerp(c00, c10, ty);
    const double c1 = lerp(c01, c11, ty);
    const double gx = (1 - ty) * (1 - tz) * (v100 - v000) + ty * (1 - tz) * (v110 - v010) +
                      (1 - ty) * tz * (v101 - v001) + ty * tz * (v111 - v011);
    const double gy = (1 - tx) * (1 - tz) * (v010 - v000) + tx * (1 - tz) * (v110 - v100) +
                      (1 - tx) * tz * (v011 - v001) + tx * tz * (v111 - v101);
    dq = {c.cx ? 0.0 : gx, c.cy ? 0.0 : gy, c.cz ? 0.0 : c1 - c0};
    return lerp(c0, c1, tz);
}

} // namespace segreg::detail
