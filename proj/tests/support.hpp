#pragma once

// Random fixtures shared by the unit and acceptance suites.

#include "segreg/field.hpp"
#include "segreg/objective.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace segreg::testing {

inline GridGeometry grid(int nx, int ny, int nz, Vec3 spacing = {1.0, 1.0, 1.0}, Vec3 origin = {0.0, 0.0, 0.0}) {
    GridGeometry g;
    g.dims = {nx, ny, nz};
    g.spacing = spacing;
    g.origin = origin;
    return g;
}

/// Gaussian-smoothed uniform noise in [0, 1].
inline ScalarVolume smooth_random_image(const GridGeometry &g, std::uint32_t seed, double sigma = 1.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ScalarVolume v(g);
    for (auto &x : v.data) x = unit(rng);
    return gaussian_smooth(v, sigma);
}

/// Smooth field built from Gaussian-smoothed noise, scaled to the given max |component| in mm.
inline DisplacementField smooth_random_field(const GridGeometry &g, double amplitude, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    DisplacementField f(g);
    for (int c = 0; c < 3; ++c) {
        std::vector<double> comp(g.voxel_count());
        for (auto &x : comp) x = normal(rng);
        comp = gaussian_smooth(comp, g.dims, {1.5, 1.5, 1.5});
        double peak = 0.0;
        for (double x : comp) peak = std::max(peak, std::abs(x));
        for (std::size_t n = 0; n < comp.size(); ++n) f.u[n][c] = amplitude * comp[n] / peak;
    }
    return f;
}

/// Labels: a bladder ellipsoid, a rectum slab and a ctv ball, jittered by the seed.
inline LabelVolume blob_labels(const GridGeometry &g, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.6, 0.6);
    LabelVolume l(g, 0);
    const double cx = (g.dims[0] - 1) / 2.0 + jitter(rng);
    const double cy = (g.dims[1] - 1) / 2.0 + jitter(rng);
    const double cz = (g.dims[2] - 1) / 2.0 + jitter(rng);
    const double r = std::min({g.dims[0], g.dims[1], g.dims[2]}) / 4.0 + jitter(rng) * 0.5;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const double dx = i - cx, dy = j - cy, dz = k - cz;
                if (dx * dx + dy * dy + dz * dz <= r * r) {
                    l(i, j, k) = static_cast<int>(Structure::ctv);
                } else if (j < cy - r - 0.5) {
                    l(i, j, k) = static_cast<int>(Structure::bladder);
                } else if (j > cy + r + 0.5 && i > cx - r) {
                    l(i, j, k) = static_cast<int>(Structure::rectum);
                }
            }
    return l;
}

} // namespace segreg::testing
