#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "segreg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace segreg;

namespace {

GridGeometry cube(int n, double spacing = 1.0) {
    GridGeometry g;
    g.dims = {n, n, n};
    g.spacing = {spacing, spacing, spacing};
    return g;
}

ScalarVolume random_volume(const GridGeometry &g, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    ScalarVolume v(g);
    for (auto &x : v.data) x = dist(rng);
    return v;
}

// Axis-by-axis interpolation: collapse x, then y, then z.
double separable_oracle(const ScalarVolume &v, Vec3 q) {
    const auto &d = v.geometry.dims;
    int lo[3];
    double t[3];
    for (int a = 0; a < 3; ++a) {
        q[a] = std::clamp(q[a], 0.0, d[a] - 1.0);
        lo[a] = std::min(static_cast<int>(std::floor(q[a])), d[a] - 2);
        t[a] = q[a] - lo[a];
    }
    double along_x[2][2];
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            const double a = v(lo[0], lo[1] + dy, lo[2] + dz);
            const double b = v(lo[0] + 1, lo[1] + dy, lo[2] + dz);
            along_x[dz][dy] = a * (1 - t[0]) + b * t[0];
        }
    }
    double along_y[2];
    for (int dz = 0; dz < 2; ++dz) along_y[dz] = along_x[dz][0] * (1 - t[1]) + along_x[dz][1] * t[1];
    return along_y[0] * (1 - t[2]) + along_y[1] * t[2];
}

} // namespace

TEST_CASE("geometry validation") {
    GridGeometry g = cube(4);
    CHECK_NOTHROW(g.validate());
    g.dims[1] = 1;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g = cube(4);
    g.spacing[2] = 0.0;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g = cube(4);
    g.origin[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("linearization is x fastest") {
    GridGeometry g;
    g.dims = {3, 4, 5};
    CHECK(g.index(1, 0, 0) == 1);
    CHECK(g.index(0, 1, 0) == 3);
    CHECK(g.index(0, 0, 1) == 12);
    CHECK(g.voxel_count() == 60);
}

TEST_CASE("sample_trilinear examples") {
    SUBCASE("constant volume") {
        ScalarVolume v(cube(4), 7.0);
        CHECK(sample_trilinear(v, {1.3, 0.2, 2.9}) == 7.0);
        CHECK(sample_trilinear(v, {-5.0, 10.0, 1.5}) == 7.0);
    }
    SUBCASE("midpoint of adjacent values") {
        ScalarVolume v(cube(2), 0.0);
        v(1, 0, 0) = 1.0;
        v(1, 1, 0) = 1.0;
        v(1, 0, 1) = 1.0;
        v(1, 1, 1) = 1.0;
        CHECK(sample_trilinear(v, {0.5, 0.0, 0.0}) == 0.5);
        CHECK(sample_trilinear(v, {0.5, 0.7, 0.3}) == 0.5);
    }
    SUBCASE("random 4^3 matches separable oracle") {
        const auto v = random_volume(cube(4), 11);
        const Vec3 q{1.3, 2.7, 0.4};
        CHECK(sample_trilinear(v, q) == doctest::Approx(separable_oracle(v, q)).epsilon(1e-14));
    }
    SUBCASE("integer positions are exact") {
        const auto v = random_volume(cube(5), 12);
        for (int k = 0; k < 5; ++k)
            for (int j = 0; j < 5; ++j)
                for (int i = 0; i < 5; ++i) CHECK(sample_trilinear(v, {double(i), double(j), double(k)}) == v(i, j, k));
    }
    SUBCASE("edge clamp") {
        const auto v = random_volume(cube(4), 13);
        CHECK(sample_trilinear(v, {-3.0, 0.0, 0.0}) == v(0, 0, 0));
        CHECK(sample_trilinear(v, {9.0, 3.0, 3.0}) == v(3, 3, 3));
    }
    SUBCASE("non-finite position") {
        const auto v = random_volume(cube(4), 14);
        CHECK_THROWS_AS(sample_trilinear(v, {std::nan(""), 0.0, 0.0}), std::invalid_argument);
        CHECK_THROWS_AS(sample_trilinear(v, {0.0, std::numeric_limits<double>::infinity(), 0.0}),
                        std::invalid_argument);
    }
}

TEST_CASE("trilinear properties") {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SUBCASE("exact on affine functions within 8 ulps") {
        for (int trial = 0; trial < 200; ++trial) {
            const double alpha = 5.0 + 10.0 * unit(rng);
            const double beta = unit(rng), gamma = unit(rng), delta = unit(rng);
            GridGeometry g;
            g.dims = {6, 5, 7};
            ScalarVolume v(g);
            for (int k = 0; k < 7; ++k)
                for (int j = 0; j < 5; ++j)
                    for (int i = 0; i < 6; ++i) v(i, j, k) = alpha + beta * i + gamma * j + delta * k;
            const Vec3 q{5.0 * unit(rng), 4.0 * unit(rng), 6.0 * unit(rng)};
            const double expect = alpha + beta * q[0] + gamma * q[1] + delta * q[2];
            const double got = sample_trilinear(v, q);
            const double ulp = std::nextafter(expect, 1e300) - expect;
            CHECK(std::abs(got - expect) <= 8.0 * ulp);
        }
    }
    SUBCASE("bounded by the eight neighbours") {
        const auto v = random_volume(cube(6), 99);
        for (int trial = 0; trial < 2000; ++trial) {
            const Vec3 q{5.0 * unit(rng), 5.0 * unit(rng), 5.0 * unit(rng)};
            const int i0 = std::min(int(q[0]), 4), j0 = std::min(int(q[1]), 4), k0 = std::min(int(q[2]), 4);
            double lo = 1e300, hi = -1e300;
            for (int dz = 0; dz < 2; ++dz)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        lo = std::min(lo, v(i0 + dx, j0 + dy, k0 + dz));
                        hi = std::max(hi, v(i0 + dx, j0 + dy, k0 + dz));
                    }
            const double s = sample_trilinear(v, q);
            CHECK(s >= lo);
            CHECK(s <= hi);
        }
    }
    SUBCASE("gradient matches finite differences") {
        const auto v = random_volume(cube(5), 7);
        for (int trial = 0; trial < 50; ++trial) {
            const Vec3 q{0.1 + 3.8 * unit(rng), 0.1 + 3.8 * unit(rng), 0.1 + 3.8 * unit(rng)};
            Vec3 dq;
            const double val = sample_trilinear_grad(v.data, v.geometry.dims, q, dq);
            CHECK(val == sample_trilinear(v, q));
            for (int a = 0; a < 3; ++a) {
                Vec3 qp = q, qm = q;
                qp[a] += 1e-6;
                qm[a] -= 1e-6;
                const double fd = (sample_trilinear(v, qp) - sample_trilinear(v, qm)) / 2e-6;
                if (std::floor(qp[a]) == std::floor(qm[a])) CHECK(dq[a] == doctest::Approx(fd).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("sample_nearest") {
    LabelVolume l(cube(2), 0);
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j) {
            l(0, j, k) = 1;
            l(1, j, k) = 2;
        }
    CHECK(sample_nearest(l, {0.0, 0.0, 0.0}) == 1);
    CHECK(sample_nearest(l, {1.0, 1.0, 1.0}) == 2);
    CHECK(sample_nearest(l, {0.49, 0.0, 0.0}) == 1);
    CHECK(sample_nearest(l, {0.51, 0.0, 0.0}) == 2);
    CHECK(sample_nearest(l, {0.5, 0.0, 0.0}) == 1);
    CHECK(sample_nearest(l, {-4.0, 0.0, 0.0}) == 1);
    CHECK(sample_nearest(l, {7.0, 0.5, 0.5}) == 2);
    CHECK_THROWS_AS(sample_nearest(l, {0.0, std::nan(""), 0.0}), std::invalid_argument);
}

TEST_CASE("resample") {
    SUBCASE("identical geometry is bit-identical") {
        GridGeometry g;
        g.dims = {5, 6, 7};
        g.spacing = {0.7, 1.3, 2.1};
        g.origin = {-3.3, 4.1, 0.25};
        const auto v = random_volume(g, 5);
        CHECK(resample(v, g) == v);
        LabelVolume l(g);
        for (std::size_t n = 0; n < l.data.size(); ++n) l.data[n] = static_cast<int>(n % 5);
        CHECK(resample(l, g) == l);
    }
    SUBCASE("constant stays constant") {
        ScalarVolume v(cube(6, 2.0), 3.25);
        GridGeometry t;
        t.dims = {9, 4, 11};
        t.spacing = {1.1, 2.9, 0.8};
        t.origin = {0.3, -1.0, 2.0};
        const auto r = resample(v, t);
        for (double x : r.data) CHECK(x == 3.25);
    }
    SUBCASE("linear ramp under 2x upsampling") {
        GridGeometry src;
        src.dims = {8, 3, 3};
        src.spacing = {2.0, 2.0, 2.0};
        ScalarVolume v(src);
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 3; ++j)
                for (int i = 0; i < 8; ++i) v(i, j, k) = src.world(i, j, k)[0];
        GridGeometry dst;
        dst.dims = {15, 5, 5};
        dst.spacing = {1.0, 1.0, 1.0};
        const auto r = resample(v, dst);
        for (int k = 0; k < 5; ++k)
            for (int j = 0; j < 5; ++j)
                for (int i = 0; i < 15; ++i) CHECK(r(i, j, k) == dst.world(i, j, k)[0]);
    }
    SUBCASE("label resampling never invents labels") {
        std::mt19937 rng(3);
        GridGeometry g = cube(7, 1.5);
        LabelVolume l(g);
        for (auto &x : l.data) x = (rng() % 3 == 0) ? 4 : 1;
        GridGeometry t;
        t.dims = {11, 5, 9};
        t.spacing = {0.9, 2.2, 1.1};
        t.origin = {-2.0, 1.0, 0.5};
        const auto r = resample(l, t);
        for (auto x : r.data) CHECK((x == 1 || x == 4));
    }
    SUBCASE("degenerate target") {
        ScalarVolume v(cube(4));
        GridGeometry t = cube(4);
        t.dims[0] = 1;
        CHECK_THROWS_AS(resample(v, t), std::invalid_argument);
    }
    SUBCASE("rescaled geometry keeps the field of view") {
        const auto g = rescaled_geometry(cube(64, 1.0), {32, 32, 32});
        for (int a = 0; a < 3; ++a) {
            CHECK(g.spacing[a] == 2.0);
            CHECK(g.origin[a] == 0.5);
        }
    }
}

TEST_CASE("normalize_percentile") {
    GridGeometry g;
    g.dims = {5, 5, 4};
    SUBCASE("full range maps linearly onto [0,1]") {
        ScalarVolume v(g);
        for (std::size_t n = 0; n < v.data.size(); ++n) v.data[n] = 3.0 + 2.0 * static_cast<double>(n);
        const auto r = normalize_percentile(v, 0.0, 100.0);
        CHECK_FALSE(r.degenerate);
        for (std::size_t n = 0; n < v.data.size(); ++n) {
            CHECK(r.volume.data[n] == doctest::Approx(static_cast<double>(n) / 99.0).epsilon(1e-15));
        }
    }
    SUBCASE("default percentiles match sort-based nearest-rank oracle") {
        const auto v = random_volume(g, 77);
        std::vector<double> sorted = v.data;
        std::sort(sorted.begin(), sorted.end());
        // 100 voxels: 10th percentile is rank 10, 90th is rank 90 (1-based).
        const double a = sorted[9], b = sorted[89];
        const auto r = normalize_percentile(v);
        CHECK(r.lo_value == a);
        CHECK(r.hi_value == b);
        for (std::size_t n = 0; n < v.data.size(); ++n) {
            CHECK(r.volume.data[n] == (std::clamp(v.data[n], a, b) - a) / (b - a));
        }
    }
    SUBCASE("constant volume is degenerate") {
        ScalarVolume v(g, 12.0);
        const auto r = normalize_percentile(v);
        CHECK(r.degenerate);
        for (double x : r.volume.data) CHECK(x == 0.0);
    }
    SUBCASE("two-value volume") {
        ScalarVolume v(g);
        for (std::size_t n = 0; n < v.data.size(); ++n) v.data[n] = n % 2 ? 100.0 : 0.0;
        const auto r = normalize_percentile(v, 10.0, 90.0);
        CHECK(r.lo_value == 0.0);
        CHECK(r.hi_value == 100.0);
        for (double x : r.volume.data) CHECK((x == 0.0 || x == 1.0));
    }
    SUBCASE("output range and monotonicity") {
        std::mt19937 rng(8);
        std::uniform_real_distribution<double> d(0.0, 3.0);
        const auto v1 = random_volume(g, 1);
        ScalarVolume v2 = v1;
        for (auto &x : v2.data) x += d(rng);
        const auto r1 = normalize_percentile(v1, 10, 90);
        const auto r2 = normalize_percentile(v1, 5, 95);
        for (std::size_t n = 0; n < v1.data.size(); ++n) {
            CHECK(r1.volume.data[n] >= 0.0);
            CHECK(r1.volume.data[n] <= 1.0);
            CHECK(r2.volume.data[n] >= 0.0);
            CHECK(r2.volume.data[n] <= 1.0);
        }
        for (std::size_t a = 0; a < v1.data.size(); ++a)
            for (std::size_t b = 0; b < v1.data.size(); ++b)
                if (v1.data[a] <= v1.data[b]) CHECK(r1.volume.data[a] <= r1.volume.data[b]);
    }
    SUBCASE("bad percentile arguments") {
        ScalarVolume v(g, 1.0);
        CHECK_THROWS_AS(normalize_percentile(v, 50, 50), std::invalid_argument);
        CHECK_THROWS_AS(normalize_percentile(v, -1, 50), std::invalid_argument);
        CHECK_THROWS_AS(normalize_percentile(v, 10, 101), std::invalid_argument);
    }
}

TEST_CASE("gaussian smoothing preserves constants") {
    ScalarVolume v(cube(9), 2.5);
    const auto s = gaussian_smooth(v, 1.0);
    for (double x : s.data) CHECK(x == doctest::Approx(2.5).epsilon(1e-14));
}
