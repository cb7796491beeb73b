#include "segreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace segreg {

std::uint64_t SplitMix64::next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SplitMix64::normal() {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
    SplitMix64 a(seed ^ (tag * 0xD1B54A32D192ED03ULL));
    a.next();
    return a.next();
}

namespace {

double sq(double x) { return x * x; }

bool in_bladder(const PhantomSpec &s, const Vec3 &w) {
    return sq((w[0] - s.bladder_center[0]) / s.bladder_semi_axes[0]) +
               sq((w[1] - s.bladder_center[1]) / s.bladder_semi_axes[1]) +
               sq((w[2] - s.bladder_center[2]) / s.bladder_semi_axes[2]) <=
           1.0;
}

bool in_ctv(const PhantomSpec &s, const Vec3 &w) {
    return sq(w[0] - s.ctv_center[0]) + sq(w[1] - s.ctv_center[1]) + sq(w[2] - s.ctv_center[2]) <=
           sq(s.ctv_radius);
}

bool in_urethra_tube(const PhantomSpec &s, const Vec3 &w) {
    return sq(w[0] - s.ctv_center[0]) + sq(w[1] - s.ctv_center[1]) <= sq(s.urethra_radius);
}

bool in_rectum(const PhantomSpec &s, const Vec3 &w) {
    return w[2] >= s.rectum_z0 && w[2] <= s.rectum_z1 &&
           sq(w[0] - s.rectum_axis[0]) + sq(w[1] - s.rectum_axis[1]) <= sq(s.rectum_radius);
}

bool in_body(const PhantomSpec &s, const Vec3 &w) {
    return sq((w[0] - s.body_center[0]) / s.body_semi_x) + sq((w[1] - s.body_center[1]) / s.body_semi_y) <= 1.0;
}

bool in_fat(const PhantomSpec &s, const Vec3 &w) {
    const double ax = s.body_semi_x - s.fat_thickness_mm, ay = s.body_semi_y - s.fat_thickness_mm;
    if (ax <= 0.0 || ay <= 0.0) return true;
    return sq((w[0] - s.body_center[0]) / ax) + sq((w[1] - s.body_center[1]) / ay) > 1.0;
}

Structure label_at(const PhantomSpec &s, const Vec3 &w) {
    if (in_ctv(s, w)) return in_urethra_tube(s, w) ? Structure::urethra : Structure::ctv;
    if (in_bladder(s, w)) return Structure::bladder;
    if (in_rectum(s, w)) return Structure::rectum;
    return Structure::background;
}

void require_inside(const GridGeometry &g, const Vec3 &lo, const Vec3 &hi, const char *what) {
    for (int a = 0; a < 3; ++a) {
        const double first = g.origin[a];
        const double last = g.origin[a] + (g.dims[a] - 1) * g.spacing[a];
        if (lo[a] < first || hi[a] > last)
            throw std::invalid_argument(std::string("phantom: ") + what + " exceeds the grid");
    }
}

std::vector<double> texture_field(const PhantomSpec &spec) {
    const GridGeometry &g = spec.geometry;
    SplitMix64 rng(sub_seed(spec.seed, 2));
    std::vector<double> t(g.voxel_count());
    for (auto &x : t) x = rng.normal();
    t = gaussian_smooth(t, g.dims, {2.0, 2.0, 2.0});
    double peak = 0.0;
    for (double x : t) peak = std::max(peak, std::abs(x));
    if (peak > 0.0)
        for (auto &x : t) x *= spec.texture_amplitude / peak;
    return t;
}

Phantom render(const PhantomSpec &spec, const DisplacementField *to_reference, std::uint64_t noise_seed) {
    spec.validate();
    const GridGeometry &g = spec.geometry;
    const auto texture = texture_field(spec);
    SplitMix64 phase_rng(sub_seed(spec.seed, 3));
    const double phase = phase_rng.uniform(0.0, 2.0 * std::numbers::pi);
    SplitMix64 noise(noise_seed);

    Phantom p{ScalarVolume(g), LabelVolume(g, 0), LabelVolume(g, 0)};
    Vec3 extent;
    for (int a = 0; a < 3; ++a) extent[a] = g.dims[a] * g.spacing[a];
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 here = g.world(i, j, k);
                Vec3 w = here;
                Vec3 q{double(i), double(j), double(k)};
                if (to_reference) {
                    const Vec3 &u = (*to_reference)(i, j, k);
                    for (int a = 0; a < 3; ++a) {
                        w[a] += u[a];
                        q[a] += u[a] / g.spacing[a];
                    }
                }
                const Structure s = label_at(spec, w);
                const bool body = in_body(spec, w);
                double value = spec.outside_intensity;
                if (body) {
                    value = spec.intensity.at(s);
                    if (s == Structure::background) {
                        value = in_fat(spec, w) ? spec.fat_intensity : value + sample_trilinear(texture, g.dims, q);
                    }
                }
                // Receive-coil bias is fixed to the scanner frame, not the anatomy.
                const double bias = 1.0 + spec.bias_amplitude *
                                              std::cos(std::numbers::pi * ((here[0] - g.origin[0]) / extent[0] +
                                                                           0.5 * (here[1] - g.origin[1]) / extent[1] +
                                                                           0.3 * (here[2] - g.origin[2]) / extent[2]) +
                                                       phase);
                value *= bias;
                if (spec.noise_sigma > 0.0) value += spec.noise_sigma * noise.normal();
                const std::size_t n = g.index(i, j, k);
                p.image.data[n] = value;
                p.labels.data[n] = static_cast<std::int32_t>(s);
                p.body.data[n] = body ? 1 : 0;
            }
    return p;
}

} // namespace

void PhantomSpec::validate() const {
    geometry.validate();
    const GridGeometry &g = geometry;
    auto positive = [](double x, const char *what) {
        if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string("phantom: ") + what + " must be positive");
    };
    for (double a : bladder_semi_axes) positive(a, "bladder semi-axis");
    positive(ctv_radius, "ctv radius");
    positive(rectum_radius, "rectum radius");
    positive(urethra_radius, "urethra radius");
    positive(body_semi_x, "body semi-axis");
    positive(body_semi_y, "body semi-axis");
    if (!(rectum_z1 > rectum_z0)) throw std::invalid_argument("phantom: rectum length must be positive");
    if (!(urethra_radius < ctv_radius)) throw std::invalid_argument("phantom: urethra must fit inside the ctv");
    if (!(fat_thickness_mm >= 0.0)) throw std::invalid_argument("phantom: fat thickness must be >= 0");
    if (!(noise_sigma >= 0.0) || !(bias_amplitude >= 0.0) || !(bias_amplitude < 1.0) || !(texture_amplitude >= 0.0))
        throw std::invalid_argument("phantom: noise, bias and texture must be >= 0 (bias < 1)");
    for (auto s : {Structure::background, Structure::bladder, Structure::rectum, Structure::ctv, Structure::urethra})
        if (!intensity.contains(s))
            throw std::invalid_argument("phantom: missing intensity for " + std::string(structure_name(s)));

    const Vec3 r3{ctv_radius, ctv_radius, ctv_radius};
    require_inside(g,
                   {bladder_center[0] - bladder_semi_axes[0], bladder_center[1] - bladder_semi_axes[1],
                    bladder_center[2] - bladder_semi_axes[2]},
                   {bladder_center[0] + bladder_semi_axes[0], bladder_center[1] + bladder_semi_axes[1],
                    bladder_center[2] + bladder_semi_axes[2]},
                   "bladder");
    require_inside(g, {ctv_center[0] - r3[0], ctv_center[1] - r3[1], ctv_center[2] - r3[2]},
                   {ctv_center[0] + r3[0], ctv_center[1] + r3[1], ctv_center[2] + r3[2]}, "ctv");
    require_inside(g, {rectum_axis[0] - rectum_radius, rectum_axis[1] - rectum_radius, rectum_z0},
                   {rectum_axis[0] + rectum_radius, rectum_axis[1] + rectum_radius, rectum_z1}, "rectum");

    // Organs must not share voxels (urethra lies inside the ctv by construction).
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 w = g.world(i, j, k);
                const int hits = int(in_bladder(*this, w)) + int(in_ctv(*this, w)) + int(in_rectum(*this, w));
                if (hits > 1) throw std::invalid_argument("phantom: organs overlap");
                if (hits == 1 && (!in_body(*this, w) || (fat_thickness_mm > 0.0 && in_fat(*this, w))))
                    throw std::invalid_argument("phantom: organ outside the body interior");
            }
}

Phantom make_phantom(const PhantomSpec &spec) { return render(spec, nullptr, sub_seed(spec.seed, 1)); }

Phantom make_phantom(const PhantomSpec &spec, const DisplacementField &to_reference, std::uint64_t noise_seed) {
    if (!(to_reference.geometry == spec.geometry))
        throw std::invalid_argument("make_phantom: field is not on the phantom grid");
    return render(spec, &to_reference, noise_seed);
}

void DeformSpec::validate() const {
    if (bumps < 0) throw std::invalid_argument("deform: bumps must be >= 0");
    if (!(bump_amplitude_mm >= 0.0) || !(bump_sigma_mm > 0.0))
        throw std::invalid_argument("deform: bump amplitude must be >= 0 and sigma > 0");
    if (!(affine_bound >= 0.0) || !(scale > 0.0) || !(translation_bound_mm >= 0.0))
        throw std::invalid_argument("deform: affine bounds must be >= 0 and scale > 0");
    if (!(max_displacement_mm >= 0.0)) throw std::invalid_argument("deform: max displacement must be >= 0");
    if (max_retries < 1) throw std::invalid_argument("deform: max_retries must be >= 1");
}

DisplacementField make_deformation(const DeformSpec &spec, const GridGeometry &g) {
    spec.validate();
    g.validate();
    Vec3 centre, extent;
    for (int a = 0; a < 3; ++a) {
        centre[a] = g.origin[a] + 0.5 * (g.dims[a] - 1) * g.spacing[a];
        extent[a] = (g.dims[a] - 1) * g.spacing[a];
    }
    double worst = 0.0;
    for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
        SplitMix64 rng(sub_seed(spec.seed, 100 + attempt));
        Mat3 a{};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                a[r][c] = (r == c ? spec.scale - 1.0 : 0.0) + rng.uniform(-spec.affine_bound, spec.affine_bound);
        Vec3 t;
        for (auto &x : t) x = rng.uniform(-spec.translation_bound_mm, spec.translation_bound_mm);
        struct Bump {
            Vec3 c, amp;
        };
        std::vector<Bump> bumps(spec.bumps);
        for (auto &b : bumps) {
            for (int d = 0; d < 3; ++d) b.c[d] = centre[d] + rng.uniform(-0.3, 0.3) * extent[d];
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
            const double mag = spec.bump_amplitude_mm * rng.uniform(0.5, 1.0);
            for (int d = 0; d < 3; ++d) b.amp[d] = len > 0.0 ? mag * dir[d] / len : 0.0;
        }

        DisplacementField f(g);
        double peak = 0.0;
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i) {
                    const Vec3 w = g.world(i, j, k);
                    const Vec3 x{w[0] - centre[0], w[1] - centre[1], w[2] - centre[2]};
                    Vec3 u;
                    for (int r = 0; r < 3; ++r) u[r] = a[r][0] * x[0] + a[r][1] * x[1] + a[r][2] * x[2] + t[r];
                    const double inv2s2 = 1.0 / (2.0 * spec.bump_sigma_mm * spec.bump_sigma_mm);
                    for (const auto &b : bumps) {
                        const double d2 = sq(w[0] - b.c[0]) + sq(w[1] - b.c[1]) + sq(w[2] - b.c[2]);
                        const double e = std::exp(-d2 * inv2s2);
                        for (int r = 0; r < 3; ++r) u[r] += b.amp[r] * e;
                    }
                    f(i, j, k) = u;
                    peak = std::max(peak, std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]));
                }
        if (spec.max_displacement_mm > 0.0 && peak > 0.0) {
            const double r = spec.max_displacement_mm / peak;
            for (auto &u : f.u)
                for (auto &x : u) x *= r;
        }
        const auto jac = jacobian_determinant(f);
        worst = *std::min_element(jac.data.begin(), jac.data.end());
        if (worst > 0.1) return f;
    }
    throw std::runtime_error("make_deformation: no field with min Jacobian > 0.1 after " +
                             std::to_string(spec.max_retries) + " attempts (last " + std::to_string(worst) +
                             "); reduce the amplitude");
}

DisplacementField invert_field(const DisplacementField &u, int iterations) {
    u.validate();
    const GridGeometry &g = u.geometry;
    DisplacementField v(g);
    for (std::size_t n = 0; n < v.u.size(); ++n)
        for (int a = 0; a < 3; ++a) v.u[n][a] = -u.u[n][a];
    DisplacementField next(g);
    for (int it = 0; it < iterations; ++it) {
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i) {
                    const Vec3 &cur = v(i, j, k);
                    const Vec3 q{i + cur[0] / g.spacing[0], j + cur[1] / g.spacing[1], k + cur[2] / g.spacing[2]};
                    const Vec3 s = sample_field(u, q);
                    next(i, j, k) = {-s[0], -s[1], -s[2]};
                }
        std::swap(v, next);
    }
    return v;
}

namespace {

DoseVolume fraction_dose(const Phantom &anatomy, const FractionDoseSpec &spec) {
    const GridGeometry &g = anatomy.labels.geometry;
    DoseVolume dose(g, spec.uniform ? spec.dose_gy : 0.0);
    if (spec.uniform) return dose;
    std::vector<Vec3> pts;
    Vec3 c{0.0, 0.0, 0.0};
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const auto l = anatomy.labels(i, j, k);
                if (l == static_cast<int>(Structure::ctv) || l == static_cast<int>(Structure::urethra)) {
                    pts.push_back(g.world(i, j, k));
                    for (int a = 0; a < 3; ++a) c[a] += pts.back()[a];
                }
            }
    if (pts.empty()) throw std::runtime_error("fraction has no ctv voxels");
    for (auto &x : c) x /= static_cast<double>(pts.size());
    double reach = 0.0;
    for (const auto &p : pts) reach = std::max(reach, std::sqrt(sq(p[0] - c[0]) + sq(p[1] - c[1]) + sq(p[2] - c[2])));
    const double plateau = reach + spec.margin_mm;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 w = g.world(i, j, k);
                const double r = std::sqrt(sq(w[0] - c[0]) + sq(w[1] - c[1]) + sq(w[2] - c[2]));
                double d = 0.0;
                if (r <= plateau)
                    d = spec.dose_gy;
                else if (spec.falloff_mm > 0.0 && r < plateau + spec.falloff_mm)
                    d = spec.dose_gy * (1.0 - (r - plateau) / spec.falloff_mm);
                dose(i, j, k) = d;
            }
    return dose;
}

} // namespace

Course make_course(const PhantomSpec &phantom, int n_fractions, const FractionDoseSpec &dose,
                   const DeformSpec &deform) {
    if (n_fractions < 1) throw std::invalid_argument("make_course: n_fractions must be >= 1");
    if (!(dose.dose_gy >= 0.0) || !(dose.margin_mm >= 0.0) || !(dose.falloff_mm >= 0.0))
        throw std::invalid_argument("make_course: dose parameters must be >= 0");
    const GridGeometry &g = phantom.geometry;
    Course c;
    c.reference = make_phantom(phantom);
    c.fractions.push_back(c.reference);
    c.to_reference.emplace_back(g);
    c.records.push_back({1, fraction_dose(c.reference, dose), DisplacementField(g)});
    for (int f = 1; f < n_fractions; ++f) {
        DeformSpec ds = deform;
        ds.seed = sub_seed(deform.seed, static_cast<std::uint64_t>(f));
        auto psi = make_deformation(ds, g);
        auto anatomy = make_phantom(phantom, psi, sub_seed(phantom.seed, 1000 + static_cast<std::uint64_t>(f)));
        auto d = fraction_dose(anatomy, dose);
        c.records.push_back({f + 1, std::move(d), invert_field(psi)});
        c.fractions.push_back(std::move(anatomy));
        c.to_reference.push_back(std::move(psi));
    }
    c.planned_ctv_dose = n_fractions * dose.dose_gy;
    return c;
}

} // namespace segreg
