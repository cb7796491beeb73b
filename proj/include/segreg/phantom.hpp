#pragma once

// Seeded synthetic pelvic phantoms with known deformations and fraction doses.
//
// Random numbers come from SplitMix64:
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   output z ^ (z >> 31)
// uniform() takes the top 53 bits; normal() is Box-Muller on two uniforms.

#include "segreg/dose.hpp"
#include "segreg/field.hpp"
#include "segreg/grid.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace segreg {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    double uniform();                  // [0, 1)
    double uniform(double lo, double hi);
    double normal();                   // standard normal

private:
    std::uint64_t state_;
};

/// Derive an independent stream seed from a base seed and a stream tag.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag);

struct PhantomSpec {
    GridGeometry geometry{{48, 48, 32}, {2.0, 2.0, 2.0}, {0.0, 0.0, 0.0}};
    // World positions in mm.
    Vec3 body_center{47.0, 47.0, 31.0};
    double body_semi_x = 44.0, body_semi_y = 44.0; // elliptic cylinder along z
    Vec3 bladder_center{47.0, 33.0, 36.0};
    Vec3 bladder_semi_axes{20.0, 13.0, 12.0};
    Vec3 ctv_center{47.0, 58.0, 26.0};
    double ctv_radius = 10.5;
    Vec3 rectum_axis{47.0, 77.0, 0.0}; // x, y of a tube along z
    double rectum_radius = 6.5;
    double rectum_z0 = 8.0, rectum_z1 = 50.0;
    double urethra_radius = 2.5; // tube along z through the CTV centre, clipped to the CTV
    std::map<Structure, double> intensity{{Structure::background, 0.45}, {Structure::bladder, 0.9},
                                          {Structure::rectum, 0.2}, {Structure::ctv, 0.65},
                                          {Structure::urethra, 0.8}};
    double outside_intensity = 0.02; // outside the body
    double fat_thickness_mm = 6.0;   // bright subcutaneous layer just inside the body outline
    double fat_intensity = 1.0;
    double texture_amplitude = 0.08; // smooth soft-tissue texture inside the body, outside organs
    double noise_sigma = 0.02;
    double bias_amplitude = 0.1;
    std::uint64_t seed = 1;

    /// Throws std::invalid_argument when a structure leaves the grid or organs overlap.
    void validate() const;
};

struct Phantom {
    ScalarVolume image;
    LabelVolume labels;
    LabelVolume body; // 1 inside the body outline
};

Phantom make_phantom(const PhantomSpec &spec);

/// Anatomy deformed by the pull-back field `to_reference` (fraction grid -> reference space):
/// every voxel takes the analytic label of the point it maps to. Noise uses `noise_seed`.
Phantom make_phantom(const PhantomSpec &spec, const DisplacementField &to_reference, std::uint64_t noise_seed);

struct DeformSpec {
    int bumps = 6;
    double bump_amplitude_mm = 6.0;
    double bump_sigma_mm = 14.0;
    double affine_bound = 0.03;      // each entry of A - I uniform in +-bound
    double scale = 1.0;              // isotropic scaling folded into A
    double translation_bound_mm = 2.0;
    double max_displacement_mm = 8.0; // field rescaled to this peak magnitude; 0 disables
    int max_retries = 16;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Smooth random field u(x) = (A - I)(x - c) + t + sum of Gaussian bumps, c the grid centre.
/// Regenerated with the next sub-seed until min Jacobian determinant > 0.1.
DisplacementField make_deformation(const DeformSpec &spec, const GridGeometry &geometry);

/// Fixed-point inverse of a pull-back field on the same grid: v(p) = -u(p + v(p)).
DisplacementField invert_field(const DisplacementField &u, int iterations = 40);

struct FractionDoseSpec {
    double dose_gy = 8.0;
    bool uniform = false;    // whole grid at dose_gy
    double margin_mm = 5.0;  // plateau radius beyond the deformed CTV
    double falloff_mm = 15.0; // linear falloff to zero
};

struct Course {
    Phantom reference;                           // fraction 1 anatomy
    std::vector<Phantom> fractions;              // anatomy per fraction, fractions[0] is the reference
    std::vector<DisplacementField> to_reference; // fraction grid -> reference, per fraction
    std::vector<FractionRecord> records;         // dose on the fraction grid + reference -> fraction field
    double planned_ctv_dose = 0.0;               // n * dose_gy
};

Course make_course(const PhantomSpec &phantom, int n_fractions, const FractionDoseSpec &dose,
                   const DeformSpec &deform);

} // namespace segreg
