#pragma once

// Single-file NIfTI-1 (.nii) subset: 3-D scalar and label volumes and 3-D displacement
// fields stored as dim[0] = 5, dim[5] = 3 with intent "vector" (1007), components
// (ux, uy, uz) in mm, all ux first. Only axis-aligned orientations are accepted; the
// voxel-to-world map is origin + index * spacing.

#include "segreg/field.hpp"
#include "segreg/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace segreg {

enum class NiftiDatatype : std::int16_t { uint8 = 2, int16 = 4, float32 = 16 };
enum class Endian { little, big };

inline constexpr std::int16_t nifti_intent_vector = 1007;

enum class NiftiErrc {
    io = 1,
    bad_header,           // sizeof_hdr wrong in both byte orders, bad dims or vox_offset
    unsupported_format,   // magic other than "n+1", e.g. the two-file "ni1" form
    unsupported_datatype,
    oblique,              // rotated, sheared or flipped orientation
    truncated,
    wrong_kind,           // e.g. a vector field read as a scalar volume
    out_of_range,         // value not representable in the requested datatype
};

class NiftiError : public std::runtime_error {
public:
    NiftiError(NiftiErrc code, const std::string &what) : std::runtime_error(what), code_(code) {}
    NiftiErrc code() const { return code_; }

private:
    NiftiErrc code_;
};

struct NiftiWriteOptions {
    std::optional<NiftiDatatype> datatype; // default float32 for scalars and fields, uint8 for labels
    Endian endian = Endian::little;
};

struct NiftiInfo {
    NiftiDatatype datatype = NiftiDatatype::float32;
    Endian endian = Endian::little;
    int dim0 = 3;
    int intent = 0;
    GridGeometry geometry;
    double scl_slope = 1.0;
    double scl_inter = 0.0;
};

using NiftiObject = std::variant<ScalarVolume, DisplacementField>;

std::vector<std::uint8_t> encode_nifti(const ScalarVolume &v, const NiftiWriteOptions &opt = {});
std::vector<std::uint8_t> encode_nifti(const LabelVolume &v, const NiftiWriteOptions &opt = {});
std::vector<std::uint8_t> encode_nifti(const DisplacementField &f, const NiftiWriteOptions &opt = {});

NiftiInfo decode_nifti_info(const std::vector<std::uint8_t> &bytes);
/// Scalar volume for dim[0] = 3, displacement field for vector files.
NiftiObject decode_nifti(const std::vector<std::uint8_t> &bytes);
ScalarVolume decode_scalar(const std::vector<std::uint8_t> &bytes);
/// Scaled values must be integers.
LabelVolume decode_labels(const std::vector<std::uint8_t> &bytes);
DisplacementField decode_field(const std::vector<std::uint8_t> &bytes);

/// Writes to a temporary file in the same directory, then renames over `path`.
void write_nifti(const ScalarVolume &v, const std::filesystem::path &path, const NiftiWriteOptions &opt = {});
void write_nifti(const LabelVolume &v, const std::filesystem::path &path, const NiftiWriteOptions &opt = {});
void write_nifti(const DisplacementField &f, const std::filesystem::path &path, const NiftiWriteOptions &opt = {});

NiftiInfo read_nifti_info(const std::filesystem::path &path);
NiftiObject read_nifti(const std::filesystem::path &path);
ScalarVolume read_scalar(const std::filesystem::path &path);
LabelVolume read_labels(const std::filesystem::path &path);
DisplacementField read_field(const std::filesystem::path &path);

/// Byte-level helpers shared with the report writer.
std::vector<std::uint8_t> read_file(const std::filesystem::path &path);
void write_file_atomic(const std::filesystem::path &path, const void *data, std::size_t size);

} // namespace segreg
