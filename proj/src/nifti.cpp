#include "segreg/nifti.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <unistd.h>

namespace segreg {

namespace {

constexpr std::size_t header_size = 348;
constexpr std::size_t data_offset = 352; // header plus the 4-byte extension flag

template <class T> T byteswap(T v) {
    auto b = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(b.begin(), b.end());
    return std::bit_cast<T>(b);
}

bool host_big() { return std::endian::native == std::endian::big; }

class Writer {
public:
    Writer(std::vector<std::uint8_t> &buf, Endian e) : buf_(buf), swap_((e == Endian::big) != host_big()) {}
    template <class T> void put(std::size_t off, T v) {
        if (swap_) v = byteswap(v);
        std::memcpy(buf_.data() + off, &v, sizeof(T));
    }

private:
    std::vector<std::uint8_t> &buf_;
    bool swap_;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t> &buf, bool swap) : buf_(buf), swap_(swap) {}
    template <class T> T get(std::size_t off) const {
        T v;
        std::memcpy(&v, buf_.data() + off, sizeof(T));
        return swap_ ? byteswap(v) : v;
    }

private:
    const std::vector<std::uint8_t> &buf_;
    bool swap_;
};

int bytes_per(NiftiDatatype t) {
    switch (t) {
    case NiftiDatatype::uint8: return 1;
    case NiftiDatatype::int16: return 2;
    case NiftiDatatype::float32: return 4;
    }
    return 0;
}

const char *datatype_name(NiftiDatatype t) {
    switch (t) {
    case NiftiDatatype::uint8: return "uint8";
    case NiftiDatatype::int16: return "int16";
    case NiftiDatatype::float32: return "float32";
    }
    return "?";
}

// Header for a volume of `count` samples; returns the buffer with data space reserved.
std::vector<std::uint8_t> make_header(const GridGeometry &g, bool vector, NiftiDatatype type, Endian e) {
    g.validate();
    for (int a = 0; a < 3; ++a)
        if (g.dims[a] > std::numeric_limits<std::int16_t>::max())
            throw NiftiError(NiftiErrc::out_of_range, "nifti: dimension exceeds 32767");
    const std::size_t samples = g.voxel_count() * (vector ? 3 : 1);
    std::vector<std::uint8_t> buf(data_offset + samples * bytes_per(type), 0);
    Writer w(buf, e);
    w.put<std::int32_t>(0, static_cast<std::int32_t>(header_size));
    const std::int16_t dim[8] = {static_cast<std::int16_t>(vector ? 5 : 3), static_cast<std::int16_t>(g.dims[0]),
                                 static_cast<std::int16_t>(g.dims[1]), static_cast<std::int16_t>(g.dims[2]),
                                 1, static_cast<std::int16_t>(vector ? 3 : 1), 1, 1};
    for (int i = 0; i < 8; ++i) w.put<std::int16_t>(40 + 2 * i, dim[i]);
    w.put<std::int16_t>(68, vector ? nifti_intent_vector : 0);
    w.put<std::int16_t>(70, static_cast<std::int16_t>(type));
    w.put<std::int16_t>(72, static_cast<std::int16_t>(8 * bytes_per(type)));
    const float pixdim[8] = {1.0f, static_cast<float>(g.spacing[0]), static_cast<float>(g.spacing[1]),
                             static_cast<float>(g.spacing[2]), 1.0f, 1.0f, 1.0f, 1.0f};
    for (int i = 0; i < 8; ++i) w.put<float>(76 + 4 * i, pixdim[i]);
    w.put<float>(108, static_cast<float>(data_offset));
    w.put<float>(112, 1.0f);
    w.put<float>(116, 0.0f);
    buf[123] = 2; // mm
    w.put<std::int16_t>(252, 1); // qform: identity rotation
    w.put<std::int16_t>(254, 1); // sform
    for (int a = 0; a < 3; ++a) w.put<float>(268 + 4 * a, static_cast<float>(g.origin[a]));
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) w.put<float>(280 + 16 * r + 4 * c, r == c ? static_cast<float>(g.spacing[r]) : 0.0f);
        w.put<float>(280 + 16 * r + 12, static_cast<float>(g.origin[r]));
    }
    std::memcpy(buf.data() + 344, "n+1\0", 4);
    return buf;
}

void put_sample(Writer &w, std::size_t index, NiftiDatatype type, double v) {
    const std::size_t off = data_offset + index * bytes_per(type);
    switch (type) {
    case NiftiDatatype::uint8:
        if (!(v >= 0.0 && v <= 255.0 && v == std::floor(v)))
            throw NiftiError(NiftiErrc::out_of_range, "nifti: value " + std::to_string(v) + " does not fit uint8");
        w.put<std::uint8_t>(off, static_cast<std::uint8_t>(v));
        break;
    case NiftiDatatype::int16:
        if (!(v >= -32768.0 && v <= 32767.0 && v == std::floor(v)))
            throw NiftiError(NiftiErrc::out_of_range, "nifti: value " + std::to_string(v) + " does not fit int16");
        w.put<std::int16_t>(off, static_cast<std::int16_t>(v));
        break;
    case NiftiDatatype::float32: {
        if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max())
            throw NiftiError(NiftiErrc::out_of_range, "nifti: value does not fit float32");
        w.put<float>(off, static_cast<float>(v));
        break;
    }
    }
}

struct Parsed {
    NiftiInfo info;
    std::size_t offset = 0;
    bool swap = false;
};

Parsed parse(const std::vector<std::uint8_t> &bytes) {
    if (bytes.size() < header_size) throw NiftiError(NiftiErrc::truncated, "nifti: file shorter than the header");
    Parsed p;
    const Reader native(bytes, false);
    const auto sz = native.get<std::int32_t>(0);
    if (sz == static_cast<std::int32_t>(header_size)) {
        p.swap = false;
    } else if (byteswap(sz) == static_cast<std::int32_t>(header_size)) {
        p.swap = true;
    } else {
        throw NiftiError(NiftiErrc::bad_header, "nifti: sizeof_hdr is not 348 in either byte order");
    }
    p.info.endian = (p.swap != host_big()) ? Endian::big : Endian::little;
    const Reader r(bytes, p.swap);

    if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
        if (std::memcmp(bytes.data() + 344, "ni1\0", 4) == 0)
            throw NiftiError(NiftiErrc::unsupported_format, "nifti: two-file (.hdr/.img) form is not supported");
        throw NiftiError(NiftiErrc::unsupported_format, "nifti: bad magic");
    }

    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i) dim[i] = r.get<std::int16_t>(40 + 2 * i);
    p.info.dim0 = dim[0];
    p.info.intent = r.get<std::int16_t>(68);
    if (dim[0] != 3 && dim[0] != 5) throw NiftiError(NiftiErrc::bad_header, "nifti: dim[0] must be 3 or 5");
    for (int a = 1; a <= dim[0]; ++a)
        if (dim[a] < 1) throw NiftiError(NiftiErrc::bad_header, "nifti: non-positive dimension");
    if (dim[0] == 5 && (dim[4] != 1 || dim[5] != 3 || p.info.intent != nifti_intent_vector))
        throw NiftiError(NiftiErrc::bad_header, "nifti: 5-D files must be vector fields with dim[4] = 1, dim[5] = 3");

    const auto dt = r.get<std::int16_t>(70);
    if (dt != 2 && dt != 4 && dt != 16)
        throw NiftiError(NiftiErrc::unsupported_datatype, "nifti: datatype " + std::to_string(dt) + " is not supported");
    p.info.datatype = static_cast<NiftiDatatype>(dt);

    const double vox_offset = r.get<float>(108);
    if (!(vox_offset >= static_cast<double>(header_size)) || vox_offset != std::floor(vox_offset))
        throw NiftiError(NiftiErrc::bad_header, "nifti: invalid vox_offset");
    p.offset = static_cast<std::size_t>(vox_offset);

    const double slope = r.get<float>(112), inter = r.get<float>(116);
    if (slope != 0.0 && std::isfinite(slope)) {
        p.info.scl_slope = slope;
        p.info.scl_inter = std::isfinite(inter) ? inter : 0.0;
    }

    GridGeometry g;
    g.dims = {dim[1], dim[2], dim[3]};
    const auto qform = r.get<std::int16_t>(252), sform = r.get<std::int16_t>(254);
    if (sform > 0) {
        for (int row = 0; row < 3; ++row) {
            for (int c = 0; c < 3; ++c) {
                const double v = r.get<float>(280 + 16 * row + 4 * c);
                if (row != c && v != 0.0) throw NiftiError(NiftiErrc::oblique, "nifti: oblique sform is not supported");
                if (row == c) g.spacing[row] = v;
            }
            g.origin[row] = r.get<float>(280 + 16 * row + 12);
        }
    } else {
        for (int a = 0; a < 3; ++a) g.spacing[a] = r.get<float>(80 + 4 * a);
        if (qform > 0) {
            const double b = r.get<float>(256), c = r.get<float>(260), d = r.get<float>(264);
            const double qfac = r.get<float>(76);
            if (b != 0.0 || c != 0.0 || d != 0.0 || qfac < 0.0)
                throw NiftiError(NiftiErrc::oblique, "nifti: rotated or flipped qform is not supported");
            for (int a = 0; a < 3; ++a) g.origin[a] = r.get<float>(268 + 4 * a);
        }
    }
    for (int a = 0; a < 3; ++a)
        if (!(g.spacing[a] > 0.0))
            throw NiftiError(NiftiErrc::oblique, "nifti: non-positive or flipped voxel spacing");
    try {
        g.validate();
    } catch (const std::invalid_argument &e) {
        throw NiftiError(NiftiErrc::bad_header, std::string("nifti: ") + e.what());
    }
    p.info.geometry = g;

    const std::size_t samples = g.voxel_count() * (dim[0] == 5 ? 3 : 1);
    if (bytes.size() < p.offset + samples * bytes_per(p.info.datatype))
        throw NiftiError(NiftiErrc::truncated, "nifti: data section is truncated");
    return p;
}

std::vector<double> samples(const std::vector<std::uint8_t> &bytes, const Parsed &p) {
    const Reader r(bytes, p.swap);
    const std::size_t n = p.info.geometry.voxel_count() * (p.info.dim0 == 5 ? 3 : 1);
    const int bp = bytes_per(p.info.datatype);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = p.offset + i * bp;
        double v = 0.0;
        switch (p.info.datatype) {
        case NiftiDatatype::uint8: v = r.get<std::uint8_t>(off); break;
        case NiftiDatatype::int16: v = r.get<std::int16_t>(off); break;
        case NiftiDatatype::float32: v = r.get<float>(off); break;
        }
        if (p.info.scl_slope != 1.0 || p.info.scl_inter != 0.0) v = p.info.scl_slope * v + p.info.scl_inter;
        if (!std::isfinite(v)) throw NiftiError(NiftiErrc::out_of_range, "nifti: non-finite sample");
        out[i] = v;
    }
    return out;
}

} // namespace

std::vector<std::uint8_t> encode_nifti(const ScalarVolume &v, const NiftiWriteOptions &opt) {
    const auto type = opt.datatype.value_or(NiftiDatatype::float32);
    if (v.data.size() != v.geometry.voxel_count()) throw NiftiError(NiftiErrc::bad_header, "nifti: volume length mismatch");
    auto buf = make_header(v.geometry, false, type, opt.endian);
    Writer w(buf, opt.endian);
    for (std::size_t i = 0; i < v.data.size(); ++i) put_sample(w, i, type, v.data[i]);
    return buf;
}

std::vector<std::uint8_t> encode_nifti(const LabelVolume &v, const NiftiWriteOptions &opt) {
    const auto type = opt.datatype.value_or(NiftiDatatype::uint8);
    if (v.data.size() != v.geometry.voxel_count()) throw NiftiError(NiftiErrc::bad_header, "nifti: volume length mismatch");
    auto buf = make_header(v.geometry, false, type, opt.endian);
    Writer w(buf, opt.endian);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        try {
            put_sample(w, i, type, static_cast<double>(v.data[i]));
        } catch (const NiftiError &) {
            throw NiftiError(NiftiErrc::out_of_range, "nifti: label " + std::to_string(v.data[i]) + " does not fit " +
                                                          datatype_name(type));
        }
    }
    return buf;
}

std::vector<std::uint8_t> encode_nifti(const DisplacementField &f, const NiftiWriteOptions &opt) {
    const auto type = opt.datatype.value_or(NiftiDatatype::float32);
    if (f.u.size() != f.geometry.voxel_count()) throw NiftiError(NiftiErrc::bad_header, "nifti: field length mismatch");
    auto buf = make_header(f.geometry, true, type, opt.endian);
    Writer w(buf, opt.endian);
    const std::size_t n = f.u.size();
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i) put_sample(w, c * n + i, type, f.u[i][c]);
    return buf;
}

NiftiInfo decode_nifti_info(const std::vector<std::uint8_t> &bytes) { return parse(bytes).info; }

NiftiObject decode_nifti(const std::vector<std::uint8_t> &bytes) {
    const auto p = parse(bytes);
    if (p.info.dim0 == 5) return decode_field(bytes);
    return decode_scalar(bytes);
}

ScalarVolume decode_scalar(const std::vector<std::uint8_t> &bytes) {
    const auto p = parse(bytes);
    if (p.info.dim0 != 3) throw NiftiError(NiftiErrc::wrong_kind, "nifti: expected a 3-D volume, found a vector field");
    return ScalarVolume(p.info.geometry, samples(bytes, p));
}

LabelVolume decode_labels(const std::vector<std::uint8_t> &bytes) {
    const auto s = decode_scalar(bytes);
    LabelVolume out(s.geometry);
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const double v = s.data[i];
        if (v != std::floor(v) || std::abs(v) > 2147483647.0)
            throw NiftiError(NiftiErrc::wrong_kind, "nifti: label volume holds a non-integer value");
        out.data[i] = static_cast<std::int32_t>(v);
    }
    return out;
}

DisplacementField decode_field(const std::vector<std::uint8_t> &bytes) {
    const auto p = parse(bytes);
    if (p.info.dim0 != 5) throw NiftiError(NiftiErrc::wrong_kind, "nifti: expected a vector field, found a 3-D volume");
    const auto s = samples(bytes, p);
    DisplacementField f(p.info.geometry);
    const std::size_t n = f.u.size();
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i) f.u[i][c] = s[c * n + i];
    return f;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NiftiError(NiftiErrc::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw NiftiError(NiftiErrc::io, "cannot read " + path.string());
    return bytes;
}

void write_file_atomic(const std::filesystem::path &path, const void *data, std::size_t size) {
    auto tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw NiftiError(NiftiErrc::io, "cannot create " + tmp.string());
        out.write(static_cast<const char *>(data), static_cast<std::streamsize>(size));
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw NiftiError(NiftiErrc::io, "cannot write " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw NiftiError(NiftiErrc::io, "cannot rename onto " + path.string());
    }
}

namespace {

template <class T> void write_any(const T &obj, const std::filesystem::path &path, const NiftiWriteOptions &opt) {
    const auto bytes = encode_nifti(obj, opt);
    write_file_atomic(path, bytes.data(), bytes.size());
}

template <class F> auto with_path(const std::filesystem::path &path, F f) {
    try {
        return f(read_file(path));
    } catch (const NiftiError &e) {
        if (e.code() == NiftiErrc::io) throw;
        throw NiftiError(e.code(), path.string() + ": " + e.what());
    }
}

} // namespace

void write_nifti(const ScalarVolume &v, const std::filesystem::path &path, const NiftiWriteOptions &opt) {
    write_any(v, path, opt);
}
void write_nifti(const LabelVolume &v, const std::filesystem::path &path, const NiftiWriteOptions &opt) {
    write_any(v, path, opt);
}
void write_nifti(const DisplacementField &f, const std::filesystem::path &path, const NiftiWriteOptions &opt) {
    write_any(f, path, opt);
}

NiftiInfo read_nifti_info(const std::filesystem::path &path) {
    return with_path(path, [](const auto &b) { return decode_nifti_info(b); });
}
NiftiObject read_nifti(const std::filesystem::path &path) {
    return with_path(path, [](const auto &b) { return decode_nifti(b); });
}
ScalarVolume read_scalar(const std::filesystem::path &path) {
    return with_path(path, [](const auto &b) { return decode_scalar(b); });
}
LabelVolume read_labels(const std::filesystem::path &path) {
    return with_path(path, [](const auto &b) { return decode_labels(b); });
}
DisplacementField read_field(const std::filesystem::path &path) {
    return with_path(path, [](const auto &b) { return decode_field(b); });
}

} // namespace segreg
