#pragma once

// Volume readers/writers: uncompressed single-file NIfTI-1 (.nii) and a raw
// little-endian float32 payload with a text sidecar.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fracdim/core/error.hpp"
#include "fracdim/datamodel/volume.hpp"

namespace fracdim {

enum class VolumeFormat { nifti1, raw_f32_4d };

inline VolumeFormat parse_volume_format(const std::string& s) {
    if (s == "nifti1" || s == "nifti1-uncompressed" || s == "nii") return VolumeFormat::nifti1;
    if (s == "raw-f32-4d" || s == "raw") return VolumeFormat::raw_f32_4d;
    throw InvalidArgument("unknown volume format '" + s + "'");
}

enum class NiftiDatatype : std::int16_t { int16 = 4, float32 = 16, float64 = 64 };

namespace nifti_detail {

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kVoxOffset = 352;  // header + 4-byte extension flag

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

template <class T>
T load(const std::vector<char>& buf, std::size_t off, bool swap) {
    if (off + sizeof(T) > buf.size()) throw FormatError("truncated NIfTI-1 header", off);
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    if (swap) {
        auto* p = reinterpret_cast<unsigned char*>(&v);
        std::reverse(p, p + sizeof(T));
    }
    return v;
}

template <class T>
void store(std::string& buf, std::size_t off, T v) {
    static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
    std::memcpy(buf.data() + off, &v, sizeof(T));
}

inline std::size_t bytes_per_voxel(NiftiDatatype dt) {
    switch (dt) {
        case NiftiDatatype::int16: return 2;
        case NiftiDatatype::float32: return 4;
        case NiftiDatatype::float64: return 8;
    }
    return 0;
}

}  // namespace nifti_detail

inline Volume4D read_nifti1(const std::filesystem::path& path) {
    using namespace nifti_detail;
    const auto buf = read_file(path);
    if (buf.size() < kHeaderSize) throw FormatError("file shorter than the 348-byte NIfTI-1 header", buf.size());

    bool swap = false;
    const auto sizeof_hdr = load<std::int32_t>(buf, 0, false);
    if (sizeof_hdr != 348) {
        if (load<std::int32_t>(buf, 0, true) == 348)
            swap = true;
        else
            throw FormatError("sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348", 0);
    }
    if (std::memcmp(buf.data() + 344, "n+1\0", 4) != 0)
        throw FormatError("magic is not \"n+1\" (only single-file .nii is supported)", 344);

    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(buf, 40 + 2 * i, swap);
    if (dim[0] < 1 || dim[0] > 7) throw FormatError("dim[0] = " + std::to_string(dim[0]) + " out of range 1..7", 40);
    for (int i = 5; i <= dim[0]; ++i)
        if (dim[i] > 1) throw FormatError("volumes with more than 4 dimensions are not supported", 40 + 2 * i);
    Dims4 dims;
    int* d[4] = {&dims.nx, &dims.ny, &dims.nz, &dims.nt};
    for (int i = 1; i <= 4; ++i) {
        *d[i - 1] = i <= dim[0] ? dim[i] : 1;
        if (*d[i - 1] < 1) throw FormatError("dim[" + std::to_string(i) + "] must be >= 1", 40 + 2 * i);
    }

    const auto raw_dt = load<std::int16_t>(buf, 70, swap);
    NiftiDatatype dt;
    switch (raw_dt) {
        case 4: dt = NiftiDatatype::int16; break;
        case 16: dt = NiftiDatatype::float32; break;
        case 64: dt = NiftiDatatype::float64; break;
        default: throw FormatError("unsupported datatype code " + std::to_string(raw_dt), 70);
    }

    Spacing spacing;
    double* s[3] = {&spacing.sx, &spacing.sy, &spacing.sz};
    for (int i = 1; i <= 3; ++i) {
        const double p = std::fabs(double(load<float>(buf, 76 + 4 * i, swap)));
        if (!(p > 0) || !std::isfinite(p))
            throw FormatError("pixdim[" + std::to_string(i) + "] must be positive", 76 + 4 * i);
        *s[i - 1] = p;
    }

    const float vox_offset = load<float>(buf, 108, swap);
    if (!(vox_offset >= float(kHeaderSize))) throw FormatError("vox_offset below header size", 108);
    double slope = load<float>(buf, 112, swap);
    const double inter = load<float>(buf, 116, swap);
    if (slope == 0.0 || !std::isfinite(slope)) slope = 1.0;

    const std::size_t start = std::size_t(vox_offset);
    const std::size_t bpv = bytes_per_voxel(dt);
    const std::size_t need = dims.total() * bpv;
    if (buf.size() < start + need)
        throw FormatError("payload holds " + std::to_string(buf.size() > start ? buf.size() - start : 0) +
                              " bytes but dims imply " + std::to_string(need),
                          buf.size());

    std::vector<double> values(dims.total());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t off = start + i * bpv;
        double raw = 0.0;
        switch (dt) {
            case NiftiDatatype::int16: raw = load<std::int16_t>(buf, off, swap); break;
            case NiftiDatatype::float32: raw = load<float>(buf, off, swap); break;
            case NiftiDatatype::float64: raw = load<double>(buf, off, swap); break;
        }
        if (!std::isfinite(raw)) throw FormatError("non-finite voxel value", off);
        values[i] = slope * raw + inter;
    }
    return Volume4D(dims, spacing, std::move(values));
}

/// Writes a single-file NIfTI-1. int16 output rounds and saturates values; no scaling is applied.
inline void write_nifti1(const std::filesystem::path& path, const Volume4D& v,
                         NiftiDatatype dt = NiftiDatatype::float32) {
    using namespace nifti_detail;
    const std::size_t bpv = bytes_per_voxel(dt);
    std::string buf(kVoxOffset + v.dims().total() * bpv, '\0');
    store<std::int32_t>(buf, 0, 348);
    buf[38] = 'r';  // regular
    const auto& d = v.dims();
    const std::int16_t dim[8] = {4, std::int16_t(d.nx), std::int16_t(d.ny), std::int16_t(d.nz), std::int16_t(d.nt), 1, 1, 1};
    for (int i = 0; i < 8; ++i) store<std::int16_t>(buf, 40 + 2 * i, dim[i]);
    store<std::int16_t>(buf, 70, std::int16_t(dt));
    store<std::int16_t>(buf, 72, std::int16_t(bpv * 8));
    const float pixdim[8] = {1.0f, float(v.spacing().sx), float(v.spacing().sy), float(v.spacing().sz), 1.0f, 0, 0, 0};
    for (int i = 0; i < 8; ++i) store<float>(buf, 76 + 4 * i, pixdim[i]);
    store<float>(buf, 108, float(kVoxOffset));
    store<float>(buf, 112, 1.0f);
    store<float>(buf, 116, 0.0f);
    buf[123] = 2 | 8;  // mm, s
    std::memcpy(buf.data() + 344, "n+1\0", 4);

    for (std::size_t i = 0; i < v.values().size(); ++i) {
        const std::size_t off = kVoxOffset + i * bpv;
        const double x = v.values()[i];
        switch (dt) {
            case NiftiDatatype::int16:
                store<std::int16_t>(buf, off, std::int16_t(std::clamp(std::round(x), -32768.0, 32767.0)));
                break;
            case NiftiDatatype::float32: store<float>(buf, off, float(x)); break;
            case NiftiDatatype::float64: store<double>(buf, off, x); break;
        }
    }
    write_file_atomic(path, buf);
}

/// Sidecar path for a raw-f32-4d payload.
inline std::filesystem::path raw_sidecar_path(const std::filesystem::path& payload) {
    auto p = payload;
    p += ".dims";
    return p;
}

inline Volume4D read_raw_f32_4d(const std::filesystem::path& path) {
    using namespace nifti_detail;
    const auto side_path = raw_sidecar_path(path);
    std::ifstream side(side_path);
    if (!side) throw IoError("missing raw-f32-4d sidecar '" + side_path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
    std::replace_if(text.begin(), text.end(), [](char c) { return c == '{' || c == '}' || c == ','; }, ' ');
    std::istringstream fields(text);
    double f[7];
    for (int i = 0; i < 7; ++i)
        if (!(fields >> f[i])) throw FormatError("sidecar must hold {nx,ny,nz,nt,sx,sy,sz}; field " + std::to_string(i) + " unreadable");
    for (int i = 0; i < 4; ++i)
        if (f[i] < 1 || f[i] != std::floor(f[i])) throw FormatError("sidecar dimension " + std::to_string(i) + " is not a positive integer");
    const Dims4 dims{int(f[0]), int(f[1]), int(f[2]), int(f[3])};
    const Spacing spacing{f[4], f[5], f[6]};

    const auto buf = read_file(path);
    const std::size_t need = dims.total() * 4;
    if (buf.size() != need)
        throw FormatError("payload holds " + std::to_string(buf.size()) + " bytes but sidecar dims imply " +
                              std::to_string(need),
                          std::min(buf.size(), need));
    std::vector<double> values(dims.total());
    const bool swap = std::endian::native != std::endian::little;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float x = load<float>(buf, 4 * i, swap);
        if (!std::isfinite(x)) throw FormatError("non-finite voxel value", 4 * i);
        values[i] = x;
    }
    return Volume4D(dims, spacing, std::move(values));
}

inline void write_raw_f32_4d(const std::filesystem::path& path, const Volume4D& v) {
    using namespace nifti_detail;
    std::string payload(v.values().size() * 4, '\0');
    for (std::size_t i = 0; i < v.values().size(); ++i) store<float>(payload, 4 * i, float(v.values()[i]));
    write_file_atomic(path, payload);
    std::ostringstream side;
    side << std::setprecision(17) << '{' << v.dims().nx << ',' << v.dims().ny << ',' << v.dims().nz << ','
         << v.dims().nt << ',' << v.spacing().sx << ',' << v.spacing().sy << ',' << v.spacing().sz << "}\n";
    write_file_atomic(raw_sidecar_path(path), side.str());
}

inline Volume4D load_volume(const std::filesystem::path& path, VolumeFormat format) {
    return format == VolumeFormat::nifti1 ? read_nifti1(path) : read_raw_f32_4d(path);
}

inline void save_volume(const std::filesystem::path& path, const Volume4D& v, VolumeFormat format) {
    if (format == VolumeFormat::nifti1)
        write_nifti1(path, v);
    else
        write_raw_f32_4d(path, v);
}

}  // namespace fracdim
