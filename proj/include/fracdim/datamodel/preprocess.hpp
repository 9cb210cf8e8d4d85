#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fracdim/core/error.hpp"
#include "fracdim/datamodel/volume.hpp"

namespace fracdim {

/// FWHM = 2*sqrt(2 ln 2)*sigma, i.e. about 2.35482*sigma.
inline const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::numbers::ln2);

inline double fwhm_to_sigma(double fwhm_mm) {
    if (!(fwhm_mm > 0) || !std::isfinite(fwhm_mm)) throw InvalidArgument("fwhm_to_sigma: FWHM must be positive");
    return fwhm_mm / kFwhmPerSigma;
}

inline double sigma_to_fwhm(double sigma) { return sigma * kFwhmPerSigma; }

/// Voxels inside the mask whose temporal standard deviation exceeds
/// activity_threshold times the largest such deviation inside the mask.
/// Columns follow the scan order x fastest, then y, then z.
inline DataMatrix apply_mask_and_threshold(const Volume4D& v, const VoxelMask& mask, double activity_threshold) {
    const auto& d = v.dims();
    if (mask.nx != d.nx || mask.ny != d.ny || mask.nz != d.nz || mask.included.size() != d.spatial())
        throw InvalidArgument("apply_mask_and_threshold: mask dims do not match volume spatial dims");
    if (!(activity_threshold >= 0)) throw InvalidArgument("apply_mask_and_threshold: threshold must be >= 0");

    const std::size_t nvox = d.spatial();
    std::vector<double> sd(nvox, 0.0);
    double max_sd = 0.0;
    for (std::size_t i = 0; i < nvox; ++i) {
        if (!mask.included[i]) continue;
        double mean = 0.0;
        for (int t = 0; t < d.nt; ++t) mean += v.values()[i + nvox * t];
        mean /= d.nt;
        double ss = 0.0;
        for (int t = 0; t < d.nt; ++t) {
            const double e = v.values()[i + nvox * t] - mean;
            ss += e * e;
        }
        sd[i] = std::sqrt(ss / d.nt);
        max_sd = std::max(max_sd, sd[i]);
    }
    const double cut = activity_threshold * max_sd;

    std::vector<std::size_t> keep;
    DataMatrix m;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = v.voxel(x, y, z);
                if (mask.included[i] && sd[i] > cut) {
                    keep.push_back(i);
                    m.voxel_index.push_back({x, y, z});
                }
            }
    if (keep.empty()) throw EmptyResult("apply_mask_and_threshold: no voxel survives mask and threshold");

    m.values.resize(d.nt, Eigen::Index(keep.size()));
    for (int t = 0; t < d.nt; ++t)
        for (std::size_t j = 0; j < keep.size(); ++j) m.values(t, Eigen::Index(j)) = v.values()[keep[j] + nvox * t];
    return m;
}

/// Sampled Gaussian truncated at +-4 sigma (in voxels), unit sum.
inline std::vector<double> gaussian_kernel(double sigma_vox) {
    if (!(sigma_vox > 0)) return {1.0};
    const int radius = int(std::ceil(4.0 * sigma_vox));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[std::size_t(i + radius)] = std::exp(-0.5 * (i * i) / (sigma_vox * sigma_vox));
        sum += k[std::size_t(i + radius)];
    }
    for (double& w : k) w /= sum;
    return k;
}

namespace preprocess_detail {

// 1-D convolution along one axis; the kernel is renormalized over in-bounds taps.
inline void smooth_axis(std::vector<double>& data, const Dims4& d, int axis, std::span<const double> kernel) {
    const int radius = int(kernel.size() / 2);
    if (radius == 0) return;
    const int len = axis == 0 ? d.nx : (axis == 1 ? d.ny : d.nz);
    if (len == 1) return;
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? std::size_t(d.nx) : std::size_t(d.nx) * d.ny);
    const int n_a = axis == 0 ? d.ny : d.nx;
    const int n_b = axis == 2 ? d.ny : d.nz;
    const std::size_t nvox = d.spatial();

    std::vector<double> line(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len));
    for (int t = 0; t < d.nt; ++t)
        for (int b = 0; b < n_b; ++b)
            for (int a = 0; a < n_a; ++a) {
                int x = 0, y = 0, z = 0;
                if (axis == 0) { y = a; z = b; }
                else if (axis == 1) { x = a; z = b; }
                else { x = a; y = b; }
                const std::size_t base =
                    std::size_t(x) + std::size_t(d.nx) * (std::size_t(y) + std::size_t(d.ny) * std::size_t(z)) + nvox * t;
                for (int i = 0; i < len; ++i) line[std::size_t(i)] = data[base + stride * i];
                for (int i = 0; i < len; ++i) {
                    const int lo = std::max(-radius, -i), hi = std::min(radius, len - 1 - i);
                    double acc = 0.0, wsum = 0.0;
                    for (int k = lo; k <= hi; ++k) {
                        const double w = kernel[std::size_t(k + radius)];
                        acc += w * line[std::size_t(i + k)];
                        wsum += w;
                    }
                    out[std::size_t(i)] = acc / wsum;
                }
                for (int i = 0; i < len; ++i) data[base + stride * i] = out[std::size_t(i)];
            }
}

}  // namespace preprocess_detail

/// Per-frame separable 3-D Gaussian smoothing; fwhm_mm = 0 is the identity.
inline Volume4D gaussian_smooth(const Volume4D& v, double fwhm_mm) {
    if (!(fwhm_mm >= 0) || !std::isfinite(fwhm_mm)) throw InvalidArgument("gaussian_smooth: FWHM must be >= 0");
    if (fwhm_mm == 0.0) return v;
    const double sigma_mm = fwhm_to_sigma(fwhm_mm);
    std::vector<double> data = v.values();
    for (int axis = 0; axis < 3; ++axis) {
        const auto kernel = gaussian_kernel(sigma_mm / v.spacing().axis(axis));
        preprocess_detail::smooth_axis(data, v.dims(), axis, kernel);
    }
    return Volume4D(v.dims(), v.spacing(), std::move(data));
}

/// Keeps columns whose grid coordinates are all multiples of the stride.
inline DataMatrix decimate(const DataMatrix& m, int spatial_stride) {
    if (spatial_stride < 1) throw InvalidArgument("decimate: stride must be >= 1");
    if (spatial_stride == 1) return m;
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < m.voxel_index.size(); ++j) {
        const auto& c = m.voxel_index[j];
        if (c[0] % spatial_stride == 0 && c[1] % spatial_stride == 0 && c[2] % spatial_stride == 0)
            keep.push_back(Eigen::Index(j));
    }
    if (keep.empty()) throw EmptyResult("decimate: stride " + std::to_string(spatial_stride) + " leaves no columns");
    DataMatrix out;
    out.values = m.values(Eigen::all, keep);
    for (auto j : keep) out.voxel_index.push_back(m.voxel_index[std::size_t(j)]);
    return out;
}

/// Linear mixture sum_k timecourse_k * flatten(map_k). Maps are rows x cols
/// fields flattened row-major; column j maps back to (x = col, y = row, z = 0).
inline DataMatrix linearize_slice(std::span<const Eigen::MatrixXd> maps, std::span<const Eigen::VectorXd> timecourses) {
    if (maps.empty()) throw InvalidArgument("linearize_slice: no maps");
    if (maps.size() != timecourses.size()) throw InvalidArgument("linearize_slice: one timecourse per map required");
    const auto rows = maps[0].rows(), cols = maps[0].cols();
    const auto t = timecourses[0].size();
    if (rows < 1 || cols < 1 || t < 1) throw InvalidArgument("linearize_slice: empty map or timecourse");
    for (std::size_t k = 0; k < maps.size(); ++k) {
        if (maps[k].rows() != rows || maps[k].cols() != cols) throw InvalidArgument("linearize_slice: map dims differ");
        if (timecourses[k].size() != t) throw InvalidArgument("linearize_slice: timecourse lengths differ");
    }
    DataMatrix m;
    m.values = Eigen::MatrixXd::Zero(t, rows * cols);
    for (std::size_t k = 0; k < maps.size(); ++k) {
        const Eigen::MatrixXd row_major = maps[k].transpose();  // column-major storage of the transpose = row-major
        const Eigen::Map<const Eigen::RowVectorXd> flat(row_major.data(), rows * cols);
        m.values.noalias() += timecourses[k] * flat;
    }
    m.voxel_index.reserve(std::size_t(rows * cols));
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m.voxel_index.push_back({int(c), int(r), 0});
    return m;
}

/// Scatters a matrix back onto a grid (unlisted voxels get `fill`).
inline Volume4D to_volume(const DataMatrix& m, int nx, int ny, int nz, Spacing spacing, double fill = 0.0) {
    const Dims4 d{nx, ny, nz, int(m.t())};
    Volume4D v(d, spacing, std::vector<double>(d.total(), fill));
    for (std::size_t j = 0; j < m.voxel_index.size(); ++j) {
        const auto& c = m.voxel_index[j];
        if (c[0] >= nx || c[1] >= ny || c[2] >= nz) throw InvalidArgument("to_volume: voxel_index outside grid");
        for (Eigen::Index t = 0; t < m.t(); ++t) v.at(c[0], c[1], c[2], int(t)) = m.values(t, Eigen::Index(j));
    }
    return v;
}

/// Reads the listed voxels out of a volume, keeping the matrix's column layout.
inline DataMatrix gather(const Volume4D& v, const std::vector<Index3>& voxel_index) {
    DataMatrix m;
    m.voxel_index = voxel_index;
    m.values.resize(v.dims().nt, Eigen::Index(voxel_index.size()));
    for (std::size_t j = 0; j < voxel_index.size(); ++j)
        for (int t = 0; t < v.dims().nt; ++t)
            m.values(t, Eigen::Index(j)) = v.at(voxel_index[j][0], voxel_index[j][1], voxel_index[j][2], t);
    return m;
}

/// Mask from a volume's first frame: voxels with value > 0 are included.
inline VoxelMask mask_from_volume(const Volume4D& v) {
    VoxelMask mask{v.dims().nx, v.dims().ny, v.dims().nz, std::vector<bool>(v.dims().spatial())};
    for (std::size_t i = 0; i < v.dims().spatial(); ++i) mask.included[i] = v.values()[i] > 0.0;
    return mask;
}

}  // namespace fracdim
