#pragma once

// DataMatrix export formats.
//
// Binary layout (little-endian):
//   bytes 0..7   magic "FDIMMAT1"
//   bytes 8..15  uint64 length L of the JSON header
//   next L bytes JSON header {"t", "n", "dtype": "f64le", "order": "row-major", "voxel_index": [[x,y,z],...]}
//   then t*n float64 values, row-major (one time point after another)

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fracdim/core/error.hpp"
#include "fracdim/datamodel/nifti.hpp"
#include "fracdim/datamodel/volume.hpp"

namespace fracdim {

inline constexpr char kMatrixMagic[8] = {'F', 'D', 'I', 'M', 'M', 'A', 'T', '1'};

/// Shortest round-trip decimal for a double.
inline std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline std::string encode_matrix_binary(const Eigen::MatrixXd& values, const nlohmann::json& header_extra = {}) {
    static_assert(std::endian::native == std::endian::little, "binary export assumes a little-endian host");
    nlohmann::json header = header_extra.is_object() ? header_extra : nlohmann::json::object();
    header["t"] = values.rows();
    header["n"] = values.cols();
    header["dtype"] = "f64le";
    header["order"] = "row-major";
    const std::string h = header.dump();
    std::string out(16 + h.size() + std::size_t(values.size()) * 8, '\0');
    std::memcpy(out.data(), kMatrixMagic, 8);
    const std::uint64_t len = h.size();
    std::memcpy(out.data() + 8, &len, 8);
    std::memcpy(out.data() + 16, h.data(), h.size());
    char* p = out.data() + 16 + h.size();
    for (Eigen::Index r = 0; r < values.rows(); ++r)
        for (Eigen::Index c = 0; c < values.cols(); ++c, p += 8) {
            const double v = values(r, c);
            std::memcpy(p, &v, 8);
        }
    return out;
}

inline std::string encode_matrix_binary(const DataMatrix& m, const nlohmann::json& header_extra = {}) {
    nlohmann::json extra = header_extra.is_object() ? header_extra : nlohmann::json::object();
    extra["voxel_index"] = nlohmann::json::array();
    for (const auto& c : m.voxel_index) extra["voxel_index"].push_back({c[0], c[1], c[2]});
    return encode_matrix_binary(m.values, extra);
}

struct DecodedMatrix {
    Eigen::MatrixXd values;
    nlohmann::json header;
};

inline DecodedMatrix decode_matrix_binary(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMatrixMagic, 8) != 0)
        throw FormatError("not an FDIMMAT1 matrix file", 0);
    std::uint64_t len;
    std::memcpy(&len, bytes.data() + 8, 8);
    if (16 + len > bytes.size()) throw FormatError("matrix JSON header runs past end of file", 8);
    DecodedMatrix d;
    try {
        d.header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + std::ptrdiff_t(len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad matrix JSON header: ") + e.what(), 16);
    }
    const auto t = d.header.value("t", std::int64_t(-1));
    const auto n = d.header.value("n", std::int64_t(-1));
    if (t < 0 || n < 0) throw FormatError("matrix header lacks t/n", 16);
    const std::size_t start = 16 + len;
    if (bytes.size() != start + std::size_t(t * n) * 8)
        throw FormatError("matrix payload size does not match t*n", bytes.size());
    d.values.resize(t, n);
    const char* p = bytes.data() + start;
    for (Eigen::Index r = 0; r < t; ++r)
        for (Eigen::Index c = 0; c < n; ++c, p += 8) std::memcpy(&d.values(r, c), p, 8);
    return d;
}

inline void write_matrix_binary(const std::filesystem::path& path, const DataMatrix& m, const nlohmann::json& header_extra = {}) {
    nifti_detail::write_file_atomic(path, encode_matrix_binary(m, header_extra));
}

inline void write_matrix_binary(const std::filesystem::path& path, const Eigen::MatrixXd& values,
                                const nlohmann::json& header_extra = {}) {
    nifti_detail::write_file_atomic(path, encode_matrix_binary(values, header_extra));
}

struct LoadedMatrix {
    DataMatrix matrix;
    nlohmann::json header;
};

inline LoadedMatrix read_matrix_binary_with_header(const std::filesystem::path& path) {
    const auto buf = nifti_detail::read_file(path);
    auto d = decode_matrix_binary(std::string(buf.begin(), buf.end()));
    LoadedMatrix out;
    DataMatrix& m = out.matrix;
    m.values = std::move(d.values);
    if (d.header.contains("voxel_index")) {
        for (const auto& c : d.header["voxel_index"]) m.voxel_index.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()});
    } else {
        m = DataMatrix::from_values(std::move(m.values));
    }
    m.validate();
    out.header = std::move(d.header);
    return out;
}

inline DataMatrix read_matrix_binary(const std::filesystem::path& path) { return read_matrix_binary_with_header(path).matrix; }

/// CSV with one line per time point (no header row).
inline std::string encode_matrix_csv(const Eigen::MatrixXd& values) {
    std::ostringstream os;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            if (c) os << ',';
            os << format_double(values(r, c));
        }
        os << '\n';
    }
    return os.str();
}

inline void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& values) {
    nifti_detail::write_file_atomic(path, encode_matrix_csv(values));
}

inline Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size()) throw FormatError("ragged CSV row in '" + path.string() + "'");
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(Eigen::Index(rows.size()), rows.empty() ? 0 : Eigen::Index(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
    return m;
}

}  // namespace fracdim
