#include "metagraphloc/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/text_format.hpp"

namespace mgl::radio {

namespace {

constexpr std::string_view kMagic = "#metagraphloc-v1";

long long header_field(std::string_view part, std::string_view key, std::size_t line) {
    part = trim(part);
    if (part.substr(0, key.size()) != key || part.size() <= key.size() || part[key.size()] != '=')
        throw ParseError(line, "malformed header: expected " + std::string(key) + "=<int>");
    long long v = 0;
    if (!parse_int(part.substr(key.size() + 1), v))
        throw ParseError(line, "malformed header: bad integer for " + std::string(key));
    return v;
}

double finite_field(std::string_view text, std::size_t line, std::size_t column) {
    double v = 0.0;
    if (!parse_double(text, v)) {
        throw ParseError(line, "column " + std::to_string(column + 1) + ": not a number '" +
                                   std::string(trim(text)) + "'");
    }
    if (!std::isfinite(v)) {
        throw ParseError(line, "column " + std::to_string(column + 1) + ": non-finite value");
    }
    return v;
}

}  // namespace

void write_dataset(const FingerprintDataset& data, std::ostream& out) {
    data.validate();
    out << kMagic << ",M=" << data.aps << ",D=" << data.imu_dims << ",FLOOR=" << data.floor << '\n';
    out << "#extent=" << format_double(data.width) << ',' << format_double(data.height) << '\n';
    out << "#rssi_floor=" << format_double(data.rssi_floor) << '\n';
    std::string line;
    for (const Fingerprint& fp : data.samples) {
        line.clear();
        line += format_double(fp.position.x);
        line += ',';
        line += format_double(fp.position.y);
        line += ',';
        line += format_double(fp.position.z);
        for (double v : fp.rssi) {
            line += ',';
            line += format_double(v);
        }
        for (double v : fp.imu) {
            line += ',';
            line += format_double(v);
        }
        line += '\n';
        out << line;
    }
}

void write_dataset(const FingerprintDataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_dataset(data, out);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

FingerprintDataset read_dataset(std::istream& in, double default_rssi_floor) {
    FingerprintDataset data;
    data.rssi_floor = default_rssi_floor;
    bool have_header = false, have_extent = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (view.empty()) continue;
        if (!have_header) {
            const auto parts = split(view, ',');
            if (parts.size() != 4 || trim(parts[0]) != kMagic)
                throw ParseError(line_no, "malformed header: expected '#metagraphloc-v1,M=..,D=..,FLOOR=..'");
            const long long m = header_field(parts[1], "M", line_no);
            const long long d = header_field(parts[2], "D", line_no);
            const long long f = header_field(parts[3], "FLOOR", line_no);
            if (m < 1 || d < 0) throw ParseError(line_no, "malformed header: M must be >= 1 and D >= 0");
            data.aps = static_cast<std::size_t>(m);
            data.imu_dims = static_cast<std::size_t>(d);
            data.floor = static_cast<int>(f);
            have_header = true;
            continue;
        }
        if (view.front() == '#') {
            if (view.substr(0, 8) == "#extent=") {
                const auto parts = split(view.substr(8), ',');
                if (parts.size() != 2) throw ParseError(line_no, "malformed #extent comment");
                data.width = finite_field(parts[0], line_no, 0);
                data.height = finite_field(parts[1], line_no, 1);
                have_extent = true;
            } else if (view.substr(0, 12) == "#rssi_floor=") {
                data.rssi_floor = finite_field(view.substr(12), line_no, 0);
            }
            continue;
        }

        const auto fields = split(view, ',');
        const std::size_t expected = 3 + data.aps + data.imu_dims;
        if (fields.size() != expected) {
            throw ParseError(line_no, "expected " + std::to_string(expected) + " values, found " +
                                          std::to_string(fields.size()));
        }
        Fingerprint fp;
        fp.position = {finite_field(fields[0], line_no, 0), finite_field(fields[1], line_no, 1),
                       finite_field(fields[2], line_no, 2)};
        fp.rssi.resize(data.aps);
        fp.mask.resize(data.aps);
        for (std::size_t m = 0; m < data.aps; ++m) {
            fp.rssi[m] = finite_field(fields[3 + m], line_no, 3 + m);
            fp.mask[m] = fp.rssi[m] == data.rssi_floor ? 0 : 1;
        }
        fp.imu.resize(data.imu_dims);
        for (std::size_t k = 0; k < data.imu_dims; ++k)
            fp.imu[k] = finite_field(fields[3 + data.aps + k], line_no, 3 + data.aps + k);
        data.samples.push_back(std::move(fp));
    }
    if (!have_header) throw ParseError(line_no + 1, "missing '#metagraphloc-v1' header");
    if (!have_extent) {
        for (const Fingerprint& fp : data.samples) {
            data.width = std::max(data.width, fp.position.x);
            data.height = std::max(data.height, fp.position.y);
        }
    }
    return data;
}

FingerprintDataset read_dataset(const std::filesystem::path& path, double default_rssi_floor) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_dataset(in, default_rssi_floor);
}

}  // namespace mgl::radio
