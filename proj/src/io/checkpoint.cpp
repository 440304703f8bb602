#include "metagraphloc/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/text_format.hpp"

namespace mgl::io {

namespace {

constexpr std::string_view kMagic = "#metagraphloc-checkpoint-v1";

std::string join_sizes(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void kv(std::string_view key, const std::string& value) { out_ << key << '=' << value << '\n'; }
    void kv(std::string_view key, double value) { kv(key, format_double(value)); }
    void kv(std::string_view key, std::size_t value) { kv(key, std::to_string(value)); }

    void matrix(std::string_view name, const Matrix& m) {
        out_ << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const auto row = m.row(r);
            out_ << join_doubles(std::vector<double>(row.begin(), row.end())) << '\n';
        }
    }

    void normalization(std::string_view prefix, const model::NormalizationParams& n) {
        const std::string p(prefix);
        kv(p + ".rssi", format_double(n.rssi_min) + "," + format_double(n.rssi_max));
        kv(p + ".use_imu", std::string(n.use_imu ? "1" : "0"));
        kv(p + ".imu_mean", join_doubles(n.imu_mean));
        kv(p + ".imu_scale", n.imu_scale);
    }

    void raw(std::string_view line) { out_ << line << '\n'; }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::string next() {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!trim(line).empty()) return line;
        }
        throw ParseError(line_no_ + 1, "unexpected end of checkpoint");
    }

    std::size_t line() const noexcept { return line_no_; }

    std::string value(std::string_view key) {
        const std::string line = next();
        const auto eq = line.find('=');
        if (eq == std::string::npos || trim(std::string_view(line).substr(0, eq)) != key)
            throw ParseError(line_no_, "expected '" + std::string(key) + "=...'");
        return line.substr(eq + 1);
    }

    double number(std::string_view key) { return parse_number(value(key)); }

    std::size_t count(std::string_view key) { return parse_count(value(key)); }

    std::vector<double> numbers(std::string_view key) { return parse_list(value(key)); }

    std::vector<std::size_t> counts(std::string_view key) {
        const std::string text = value(key);
        std::vector<std::size_t> out;
        if (trim(text).empty()) return out;
        for (std::string_view part : split(text, ',')) out.push_back(parse_count(part));
        return out;
    }

    Matrix matrix(std::string_view name) {
        const std::string header = next();
        const auto parts = split(header, ' ');
        if (parts.size() != 4 || parts[0] != "matrix" || parts[1] != name)
            throw ParseError(line_no_, "expected 'matrix " + std::string(name) + " <rows> <cols>'");
        const std::size_t rows = parse_count(parts[2]), cols = parse_count(parts[3]);
        Matrix m(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::vector<double> row = parse_list(next());
            if (row.size() != cols)
                throw ParseError(line_no_, "matrix " + std::string(name) + ": expected " + std::to_string(cols) +
                                               " values, got " + std::to_string(row.size()));
            std::copy(row.begin(), row.end(), m.row(r).begin());
        }
        return m;
    }

    model::NormalizationParams normalization(std::string_view prefix) {
        const std::string p(prefix);
        model::NormalizationParams n;
        const std::vector<double> rssi = numbers(p + ".rssi");
        if (rssi.size() != 2) throw ParseError(line_no_, p + ".rssi needs two values");
        n.rssi_min = rssi[0];
        n.rssi_max = rssi[1];
        n.use_imu = flag(p + ".use_imu");
        n.imu_mean = numbers(p + ".imu_mean");
        n.imu_scale = number(p + ".imu_scale");
        return n;
    }

    bool flag(std::string_view key) {
        const std::string v(trim(value(key)));
        if (v == "1") return true;
        if (v == "0") return false;
        throw ParseError(line_no_, std::string(key) + " must be 0 or 1");
    }

private:
    double parse_number(std::string_view text) const {
        double v = 0.0;
        if (!parse_double(text, v) || !std::isfinite(v))
            throw ParseError(line_no_, "not a finite number '" + std::string(trim(text)) + "'");
        return v;
    }

    std::size_t parse_count(std::string_view text) const {
        long long v = 0;
        if (!parse_int(text, v) || v < 0)
            throw ParseError(line_no_, "not a non-negative integer '" + std::string(trim(text)) + "'");
        return static_cast<std::size_t>(v);
    }

    std::vector<double> parse_list(std::string_view text) const {
        std::vector<double> out;
        if (trim(text).empty()) return out;
        for (std::string_view part : split(text, ',')) out.push_back(parse_number(part));
        return out;
    }

    std::istream& in_;
    std::size_t line_no_ = 0;
};

template <typename Parse>
auto parse_enum(Reader& reader, std::string_view key, Parse parse) {
    const std::string v(trim(reader.value(key)));
    try {
        return parse(v);
    } catch (const ConfigError& e) {
        throw ParseError(reader.line(), e.what());
    }
}

}  // namespace

void write_checkpoint(const Checkpoint& c, std::ostream& out) {
    Writer w(out);
    const model::ModelSpec& s = c.model.spec;
    w.raw(kMagic);
    w.kv("spec.arch", model::to_string(s.arch));
    w.kv("spec.nodes", s.nodes);
    w.kv("spec.channels", s.channels);
    w.kv("spec.graph_widths", join_sizes(s.graph_widths));
    w.kv("spec.fc_widths", join_sizes(s.fc_widths));
    w.kv("spec.k_neigh", s.k_neigh);
    w.kv("spec.aggregation", model::to_string(s.aggregation));
    w.kv("spec.edge_form", model::to_string(s.edge_form));
    w.kv("spec.leaky_slope", s.leaky_slope);
    w.kv("scaler", format_double(c.model.scaler.cx) + "," + format_double(c.model.scaler.cy) + "," +
                       format_double(c.model.scaler.scale));
    w.normalization("norm", c.normalization);
    w.matrix("propagation", c.model.propagation);
    w.kv("params", c.model.params.size());
    for (const Matrix& p : c.model.params) w.matrix("param", p);
    w.kv("tasks", c.tasks.size());
    for (const TaskAlignment& t : c.tasks) {
        w.raw("task " + t.id);
        w.normalization("task.norm", t.normalization);
        w.kv("task.pca", std::string(t.projection ? "1" : "0"));
        if (t.projection) {
            const meta::PcaProjection& p = *t.projection;
            w.kv("pca.standardize", std::string(p.standardize ? "1" : "0"));
            w.kv("pca.mean", join_doubles(p.mean));
            w.kv("pca.scale", join_doubles(p.scale));
            w.kv("pca.eigenvalues", join_doubles(p.eigenvalues));
            w.matrix("pca.components", p.components);
        }
    }
    w.raw("end");
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_checkpoint(checkpoint, out);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint read_checkpoint(std::istream& in) {
    Reader r(in);
    if (r.next() != kMagic) throw ParseError(r.line(), "not a metagraphloc checkpoint (bad magic line)");
    Checkpoint c;
    model::ModelSpec& s = c.model.spec;
    s.arch = parse_enum(r, "spec.arch", model::parse_architecture);
    s.nodes = r.count("spec.nodes");
    s.channels = r.count("spec.channels");
    s.graph_widths = r.counts("spec.graph_widths");
    s.fc_widths = r.counts("spec.fc_widths");
    s.k_neigh = r.count("spec.k_neigh");
    s.aggregation = parse_enum(r, "spec.aggregation", model::parse_aggregation);
    s.edge_form = parse_enum(r, "spec.edge_form", model::parse_edge_form);
    s.leaky_slope = r.number("spec.leaky_slope");
    const std::vector<double> scaler = r.numbers("scaler");
    if (scaler.size() != 3) throw ParseError(r.line(), "scaler needs three values");
    c.model.scaler = {scaler[0], scaler[1], scaler[2]};
    c.normalization = r.normalization("norm");
    c.model.propagation = r.matrix("propagation");
    const std::size_t n_params = r.count("params");
    for (std::size_t i = 0; i < n_params; ++i) c.model.params.push_back(r.matrix("param"));
    const std::size_t n_tasks = r.count("tasks");
    for (std::size_t i = 0; i < n_tasks; ++i) {
        const std::string head = r.next();
        if (head.rfind("task ", 0) != 0) throw ParseError(r.line(), "expected 'task <id>'");
        TaskAlignment t;
        t.id = head.substr(5);
        t.normalization = r.normalization("task.norm");
        if (r.flag("task.pca")) {
            meta::PcaProjection p;
            p.standardize = r.flag("pca.standardize");
            p.mean = r.numbers("pca.mean");
            p.scale = r.numbers("pca.scale");
            p.eigenvalues = r.numbers("pca.eigenvalues");
            p.components = r.matrix("pca.components");
            if (p.components.rows() != p.mean.size() || p.scale.size() != p.mean.size())
                throw ParseError(r.line(), "task " + t.id + ": PCA block dimensions disagree");
            t.projection = std::move(p);
        }
        c.tasks.push_back(std::move(t));
    }
    if (trim(r.next()) != "end") throw ParseError(r.line(), "expected 'end'");
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw ParseError(r.line(), std::string("invalid model spec: ") + e.what());
    }
    return c;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace mgl::io
