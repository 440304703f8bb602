#include "metagraphloc/config.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/random.hpp"
#include "metagraphloc/text_format.hpp"

namespace mgl::cli {

namespace {

// A value that does not parse; the caller adds key and location.
struct BadValue {
    std::string what;
};

double to_double(const std::string& v) {
    double d = 0.0;
    if (!parse_double(v, d)) throw BadValue{"expected a number, got '" + v + "'"};
    return d;
}

std::size_t to_count(const std::string& v) {
    long long n = 0;
    if (!parse_int(v, n) || n < 0) throw BadValue{"expected a non-negative integer, got '" + v + "'"};
    return static_cast<std::size_t>(n);
}

std::uint64_t to_u64(const std::string& v) {
    const std::string t(trim(v));
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
        throw BadValue{"expected a non-negative integer, got '" + v + "'"};
    try {
        return std::stoull(t);
    } catch (const std::exception&) {
        throw BadValue{"integer out of range: '" + v + "'"};
    }
}

bool to_bool(const std::string& v) {
    const std::string t(trim(v));
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw BadValue{"expected true or false, got '" + v + "'"};
}

template <typename T, typename Item>
std::vector<T> to_list(const std::string& v, Item item) {
    std::vector<T> out;
    if (trim(v).empty()) return out;
    for (std::string_view part : split(v, ',')) out.push_back(item(std::string(trim(part))));
    return out;
}

template <typename Parse>
auto to_enum(const std::string& v, Parse parse) {
    try {
        return parse(std::string(trim(v)));
    } catch (const ConfigError& e) {
        throw BadValue{e.what()};
    }
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

std::string join(const std::vector<std::size_t>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + std::to_string(items[i]);
    return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct Key {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Key number(std::string name, Access access) {
    return {std::move(name), [access](RunConfig& c, const std::string& v) { access(c) = to_double(v); },
            [access](const RunConfig& c) { return format_double(access(c)); }};
}

template <typename Access>
Key count(std::string name, Access access) {
    return {std::move(name), [access](RunConfig& c, const std::string& v) { access(c) = to_count(v); },
            [access](const RunConfig& c) { return std::to_string(access(c)); }};
}

template <typename Access>
Key flag(std::string name, Access access) {
    return {std::move(name), [access](RunConfig& c, const std::string& v) { access(c) = to_bool(v); },
            [access](const RunConfig& c) { return bool_text(access(c)); }};
}

template <typename Access>
Key text(std::string name, Access access) {
    return {std::move(name), [access](RunConfig& c, const std::string& v) { access(c) = std::string(trim(v)); },
            [access](const RunConfig& c) { return access(c); }};
}

template <typename Access, typename Parse>
Key choice(std::string name, Access access, Parse parse) {
    return {std::move(name), [access, parse](RunConfig& c, const std::string& v) { access(c) = to_enum(v, parse); },
            [access](const RunConfig& c) { return to_string(access(c)); }};
}

using graph::to_string;
using meta::to_string;
using model::to_string;
using radio::to_string;
using eval::to_string;
using mgl::to_string;

const std::vector<Key>& registry() {
    static const std::vector<Key> keys = [] {
        std::vector<Key> k;
        k.push_back({"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
                     [](const RunConfig& c) { return std::to_string(c.seed); }});

        k.push_back(count("data.aps", [](auto& c) -> auto& { return c.bench.aps; }));
        k.push_back({"data.floors",
                     [](RunConfig& c, const std::string& v) { c.bench.floors = static_cast<int>(to_count(v)); },
                     [](const RunConfig& c) { return std::to_string(c.bench.floors); }});
        k.push_back(count("data.samples", [](auto& c) -> auto& { return c.bench.samples; }));
        k.push_back(number("data.width", [](auto& c) -> auto& { return c.bench.width; }));
        k.push_back(number("data.height", [](auto& c) -> auto& { return c.bench.height; }));
        k.push_back(number("data.sigma", [](auto& c) -> auto& { return c.bench.channel.sigma; }));
        k.push_back(number("data.p_tx", [](auto& c) -> auto& { return c.bench.channel.p_tx; }));
        k.push_back(number("data.pl0", [](auto& c) -> auto& { return c.bench.channel.pl0; }));
        k.push_back(number("data.beta", [](auto& c) -> auto& { return c.bench.channel.beta; }));
        k.push_back(number("data.d0", [](auto& c) -> auto& { return c.bench.channel.d0; }));
        k.push_back(number("data.detection_range", [](auto& c) -> auto& { return c.bench.detection_range; }));
        k.push_back(number("data.dropout", [](auto& c) -> auto& { return c.bench.dropout; }));
        k.push_back(number("data.floor_height", [](auto& c) -> auto& { return c.bench.floor_height; }));
        k.push_back(choice("data.layout", [](auto& c) -> auto& { return c.bench.generation.layout; },
                           radio::parse_layout));
        k.push_back(number("data.step_length", [](auto& c) -> auto& { return c.bench.generation.step_length; }));
        k.push_back(count("data.imu_dims", [](auto& c) -> auto& { return c.bench.generation.imu.dims; }));
        k.push_back(number("data.imu_noise", [](auto& c) -> auto& { return c.bench.generation.imu.noise; }));
        k.push_back(number("data.field_strength",
                           [](auto& c) -> auto& { return c.bench.generation.imu.field_strength; }));
        k.push_back(number("data.train_fraction", [](auto& c) -> auto& { return c.bench.train_fraction; }));
        k.push_back(count("data.floor", [](auto& c) -> auto& { return c.floor; }));
        k.push_back(text("data.train", [](auto& c) -> auto& { return c.train_path; }));
        k.push_back(text("data.test", [](auto& c) -> auto& { return c.test_path; }));

        k.push_back(choice("model.arch", [](auto& c) -> auto& { return c.arm.arch; }, model::parse_architecture));
        k.push_back(choice("model.graph", [](auto& c) -> auto& { return c.arm.graph; }, graph::parse_graph_kind));
        k.push_back(number("model.threshold", [](auto& c) -> auto& { return c.arm.threshold; }));
        k.push_back(flag("model.use_imu", [](auto& c) -> auto& { return c.arm.use_imu; }));
        k.push_back(count("model.h", [](auto& c) -> auto& { return c.arm.hidden; }));
        k.push_back(count("model.layers", [](auto& c) -> auto& { return c.arm.layers; }));
        k.push_back(count("model.fc_layers", [](auto& c) -> auto& { return c.arm.fc_layers; }));
        k.push_back(count("model.k_neigh", [](auto& c) -> auto& { return c.arm.k_neigh; }));
        k.push_back(choice("model.aggregation", [](auto& c) -> auto& { return c.arm.aggregation; },
                           model::parse_aggregation));
        k.push_back(choice("model.edge_form", [](auto& c) -> auto& { return c.arm.edge_form; },
                           model::parse_edge_form));
        k.push_back(number("model.leaky_slope", [](auto& c) -> auto& { return c.arm.leaky_slope; }));
        k.push_back(count("model.dnn_layers", [](auto& c) -> auto& { return c.arm.dnn_layers; }));
        k.push_back(count("model.dnn_budget", [](auto& c) -> auto& { return c.arm.dnn_budget; }));

        k.push_back(count("train.epochs", [](auto& c) -> auto& { return c.arm.train.epochs; }));
        k.push_back(count("train.batch", [](auto& c) -> auto& { return c.arm.train.batch; }));
        k.push_back(number("train.lr", [](auto& c) -> auto& { return c.arm.train.optimizer.learning_rate; }));
        k.push_back(choice("train.optimizer", [](auto& c) -> auto& { return c.arm.train.optimizer.kind; },
                           parse_optimizer_kind));

        k.push_back(count("meta.m", [](auto& c) -> auto& { return c.meta.m; }));
        k.push_back(count("meta.hidden", [](auto& c) -> auto& { return c.meta.hidden; }));
        k.push_back(number("meta.inner_lr", [](auto& c) -> auto& { return c.meta.train.inner_lr; }));
        k.push_back(number("meta.outer_lr", [](auto& c) -> auto& { return c.meta.train.outer_lr; }));
        k.push_back(count("meta.inner_steps", [](auto& c) -> auto& { return c.meta.train.inner_steps; }));
        k.push_back(count("meta.iterations", [](auto& c) -> auto& { return c.meta.train.iterations; }));
        k.push_back(choice("meta.weighting", [](auto& c) -> auto& { return c.meta.train.weighting; },
                           meta::parse_weighting));
        k.push_back(choice("meta.outer_split", [](auto& c) -> auto& { return c.meta.train.outer_split; },
                           meta::parse_split));
        k.push_back(choice("meta.outer_optimizer",
                           [](auto& c) -> auto& { return c.meta.train.outer_optimizer; },
                           parse_optimizer_kind));
        k.push_back(count("meta.batch", [](auto& c) -> auto& { return c.meta.train.batch; }));
        k.push_back(number("meta.test_lr", [](auto& c) -> auto& { return c.meta.adapt.lr; }));
        k.push_back(number("meta.eps_acc", [](auto& c) -> auto& { return c.meta.adapt.eps_acc; }));
        k.push_back(count("meta.max_steps", [](auto& c) -> auto& { return c.meta.adapt.max_steps; }));
        k.push_back(number("meta.reference_tolerance",
                           [](auto& c) -> auto& { return c.meta.reference.tolerance; }));
        k.push_back(count("meta.reference_window", [](auto& c) -> auto& { return c.meta.reference.window; }));
        k.push_back(count("meta.reference_max_steps",
                          [](auto& c) -> auto& { return c.meta.reference.max_steps; }));
        k.push_back(number("meta.support_fraction", [](auto& c) -> auto& { return c.meta.support_fraction; }));
        k.push_back({"meta.train_floors",
                     [](RunConfig& c, const std::string& v) {
                         c.meta.train_floors = to_list<std::size_t>(v, to_count);
                     },
                     [](const RunConfig& c) { return join(c.meta.train_floors); }});
        k.push_back(count("meta.test_floor", [](auto& c) -> auto& { return c.meta.test_floor; }));
        k.push_back({"meta.train_data",
                     [](RunConfig& c, const std::string& v) {
                         c.meta.train_data = to_list<std::string>(v, [](std::string s) { return s; });
                     },
                     [](const RunConfig& c) { return join(c.meta.train_data); }});
        k.push_back(text("meta.test_data", [](auto& c) -> auto& { return c.meta.test_data; }));
        k.push_back(text("meta.checkpoint", [](auto& c) -> auto& { return c.meta.checkpoint; }));

        k.push_back(choice("sweep.dimension", [](auto& c) -> auto& { return c.sweep_dimension; },
                           eval::parse_sweep_dimension));
        k.push_back({"sweep.values",
                     [](RunConfig& c, const std::string& v) { c.sweep_values = to_list<double>(v, to_double); },
                     [](const RunConfig& c) { return join_doubles(c.sweep_values); }});
        k.push_back({"compare.arms",
                     [](RunConfig& c, const std::string& v) {
                         c.compare_arms = to_list<std::string>(v, [](std::string s) {
                             (void)eval::arm_from_name(s, {});
                             return s;
                         });
                     },
                     [](const RunConfig& c) { return join(c.compare_arms); }});
        k.push_back(text("eval.checkpoint", [](auto& c) -> auto& { return c.eval_checkpoint; }));
        k.push_back(number("eval.cdf_step", [](auto& c) -> auto& { return c.arm.cdf_step; }));

        k.push_back(choice("graph.kind", [](auto& c) -> auto& { return c.graph.kind; }, graph::parse_graph_kind));
        k.push_back(number("graph.threshold", [](auto& c) -> auto& { return c.graph.threshold; }));
        k.push_back(flag("graph.weighted", [](auto& c) -> auto& { return c.graph.weighted; }));
        k.push_back(count("graph.k", [](auto& c) -> auto& { return c.graph.k; }));
        k.push_back(count("graph.sample", [](auto& c) -> auto& { return c.graph.sample; }));
        return k;
    }();
    return keys;
}

const Key* find_key(const std::string& name) {
    for (const Key& k : registry())
        if (k.name == name) return &k;
    return nullptr;
}

std::string location(const std::string& source, std::size_t line) {
    return line ? source + ":" + std::to_string(line) : source;
}

}  // namespace

ConfigKeyError::ConfigKeyError(std::string source, std::size_t line, std::string key, const std::string& what)
    : std::runtime_error(location(source, line) + ": key '" + key + "': " + what), key_(std::move(key)),
      line_(line) {}

RunConfig default_config() {
    RunConfig c;
    c.arm.hidden = 128;
    c.arm.layers = 2;
    c.arm.k_neigh = 15;
    c.arm.train.batch = 8;
    return c;
}

void set_value(RunConfig& config, const std::string& key, const std::string& value, const std::string& source,
               std::size_t line) {
    const Key* k = find_key(key);
    if (!k) throw ConfigKeyError(source, line, key, "unknown key");
    try {
        k->set(config, value);
    } catch (const BadValue& e) {
        throw ConfigKeyError(source, line, key, e.what);
    } catch (const ConfigError& e) {
        throw ConfigKeyError(source, line, key, e.what());
    }
}

void apply_config(RunConfig& config, std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string_view body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ConfigKeyError(source, line_no, std::string(body), "expected 'key = value'");
        std::string_view value = body.substr(eq + 1);
        // Trailing comments are allowed after whitespace.
        if (const auto hash = value.find(" #"); hash != std::string_view::npos) value = value.substr(0, hash);
        set_value(config, std::string(trim(body.substr(0, eq))), std::string(trim(value)), source, line_no);
    }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigKeyError(path.string(), 0, "--config", "cannot open config file");
    apply_config(config, in, path.string());
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const Key& k : registry()) out.push_back(k.name);
    return out;
}

std::string get_value(const RunConfig& config, const std::string& key) {
    const Key* k = find_key(key);
    if (!k) throw ConfigKeyError("get_value", 0, key, "unknown key");
    return k->get(config);
}

void write_config(const RunConfig& config, std::ostream& out) {
    for (const Key& k : registry()) out << k.name << " = " << k.get(config) << '\n';
}

std::uint64_t split_seed(const RunConfig& config) { return derive_seed(config.seed, 1); }
std::uint64_t init_seed(const RunConfig& config) { return derive_seed(config.seed, 2); }
std::uint64_t train_seed(const RunConfig& config) { return derive_seed(config.seed, 3); }

model::ModelSpec meta_spec(const RunConfig& c) {
    const std::size_t h = c.meta.hidden ? c.meta.hidden : c.arm.hidden;
    model::ModelSpec spec;
    spec.arch = c.arm.arch;
    spec.nodes = c.meta.m;
    spec.channels = 1;
    if (spec.arch == model::Architecture::gcn)
        throw ConfigKeyError("config", 0, "model.arch", "meta-learning runs on virtual nodes; use dec or dnn");
    if (spec.arch == model::Architecture::dnn) {
        spec.graph_widths.clear();
        spec.fc_widths.assign(c.arm.dnn_layers, h);
    } else {
        spec.graph_widths.assign(c.arm.layers, h);
        spec.fc_widths.assign(c.arm.fc_layers, h);
        spec.k_neigh = std::min(c.arm.k_neigh, c.meta.m > 1 ? c.meta.m - 1 : std::size_t{1});
        spec.aggregation = c.arm.aggregation;
        spec.edge_form = c.arm.edge_form;
        spec.leaky_slope = c.arm.leaky_slope;
    }
    return spec;
}

std::uint64_t task_split_seed(const RunConfig& c, std::size_t floor) { return derive_seed(c.seed, 100 + floor); }

eval::Benchmark benchmark(const RunConfig& config) {
    eval::Benchmark b = config.bench;
    b.seed = config.seed;
    return b;
}

eval::ArmSpec arm(const RunConfig& config) {
    eval::ArmSpec a = config.arm;
    a.init_seed = init_seed(config);
    a.train.seed = train_seed(config);
    return a;
}

}  // namespace mgl::cli
