#include "metagraphloc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <ostream>

#include "metagraphloc/checkpoint.hpp"
#include "metagraphloc/dataset_io.hpp"
#include "metagraphloc/errors.hpp"
#include "metagraphloc/eval.hpp"
#include "metagraphloc/features.hpp"
#include "metagraphloc/log.hpp"
#include "metagraphloc/meta.hpp"
#include "metagraphloc/random.hpp"
#include "metagraphloc/text_format.hpp"

namespace mgl::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCommands[] = {"gen-data", "train",     "sweep",   "meta-train",
                                     "meta-test", "eval",     "compare", "graph-export"};
constexpr const char* kCommandHelp[] = {
    "simulate the benchmark floors (floor_N.csv, access_points.csv)",
    "fit one model, write checkpoint.txt and loss.csv",
    "train one model per sweep value, write sweep.csv",
    "first-order MAML over the training floors",
    "adapt a meta checkpoint to the held-out floor",
    "score a checkpoint on a dataset",
    "train every arm on the same split, write compare.csv",
    "write the adjacency a graph builder produces",
};

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

void require_file(const std::string& key, const std::string& path) {
    if (path.empty()) throw ConfigKeyError("config", 0, key, "required by this command");
    if (!fs::is_regular_file(path)) throw ConfigKeyError("config", 0, key, "file not found: " + path);
}

radio::FingerprintDataset load_dataset(const std::string& key, const std::string& path) {
    require_file(key, path);
    return radio::read_dataset(fs::path(path));
}

int checked_floor(const eval::Benchmark& bench, std::size_t floor, const std::string& key) {
    if (floor >= static_cast<std::size_t>(bench.floors))
        throw ConfigKeyError("config", 0, key,
                             "floor " + std::to_string(floor) + " outside 0.." + std::to_string(bench.floors - 1));
    return static_cast<int>(floor);
}

struct SplitData {
    radio::FingerprintDataset train;
    radio::FingerprintDataset test;
};

SplitData load_split(const RunConfig& c) {
    radio::FingerprintDataset data;
    if (c.train_path.empty()) {
        const eval::Benchmark bench = benchmark(c);
        data = eval::benchmark_floor(bench, checked_floor(bench, c.floor, "data.floor"));
    } else {
        data = load_dataset("data.train", c.train_path);
    }
    if (!c.test_path.empty()) return {std::move(data), load_dataset("data.test", c.test_path)};
    auto [train, test] = eval::split_dataset(data, c.bench.train_fraction, split_seed(c));
    return {std::move(train), std::move(test)};
}

std::string safe_name(std::string s) {
    for (char& ch : s)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
    return s;
}

void write_report(const eval::ExperimentResult& r, const fs::path& dir, const std::string& suffix) {
    {
        auto out = open_out(dir / ("errors" + suffix + ".csv"));
        eval::write_errors_csv(r.predictions, r.truths, out);
    }
    {
        auto out = open_out(dir / ("cdf" + suffix + ".csv"));
        eval::write_cdf_csv(r.report.cdf, out);
    }
    {
        auto out = open_out(dir / ("loss" + suffix + ".csv"));
        eval::write_loss_csv(r.loss_history, out);
    }
}

void cmd_gen_data(const RunConfig& c, const fs::path& dir) {
    const eval::Benchmark bench = benchmark(c);
    for (int f = 0; f < bench.floors; ++f)
        radio::write_dataset(eval::benchmark_floor(bench, f), dir / ("floor_" + std::to_string(f) + ".csv"));
    const radio::RadioEnvironment env = eval::benchmark_environment(bench, 0);
    auto out = open_out(dir / "access_points.csv");
    out << "ap,x,y,z\n";
    for (std::size_t i = 0; i < env.access_points.size(); ++i) {
        const radio::Point3& p = env.access_points[i];
        out << i << ',' << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.z) << '\n';
    }
}

void cmd_train(const RunConfig& c, const fs::path& dir) {
    const SplitData data = load_split(c);
    const eval::ExperimentResult r = eval::run_experiment(arm(c), data.train, data.test);
    if (!r.ok) throw std::runtime_error("training failed: " + r.error);
    io::write_checkpoint({r.model, r.normalization, {}}, dir / "checkpoint.txt");
    auto out = open_out(dir / "loss.csv");
    eval::write_loss_csv(r.loss_history, out);
}

void cmd_eval(const RunConfig& c, const fs::path& dir) {
    require_file("eval.checkpoint", c.eval_checkpoint);
    const io::Checkpoint cp = io::read_checkpoint(fs::path(c.eval_checkpoint));
    if (!cp.tasks.empty())
        throw ConfigKeyError("config", 0, "eval.checkpoint", "is a meta checkpoint; use meta-test");
    const SplitData data = load_split(c);
    const model::SampleSet test = cp.model.spec.arch == model::Architecture::dnn
                                      ? model::encode_flat_inputs(data.test, cp.normalization)
                                      : model::encode_graph_inputs(data.test, cp.normalization);
    if (test.width() != cp.model.spec.input_width())
        throw DimensionError("test data has " + std::to_string(test.width()) + " inputs per sample, checkpoint expects " +
                             std::to_string(cp.model.spec.input_width()));
    const Matrix pred = model::predict(cp.model, test);
    const eval::EvalReport report =
        eval::make_report(pred, test.targets, c.arm.cdf_step,
                          {{"checkpoint", c.eval_checkpoint}, {"arch", model::to_string(cp.model.spec.arch)}},
                          c.seed);
    {
        auto out = open_out(dir / "errors.csv");
        eval::write_errors_csv(pred, test.targets, out);
    }
    {
        auto out = open_out(dir / "cdf.csv");
        eval::write_cdf_csv(report.cdf, out);
    }
    auto out = open_out(dir / "summary.csv");
    eval::write_summary_csv(report, out);
}

void cmd_sweep(const RunConfig& c, const fs::path& dir, std::size_t jobs) {
    if (c.sweep_values.empty()) throw ConfigKeyError("config", 0, "sweep.values", "needs at least one value");
    const SplitData data = load_split(c);
    const std::vector<eval::SweepRow> rows =
        eval::sweep(c.sweep_dimension, c.sweep_values, arm(c), data.train, data.test, jobs);
    for (const eval::SweepRow& r : rows)
        if (!r.result.ok) log::warn("sweep cell " + r.result.name + " failed: " + r.result.error);
    auto out = open_out(dir / "sweep.csv");
    eval::write_sweep_csv(c.sweep_dimension, rows, out);
}

void cmd_compare(const RunConfig& c, const fs::path& dir, std::size_t jobs) {
    if (c.compare_arms.size() < 2) throw ConfigKeyError("config", 0, "compare.arms", "needs at least two arms");
    const SplitData data = load_split(c);
    const eval::ArmSpec base = arm(c);
    std::vector<eval::ArmSpec> arms;
    for (const std::string& name : c.compare_arms) arms.push_back(eval::arm_from_name(name, base));
    const std::vector<eval::ExperimentResult> results = eval::compare(arms, data.train, data.test, jobs);
    {
        auto out = open_out(dir / "compare.csv");
        eval::write_compare_csv(results, out);
    }
    {
        auto out = open_out(dir / "summary.md");
        eval::write_compare_markdown(results, out);
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i].ok) {
            log::warn("arm " + results[i].name + " failed: " + results[i].error);
            continue;
        }
        write_report(results[i], dir, "_" + std::to_string(i) + "_" + safe_name(results[i].name));
    }
}

void cmd_meta_train(const RunConfig& c, const fs::path& dir) {
    std::vector<meta::RawTask> raw;
    if (!c.meta.train_data.empty()) {
        for (std::size_t i = 0; i < c.meta.train_data.size(); ++i) {
            const radio::FingerprintDataset d = load_dataset("meta.train_data", c.meta.train_data[i]);
            raw.push_back(meta::split_task(fs::path(c.meta.train_data[i]).stem().string(), d,
                                           c.meta.support_fraction, task_split_seed(c, d.floor < 0 ? i : d.floor)));
        }
    } else {
        const eval::Benchmark bench = benchmark(c);
        for (std::size_t f : c.meta.train_floors) {
            const int floor = checked_floor(bench, f, "meta.train_floors");
            raw.push_back(meta::split_task("floor" + std::to_string(f), eval::benchmark_floor(bench, floor),
                                           c.meta.support_fraction, task_split_seed(c, f)));
        }
    }
    if (raw.empty()) throw ConfigKeyError("config", 0, "meta.train_floors", "no training tasks");
    const std::vector<meta::Task> tasks = meta::align_tasks(raw, c.meta.m, c.arm.use_imu);
    const model::ModelSpec spec = meta_spec(c);
    model::Model templ = model::make_model(spec, init_seed(c));
    templ.scaler = meta::fit_support_scaler(tasks);

    std::vector<meta::ModelObjective> objectives;
    objectives.reserve(tasks.size());
    for (const meta::Task& t : tasks) objectives.emplace_back(templ, t);
    std::vector<const meta::TaskObjective*> ptrs;
    for (const auto& o : objectives) ptrs.push_back(&o);

    meta::MetaConfig mc = c.meta.train;
    mc.seed = train_seed(c);
    const meta::MetaTrainResult result = meta::meta_train(templ.params, ptrs, mc);

    io::Checkpoint cp;
    cp.model = templ;
    cp.model.params = result.params;
    cp.normalization.use_imu = c.arm.use_imu;
    for (const meta::Task& t : tasks) cp.tasks.push_back({t.id, t.normalization, t.projection});
    io::write_checkpoint(cp, dir / "meta_checkpoint.txt");
    auto out = open_out(dir / "meta_loss.csv");
    out << "iteration,outer_loss\n";
    for (std::size_t i = 0; i < result.outer_loss.size(); ++i)
        out << i + 1 << ',' << format_double(result.outer_loss[i]) << '\n';
}

void write_curve(std::ostream& out, const std::string& init, const meta::AdaptResult& r) {
    for (const meta::AdaptRow& row : r.curve)
        out << init << ',' << row.step << ',' << format_double(row.support_loss) << ','
            << format_double(row.query_loss) << ',' << format_double(row.residual) << ','
            << format_double(row.mde) << '\n';
}

void cmd_meta_test(const RunConfig& c, const fs::path& dir) {
    require_file("meta.checkpoint", c.meta.checkpoint);
    const io::Checkpoint cp = io::read_checkpoint(fs::path(c.meta.checkpoint));
    if (cp.tasks.empty()) throw ConfigKeyError("config", 0, "meta.checkpoint", "is not a meta checkpoint");

    meta::RawTask raw;
    if (!c.meta.test_data.empty()) {
        const radio::FingerprintDataset d = load_dataset("meta.test_data", c.meta.test_data);
        raw = meta::split_task(fs::path(c.meta.test_data).stem().string(), d, c.meta.support_fraction,
                               task_split_seed(c, static_cast<std::size_t>(std::max(d.floor, 0))));
    } else {
        const eval::Benchmark bench = benchmark(c);
        const int floor = checked_floor(bench, c.meta.test_floor, "meta.test_floor");
        raw = meta::split_task("floor" + std::to_string(c.meta.test_floor), eval::benchmark_floor(bench, floor),
                               c.meta.support_fraction, task_split_seed(c, c.meta.test_floor));
    }
    const meta::Task task = meta::align_task(raw, cp.model.spec.nodes, cp.normalization.use_imu);
    const meta::ModelObjective objective(cp.model, task);

    meta::ReferenceOptions ref = c.meta.reference;
    ref.lr = c.meta.adapt.lr;
    const double reference = meta::reference_query_loss(cp.model.params, objective, ref);
    const meta::AdaptResult from_meta = meta::meta_test_adapt(cp.model.params, objective, c.meta.adapt, reference);
    const meta::AdaptResult from_random =
        meta::meta_test_adapt(model::init_params(cp.model.spec, init_seed(c)), objective, c.meta.adapt, reference);
    {
        auto out = open_out(dir / "adaptation.csv");
        out << "init,step,support_loss,query_loss,residual,mde\n";
        write_curve(out, "meta", from_meta);
        write_curve(out, "random", from_random);
    }
    auto out = open_out(dir / "meta_test_summary.csv");
    out << "init,j,final_query_loss,final_mde,reference_query_loss\n";
    for (const auto& [name, r] : {std::pair<std::string, const meta::AdaptResult*>{"meta", &from_meta},
                                  std::pair<std::string, const meta::AdaptResult*>{"random", &from_random}}) {
        out << name << ',' << (r->j ? std::to_string(*r->j) : std::string("none")) << ','
            << format_double(r->curve.back().query_loss) << ',' << format_double(r->curve.back().mde) << ','
            << format_double(reference) << '\n';
    }
}

void cmd_graph_export(const RunConfig& c, const fs::path& dir) {
    const SplitData data = load_split(c);
    graph::GraphSpec g;
    switch (c.graph.kind) {
        case graph::GraphKind::corr:
            g = graph::pearson_adjacency(data.train, c.graph.threshold, c.graph.weighted);
            break;
        case graph::GraphKind::prob:
            g = graph::joint_appearance_adjacency(data.train, c.graph.threshold, c.graph.weighted);
            break;
        case graph::GraphKind::dynamic_knn: {
            if (c.graph.sample >= data.train.size())
                throw ConfigKeyError("config", 0, "graph.sample",
                                     "index " + std::to_string(c.graph.sample) + " outside the training split");
            const model::NormalizationParams norm = model::fit_normalization(data.train, c.arm.use_imu);
            g = graph::dynamic_knn_edges(model::build_node_features(data.train.samples[c.graph.sample], norm),
                                         c.graph.k);
            break;
        }
    }
    {
        auto out = open_out(dir / "adjacency.csv");
        graph::write_adjacency_csv(g.adjacency, out);
    }
    auto out = open_out(dir / "normalized_adjacency.csv");
    graph::write_adjacency_csv(graph::normalize_adjacency(g).matrix, out);
}

void write_manifest(const std::string& command, const RunConfig& c, const fs::path& dir) {
    auto out = open_out(dir / "manifest.cfg");
    out << "# metagraphloc " << kVersion << '\n';
    out << "# command = " << command << '\n';
    out << "# replay: metagraphloc replay <this file> --out <dir>\n";
    write_config(c, out);
}

RunConfig absolute_paths(RunConfig c) {
    auto fix = [](std::string& p) {
        if (!p.empty()) p = fs::absolute(p).lexically_normal().string();
    };
    fix(c.train_path);
    fix(c.test_path);
    fix(c.eval_checkpoint);
    fix(c.meta.checkpoint);
    fix(c.meta.test_data);
    for (std::string& p : c.meta.train_data) fix(p);
    return c;
}

std::string manifest_command(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigKeyError(path.string(), 0, "manifest", "cannot open");
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view t = trim(line);
        constexpr std::string_view tag = "# command =";
        if (t.substr(0, tag.size()) == tag) return std::string(trim(t.substr(tag.size())));
    }
    throw ConfigKeyError(path.string(), 0, "manifest", "no '# command = ...' line");
}

}  // namespace

bool is_command(const std::string& name) {
    return std::find(std::begin(kCommands), std::end(kCommands), name) != std::end(kCommands);
}

void run_command(const std::string& command, const RunConfig& config, const fs::path& out_dir, std::size_t jobs) {
    if (!is_command(command)) throw ConfigError("unknown command '" + command + "'");
    const RunConfig c = absolute_paths(config);
    fs::create_directories(out_dir);
    if (command == "gen-data") cmd_gen_data(c, out_dir);
    else if (command == "train") cmd_train(c, out_dir);
    else if (command == "eval") cmd_eval(c, out_dir);
    else if (command == "sweep") cmd_sweep(c, out_dir, jobs);
    else if (command == "compare") cmd_compare(c, out_dir, jobs);
    else if (command == "meta-train") cmd_meta_train(c, out_dir);
    else if (command == "meta-test") cmd_meta_test(c, out_dir);
    else cmd_graph_export(c, out_dir);
    write_manifest(command, c, out_dir);
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"metagraphloc: graph neural network indoor localization"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", kVersion);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--out", out_dir, "output directory (default: $METAGRAPHLOC_OUT or ./metagraphloc-out)");
    app.add_option("--jobs", jobs, "worker threads for sweep and compare")->check(CLI::PositiveNumber);
    app.add_option("--set", overrides, "key=value override, repeatable");

    std::string command;
    for (std::size_t i = 0; i < std::size(kCommands); ++i)
        app.add_subcommand(kCommands[i], kCommandHelp[i])->callback([&command, name = kCommands[i]] {
            command = name;
        });
    std::string manifest;
    auto* replay = app.add_subcommand("replay", "rerun the command recorded in a manifest.cfg");
    replay->add_option("manifest", manifest)->required();
    replay->callback([&command] { command = "replay"; });
    app.add_subcommand("show-config", "print the resolved configuration")->callback([&command] {
        command = "show-config";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config_error);
    }

    RunConfig config = default_config();
    try {
        if (command == "replay") {
            command = manifest_command(manifest);
            if (!is_command(command)) throw ConfigKeyError(manifest, 0, "command", "unknown command '" + command + "'");
            apply_config_file(config, manifest);
        }
        if (!config_path.empty()) apply_config_file(config, config_path);
        for (const std::string& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) throw ConfigKeyError("--set", 0, o, "expected key=value");
            set_value(config, std::string(trim(o.substr(0, eq))), std::string(trim(o.substr(eq + 1))));
        }
        if (seed) config.seed = *seed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config_error);
    }

    if (command == "show-config") {
        write_config(config, out);
        return 0;
    }
    if (out_dir.empty()) {
        const char* env = std::getenv("METAGRAPHLOC_OUT");
        out_dir = env && *env ? env : "metagraphloc-out";
    }

    try {
        run_command(command, config, out_dir, jobs);
    } catch (const ConfigKeyError& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config_error);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config_error);
    } catch (const std::exception& e) {
        err << "error: " << command << " failed: " << e.what() << '\n';
        return static_cast<int>(ExitCode::runtime_failure);
    }
    out << command << ": wrote " << out_dir << '\n';
    return 0;
}

}  // namespace mgl::cli
