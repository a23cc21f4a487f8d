#include "hbf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

namespace hbf {

namespace fs = std::filesystem;

std::string to_string(SweepAxis a) {
    return a == SweepAxis::TransmitPowerDbm ? "transmit_power_dbm" : "feedback_bits";
}

SweepAxis axis_from_string(const std::string& s) {
    if (s == "transmit_power_dbm") return SweepAxis::TransmitPowerDbm;
    if (s == "feedback_bits") return SweepAxis::FeedbackBits;
    throw ConfigError("unknown sweep axis '" + s + "' (expected transmit_power_dbm or feedback_bits)");
}

void validate(const SweepSpec& spec, const SystemConfig& cfg) {
    if (spec.values.empty()) throw ConfigError("sweep needs at least one axis value");
    if (spec.methods.empty()) throw ConfigError("sweep needs at least one method");
    if (spec.axis == SweepAxis::FeedbackBits) {
        for (double v : spec.values) {
            if (v != std::floor(v) || v <= 0.0)
                throw ConfigError("feedback budget must be a positive integer");
            with_feedback_bits(cfg, static_cast<int>(v));
        }
    }
}

// -- results CSV -------------------------------------------------------------------

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot write results " + path);
    out << std::setprecision(17) << kResultsHeader << '\n';
    for (const auto& r : rows)
        out << r.method << ',' << r.axis_value << ',' << r.mean_se << ',' << r.stderr_se << ',' << r.n
            << '\n';
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open results " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("results file " + path + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kResultsHeader) throw FormatError("results file " + path + " has an unexpected header");
    std::vector<ResultRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 5) throw FormatError("results line " + std::to_string(lineno) + " needs 5 fields");
        try {
            rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]),
                            static_cast<std::size_t>(std::stoull(f[4]))});
        } catch (const std::logic_error&) {
            throw FormatError("results line " + std::to_string(lineno) + " is malformed");
        }
    }
    return rows;
}

// -- SVG ----------------------------------------------------------------------------

namespace {

std::string display_name(const std::string& method) {
    static const std::map<std::string, std::string> names = {
        {"gnn", "GNN (learned pilots + VQ feedback)"},
        {"mlp", "MLP (learned pilots + VQ feedback)"},
        {"mo_pcsi", "MO, perfect CSI"},
        {"mo_omp", "MO, OMP estimate"},
        {"fully_digital", "Fully digital, perfect CSI"},
    };
    const auto it = names.find(method);
    return it == names.end() ? method : it->second;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream o;
    o << std::setprecision(prec) << v;
    return o.str();
}

double nice_step(double span, int target_ticks) {
    const double raw = span / std::max(1, target_ticks);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
        if (m * mag >= raw) return m * mag;
    return 10.0 * mag;
}

}  // namespace

std::string render_svg(const std::vector<ResultRow>& rows, SweepAxis axis, const std::string& title) {
    if (rows.empty()) throw FormatError("no result rows to plot");
    constexpr double W = 720, H = 480, ml = 70, mr = 20, mt = 40, mb = 60;
    const bool log_x = axis == SweepAxis::FeedbackBits;
    auto xt = [&](double v) { return log_x ? std::log2(std::max(v, 1e-300)) : v; };

    std::vector<std::string> order;
    std::map<std::string, std::vector<ResultRow>> series;
    double xmin = 1e300, xmax = -1e300, ymax = 0.0;
    for (const auto& r : rows) {
        if (!series.count(r.method)) order.push_back(r.method);
        series[r.method].push_back(r);
        xmin = std::min(xmin, xt(r.axis_value));
        xmax = std::max(xmax, xt(r.axis_value));
        ymax = std::max(ymax, r.mean_se + r.stderr_se);
    }
    if (xmax == xmin) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (!(ymax > 0.0)) ymax = 1.0;
    const double ystep = nice_step(ymax, 6);
    ymax = std::ceil(ymax * 1.05 / ystep) * ystep;
    const double pw = W - ml - mr, ph = H - mt - mb;
    auto px = [&](double v) { return ml + (xt(v) - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double v) { return mt + ph - v / ymax * ph; };

    static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#000000",
                                   "#9467bd", "#8c564b"};
    static const char* dashes[] = {"", "6,3", "2,2", "8,3,2,3", "4,4", "", ""};

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty())
        s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title
          << "</text>\n";
    s << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (double y = 0.0; y <= ymax + 1e-9 * ymax; y += ystep) {
        s << "<line x1=\"" << ml << "\" x2=\"" << ml + pw << "\" y1=\"" << py(y) << "\" y2=\"" << py(y)
          << "\" stroke=\"#ddd\"/>\n";
        s << "<text x=\"" << ml - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << fmt(y)
          << "</text>\n";
    }
    std::vector<double> xticks;
    for (const auto& r : rows)
        if (std::find(xticks.begin(), xticks.end(), r.axis_value) == xticks.end())
            xticks.push_back(r.axis_value);
    for (double x : xticks) {
        s << "<line x1=\"" << px(x) << "\" x2=\"" << px(x) << "\" y1=\"" << mt + ph << "\" y2=\""
          << mt + ph + 5 << "\" stroke=\"#333\"/>\n";
        s << "<text x=\"" << px(x) << "\" y=\"" << mt + ph + 18 << "\" text-anchor=\"middle\">" << fmt(x)
          << "</text>\n";
    }
    const std::string xlabel = axis == SweepAxis::FeedbackBits ? "Feedback overhead B (bits)"
                                                               : "Transmit power (dBm)";
    s << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
    s << "<text transform=\"translate(18," << mt + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">Spectral efficiency (bits/s/Hz)</text>\n";

    for (std::size_t i = 0; i < order.size(); ++i) {
        auto pts = series[order[i]];
        std::sort(pts.begin(), pts.end(),
                  [](const ResultRow& a, const ResultRow& b) { return a.axis_value < b.axis_value; });
        const char* color = colors[i % 7];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\"";
        if (*dashes[i % 7]) s << " stroke-dasharray=\"" << dashes[i % 7] << '"';
        s << " points=\"";
        for (const auto& p : pts) s << px(p.axis_value) << ',' << py(p.mean_se) << ' ';
        s << "\"/>\n";
        for (const auto& p : pts) {
            if (p.stderr_se > 0.0)
                s << "<line x1=\"" << px(p.axis_value) << "\" x2=\"" << px(p.axis_value) << "\" y1=\""
                  << py(p.mean_se - p.stderr_se) << "\" y2=\"" << py(p.mean_se + p.stderr_se)
                  << "\" stroke=\"" << color << "\"/>\n";
            s << "<circle cx=\"" << px(p.axis_value) << "\" cy=\"" << py(p.mean_se) << "\" r=\"3\" fill=\""
              << color << "\"/>\n";
        }
        const double ly = mt + 16 + 18 * static_cast<double>(i);
        s << "<line x1=\"" << ml + 12 << "\" x2=\"" << ml + 40 << "\" y1=\"" << ly << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"1.8\"/>\n";
        s << "<text x=\"" << ml + 46 << "\" y=\"" << ly + 4 << "\">" << display_name(order[i])
          << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string data_dir() {
    const char* env = std::getenv("HBF_DATA_DIR");
    return env && *env ? std::string(env) : std::string("data");
}

// -- subcommands -----------------------------------------------------------------

namespace {

const char* const kConfigKeys[] = {"Nt", "Nr", "NRFt", "NRFr", "Ns", "K",    "Kp",       "M",
                                   "L",  "rho", "rho_p", "sigma_n2", "B", "D", "V", "G",
                                   "alpha", "seed", "rho_dbm", "rho_p_dbm", "sigma_n2_dbm"};

struct Common {
    std::string config_path;
    bool quiet = false;
    int threads = 0;
    std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* app, Common& c, bool config_required = true) {
    auto* opt = app->add_option("--config", c.config_path, "JSON system configuration");
    if (config_required) opt->required();
    app->add_flag("--quiet", c.quiet, "suppress progress output");
    app->add_option("--threads", c.threads, "worker threads (0: all cores)");
    for (const char* key : kConfigKeys)
        app->add_option(std::string("--") + key, c.overrides[key], std::string("override config ") + key);
}

SystemConfig resolve_config(const Common& c) {
    nlohmann::json j = nlohmann::json::object();
    {
        std::ifstream in(c.config_path);
        if (!in) throw std::ios_base::failure("cannot open config file " + c.config_path);
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed config " + c.config_path + ": " + e.what());
        }
        if (!j.is_object()) throw ConfigError("config " + c.config_path + " must be a JSON object");
    }
    for (const auto& [key, value] : c.overrides) {
        if (value.empty()) continue;
        nlohmann::json v;
        try {
            v = nlohmann::json::parse(value);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("--" + key + " expects a number, got '" + value + "'");
        }
        if (!v.is_number()) throw ConfigError("--" + key + " expects a number, got '" + value + "'");
        if (key == "rho_dbm") j.erase("rho");
        if (key == "rho") j.erase("rho_dbm");
        if (key == "rho_p_dbm") j.erase("rho_p");
        if (key == "rho_p") j.erase("rho_p_dbm");
        if (key == "sigma_n2_dbm") j.erase("sigma_n2");
        if (key == "sigma_n2") j.erase("sigma_n2_dbm");
        j[key] = v;
    }
    const bool b_only = !c.overrides.at("B").empty() && c.overrides.at("D").empty() &&
                        c.overrides.at("V").empty();
    if (b_only) {
        j["feedback_bits"] = j.at("B");
        j.erase("B");
        j.erase("D");
        j.erase("V");
    }
    SystemConfig cfg;
    try {
        from_json(j, cfg);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config field in " + c.config_path + ": " + e.what());
    }
    return validate(cfg);
}

std::string default_dataset_path() { return (fs::path(data_dir()) / "channels.bin").string(); }

void ensure_parent(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<Method> parse_methods(const std::string& s) {
    std::vector<Method> out;
    for (const auto& m : split_list(s)) out.push_back(method_from_string(m));
    return out;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    for (const auto& v : split_list(s)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(v, &used));
            if (used != v.size()) throw std::invalid_argument(v);
        } catch (const std::logic_error&) {
            throw ConfigError("'" + v + "' is not a number");
        }
    }
    return out;
}

bool is_learned(Method m) { return m == Method::Gnn || m == Method::Mlp; }
Arch arch_of(Method m) { return m == Method::Gnn ? Arch::Gnn : Arch::Mlp; }

struct Splits {
    Dataset train, validation, test;
};

Splits load_splits(const std::string& path, const SystemConfig& cfg) {
    Dataset all = load_dataset(path, cfg);
    const SplitIndices idx = split_dataset(all.size());
    return {subset(all, idx.train), subset(all, idx.validation), subset(all, idx.test)};
}

const Dataset& pick_split(const Splits& s, const std::string& name) {
    if (name == "test") return s.test;
    if (name == "validation") return s.validation;
    if (name == "train") return s.train;
    throw ConfigError("unknown split '" + name + "' (expected train, validation or test)");
}

struct TrainFlags {
    int epochs = 500;
    int batch = 128;
    double lr = 1e-3;
    bool freeze_codebook = false;
    bool commitment_to_pilots = false;
    bool check_constraints = false;
};

void add_train_flags(CLI::App* app, TrainFlags& t) {
    app->add_option("--epochs", t.epochs, "training epochs")->check(CLI::NonNegativeNumber);
    app->add_option("--batch", t.batch, "minibatch size")->check(CLI::PositiveNumber);
    app->add_option("--lr", t.lr, "learning rate")->check(CLI::PositiveNumber);
    app->add_flag("--freeze-codebook", t.freeze_codebook, "keep the codebook at its initialization");
    app->add_flag("--commitment-to-pilots", t.commitment_to_pilots,
                  "also train the pilots on the commitment term");
    app->add_flag("--check-constraints", t.check_constraints,
                  "assert all hard constraints after every step");
}

TrainOptions make_train_options(const TrainFlags& t, Arch arch, int threads) {
    TrainOptions opt;
    opt.epochs = t.epochs;
    opt.batch_size = t.batch;
    opt.lr = t.lr;
    opt.arch = arch;
    opt.freeze_codebook = t.freeze_codebook;
    opt.commitment_to_pilots = t.commitment_to_pilots;
    opt.check_constraints = t.check_constraints;
    opt.threads = threads;
    return opt;
}

std::function<void(const EpochRecord&)> progress(std::ostream& err, std::mutex& mu, bool quiet,
                                                 const std::string& tag, int total) {
    if (quiet) return {};
    const int every = std::max(1, total / 20);
    return [&err, &mu, tag, total, every](const EpochRecord& r) {
        if (r.epoch % every != 0 && r.epoch != total) return;
        std::lock_guard<std::mutex> lock(mu);
        err << tag << " epoch " << r.epoch << '/' << total << " loss " << fmt(r.train_loss, 6)
            << " rate " << fmt(r.train_rate, 6) << " val_se " << fmt(r.val_se, 6) << '\n';
    };
}

std::string history_path_for(const std::string& ckpt) {
    fs::path p(ckpt);
    p.replace_extension();
    return p.string() + "_history.csv";
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    std::mutex mu;
    std::size_t next = 0;
    for (int t = 0; t < std::min<int>(jobs, static_cast<int>(n)); ++t)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= n) return;
                    i = next++;
                }
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

int cmd_gen_data(const Common& c, const std::string& out_path, std::size_t samples,
                 const ClusterParams& params, std::ostream& out) {
    const SystemConfig cfg = resolve_config(c);
    validate(params);
    const std::string path = out_path.empty() ? default_dataset_path() : out_path;
    const Dataset data = generate_dataset(cfg, params, samples);
    ensure_parent(path);
    save_dataset(path, data);
    out << "wrote " << samples << " channel samples to " << path << '\n';
    return kExitOk;
}

int main_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Learned pilots, VQ feedback and GNN hybrid beamforming for FDD MIMO-OFDM", "hbf"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // gen-data
    Common gc;
    std::string gen_out;
    std::size_t gen_samples = 4000;
    ClusterParams cp;
    double max_delay_ns = cp.max_delay_s * 1e9;
    auto* gen = app.add_subcommand("gen-data", "generate a clustered channel dataset");
    add_common(gen, gc);
    gen->add_option("--out", gen_out, "dataset path (default $HBF_DATA_DIR/channels.bin)");
    gen->add_option("--samples", gen_samples, "number of realizations")->check(CLI::PositiveNumber);
    gen->add_option("--clusters", cp.num_clusters, "scattering clusters");
    gen->add_option("--rays", cp.rays_per_cluster, "rays per cluster");
    gen->add_option("--angle-spread-deg", cp.angle_spread_deg, "per-cluster angular spread");
    gen->add_option("--max-delay-ns", max_delay_ns, "maximum cluster delay");
    gen->add_option("--carrier-hz", cp.carrier_hz, "carrier frequency");
    gen->add_option("--bandwidth-hz", cp.bandwidth_hz, "system bandwidth");

    // train
    Common tc;
    TrainFlags tf;
    std::string train_data, train_out = "checkpoint.bin", train_history, train_resume, train_arch = "gnn";
    int save_every = 0;
    auto* tr = app.add_subcommand("train", "train pilots, codebook and beamforming networks");
    add_common(tr, tc);
    add_train_flags(tr, tf);
    tr->add_option("--data", train_data, "dataset path (default $HBF_DATA_DIR/channels.bin)");
    tr->add_option("--out", train_out, "checkpoint path");
    tr->add_option("--history", train_history, "history CSV (default <out>_history.csv)");
    tr->add_option("--resume", train_resume, "continue from this checkpoint");
    tr->add_option("--arch", train_arch, "gnn or mlp");
    tr->add_option("--save-every", save_every, "also checkpoint every N epochs");

    // eval
    Common ec;
    std::string eval_data, eval_ckpt, eval_methods, eval_rho = "-5,0,5,10,15,20,25,30",
                                                     eval_out = "results.csv", eval_split = "test";
    int eval_mo_iters = MoOptions{}.iters;
    auto* ev = app.add_subcommand("eval", "evaluate methods over a transmit-power list");
    add_common(ev, ec);
    ev->add_option("--data", eval_data, "dataset path (default $HBF_DATA_DIR/channels.bin)");
    ev->add_option("--checkpoint", eval_ckpt, "trained (or untrained) checkpoint");
    ev->add_option("--methods", eval_methods,
                   "comma list of gnn,mlp,mo_pcsi,mo_omp,fully_digital (default: all available)");
    ev->add_option("--rho-dbm", eval_rho, "comma list of transmit powers in dBm");
    ev->add_option("--split", eval_split, "train, validation or test");
    ev->add_option("--out", eval_out, "results CSV");
    ev->add_option("--mo-iters", eval_mo_iters, "manifold optimization iterations");

    // sweep
    Common sc;
    TrainFlags sf;
    std::string sweep_data, sweep_axis = "transmit_power_dbm", sweep_values, sweep_methods,
                            sweep_out = "sweep.csv", sweep_ckpt, sweep_ckpt_dir, sweep_split = "test";
    int jobs = 1;
    int sweep_mo_iters = MoOptions{}.iters;
    auto* sw = app.add_subcommand("sweep", "sweep transmit power or feedback budget");
    add_common(sw, sc);
    add_train_flags(sw, sf);
    sw->add_option("--data", sweep_data, "dataset path (default $HBF_DATA_DIR/channels.bin)");
    sw->add_option("--axis", sweep_axis, "transmit_power_dbm or feedback_bits");
    sw->add_option("--values", sweep_values, "comma list of axis values");
    sw->add_option("--methods", sweep_methods, "comma list of methods (default: all)");
    sw->add_option("--checkpoint", sweep_ckpt, "pretrained checkpoint for the power axis");
    sw->add_option("--checkpoint-dir", sweep_ckpt_dir, "save models trained during the sweep here");
    sw->add_option("--split", sweep_split, "train, validation or test");
    sw->add_option("--out", sweep_out, "results CSV");
    sw->add_option("--jobs", jobs, "sweep points evaluated in parallel")->check(CLI::PositiveNumber);
    sw->add_option("--mo-iters", sweep_mo_iters, "manifold optimization iterations");

    // plot
    Common pc;
    std::string plot_in, plot_out, plot_axis = "auto", plot_title;
    auto* pl = app.add_subcommand("plot", "render a results CSV as SVG");
    add_common(pl, pc, false);
    pl->add_option("--input", plot_in, "results CSV")->required();
    pl->add_option("--out", plot_out, "SVG path (default: input with .svg)");
    pl->add_option("--axis", plot_axis, "transmit_power_dbm, feedback_bits or auto");
    pl->add_option("--title", plot_title, "figure title");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        throw ConfigError(e.what());
    }

    std::mutex log_mu;

    if (gen->parsed()) {
        cp.max_delay_s = max_delay_ns * 1e-9;
        return cmd_gen_data(gc, gen_out, gen_samples, cp, out);
    }

    if (tr->parsed()) {
        const SystemConfig cfg = resolve_config(tc);
        const Splits s = load_splits(train_data.empty() ? default_dataset_path() : train_data, cfg);
        TrainOptions opt = make_train_options(tf, arch_from_string(train_arch), tc.threads);
        std::optional<TrainState> resume;
        if (!train_resume.empty()) {
            resume = load_checkpoint(train_resume, cfg);
            if (resume->model.arch != opt.arch)
                throw ConfigError("resume checkpoint is " + to_string(resume->model.arch) +
                                  ", not " + to_string(opt.arch));
        }
        const int start = resume ? resume->epoch : 0;
        const int total = std::max(start, tf.epochs);
        auto report = progress(err, log_mu, tc.quiet, "train", total);
        ensure_parent(train_out);
        // Periodic checkpoints need the live state, so chunk the epochs.
        std::vector<EpochRecord> history;
        TrainResult res;
        int done = start;
        const int chunk = save_every > 0 ? save_every : std::max(total - start, 0);
        bool first = true;
        do {
            opt.epochs = std::min(done + chunk, total);
            opt.on_epoch = report;
            res = train(cfg, s.train, s.validation, opt,
                        first ? std::move(resume) : std::optional<TrainState>(std::move(res.state)));
            history.insert(history.end(), res.history.begin(), res.history.end());
            save_checkpoint(train_out, res.state);
            done = res.state.epoch;
            first = false;
        } while (done < total);
        const std::string hist = train_history.empty() ? history_path_for(train_out) : train_history;
        ensure_parent(hist);
        write_history_csv(hist, history);
        out << "trained " << to_string(opt.arch) << " to epoch " << res.state.epoch << ", best val_se "
            << fmt(res.state.best_val, 6) << "; checkpoint " << train_out << ", history " << hist << '\n';
        return kExitOk;
    }

    if (ev->parsed()) {
        const SystemConfig cfg = resolve_config(ec);
        const Splits s = load_splits(eval_data.empty() ? default_dataset_path() : eval_data, cfg);
        std::optional<Model> model;
        if (!eval_ckpt.empty()) model = load_checkpoint(eval_ckpt, cfg).best;
        std::vector<Method> methods;
        if (eval_methods.empty()) {
            if (model) methods.push_back(model->arch == Arch::Gnn ? Method::Gnn : Method::Mlp);
            for (Method m : {Method::MoPcsi, Method::MoOmp, Method::FullyDigital}) methods.push_back(m);
        } else {
            methods = parse_methods(eval_methods);
        }
        const std::vector<double> rho_dbm = parse_values(eval_rho);
        if (rho_dbm.empty()) throw ConfigError("--rho-dbm needs at least one value");
        std::vector<double> rhos;
        for (double d : rho_dbm) rhos.push_back(dbm_to_mw(d));
        MoOptions mo;
        mo.iters = eval_mo_iters;
        std::vector<ResultRow> rows;
        for (Method m : methods) {
            if (is_learned(m) && !model)
                throw ConfigError("method " + to_string(m) + " needs --checkpoint");
            const auto table = evaluate(m, cfg, pick_split(s, eval_split), rhos, model ? &*model : nullptr, mo);
            for (std::size_t i = 0; i < table.size(); ++i)
                rows.push_back({to_string(m), rho_dbm[i], table[i].mean_se, table[i].stderr_se, table[i].n});
        }
        ensure_parent(eval_out);
        write_results_csv(eval_out, rows);
        out << "wrote " << rows.size() << " rows to " << eval_out << '\n';
        return kExitOk;
    }

    if (sw->parsed()) {
        const SystemConfig cfg = resolve_config(sc);
        SweepSpec spec;
        spec.axis = axis_from_string(sweep_axis);
        if (sweep_values.empty()) {
            spec.values = spec.axis == SweepAxis::FeedbackBits
                              ? std::vector<double>{32, 64, 96, 128, 192, 256, 512, 768, 1024}
                              : std::vector<double>{-5, 0, 5, 10, 15, 20, 25, 30};
        } else {
            spec.values = parse_values(sweep_values);
        }
        spec.methods = sweep_methods.empty()
                           ? std::vector<Method>{Method::Gnn, Method::Mlp, Method::MoPcsi, Method::MoOmp,
                                                 Method::FullyDigital}
                           : parse_methods(sweep_methods);
        validate(spec, cfg);
        if (!sweep_ckpt.empty() && spec.axis == SweepAxis::FeedbackBits)
            throw ConfigError("--checkpoint applies to the transmit-power axis only");
        const Splits s = load_splits(sweep_data.empty() ? default_dataset_path() : sweep_data, cfg);
        const Dataset& eval_set = pick_split(s, sweep_split);
        MoOptions mo;
        mo.iters = sweep_mo_iters;
        const int inner_threads = jobs > 1 ? 1 : sc.threads;

        auto train_model = [&](const SystemConfig& c, Arch arch, const std::string& tag) {
            TrainOptions opt = make_train_options(sf, arch, inner_threads);
            opt.on_epoch = progress(err, log_mu, sc.quiet, tag, sf.epochs);
            TrainResult r = train(c, s.train, s.validation, opt);
            if (!sweep_ckpt_dir.empty()) {
                fs::create_directories(sweep_ckpt_dir);
                save_checkpoint((fs::path(sweep_ckpt_dir) / (tag + ".bin")).string(), r.state);
            }
            return r.state.best;
        };

        // rows_by_point[p] holds the rows of point p in method order.
        std::vector<std::vector<ResultRow>> point_rows;
        if (spec.axis == SweepAxis::TransmitPowerDbm) {
            std::vector<double> rhos;
            for (double d : spec.values) rhos.push_back(dbm_to_mw(d));
            std::optional<Model> loaded;
            if (!sweep_ckpt.empty()) loaded = load_checkpoint(sweep_ckpt, cfg).best;
            // One model per architecture, shared across powers.
            std::map<Arch, Model> models;
            std::vector<Arch> needed;
            for (Method m : spec.methods) {
                if (!is_learned(m) && m != Method::MoOmp) continue;
                const Arch a = m == Method::MoOmp ? Arch::Gnn : arch_of(m);
                if (m == Method::MoOmp && !loaded &&
                    std::find(spec.methods.begin(), spec.methods.end(), Method::Gnn) == spec.methods.end())
                    continue;
                if (std::find(needed.begin(), needed.end(), a) == needed.end()) needed.push_back(a);
            }
            std::vector<std::optional<Model>> trained(needed.size());
            parallel_for(needed.size(), jobs, [&](std::size_t i) {
                if (loaded && loaded->arch == needed[i]) {
                    trained[i] = *loaded;
                } else {
                    trained[i] = train_model(cfg, needed[i], to_string(needed[i]));
                }
            });
            for (std::size_t i = 0; i < needed.size(); ++i) models.emplace(needed[i], std::move(*trained[i]));

            point_rows.resize(spec.methods.size());
            parallel_for(spec.methods.size(), jobs, [&](std::size_t i) {
                const Method m = spec.methods[i];
                const Model* model = nullptr;
                if (is_learned(m)) model = &models.at(arch_of(m));
                if (m == Method::MoOmp && models.count(Arch::Gnn)) model = &models.at(Arch::Gnn);
                const auto table = evaluate(m, cfg, eval_set, rhos, model, mo);
                for (std::size_t j = 0; j < table.size(); ++j)
                    point_rows[i].push_back(
                        {to_string(m), spec.values[j], table[j].mean_se, table[j].stderr_se, table[j].n});
            });
        } else {
            point_rows.resize(spec.values.size());
            parallel_for(spec.values.size(), jobs, [&](std::size_t p) {
                const int bits = static_cast<int>(spec.values[p]);
                const SystemConfig cb = with_feedback_bits(cfg, bits);
                std::map<Arch, Model> models;
                for (Method m : spec.methods)
                    if (is_learned(m) && !models.count(arch_of(m)))
                        models.emplace(arch_of(m), train_model(cb, arch_of(m),
                                                               to_string(arch_of(m)) + "_B" + std::to_string(bits)));
                for (Method m : spec.methods) {
                    const Model* model = nullptr;
                    if (is_learned(m)) model = &models.at(arch_of(m));
                    if (m == Method::MoOmp && models.count(Arch::Gnn)) model = &models.at(Arch::Gnn);
                    const EvalRow r = evaluate(m, cb, eval_set, {cb.rho}, model, mo).front();
                    point_rows[p].push_back({to_string(m), spec.values[p], r.mean_se, r.stderr_se, r.n});
                }
            });
        }

        std::vector<ResultRow> rows;
        for (Method m : spec.methods)
            for (const auto& pr : point_rows)
                for (const auto& r : pr)
                    if (r.method == to_string(m)) rows.push_back(r);
        ensure_parent(sweep_out);
        write_results_csv(sweep_out, rows);
        out << "wrote " << rows.size() << " rows to " << sweep_out << '\n';
        return kExitOk;
    }

    if (pl->parsed()) {
        const std::vector<ResultRow> rows = read_results_csv(plot_in);
        if (rows.empty()) throw FormatError("results file " + plot_in + " has no rows to plot");
        SweepAxis axis;
        if (plot_axis == "auto") {
            const bool bits = std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) {
                return r.axis_value >= 32.0 && r.axis_value == std::floor(r.axis_value);
            });
            axis = bits ? SweepAxis::FeedbackBits : SweepAxis::TransmitPowerDbm;
        } else {
            axis = axis_from_string(plot_axis);
        }
        fs::path target = plot_out.empty() ? fs::path(plot_in).replace_extension(".svg") : fs::path(plot_out);
        ensure_parent(target.string());
        std::ofstream f(target);
        if (!f) throw std::ios_base::failure("cannot write plot " + target.string());
        f << render_svg(rows, axis, plot_title);
        out << "wrote " << target.string() << '\n';
        return kExitOk;
    }
    return kExitFailure;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

}  // namespace

int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return main_dispatch(args, out, err);
    } catch (const ConfigError& e) {
        err << "error: bad config: " << one_line(e.what()) << '\n';
        return kExitConfig;
    } catch (const std::ios_base::failure& e) {
        err << "error: missing file: " << one_line(e.what()) << '\n';
        return kExitMissingFile;
    } catch (const ConstraintError& e) {
        err << "error: constraint violation: " << one_line(e.what()) << '\n';
        return kExitConstraint;
    } catch (const FormatError& e) {
        err << "error: bad file: " << one_line(e.what()) << '\n';
        return kExitFormat;
    } catch (const std::exception& e) {
        err << "error: " << one_line(e.what()) << '\n';
        return kExitFailure;
    }
}

}  // namespace hbf
