#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ikdr/data.hpp"
#include "ikdr/error.hpp"
#include "ikdr/eval.hpp"
#include "ikdr/ikdr.hpp"
#include "ikdr/kernels.hpp"
#include "ikdr/log.hpp"
#include "ikdr/persist.hpp"

namespace ikdr::cli {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using nlohmann::json;

namespace {

std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw InputError("cannot parse '" + item + "' in " + what);
        }
    }
    if (out.empty()) throw InputError(what + " is empty");
    return out;
}

struct GridSpec {
    std::vector<double> lambdas;
    std::vector<double> mus;
};

// "lambda=0.1,1;mu=0.01,10"; a missing axis keeps the single base value.
GridSpec parse_grid(const std::string& text) {
    GridSpec g;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ';')) {
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw InputError("grid entry '" + part + "' needs name=values");
        const std::string name = part.substr(0, eq);
        auto values = parse_list(part.substr(eq + 1), "--grid " + name);
        if (name == "lambda") g.lambdas = std::move(values);
        else if (name == "mu") g.mus = std::move(values);
        else throw InputError("grid axis must be lambda or mu, got '" + name + "'");
    }
    return g;
}

// Effective settings after defaults < config file < flags.
struct Settings {
    std::string data;
    std::string label_col = "label";
    std::string model;
    std::string out = "out";
    KernelMode mode = KernelMode::single;
    BandwidthRule rule = BandwidthRule::mean_distance;
    Hyperparams hyper;
    int folds = 10;
    int inner_folds = 5;
    int threads = 1;
    bool center = false;
    bool dump_kernel = false;
    std::optional<GridSpec> grid;
    std::vector<int> k_values{1, 2, 3, 4, 5};
    std::string method = "ikdr";
};

// Raw flag values; optional means "not given on the command line".
struct Flags {
    std::string config;
    std::optional<std::string> data, label_col, model, out, mode, bandwidth, grid, k_values, method;
    std::optional<double> lambda, mu, tau, zeta, rho;
    std::optional<int> k, folds, threads, max_outer;
    std::optional<std::uint64_t> seed;
    bool exact_x_update = false;
    bool center = false;
    bool dump_kernel = false;
};

void apply_config_file(Settings& s, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw InputError("config file must hold a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "hyperparams") s.hyper = hyper_from_json(value, s.hyper);
            else if (key == "data") s.data = value.get<std::string>();
            else if (key == "label_col") s.label_col = value.get<std::string>();
            else if (key == "model") s.model = value.get<std::string>();
            else if (key == "out") s.out = value.get<std::string>();
            else if (key == "mode") s.mode = kernel_mode_from_string(value.get<std::string>());
            else if (key == "bandwidth") s.rule = bandwidth_rule_from_string(value.get<std::string>());
            else if (key == "folds") s.folds = value.get<int>();
            else if (key == "inner_folds") s.inner_folds = value.get<int>();
            else if (key == "threads") s.threads = value.get<int>();
            else if (key == "center") s.center = value.get<bool>();
            else if (key == "dump_kernel") s.dump_kernel = value.get<bool>();
            else if (key == "k_values") s.k_values = value.get<std::vector<int>>();
            else if (key == "method") s.method = value.get<std::string>();
            else if (key == "grid") {
                GridSpec g;
                g.lambdas = value.value("lambda", std::vector<double>{});
                g.mus = value.value("mu", std::vector<double>{});
                s.grid = g;
            } else {
                throw InputError("unknown config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw InputError("config file: " + std::string(e.what()));
    }
}

Settings resolve(const Flags& f) {
    Settings s;
    if (!f.config.empty()) apply_config_file(s, f.config);
    if (f.data) s.data = *f.data;
    if (f.label_col) s.label_col = *f.label_col;
    if (f.model) s.model = *f.model;
    if (f.out) s.out = *f.out;
    if (f.mode) s.mode = kernel_mode_from_string(*f.mode);
    if (f.bandwidth) s.rule = bandwidth_rule_from_string(*f.bandwidth);
    if (f.grid) s.grid = parse_grid(*f.grid);
    if (f.method) s.method = *f.method;
    if (f.k_values) {
        s.k_values.clear();
        for (const double v : parse_list(*f.k_values, "--k-values")) s.k_values.push_back(static_cast<int>(v));
    }
    if (f.lambda) s.hyper.lambda = *f.lambda;
    if (f.mu) s.hyper.mu = *f.mu;
    if (f.tau) s.hyper.tau = *f.tau;
    if (f.zeta) s.hyper.zeta = *f.zeta;
    if (f.rho) s.hyper.rho = *f.rho;
    if (f.k) s.hyper.k = *f.k;
    if (f.max_outer) s.hyper.max_outer = *f.max_outer;
    if (f.seed) s.hyper.seed = *f.seed;
    if (f.folds) s.folds = *f.folds;
    if (f.threads) s.threads = *f.threads;
    if (f.exact_x_update) s.hyper.exact_x_update = true;
    if (f.center) s.center = true;
    if (f.dump_kernel) s.dump_kernel = true;
    if (s.threads < 1) throw InputError("--threads must be at least 1");
    if (s.method != "ikdr" && s.method != "kpca") throw InputError("--method must be ikdr or kpca");
    return s;
}

Dataset require_data(const Settings& s) {
    if (s.data.empty()) throw InputError("--data is required");
    return load_csv(s.data, s.label_col);
}

fs::path prepare_out(const Settings& s) {
    const fs::path out(s.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw InputError("cannot create output directory: " + out.string());
    std::ofstream probe(out / ".write_test");
    if (!probe) throw InputError("output directory is not writable: " + out.string());
    probe.close();
    fs::remove(out / ".write_test", ec);
    return out;
}

std::vector<std::string> dim_header(Index k) {
    std::vector<std::string> h;
    for (Index j = 0; j < k; ++j) h.push_back("dim" + std::to_string(j));
    return h;
}

// Embedded coordinates (k x M) as one row per sample.
void write_embedding(const fs::path& path, const MatrixXd& embed) {
    write_matrix_csv(path, dim_header(embed.rows()), embed.transpose());
}

void write_class_scores(const fs::path& path, const MatrixXd& D, const std::vector<std::string>& class_names) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "class,dim,score\n";
    for (Index j = 0; j < D.cols(); ++j) {
        for (Index q = 0; q < D.rows(); ++q) {
            out << class_names[static_cast<std::size_t>(q)] << ',' << j << ',' << fmt12(D(q, j)) << '\n';
        }
    }
}

void write_profile(const fs::path& path, const FeatureProfile& p) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "rank,feature,name,weight\n";
    for (std::size_t i = 0; i < p.ranked.size(); ++i) {
        out << i + 1 << ',' << p.ranked[i].first << ',' << p.names[i] << ',' << fmt12(p.ranked[i].second) << '\n';
    }
}

void write_folds(const fs::path& path, const EvalReport& r) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "fold,test_size,accuracy,lambda,mu,inner_score,failed_candidates\n";
    for (const auto& f : r.folds) {
        out << f.fold << ',' << f.test_size << ',' << fmt12(f.accuracy) << ',' << fmt12(f.lambda) << ','
            << fmt12(f.mu) << ',' << fmt12(f.inner_score) << ',' << f.failed_candidates << '\n';
    }
}

void write_objective_trace(const fs::path& path, const EmbeddingModel& m) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "iter,j_sim,j_dis,j_ip,s_penalty,x_penalty,total,admm_iterations\n";
    for (const auto& t : m.trace) {
        out << t.iteration << ',' << fmt12(t.terms.j_sim) << ',' << fmt12(t.terms.j_dis) << ','
            << fmt12(t.terms.j_ip) << ',' << fmt12(t.terms.s_penalty) << ',' << fmt12(t.terms.x_penalty) << ','
            << fmt12(t.terms.total) << ',' << t.admm_iterations << '\n';
    }
}

void write_admm_trace(const fs::path& path, const std::vector<AdmmTraceRow>& rows) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "iter,primal_res_eq,primal_res_pos,objective\n";
    for (const auto& r : rows) {
        out << r.iteration << ',' << fmt12(r.residual_eq) << ',' << fmt12(r.residual_pos) << ','
            << fmt12(r.objective) << '\n';
    }
}

std::vector<Hyperparams> grid_of(const Settings& s) {
    if (!s.grid) return default_grid(s.hyper);
    const auto lambdas = s.grid->lambdas.empty() ? std::vector<double>{s.hyper.lambda} : s.grid->lambdas;
    const auto mus = s.grid->mus.empty() ? std::vector<double>{s.hyper.mu} : s.grid->mus;
    return make_grid(s.hyper, lambdas, mus);
}

CvOptions cv_options(const Settings& s, Method method) {
    CvOptions o;
    o.fold_count = s.folds;
    o.inner_folds = s.inner_folds;
    o.seed = s.hyper.seed;
    o.mode = s.mode;
    o.rule = s.rule;
    o.method = method;
    o.center = s.center;
    o.threads = s.threads;
    return o;
}

json settings_echo(const Settings& s) {
    return {{"data", s.data},
            {"label_col", s.label_col},
            {"mode", to_string(s.mode)},
            {"bandwidth", to_string(s.rule)},
            {"hyperparams", hyper_to_json(s.hyper)},
            {"folds", s.folds},
            {"inner_folds", s.inner_folds},
            {"center", s.center}};
}

void write_report(const fs::path& out, const EvalReport& r) {
    write_json(out / "report.json", report_to_json(r));
    write_folds(out / "folds.csv", r);
    write_class_scores(out / "class_scores.csv", r.dimension_class_scores, r.class_names);
    if (!r.feature_profile.ranked.empty()) write_profile(out / "feature_profile.csv", r.feature_profile);
}

int cmd_fit(const Settings& s) {
    const Dataset data = require_data(s);
    const fs::path out = prepare_out(s);
    std::vector<AdmmTraceRow> admm;
    FitOptions options;
    options.admm_trace = &admm;
    const EmbeddingModel model = fit(data, s.mode, s.rule, s.hyper, options);
    save_model(model, out);
    write_embedding(out / "train_embedding.csv", training_embedding(model));
    write_objective_trace(out / "objective_trace.csv", model);
    write_admm_trace(out / "admm_trace.csv", admm);
    if (s.dump_kernel) {
        const MatrixXd K = cross_kernel(model.train_features, model.train_features, model.kernel);
        std::vector<std::string> header;
        for (Index i = 0; i < K.cols(); ++i) header.push_back("s" + std::to_string(i));
        write_matrix_csv(out / "kernel.csv", header, K);
    }
    std::cout << "fit: " << model.diagnostics.outer_iterations << " outer iterations, objective "
              << fmt12(model.trace.back().terms.total) << ", model written to " << (out / "model.json").string()
              << '\n';
    return 0;
}

int cmd_transform(const Settings& s) {
    if (s.model.empty()) throw InputError("--model is required");
    if (s.data.empty()) throw InputError("--data is required");
    const EmbeddingModel model = load_model(s.model);
    const MatrixXd test = load_features_csv(s.data, model.feature_names, s.label_col);
    const fs::path out = prepare_out(s);
    write_embedding(out / "embedding.csv", transform(model, test));
    std::cout << "transform: " << test.rows() << " rows written to " << (out / "embedding.csv").string() << '\n';
    return 0;
}

int run_cv(const Settings& s, Method method, const std::vector<Hyperparams>& grid) {
    const Dataset data = require_data(s);
    const fs::path out = prepare_out(s);
    const EvalReport report = cross_validate(data, grid, cv_options(s, method));
    write_report(out, report);
    std::cout << to_string(method) << " cv: mean accuracy " << fmt12(report.accuracy_mean) << " over "
              << report.folds.size() << " folds, Ip " << fmt12(report.ip_value) << '\n';
    return 0;
}

int cmd_featsel(const Settings& s) {
    const Dataset data = require_data(s);
    const fs::path out = prepare_out(s);
    const EmbeddingModel model = fit(data, KernelMode::multi, s.rule, s.hyper);
    save_model(model, out);
    const FeatureProfile profile = feature_selection_profile(model.alpha, model.feature_names);
    write_profile(out / "feature_profile.csv", profile);
    json j;
    j["alpha_l0"] = profile.l0;
    j["alpha_l0_threshold"] = profile.threshold;
    json ranked = json::array();
    for (std::size_t i = 0; i < profile.ranked.size(); ++i) {
        ranked.push_back({{"feature", profile.ranked[i].first},
                          {"name", profile.names[i]},
                          {"weight", round12(profile.ranked[i].second)}});
    }
    j["profile"] = ranked;
    j["config_echo"] = settings_echo(s);
    write_json(out / "feature_profile.json", j);
    std::cout << "featsel: ||alpha||_0 = " << profile.l0 << ", top feature " << profile.names.front() << '\n';
    return 0;
}

int cmd_interpret(const Settings& s) {
    if (s.model.empty()) throw InputError("--model is required");
    const EmbeddingModel model = load_model(s.model);
    const fs::path out = prepare_out(s);
    const LabelIndicator H = build_label_indicator(model.train_labels, model.class_count);
    const double ip = ip_measure(model.A, H);
    const MatrixXd D = dimension_class_scores(model.A, H);
    write_class_scores(out / "class_scores.csv", D, model.class_names);
    json j;
    j["ip_value"] = round12(ip);
    json d = json::array();
    for (Index q = 0; q < D.rows(); ++q) {
        json row = json::array();
        for (Index c = 0; c < D.cols(); ++c) row.push_back(round12(D(q, c)));
        d.push_back(row);
    }
    j["dimension_class_scores"] = d;
    j["label_encoding"] = model.class_names;
    j["hyperparams"] = hyper_to_json(model.hyper);
    write_json(out / "interpret.json", j);
    std::cout << "interpret: Ip " << fmt12(ip) << '\n';
    return 0;
}

int cmd_sweep(const Settings& s) {
    const Dataset data = require_data(s);
    const fs::path out = prepare_out(s);
    const Method method = s.method == "kpca" ? Method::kpca : Method::ikdr;
    std::ofstream csv(out / "sweep.csv");
    if (!csv) throw InputError("cannot write " + (out / "sweep.csv").string());
    csv << "k,accuracy\n";
    for (const int k : s.k_values) {
        Settings sk = s;
        sk.hyper.k = k;
        const auto grid = method == Method::kpca ? std::vector<Hyperparams>{sk.hyper} : grid_of(sk);
        const EvalReport r = cross_validate(data, grid, cv_options(sk, method));
        csv << k << ',' << fmt12(r.accuracy_mean) << '\n';
        std::cout << "sweep: k = " << k << " accuracy " << fmt12(r.accuracy_mean) << '\n';
    }
    return 0;
}

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON config file (flags override it)");
    app->add_option("--out", f.out, "Output directory");
    app->add_option("--threads", f.threads, "Worker threads for fold evaluation");
    app->add_option("--seed", f.seed, "Random seed");
}

void add_data(CLI::App* app, Flags& f) {
    app->add_option("--data", f.data, "Input CSV with a header row");
    app->add_option("--label-col", f.label_col, "Name of the label column (default: label)");
}

void add_model(CLI::App* app, Flags& f) {
    app->add_option("--mode", f.mode, "single | multi")->check(CLI::IsMember({"single", "multi"}));
    app->add_option("--bandwidth", f.bandwidth, "mean | squared-mean")->check(CLI::IsMember({"mean", "squared-mean"}));
    app->add_option("--k", f.k, "Embedding dimension");
    app->add_option("--lambda", f.lambda, "Class dissimilarity weight");
    app->add_option("--mu", f.mu, "Locality weight");
    app->add_option("--tau", f.tau, "S = AX coupling weight");
    app->add_option("--zeta", f.zeta, "X = A'K coupling weight");
    app->add_option("--rho", f.rho, "ADMM penalty");
    app->add_option("--max-outer", f.max_outer, "Maximum outer iterations");
    app->add_flag("--exact-x-update", f.exact_x_update, "Solve the X step exactly");
}

void add_cv(CLI::App* app, Flags& f) {
    app->add_option("--folds", f.folds, "Outer folds");
    app->add_option("--grid", f.grid, "Tuning grid, e.g. \"lambda=0.1,1;mu=0.01,0.1\"");
}

}  // namespace

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

int run(const std::vector<std::string>& args) {
    log::init_from_env();
    CLI::App app{"Interpretable kernel dimensionality reduction"};
    app.require_subcommand(1);
    Flags f;

    auto* fit_cmd = app.add_subcommand("fit", "Fit a model and save it with the training data");
    add_common(fit_cmd, f);
    add_data(fit_cmd, f);
    add_model(fit_cmd, f);
    fit_cmd->add_flag("--dump-kernel", f.dump_kernel, "Also write the training kernel matrix");

    auto* transform_cmd = app.add_subcommand("transform", "Embed new rows with a saved model");
    add_common(transform_cmd, f);
    add_data(transform_cmd, f);
    transform_cmd->add_option("--model", f.model, "Path to model.json");

    auto* cv_cmd = app.add_subcommand("cv", "Stratified cross-validation with inner tuning");
    add_common(cv_cmd, f);
    add_data(cv_cmd, f);
    add_model(cv_cmd, f);
    add_cv(cv_cmd, f);

    auto* featsel_cmd = app.add_subcommand("featsel", "Multi-kernel fit and kernel-weight profile");
    add_common(featsel_cmd, f);
    add_data(featsel_cmd, f);
    add_model(featsel_cmd, f);

    auto* interpret_cmd = app.add_subcommand("interpret", "Ip and label-space scores of a saved model");
    add_common(interpret_cmd, f);
    interpret_cmd->add_option("--model", f.model, "Path to model.json");

    auto* kpca_cmd = app.add_subcommand("kpca", "Kernel PCA baseline under the same CV protocol");
    add_common(kpca_cmd, f);
    add_data(kpca_cmd, f);
    kpca_cmd->add_option("--k", f.k, "Embedding dimension");
    kpca_cmd->add_option("--bandwidth", f.bandwidth, "mean | squared-mean")
        ->check(CLI::IsMember({"mean", "squared-mean"}));
    kpca_cmd->add_option("--folds", f.folds, "Outer folds");
    kpca_cmd->add_flag("--center", f.center, "Center the kernel matrix");

    auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy against embedding dimension");
    add_common(sweep_cmd, f);
    add_data(sweep_cmd, f);
    add_model(sweep_cmd, f);
    add_cv(sweep_cmd, f);
    sweep_cmd->add_option("--k-values", f.k_values, "Comma-separated embedding dimensions");
    sweep_cmd->add_option("--method", f.method, "ikdr | kpca")->check(CLI::IsMember({"ikdr", "kpca"}));
    sweep_cmd->add_flag("--center", f.center, "Center the kernel matrix (kpca)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        const Settings s = resolve(f);
        if (fit_cmd->parsed()) return cmd_fit(s);
        if (transform_cmd->parsed()) return cmd_transform(s);
        if (cv_cmd->parsed()) return run_cv(s, Method::ikdr, grid_of(s));
        if (featsel_cmd->parsed()) return cmd_featsel(s);
        if (interpret_cmd->parsed()) return cmd_interpret(s);
        if (kpca_cmd->parsed()) return run_cv(s, Method::kpca, {s.hyper});
        if (sweep_cmd->parsed()) return cmd_sweep(s);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace ikdr::cli
