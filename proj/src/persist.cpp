#include "ikdr/persist.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "ikdr/error.hpp"

namespace ikdr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

double round12(double value) {
    if (!std::isfinite(value)) return value;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return std::strtod(buf, nullptr);
}

namespace {

json matrix_json(const MatrixXd& m, bool rounded) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(rounded ? round12(m(i, j)) : m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatrixXd matrix_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw InputError(std::string("model: '") + what + "' must be a non-empty array");
    const auto rows = static_cast<Index>(j.size());
    const auto cols = static_cast<Index>(j.front().size());
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (static_cast<Index>(row.size()) != cols) throw InputError(std::string("model: ragged matrix '") + what + "'");
        for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

json vector_json(const VectorXd& v, bool rounded) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(rounded ? round12(v(i)) : v(i));
    return out;
}

VectorXd vector_from_json(const json& j) {
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
}

json terms_json(const ObjectiveTerms& t) {
    return {{"j_sim", round12(t.j_sim)},         {"j_dis", round12(t.j_dis)},
            {"j_ip", round12(t.j_ip)},           {"s_penalty", round12(t.s_penalty)},
            {"x_penalty", round12(t.x_penalty)}, {"total", round12(t.total)}};
}

}  // namespace

json hyper_to_json(const Hyperparams& h) {
    return {{"lambda", h.lambda},       {"mu", h.mu},
            {"tau", h.tau},             {"zeta", h.zeta},
            {"rho", h.rho},             {"k", h.k},
            {"max_outer", h.max_outer}, {"outer_tol", h.outer_tol},
            {"admm_iters", h.admm_iters}, {"admm_tol", h.admm_tol},
            {"qp_iters", h.qp_iters},   {"qp_tol", h.qp_tol},
            {"seed", h.seed},           {"exact_x_update", h.exact_x_update},
            {"rho_scaled", h.rho_scaled}};
}

Hyperparams hyper_from_json(const json& j, Hyperparams h) {
    if (!j.is_object()) throw InputError("hyperparameters must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "lambda") h.lambda = value.get<double>();
            else if (key == "mu") h.mu = value.get<double>();
            else if (key == "tau") h.tau = value.get<double>();
            else if (key == "zeta") h.zeta = value.get<double>();
            else if (key == "rho") h.rho = value.get<double>();
            else if (key == "k") h.k = value.get<int>();
            else if (key == "max_outer") h.max_outer = value.get<int>();
            else if (key == "outer_tol") h.outer_tol = value.get<double>();
            else if (key == "admm_iters") h.admm_iters = value.get<int>();
            else if (key == "admm_tol") h.admm_tol = value.get<double>();
            else if (key == "qp_iters") h.qp_iters = value.get<int>();
            else if (key == "qp_tol") h.qp_tol = value.get<double>();
            else if (key == "seed") h.seed = value.get<std::uint64_t>();
            else if (key == "exact_x_update") h.exact_x_update = value.get<bool>();
            else if (key == "rho_scaled") h.rho_scaled = value.get<bool>();
            else throw InputError("unknown hyperparameter '" + key + "'");
        } catch (const json::exception& e) {
            throw InputError("hyperparameter '" + key + "': " + e.what());
        }
    }
    return h;
}

void save_model(const EmbeddingModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json j;
    j["schema_version"] = kModelSchemaVersion;
    j["mode"] = to_string(model.mode);
    j["bandwidth_rule"] = to_string(model.kernel.rule);
    j["bandwidths"] = model.kernel.bandwidths;
    j["degenerate_kernels"] = model.kernel.degenerate;
    j["alpha"] = vector_json(model.alpha, false);
    j["A"] = matrix_json(model.A, false);
    j["hyperparams"] = hyper_to_json(model.hyper);
    j["class_count"] = model.class_count;
    j["label_encoding"] = model.class_names;
    j["feature_names"] = model.feature_names;
    j["train_features_csv"] = "train.csv";
    j["diagnostics"] = {{"outer_iterations", model.diagnostics.outer_iterations},
                        {"converged", model.diagnostics.converged},
                        {"residual_eq", model.diagnostics.residual_eq},
                        {"min_entry", model.diagnostics.min_entry},
                        {"effective_rho", model.diagnostics.effective_rho},
                        {"rejected_steps", model.diagnostics.rejected_steps},
                        {"polish_iterations", model.diagnostics.polish_iterations}};
    json trace = json::array();
    for (const auto& t : model.trace) trace.push_back({{"iteration", t.iteration}, {"terms", terms_json(t.terms)}});
    j["objective_trace"] = std::move(trace);
    write_json(dir / "model.json", j);

    std::ofstream csv(dir / "train.csv");
    if (!csv) throw InputError("cannot write " + (dir / "train.csv").string());
    for (const auto& name : model.feature_names) csv << name << ',';
    csv << "__label__\n";
    char buf[40];
    for (Index i = 0; i < model.train_features.rows(); ++i) {
        for (Index c = 0; c < model.train_features.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", model.train_features(i, c));
            csv << buf << ',';
        }
        csv << model.train_labels[static_cast<std::size_t>(i)] << '\n';
    }
}

EmbeddingModel load_model(const std::filesystem::path& model_json) {
    std::ifstream in(model_json);
    if (!in) throw InputError("cannot open model file: " + model_json.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("model file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.contains("schema_version") || j["schema_version"] != kModelSchemaVersion) {
        throw InputError("model schema version mismatch: expected " + std::to_string(kModelSchemaVersion));
    }
    EmbeddingModel model;
    try {
        model.mode = kernel_mode_from_string(j.at("mode").get<std::string>());
        model.kernel.per_feature = model.mode == KernelMode::multi;
        model.kernel.rule = bandwidth_rule_from_string(j.at("bandwidth_rule").get<std::string>());
        model.kernel.bandwidths = j.at("bandwidths").get<std::vector<double>>();
        model.kernel.degenerate = j.at("degenerate_kernels").get<std::vector<bool>>();
        model.alpha = vector_from_json(j.at("alpha"));
        model.kernel.alpha = model.alpha;
        model.A = matrix_from_json(j.at("A"), "A");
        model.hyper = hyper_from_json(j.at("hyperparams"));
        model.class_count = j.at("class_count").get<int>();
        model.class_names = j.at("label_encoding").get<std::vector<std::string>>();
        model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        const auto& d = j.at("diagnostics");
        model.diagnostics.outer_iterations = d.at("outer_iterations").get<int>();
        model.diagnostics.converged = d.at("converged").get<bool>();
        model.diagnostics.residual_eq = d.at("residual_eq").get<double>();
        model.diagnostics.min_entry = d.at("min_entry").get<double>();
        model.diagnostics.effective_rho = d.value("effective_rho", 0.0);
        model.diagnostics.rejected_steps = d.value("rejected_steps", 0);
        model.diagnostics.polish_iterations = d.value("polish_iterations", 0);
    } catch (const json::exception& e) {
        throw InputError("model file is missing fields: " + std::string(e.what()));
    }

    const auto csv_path = model_json.parent_path() / j.value("train_features_csv", "train.csv");
    const Dataset train = load_csv(csv_path, "__label__");
    model.train_features = train.features;
    // Labels were written as encoded ids; map the file's first-appearance codes back.
    model.train_labels.resize(train.labels.size());
    for (std::size_t i = 0; i < train.labels.size(); ++i) {
        model.train_labels[i] = std::stoi(train.class_names[static_cast<std::size_t>(train.labels[i])]);
    }
    if (model.A.rows() != model.train_features.rows()) throw InputError("model: A rows do not match training rows");
    return model;
}

json report_to_json(const EvalReport& r) {
    json j;
    j["method"] = to_string(r.method);
    j["accuracy_mean"] = round12(r.accuracy_mean);
    json per_fold = json::array();
    for (const double a : r.accuracy_per_fold) per_fold.push_back(round12(a));
    j["accuracy_per_fold"] = per_fold;
    json folds = json::array();
    for (const auto& f : r.folds) {
        json bw = json::array();
        for (const double b : f.bandwidths) bw.push_back(round12(b));
        folds.push_back({{"fold", f.fold},
                         {"test_size", f.test_size},
                         {"accuracy", round12(f.accuracy)},
                         {"lambda", round12(f.lambda)},
                         {"mu", round12(f.mu)},
                         {"inner_score", round12(f.inner_score)},
                         {"failed_candidates", f.failed_candidates},
                         {"bandwidths", bw}});
    }
    j["folds"] = folds;
    j["ip_value"] = round12(r.ip_value);
    j["dimension_class_scores"] = matrix_json(r.dimension_class_scores, true);
    json profile = json::array();
    for (std::size_t i = 0; i < r.feature_profile.ranked.size(); ++i) {
        profile.push_back({{"feature", r.feature_profile.ranked[i].first},
                           {"name", r.feature_profile.names[i]},
                           {"weight", round12(r.feature_profile.ranked[i].second)}});
    }
    j["feature_profile"] = profile;
    j["alpha_l0"] = r.feature_profile.l0;
    j["alpha_l0_threshold"] = r.feature_profile.threshold;
    json echo;
    echo["final_hyperparams"] = hyper_to_json(r.final_hyper);
    json grid = json::array();
    for (const auto& h : r.grid) grid.push_back({{"lambda", h.lambda}, {"mu", h.mu}});
    echo["grid"] = grid;
    echo["fold_count"] = r.options.fold_count;
    echo["effective_fold_count"] = r.plan.fold_count;
    echo["inner_folds"] = r.options.inner_folds;
    echo["seed"] = r.options.seed;
    echo["mode"] = to_string(r.options.mode);
    echo["bandwidth_rule"] = to_string(r.options.rule);
    echo["center"] = r.options.center;
    j["config_echo"] = echo;
    j["label_encoding"] = r.class_names;
    j["notes"] = r.notes;
    return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace ikdr
