#include "ikdr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ikdr/error.hpp"
#include "ikdr/log.hpp"
#include "ikdr/rng.hpp"

namespace ikdr {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    for (auto& s : cells) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open file: " + path.string());
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw InputError(path.string() + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty()) throw InputError(path.string() + ": empty file");
    if (table.rows.empty()) throw InputError(path.string() + ": no data rows");
    return table;
}

}  // namespace

Dataset Dataset::subset(std::span<const Index> rows) const {
    Dataset out;
    out.features.resize(static_cast<Index>(rows.size()), dims());
    out.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.features.row(static_cast<Index>(r)) = features.row(rows[r]);
        out.labels.push_back(labels[static_cast<std::size_t>(rows[r])]);
    }
    out.class_count = class_count;
    out.class_names = class_names;
    out.feature_names = feature_names;
    return out;
}

void Dataset::validate() const {
    if (size() < 2) throw InputError("dataset needs at least 2 samples");
    if (dims() < 1) throw InputError("dataset needs at least 1 feature");
    if (class_count < 2) throw InputError("single class: at least 2 classes are required");
    if (static_cast<Index>(labels.size()) != size()) throw InputError("label count does not match sample count");
    std::vector<int> seen(static_cast<std::size_t>(class_count), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count) {
            throw InputError("label out of range at row " + std::to_string(i));
        }
        seen[static_cast<std::size_t>(labels[i])] = 1;
    }
    for (int q = 0; q < class_count; ++q) {
        if (!seen[static_cast<std::size_t>(q)]) throw InputError("class " + std::to_string(q) + " has no samples");
    }
    if (!features.allFinite()) throw InputError("features contain NaN or Inf");
}

Dataset make_dataset(Eigen::MatrixXd features, std::vector<int> labels, int class_count,
                     std::vector<std::string> class_names, std::vector<std::string> feature_names) {
    Dataset ds;
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.class_count = class_count;
    if (class_names.empty()) {
        for (int q = 0; q < class_count; ++q) class_names.push_back(std::to_string(q));
    }
    if (feature_names.empty()) {
        for (Index j = 0; j < ds.features.cols(); ++j) feature_names.push_back("f" + std::to_string(j));
    }
    ds.class_names = std::move(class_names);
    ds.feature_names = std::move(feature_names);
    ds.validate();
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
    if (!std::filesystem::exists(path)) throw InputError("missing file: " + path.string());
    const CsvTable table = read_csv(path);
    const auto it = std::find(table.header.begin(), table.header.end(), label_column);
    if (it == table.header.end()) {
        throw InputError(path.string() + ": label column '" + label_column + "' not found in header");
    }
    const auto label_idx = static_cast<std::size_t>(it - table.header.begin());
    if (table.header.size() < 2) throw InputError(path.string() + ": no feature columns");

    Dataset ds;
    const auto n = static_cast<Index>(table.rows.size());
    const auto d = static_cast<Index>(table.header.size() - 1);
    ds.features.resize(n, d);
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c != label_idx) ds.feature_names.push_back(table.header[c]);
    }

    std::map<std::string, int> codes;
    for (Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        Index col = 0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == label_idx) continue;
            double v = 0.0;
            if (!parse_double(row[c], v) || !std::isfinite(v)) {
                throw InputError(path.string() + ": non-numeric feature cell at row " + std::to_string(i + 1) +
                                 ", column '" + table.header[c] + "': '" + row[c] + "'");
            }
            ds.features(i, col++) = v;
        }
        const std::string& label = row[label_idx];
        auto [pos, inserted] = codes.try_emplace(label, static_cast<int>(codes.size()));
        if (inserted) ds.class_names.push_back(label);
        ds.labels.push_back(pos->second);
    }
    ds.class_count = static_cast<int>(codes.size());
    if (ds.class_count < 2) {
        throw InputError(path.string() + ": single class in label column '" + label_column + "'");
    }
    ds.validate();
    return ds;
}

Eigen::MatrixXd load_features_csv(const std::filesystem::path& path,
                                  const std::vector<std::string>& expected_names,
                                  const std::string& skip_column) {
    if (!std::filesystem::exists(path)) throw InputError("missing file: " + path.string());
    const CsvTable table = read_csv(path);
    std::vector<std::size_t> cols;
    std::vector<std::string> names;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (!skip_column.empty() && table.header[c] == skip_column) continue;
        cols.push_back(c);
        names.push_back(table.header[c]);
    }
    if (!expected_names.empty() && names != expected_names) {
        throw InputError(path.string() + ": feature columns do not match the training columns (expected " +
                         std::to_string(expected_names.size()) + ", got " + std::to_string(names.size()) + ")");
    }
    Eigen::MatrixXd out(static_cast<Index>(table.rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            double v = 0.0;
            const auto& cell = table.rows[i][cols[j]];
            if (!parse_double(cell, v) || !std::isfinite(v)) {
                throw InputError(path.string() + ": non-numeric feature cell at row " + std::to_string(i + 1) +
                                 ", column '" + table.header[cols[j]] + "': '" + cell + "'");
            }
            out(static_cast<Index>(i), static_cast<Index>(j)) = v;
        }
    }
    return out;
}

Eigen::MatrixXd LabelIndicator::complement() const {
    return Eigen::MatrixXd::Ones(H.rows(), H.cols()) - H;
}

Eigen::VectorXd LabelIndicator::class_sizes() const { return H.rowwise().sum(); }

std::vector<int> LabelIndicator::labels() const {
    std::vector<int> out(static_cast<std::size_t>(H.cols()));
    for (Index i = 0; i < H.cols(); ++i) {
        Index q = 0;
        H.col(i).maxCoeff(&q);
        out[static_cast<std::size_t>(i)] = static_cast<int>(q);
    }
    return out;
}

LabelIndicator build_label_indicator(std::span<const int> labels, int class_count) {
    if (class_count < 2) throw InputError("label indicator needs at least 2 classes");
    LabelIndicator ind;
    ind.H = Eigen::MatrixXd::Zero(class_count, static_cast<Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count) {
            throw InputError("label " + std::to_string(labels[i]) + " out of range at index " + std::to_string(i));
        }
        ind.H(labels[i], static_cast<Index>(i)) = 1.0;
    }
    return ind;
}

FoldPlan stratified_folds(std::span<const int> labels, int class_count, int fold_count, std::uint64_t seed) {
    const auto n = static_cast<int>(labels.size());
    if (fold_count < 2) throw InputError("fold_count must be at least 2");
    if (fold_count > n) {
        throw InputError("fold_count " + std::to_string(fold_count) + " exceeds sample count " + std::to_string(n));
    }
    std::vector<IndexList> by_class(static_cast<std::size_t>(class_count));
    for (int i = 0; i < n; ++i) by_class.at(static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])).push_back(i);

    std::size_t smallest = labels.size();
    for (const auto& members : by_class) {
        if (!members.empty()) smallest = std::min(smallest, members.size());
    }
    int folds = fold_count;
    if (smallest < static_cast<std::size_t>(fold_count)) {
        folds = static_cast<int>(smallest);
        if (folds < 2) throw InputError("a class has fewer than 2 samples; cannot build folds");
        log::warn("smallest class has " + std::to_string(smallest) + " samples; using " + std::to_string(folds) +
                  " folds instead of " + std::to_string(fold_count));
    }

    SplitMix64 rng(seed);
    std::vector<int> assignment(static_cast<std::size_t>(n), 0);
    std::size_t position = 0;
    for (auto& members : by_class) {
        rng.shuffle(members);
        for (const Index i : members) {
            assignment[static_cast<std::size_t>(i)] = static_cast<int>(position++ % static_cast<std::size_t>(folds));
        }
    }

    FoldPlan plan;
    plan.fold_count = folds;
    plan.seed = seed;
    plan.folds.resize(static_cast<std::size_t>(folds));
    for (int i = 0; i < n; ++i) {
        for (int f = 0; f < folds; ++f) {
            auto& fold = plan.folds[static_cast<std::size_t>(f)];
            (assignment[static_cast<std::size_t>(i)] == f ? fold.test : fold.train).push_back(i);
        }
    }
    return plan;
}

FoldPlan stratified_folds(const Dataset& dataset, int fold_count, std::uint64_t seed) {
    return stratified_folds(dataset.labels, dataset.class_count, fold_count, seed);
}

std::string FoldPlan::to_json() const {
    nlohmann::json j;
    j["fold_count"] = fold_count;
    j["seed"] = seed;
    j["folds"] = nlohmann::json::array();
    for (const auto& f : folds) j["folds"].push_back({{"train", f.train}, {"test", f.test}});
    return j.dump(2);
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    char buf[64];
    for (Index i = 0; i < values.rows(); ++i) {
        for (Index j = 0; j < values.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.12g", values(i, j));
            out << (j ? "," : "") << buf;
        }
        out << '\n';
    }
}

}  // namespace ikdr
