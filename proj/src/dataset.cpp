#include "dmlsel/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "dmlsel/crossfit.hpp"

namespace dmlsel {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(cell);
    return cells;
}

double parse_double(const std::string& cell, const std::string& column,
                    std::size_t row) {
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw std::invalid_argument("non-numeric cell '" + cell +
                                    "' in column '" + column + "' at data row " +
                                    std::to_string(row + 1));
    }
    return value;
}

std::string format_double(double value) {
    if (std::isnan(value)) return "";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

}  // namespace

void SelectionDataset::validate() const {
    const int rows = n();
    if (outcome.size() != rows || treatment.size() != rows ||
        covariates.rows() != rows) {
        throw std::invalid_argument("row counts disagree across dataset fields");
    }
    if (post_covariates.cols() > 0 && post_covariates.rows() != rows) {
        throw std::invalid_argument("post-covariate row count disagrees");
    }
    if (instrument.size() > 0 && instrument.size() != rows) {
        throw std::invalid_argument("instrument row count disagrees");
    }
    if (q_levels < 2) {
        throw std::invalid_argument("at least two treatment levels required");
    }
    for (int i = 0; i < rows; ++i) {
        if (selection(i) != 0 && selection(i) != 1) {
            throw std::invalid_argument("selection flag outside {0,1} at row " +
                                        std::to_string(i + 1));
        }
        if (treatment(i) < 0 || treatment(i) >= q_levels) {
            throw std::invalid_argument(
                "treatment level out of range: " + std::to_string(treatment(i)) +
                " at row " + std::to_string(i + 1) + " (declared levels 0.." +
                std::to_string(q_levels - 1) + ")");
        }
        if (selection(i) == 1 && !std::isfinite(outcome(i))) {
            throw std::invalid_argument("outcome missing on selected row " +
                                        std::to_string(i + 1));
        }
    }
    if (!covariates.allFinite()) {
        throw std::invalid_argument("non-finite covariate value");
    }
    if (post_covariates.cols() > 0 && !post_covariates.allFinite()) {
        throw std::invalid_argument("non-finite post-covariate value");
    }
    if (instrument.size() > 0 && !instrument.allFinite()) {
        throw std::invalid_argument("non-finite instrument value");
    }
}

CsvSchema CsvSchema::from_json_text(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    CsvSchema schema;
    schema.outcome = j.at("outcome").get<std::string>();
    schema.selection = j.at("selection").get<std::string>();
    schema.treatment = j.at("treatment").get<std::string>();
    schema.covariates = j.at("covariates").get<std::vector<std::string>>();
    if (j.contains("post_covariates")) {
        schema.post_covariates =
            j["post_covariates"].get<std::vector<std::string>>();
    }
    if (j.contains("instrument")) {
        schema.instrument = j["instrument"].get<std::string>();
    }
    if (j.contains("levels")) {
        schema.q_levels = j["levels"].get<int>();
    }
    if (schema.covariates.empty()) {
        throw std::invalid_argument("schema declares no covariate columns");
    }
    if (schema.q_levels < 2) {
        throw std::invalid_argument("schema must declare at least 2 levels");
    }
    return schema;
}

CsvSchema CsvSchema::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open schema file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string CsvSchema::to_json_text() const {
    ordered_json j;
    j["outcome"] = outcome;
    j["selection"] = selection;
    j["treatment"] = treatment;
    j["covariates"] = covariates;
    if (!post_covariates.empty()) j["post_covariates"] = post_covariates;
    if (!instrument.empty()) j["instrument"] = instrument;
    j["levels"] = q_levels;
    return j.dump(2) + "\n";
}

SelectionDataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open data file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("empty data file: " + path);
    }
    const std::vector<std::string> header = split_csv_line(line);
    std::unordered_map<std::string, int> index;
    for (std::size_t c = 0; c < header.size(); ++c) {
        index[header[c]] = static_cast<int>(c);
    }
    auto column = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) {
            throw std::invalid_argument("column not found in header: " + name);
        }
        return it->second;
    };

    const int c_outcome = column(schema.outcome);
    const int c_selection = column(schema.selection);
    const int c_treatment = column(schema.treatment);
    std::vector<int> c_covariates, c_post;
    for (const auto& name : schema.covariates) c_covariates.push_back(column(name));
    for (const auto& name : schema.post_covariates) c_post.push_back(column(name));
    const int c_instrument =
        schema.instrument.empty() ? -1 : column(schema.instrument);

    std::vector<std::string> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && !(line.size() == 1 && line[0] == '\r')) {
            rows.push_back(line);
        }
    }

    SelectionDataset data;
    const int n = static_cast<int>(rows.size());
    data.q_levels = schema.q_levels;
    data.outcome.resize(n);
    data.selection.resize(n);
    data.treatment.resize(n);
    data.covariates.resize(n, static_cast<int>(c_covariates.size()));
    data.post_covariates.resize(n, static_cast<int>(c_post.size()));
    if (c_instrument >= 0) data.instrument.resize(n);
    data.outcome_name = schema.outcome;
    data.selection_name = schema.selection;
    data.treatment_name = schema.treatment;
    data.instrument_name = schema.instrument;
    data.covariate_names = schema.covariates;
    data.post_covariate_names = schema.post_covariates;

    for (int i = 0; i < n; ++i) {
        const std::vector<std::string> cells = split_csv_line(rows[i]);
        if (cells.size() != header.size()) {
            throw std::invalid_argument("row " + std::to_string(i + 1) + " has " +
                                        std::to_string(cells.size()) +
                                        " cells, header has " +
                                        std::to_string(header.size()));
        }
        const double s = parse_double(cells[c_selection], schema.selection, i);
        if (s != 0.0 && s != 1.0) {
            throw std::invalid_argument("selection flag outside {0,1} at row " +
                                        std::to_string(i + 1));
        }
        data.selection(i) = static_cast<int>(s);

        const double d = parse_double(cells[c_treatment], schema.treatment, i);
        if (d != std::floor(d)) {
            throw std::invalid_argument("treatment value not an integer at row " +
                                        std::to_string(i + 1));
        }
        if (d < 0 || d >= schema.q_levels) {
            throw std::invalid_argument(
                "treatment level out of range: " + format_double(d) + " at row " +
                std::to_string(i + 1) + " (declared levels 0.." +
                std::to_string(schema.q_levels - 1) + ")");
        }
        data.treatment(i) = static_cast<int>(d);

        const std::string& y_cell = cells[c_outcome];
        if (data.selection(i) == 1) {
            if (y_cell.empty()) {
                throw std::invalid_argument("outcome missing on selected row " +
                                            std::to_string(i + 1));
            }
            data.outcome(i) = parse_double(y_cell, schema.outcome, i);
        } else {
            data.outcome(i) = std::numeric_limits<double>::quiet_NaN();
        }

        for (std::size_t c = 0; c < c_covariates.size(); ++c) {
            data.covariates(i, static_cast<int>(c)) =
                parse_double(cells[c_covariates[c]], schema.covariates[c], i);
        }
        for (std::size_t c = 0; c < c_post.size(); ++c) {
            data.post_covariates(i, static_cast<int>(c)) =
                parse_double(cells[c_post[c]], schema.post_covariates[c], i);
        }
        if (c_instrument >= 0) {
            data.instrument(i) =
                parse_double(cells[c_instrument], schema.instrument, i);
        }
    }
    data.validate();
    return data;
}

void write_csv(const SelectionDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open output file: " + path);
    }
    out << data.outcome_name << ',' << data.selection_name << ','
        << data.treatment_name;
    for (const auto& name : data.covariate_names) out << ',' << name;
    for (const auto& name : data.post_covariate_names) out << ',' << name;
    if (data.has_instrument()) out << ',' << data.instrument_name;
    out << '\n';
    for (int i = 0; i < data.n(); ++i) {
        out << (data.selection(i) == 1 ? format_double(data.outcome(i)) : "")
            << ',' << data.selection(i) << ',' << data.treatment(i);
        for (int c = 0; c < data.covariates.cols(); ++c) {
            out << ',' << format_double(data.covariates(i, c));
        }
        for (int c = 0; c < data.post_covariates.cols(); ++c) {
            out << ',' << format_double(data.post_covariates(i, c));
        }
        if (data.has_instrument()) out << ',' << format_double(data.instrument(i));
        out << '\n';
    }
}

namespace {

void standardize_column(Eigen::Ref<Eigen::VectorXd> col, const std::string& name,
                        StandardizationRecipe& recipe) {
    const int n = static_cast<int>(col.size());
    StandardizationRecipe::Column entry;
    entry.name = name;
    entry.mean = col.mean();
    const double ss = (col.array() - entry.mean).square().sum();
    const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    if (sd <= 0.0) {
        entry.constant = true;
        entry.mean = 0.0;
        recipe.columns.push_back(entry);
        return;
    }
    entry.scale = 0.5 / sd;
    col = (col.array() - entry.mean) * entry.scale;
    recipe.columns.push_back(entry);
}

}  // namespace

std::pair<SelectionDataset, StandardizationRecipe>
standardize(const SelectionDataset& data) {
    SelectionDataset out = data;
    StandardizationRecipe recipe;
    for (int c = 0; c < out.covariates.cols(); ++c) {
        const std::string name = c < static_cast<int>(out.covariate_names.size())
                                     ? out.covariate_names[c]
                                     : "x" + std::to_string(c + 1);
        standardize_column(out.covariates.col(c), name, recipe);
    }
    for (int c = 0; c < out.post_covariates.cols(); ++c) {
        const std::string name =
            c < static_cast<int>(out.post_covariate_names.size())
                ? out.post_covariate_names[c]
                : "m" + std::to_string(c + 1);
        standardize_column(out.post_covariates.col(c), name, recipe);
    }
    if (out.has_instrument()) {
        standardize_column(out.instrument,
                           out.instrument_name.empty() ? "z" : out.instrument_name,
                           recipe);
    }
    return {std::move(out), std::move(recipe)};
}

SelectionDataset invert_standardization(const SelectionDataset& data,
                                        const StandardizationRecipe& recipe) {
    SelectionDataset out = data;
    std::size_t idx = 0;
    auto invert_column = [&](Eigen::Ref<Eigen::VectorXd> col) {
        if (idx >= recipe.columns.size()) {
            throw std::invalid_argument("recipe does not cover all columns");
        }
        const auto& entry = recipe.columns[idx++];
        if (!entry.constant) {
            col = col.array() / entry.scale + entry.mean;
        }
    };
    for (int c = 0; c < out.covariates.cols(); ++c) invert_column(out.covariates.col(c));
    for (int c = 0; c < out.post_covariates.cols(); ++c) {
        invert_column(out.post_covariates.col(c));
    }
    if (out.has_instrument()) invert_column(out.instrument);
    return out;
}

SupportReport support_diagnostics(const NuisancePredictions& preds,
                                  double threshold) {
    SupportReport report;
    report.threshold = threshold;
    const int n = preds.n();
    for (std::size_t c = 0; c < preds.levels.size(); ++c) {
        const int d = preds.levels[c];
        std::vector<double> product(n);
        for (int i = 0; i < n; ++i) {
            product[i] = preds.treat_prob(i, d) *
                         preds.selection_propensity(i, static_cast<int>(c));
        }
        std::sort(product.begin(), product.end());
        auto quantile = [&](double q) {
            const int idx = std::min<int>(
                n - 1, static_cast<int>(std::floor(q * (n - 1) + 0.5)));
            return product[idx];
        };
        SupportReport::LevelSummary summary;
        summary.level = d;
        summary.min = product.front();
        summary.q01 = quantile(0.01);
        summary.q05 = quantile(0.05);
        summary.median = quantile(0.5);
        summary.below_threshold = static_cast<int>(
            std::lower_bound(product.begin(), product.end(), threshold) -
            product.begin());
        report.levels.push_back(summary);
    }
    return report;
}

}  // namespace dmlsel
