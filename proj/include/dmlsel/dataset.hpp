#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmlsel {

struct NuisancePredictions;

// File-system failures, kept apart from argument/data validation errors so
// the C boundary can map them to distinct status codes.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Observational data with partially missing outcomes. The outcome is stored
// as NaN on unselected rows so that no computation can silently consume an
// unobserved value; score code must gate every outcome read on selection.
struct SelectionDataset {
    Eigen::VectorXd outcome;          // NaN where selection == 0
    Eigen::VectorXi selection;        // 0/1
    Eigen::VectorXi treatment;        // values in {0, ..., q_levels-1}
    Eigen::MatrixXd covariates;       // n x p
    Eigen::MatrixXd post_covariates;  // n x p_m, 0 columns when absent
    Eigen::VectorXd instrument;       // size 0 when absent
    int q_levels = 2;

    std::string outcome_name = "y";
    std::string selection_name = "s";
    std::string treatment_name = "d";
    std::string instrument_name;
    std::vector<std::string> covariate_names;
    std::vector<std::string> post_covariate_names;

    int n() const { return static_cast<int>(selection.size()); }
    int n_covariates() const { return static_cast<int>(covariates.cols()); }
    bool has_instrument() const { return instrument.size() > 0; }
    bool has_post_covariates() const { return post_covariates.cols() > 0; }

    // Throws std::invalid_argument naming the first violated invariant.
    void validate() const;
};

// Column-role mapping for CSV ingestion. `levels` is the declared treatment
// set {0,...,Q}; rows outside it are rejected rather than inferred in.
struct CsvSchema {
    std::string outcome;
    std::string selection;
    std::string treatment;
    std::vector<std::string> covariates;
    std::vector<std::string> post_covariates;
    std::string instrument;   // empty = none
    int q_levels = 2;

    static CsvSchema from_json_text(const std::string& text);
    static CsvSchema from_file(const std::string& path);
    std::string to_json_text() const;
};

SelectionDataset load_csv(const std::string& path, const CsvSchema& schema);

// Writes the dataset back out; unselected rows get an empty outcome cell.
// Finite values round-trip bit-for-bit through load_csv.
void write_csv(const SelectionDataset& data, const std::string& path);

// Affine map sending each non-constant numeric feature column to mean 0 and
// sample standard deviation 0.5. Constant columns pass through and are
// flagged. Covers covariates, post-treatment covariates, and the instrument.
struct StandardizationRecipe {
    struct Column {
        std::string name;
        double mean = 0.0;
        double scale = 1.0;   // multiplier applied after centering
        bool constant = false;
    };
    std::vector<Column> columns;
};

std::pair<SelectionDataset, StandardizationRecipe>
standardize(const SelectionDataset& data);

SelectionDataset invert_standardization(const SelectionDataset& data,
                                        const StandardizationRecipe& recipe);

// Distribution of the propensity products that enter the trimming rule.
struct SupportReport {
    struct LevelSummary {
        int level = 0;
        double min = 0.0;
        double q01 = 0.0;
        double q05 = 0.0;
        double median = 0.0;
        int below_threshold = 0;
    };
    double threshold = 0.0;
    std::vector<LevelSummary> levels;
};

SupportReport support_diagnostics(const NuisancePredictions& preds,
                                  double threshold);

}  // namespace dmlsel
