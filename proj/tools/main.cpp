// Command-line front end; all estimation goes through the shared C API.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmlsel.h"

namespace {

using ordered_json = nlohmann::ordered_json;

struct Flags {
    std::string config_path;
    std::string estimator;
    std::optional<int> d;
    std::optional<int> d_prime;
    std::optional<int> k_folds;
    std::optional<long long> seed;
    std::optional<double> trim;
    std::string input_path;
    std::string schema_path;
    std::string out_path;
    std::string design;
    std::optional<int> reps;
    std::vector<int> n_values;
    std::optional<double> delta_m;
    std::optional<int> threads;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CLI::ValidationError("cannot open file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const char* text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CLI::ValidationError("cannot open output file: " + path);
    }
    out << text;
}

// config file first, explicit flags win
ordered_json merge_config(const Flags& flags, const std::string& subcommand) {
    ordered_json j = ordered_json::object();
    if (!flags.config_path.empty()) {
        j = ordered_json::parse(read_file(flags.config_path));
    }
    j["subcommand"] = subcommand;
    if (!flags.estimator.empty()) j["estimator"] = flags.estimator;
    if (flags.d) j["d"] = *flags.d;
    if (flags.d_prime) j["d_prime"] = *flags.d_prime;
    if (flags.k_folds) j["K"] = *flags.k_folds;
    if (flags.seed) j["seed"] = *flags.seed;
    if (flags.trim) j["trim"] = *flags.trim;
    if (!flags.input_path.empty()) j["input"] = flags.input_path;
    if (!flags.schema_path.empty()) j["schema"] = flags.schema_path;
    if (!flags.out_path.empty()) j["out"] = flags.out_path;
    if (!flags.design.empty()) j["design"] = flags.design;
    if (flags.reps) j["reps"] = *flags.reps;
    if (!flags.n_values.empty()) j["n"] = flags.n_values;
    if (flags.delta_m) j["delta_m"] = *flags.delta_m;
    if (flags.threads) j["threads"] = *flags.threads;
    return j;
}

int report_error(dmlsel_status status) {
    std::cerr << "error: " << dmlsel_last_error() << "\n";
    return static_cast<int>(status);
}

// <stem>.json + <stem>.tsv for the tabular reports
std::pair<std::string, std::string> report_paths(std::string out,
                                                 const std::string& fallback) {
    if (out.empty()) out = fallback;
    if (out.size() > 5 && out.substr(out.size() - 5) == ".json") {
        out = out.substr(0, out.size() - 5);
    }
    return {out + ".json", out + ".tsv"};
}

int run_estimate(const Flags& flags) {
    ordered_json config = merge_config(flags, "estimate");
    const std::string input = config.value("input", "");
    const std::string schema_path = config.value("schema", "");
    if (input.empty() || schema_path.empty()) {
        std::cerr << "error: estimate needs --input CSV and --schema JSON\n";
        return 2;
    }
    const std::string schema = read_file(schema_path);

    dmlsel_dataset* dataset = nullptr;
    dmlsel_status status =
        dmlsel_dataset_load_csv(input.c_str(), schema.c_str(), &dataset);
    if (status != DMLSEL_OK) return report_error(status);

    char* result_json = nullptr;
    status = dmlsel_estimate(dataset, config.dump().c_str(), &result_json);
    dmlsel_dataset_free(dataset);
    if (status != DMLSEL_OK) return report_error(status);

    const std::string out_path = config.value("out", "") != ""
                                     ? config["out"].get<std::string>()
                                     : "estimate.json";
    write_file(out_path, result_json);

    const ordered_json r = ordered_json::parse(result_json);
    std::cout << r["estimator"].get<std::string>() << " d=" << r["d"];
    if (!r["d_prime"].is_null() && r.contains("d_prime")) {
        std::cout << " vs d'=" << r["d_prime"];
    }
    std::cout << ": estimate=" << r["estimate"] << " se=" << r["se"]
              << " p=" << r["p"] << " (n_eff=" << r["n_effective"]
              << ", trimmed=" << r["n_trimmed"] << ") -> " << out_path << "\n";
    dmlsel_string_free(result_json);
    return 0;
}

int run_simulate(const Flags& flags) {
    ordered_json config = merge_config(flags, "simulate");
    char* json_text = nullptr;
    char* tsv_text = nullptr;
    const dmlsel_status status =
        dmlsel_simulate(config.dump().c_str(), &json_text, &tsv_text);
    if (status != DMLSEL_OK) return report_error(status);
    const auto [json_path, tsv_path] =
        report_paths(config.value("out", ""), "simulate_report");
    write_file(json_path, json_text);
    write_file(tsv_path, tsv_text);
    std::cout << tsv_text << "-> " << json_path << ", " << tsv_path << "\n";
    dmlsel_string_free(json_text);
    dmlsel_string_free(tsv_text);
    return 0;
}

int run_probe(const Flags& flags) {
    ordered_json config = merge_config(flags, "probe");
    char* json_text = nullptr;
    char* tsv_text = nullptr;
    const dmlsel_status status =
        dmlsel_probe(config.dump().c_str(), &json_text, &tsv_text);
    if (status != DMLSEL_OK) return report_error(status);
    const auto [json_path, tsv_path] =
        report_paths(config.value("out", ""), "probe_report");
    write_file(json_path, json_text);
    write_file(tsv_path, tsv_text);
    std::cout << tsv_text << "-> " << json_path << ", " << tsv_path << "\n";
    dmlsel_string_free(json_text);
    dmlsel_string_free(tsv_text);
    return 0;
}

void add_common_flags(CLI::App* cmd, Flags& flags) {
    cmd->add_option("--config", flags.config_path,
                    "JSON config file; explicit flags override its keys");
    cmd->add_option("--estimator", flags.estimator,
                    "mar | iv-total | iv-selected | dynamic");
    cmd->add_option("--d", flags.d, "treatment level of interest");
    cmd->add_option("--d-prime", flags.d_prime, "comparison level for the ATE");
    cmd->add_option("--k", flags.k_folds, "cross-fitting folds (default 3)");
    cmd->add_option("--seed", flags.seed, "seed for all randomness");
    cmd->add_option("--trim", flags.trim,
                    "propensity-product trimming threshold (default 0.01)");
    cmd->add_option("--out", flags.out_path, "output path");
    cmd->add_option("--threads", flags.threads, "worker threads (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Treatment effect estimation with selectively observed outcomes"};
    app.set_version_flag("--version", dmlsel_version());
    app.require_subcommand(1);

    Flags flags;

    CLI::App* estimate =
        app.add_subcommand("estimate", "estimate effects from a CSV file");
    add_common_flags(estimate, flags);
    estimate->add_option("--input", flags.input_path, "input CSV path");
    estimate->add_option("--schema", flags.schema_path,
                         "column-role schema JSON path");

    CLI::App* simulate =
        app.add_subcommand("simulate", "run the Monte Carlo study");
    add_common_flags(simulate, flags);
    simulate->add_option("--design", flags.design, "1 | 2 | dynamic");
    simulate->add_option("--reps", flags.reps, "replication count");
    simulate->add_option("--n", flags.n_values, "sample size(s)");
    simulate->add_option("--delta-m", flags.delta_m,
                         "dynamic-design mediation strength");

    CLI::App* probe =
        app.add_subcommand("probe", "numeric orthogonality diagnostics");
    add_common_flags(probe, flags);
    probe->add_option("--design", flags.design, "1 | 2 | dynamic");
    probe->add_option("--n", flags.n_values, "sample size");

    CLI11_PARSE(app, argc, argv);

    try {
        if (estimate->parsed()) return run_estimate(flags);
        if (simulate->parsed()) return run_simulate(flags);
        if (probe->parsed()) return run_probe(flags);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
