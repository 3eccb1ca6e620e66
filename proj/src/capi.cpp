#include "dmlsel.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "dmlsel/dataset.hpp"
#include "dmlsel/estimator.hpp"
#include "dmlsel/run_config.hpp"
#include "dmlsel/simulation.hpp"

namespace {

thread_local std::string g_last_error;

char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

dmlsel_status fail(dmlsel_status code, const char* message) {
    g_last_error = message;
    return code;
}

template <typename Fn>
dmlsel_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return DMLSEL_OK;
    } catch (const dmlsel::IoError& e) {
        return fail(DMLSEL_ERROR_IO, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(DMLSEL_ERROR_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(DMLSEL_ERROR_RUNTIME, e.what());
    } catch (...) {
        return fail(DMLSEL_ERROR_RUNTIME, "unknown error");
    }
}

const dmlsel::SelectionDataset* unwrap(const dmlsel_dataset* dataset) {
    return reinterpret_cast<const dmlsel::SelectionDataset*>(dataset);
}

}  // namespace

extern "C" {

const char* dmlsel_version(void) { return "1.0.0"; }

const char* dmlsel_last_error(void) { return g_last_error.c_str(); }

void dmlsel_string_free(char* s) { std::free(s); }

dmlsel_status dmlsel_dataset_load_csv(const char* csv_path,
                                      const char* schema_json,
                                      dmlsel_dataset** out_dataset) {
    if (csv_path == nullptr || schema_json == nullptr || out_dataset == nullptr) {
        return fail(DMLSEL_ERROR_INVALID_ARGUMENT, "null argument");
    }
    *out_dataset = nullptr;
    return guarded([&] {
        const dmlsel::CsvSchema schema =
            dmlsel::CsvSchema::from_json_text(schema_json);
        auto* data =
            new dmlsel::SelectionDataset(dmlsel::load_csv(csv_path, schema));
        *out_dataset = reinterpret_cast<dmlsel_dataset*>(data);
    });
}

dmlsel_status dmlsel_dataset_write_csv(const dmlsel_dataset* dataset,
                                       const char* csv_path) {
    if (dataset == nullptr || csv_path == nullptr) {
        return fail(DMLSEL_ERROR_INVALID_ARGUMENT, "null argument");
    }
    return guarded([&] { dmlsel::write_csv(*unwrap(dataset), csv_path); });
}

int dmlsel_dataset_rows(const dmlsel_dataset* dataset) {
    return dataset == nullptr ? -1 : unwrap(dataset)->n();
}

int dmlsel_dataset_levels(const dmlsel_dataset* dataset) {
    return dataset == nullptr ? -1 : unwrap(dataset)->q_levels;
}

void dmlsel_dataset_free(dmlsel_dataset* dataset) {
    delete reinterpret_cast<dmlsel::SelectionDataset*>(dataset);
}

dmlsel_status dmlsel_estimate(const dmlsel_dataset* dataset,
                              const char* config_json, char** out_json) {
    if (dataset == nullptr || config_json == nullptr || out_json == nullptr) {
        return fail(DMLSEL_ERROR_INVALID_ARGUMENT, "null argument");
    }
    *out_json = nullptr;
    return guarded([&] {
        dmlsel::RunConfig config = dmlsel::runconfig_from_json(config_json);
        config.subcommand = "estimate";
        config.validate();
        const dmlsel::EstimatorConfig est = config.estimator_config();
        const dmlsel::EffectEstimate result =
            est.d_prime.has_value()
                ? dmlsel::estimate_ate(*unwrap(dataset), est)
                : dmlsel::estimate_potential_outcome(*unwrap(dataset), est);
        *out_json = copy_string(dmlsel::summarize(result));
    });
}

dmlsel_status dmlsel_simulate(const char* config_json, char** out_json,
                              char** out_tsv) {
    if (config_json == nullptr || out_json == nullptr) {
        return fail(DMLSEL_ERROR_INVALID_ARGUMENT, "null argument");
    }
    *out_json = nullptr;
    if (out_tsv != nullptr) *out_tsv = nullptr;
    return guarded([&] {
        dmlsel::RunConfig config = dmlsel::runconfig_from_json(config_json);
        config.subcommand = "simulate";
        config.validate();
        const dmlsel::SimStudyReport report =
            dmlsel::run_design(config.sim_config());
        *out_json = copy_string(report.to_json());
        if (out_tsv != nullptr) *out_tsv = copy_string(report.to_tsv());
    });
}

dmlsel_status dmlsel_probe(const char* config_json, char** out_json,
                           char** out_tsv) {
    if (config_json == nullptr || out_json == nullptr) {
        return fail(DMLSEL_ERROR_INVALID_ARGUMENT, "null argument");
    }
    *out_json = nullptr;
    if (out_tsv != nullptr) *out_tsv = nullptr;
    return guarded([&] {
        dmlsel::RunConfig config = dmlsel::runconfig_from_json(config_json);
        config.subcommand = "probe";
        config.validate();
        const dmlsel::ProbeReport report = dmlsel::orthogonality_probe(
            dmlsel::design_from_name(config.design), config.n_values.front(),
            config.seed.value_or(1), config.t_grid, config.nuisance_specs(),
            config.resolved_threads());
        *out_json = copy_string(report.to_json());
        if (out_tsv != nullptr) *out_tsv = copy_string(report.to_tsv());
    });
}

}  // extern "C"
