#pragma once

#include "umtn/datagen.hpp"
#include "umtn/error.hpp"
#include "umtn/evaluation.hpp"
#include "umtn/kernels.hpp"
#include "umtn/model.hpp"
#include "umtn/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace umtn {

using json = nlohmann::json;

namespace ad {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamConfig, lr, beta1, beta2, eps)
}  // namespace ad

inline void to_json(json& j, const RadialKernel& k) {
    j = json{{"family", std::string(to_string(k.family()))}, {"epsilon", k.epsilon()}};
}

inline void from_json(const json& j, RadialKernel& k) {
    const auto family = kernel_family_from_string(j.at("family").get<std::string>());
    k = RadialKernel(family, j.value("epsilon", 1.0));
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ConvDiffConfig, grid_size, dt_out, t_end, n_sites, n_sequences,
                                                split, substeps_per_output, max_mode, coefficient_variance, tau,
                                                horizon, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, levels, feature_width, s_hidden1, s_hidden2,
                                                nab_hidden, rfn_hidden, dim, lambda, scale_inverse)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DrcConfig, feature_width, s_hidden1, s_hidden2, aggregator_hidden,
                                                past_frames, dim, lambda, scale_inverse)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, lr, max_epochs, patience, batch_size,
                                                scheduled_sampling_k, seed, tau, horizon, adam)

inline void to_json(json& j, const EvalReport& r) {
    j = json{{"model", r.model},
             {"tau", r.tau},
             {"T", r.horizon},
             {"n_runs", r.n_runs},
             {"mae_mean", r.mae_mean},
             {"mae_std", r.mae_std},
             {"std_defined", r.std_defined},
             {"per_run", r.per_run},
             {"per_step", std::vector<double>(r.per_step.begin(), r.per_step.end())},
             {"per_site", std::vector<double>(r.per_site.begin(), r.per_site.end())}};
}

inline void from_json(const json& j, EvalReport& r) {
    r.model = j.at("model").get<std::string>();
    r.tau = j.at("tau").get<int>();
    r.horizon = j.at("T").get<int>();
    r.n_runs = j.at("n_runs").get<int>();
    r.mae_mean = j.at("mae_mean").get<double>();
    r.mae_std = j.at("mae_std").get<double>();
    r.std_defined = j.at("std_defined").get<bool>();
    r.per_run = j.at("per_run").get<std::vector<double>>();
    const auto steps = j.at("per_step").get<std::vector<double>>();
    const auto sites = j.at("per_site").get<std::vector<double>>();
    r.per_step = Eigen::Map<const Vector>(steps.data(), static_cast<Eigen::Index>(steps.size()));
    r.per_site = Eigen::Map<const Vector>(sites.data(), static_cast<Eigen::Index>(sites.size()));
}

/// Parses a JSON file; failures are configuration errors.
inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

/// Typed view of a JSON section; missing keys keep their defaults.
template <class T>
T config_from(const json& j, const char* key = nullptr) {
    try {
        if (key) return j.contains(key) ? j.at(key).get<T>() : T{};
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration") + (key ? std::string(" section '") + key + "'" : "") +
                          ": " + e.what());
    }
}

}  // namespace umtn
