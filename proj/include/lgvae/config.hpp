#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace lgvae {

struct ModelConfig {
    std::size_t image_side = 16;
    std::size_t latent_dims = 6;   // d: continuous Lie coordinates
    std::size_t group_side = 4;    // n: generators are n×n, embeddings n²
    std::size_t categories = 3;    // K
    std::size_t hidden_width = 256;
    std::size_t group_hidden_width = 64;
    double generator_init_scale = 2e-4;
    double embedding_init_scale = 0.5;
    double alpha = 1.0;
    double beta = 0.1;
    double lambda_mi = 0.6;
    double lambda_usage = 0.001;
    double temperature = 0.67;
    double logvar_min = -10.0;
    double logvar_max = 10.0;
    // Whether the MI prediction loss backpropagates into the decoder.
    bool mi_grad_to_decoder = true;

    std::size_t pixels() const { return image_side * image_side; }
    std::size_t embedding_dim() const { return group_side * group_side; }
    std::size_t pair_count() const { return latent_dims * (latent_dims - 1) / 2; }
};

struct CalibrationConfig {
    double percentile = 90.0;
    double eta_c = 0.05;
    double f_target = 0.5;
    double c_min = 1e-4;
    double c_max = 10000.0;
    std::size_t freeze_epochs = 3;
    std::size_t diag_interval = 16;  // K_diag, optimizer steps
    double eps_num = 1e-8;
    std::size_t diag_batch = 64;
    std::size_t diag_draws = 1;      // Monte-Carlo draws of (t, z_disc) per image
    std::size_t hinge_batch = 8;     // rows of each minibatch used for in-graph D, Δ
};

struct DatasetConfig {
    std::string path;  // empty: generate in memory
    std::size_t count = 2048;
    std::size_t side = 16;
    std::uint64_t seed = 7;
};

struct TrainConfig {
    std::uint64_t seed = 1;
    ModelConfig model;
    CalibrationConfig calibration;
    DatasetConfig dataset;
    std::size_t epochs_phase1 = 8;
    std::size_t epochs_phase2 = 12;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double lambda_unc = 1.0;
    bool reset_optimizer_phase2 = false;
    std::size_t fvm_votes = 500;
    std::size_t fvm_samples_per_vote = 64;
    std::size_t eval_count = 512;  // images used for final reconstruction error
};

/// Throws ConfigError listing the offending key.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Strict parse: unknown keys, wrong types and violated invariants are errors.
/// Missing keys keep their defaults.
TrainConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig load_config(const std::string& path);

/// Checks the cross-field invariants (C_min < C_max, batch ≥ 1, weights ≥ 0 ...).
void validate(const TrainConfig& config);

}  // namespace lgvae
