#pragma once

// Shared generators and small configurations for the test suites.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lgvae/config.hpp"
#include "lgvae/matcore.hpp"

namespace lgvae::testing {

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                 double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = u(rng);
    return m;
}

/// Random matrix rescaled to the given Frobenius norm.
inline DenseMatrix random_with_norm(std::size_t n, double norm, std::mt19937_64& rng) {
    DenseMatrix m = random_matrix(n, n, rng);
    return scale(m, norm / frobenius_norm(m));
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

/// Tiny architecture that keeps gradient checks and short training runs fast.
inline ModelConfig small_model() {
    ModelConfig m;
    m.image_side = 12;
    m.latent_dims = 3;
    m.group_side = 2;
    m.categories = 3;
    m.hidden_width = 8;
    m.group_hidden_width = 6;
    m.generator_init_scale = 0.3;
    return m;
}

/// Small end-to-end configuration for trainer, checkpoint and CLI tests.
inline TrainConfig small_train_config() {
    TrainConfig c;
    c.seed = 3;
    c.model = small_model();
    c.model.hidden_width = 16;
    c.dataset.count = 64;
    c.dataset.side = 12;
    c.dataset.seed = 5;
    c.batch_size = 16;
    c.epochs_phase1 = 2;
    c.epochs_phase2 = 2;
    c.calibration.diag_interval = 2;
    c.calibration.diag_batch = 8;
    c.calibration.hinge_batch = 4;
    c.calibration.freeze_epochs = 1;
    c.fvm_votes = 10;
    c.fvm_samples_per_vote = 8;
    c.eval_count = 32;
    return c;
}

}  // namespace lgvae::testing
