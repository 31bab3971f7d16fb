#pragma once

// Two-level non-commutativity diagnostics and the deformation-stability
// constraint built on them.
//
//   D_ij  = ‖exp(t_i A_i + t_j A_j) − exp(t_i A_i) exp(t_j A_j)‖_F      (latent)
//   Δ_ij  = E ‖dec(G_i G_j Ĝ e_s) − dec(G_j G_i Ĝ e_s)‖₂,  G_k = exp(t_k A_k)
//   r_ij  = Δ̄_ij / (D̄_ij + ε),   C_emp = percentile_p(r)
//   ℓ_ij  = max(0, C·D̄_ij − Δ̄_ij)²,   R_ij = Δ_ij / (C·D_ij + ε)
//
// Pairs are always unordered with i < j and enumerated in lexicographic order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lgvae/config.hpp"
#include "lgvae/gradcore.hpp"
#include "lgvae/liegroup.hpp"
#include "lgvae/model.hpp"

namespace lgvae {

struct PairIndex {
    std::size_t i = 0;
    std::size_t j = 0;
    bool operator==(const PairIndex&) const = default;
};

std::vector<PairIndex> all_pairs(std::size_t dims);

/// Running means of D and Δ per unordered generator pair.
class PairStats {
public:
    struct Entry {
        double d_mean = 0.0;
        double delta_mean = 0.0;
        std::uint64_t count = 0;
        bool operator==(const Entry&) const = default;
    };

    explicit PairStats(std::size_t dims);

    std::size_t dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    const Entry& at(std::size_t i, std::size_t j) const;
    std::size_t index_of(std::size_t i, std::size_t j) const;

    /// mean ← mean + (x − mean)/count. Throws InvalidInputError for negative
    /// or non-finite values.
    void accumulate(std::size_t i, std::size_t j, double d, double delta);
    bool all_initialized() const;
    void reset();

    /// Direct construction for tests and checkpoints.
    void set(std::size_t i, std::size_t j, const Entry& entry);

    bool operator==(const PairStats&) const = default;

private:
    std::size_t dims_;
    std::vector<Entry> entries_;
};

struct CalibrationState {
    double c = 1.0;
    double c_emp = 1.0;
    double c_min = 1e-4;
    double c_max = 1e4;
    double eta_c = 0.05;
    double f_target = 0.5;
    double eps_num = 1e-8;
    std::size_t freeze_epochs_remaining = 0;
    bool operator==(const CalibrationState&) const = default;
};

CalibrationState make_calibration_state(const CalibrationConfig& config);

/// Δ̄_ij / (D̄_ij + eps) in pair order. Throws InvalidStateError if any pair
/// has no samples.
std::vector<double> scale_ratios(const PairStats& stats, double eps_num);

/// percentile_p of the ratios, clamped to [c_min, c_max]. Throws
/// InvalidStateError on an empty list.
double calibrate_c(std::span<const double> ratios, double p, double c_min, double c_max);

/// λ · mean over pairs of max(0, C·D̄ − Δ̄)².
double hinge_loss(const PairStats& stats, double c, double lambda_unc);

struct StabilityRatio {
    std::vector<double> per_pair;
    double mean = 0.0;
};

StabilityRatio stability_ratio(const PairStats& stats, double c, double eps_num);
/// Same ratio from instantaneous per-pair values (pair order).
StabilityRatio stability_ratio(std::span<const double> d, std::span<const double> delta, double c,
                               double eps_num);

/// Fraction of pairs with C·D̄ > Δ̄ (strict).
double active_fraction(const PairStats& stats, double c);

/// C ← clamp(C·exp(η_C·(f_target − f_active)), C_min, C_max). The caller
/// enforces the freeze period.
CalibrationState update_c(CalibrationState state, double f_active);

/// D_ij for one latent sample t (length d). Throws InvalidInputError unless i < j.
double bch_deviation(const GeneratorBank& bank, std::size_t i, std::size_t j, std::span<const double> t);

/// Maps B rows of s' (n² each) to B decoded images.
using Decoder = std::function<DenseMatrix(const DenseMatrix&)>;

Decoder model_decoder(const Model& model);

/// Latent draws shared by both orderings of every pair: t ~ q(t|ẑ), ẑ, and
/// the embedding of a hard discrete code sampled once per image.
struct SwapInputs {
    DenseMatrix t;
    DenseMatrix z_hat;
    DenseMatrix embedding;
};

/// Draws SwapInputs for a batch using a dedicated seed.
SwapInputs draw_swap_inputs(const Model& model, const DenseMatrix& images, std::uint64_t seed);

/// Batch mean of ‖dec(G_i G_j Ĝ e_s) − dec(G_j G_i Ĝ e_s)‖₂.
double order_swap_delta(const Decoder& decoder, const GeneratorBank& bank, const SwapInputs& inputs,
                        std::size_t i, std::size_t j);
double order_swap_delta(const Model& model, const DenseMatrix& images, std::size_t i, std::size_t j,
                        std::uint64_t seed);

struct PairMeasurement {
    PairIndex pair;
    double d = 0.0;      // batch mean of D_ij
    double delta = 0.0;  // Δ_ij
};

/// D and Δ for every pair. Pairs are evaluated in parallel and returned in
/// pair order.
std::vector<PairMeasurement> measure_pairs(const Decoder& decoder, const GeneratorBank& bank,
                                           const SwapInputs& inputs);

/// σ_max of [∂x_rec/∂t_i, ∂x_rec/∂t_j] at t = `at`, with the embedding held
/// fixed; columns from central differences of t → G(t)·mat(e_s) → decoder.
double manifold_sensitivity(const Decoder& decoder, const GeneratorBank& bank,
                            std::span<const double> embedding, std::span<const double> at, std::size_t i,
                            std::size_t j, double h);
/// Batch mean of U_ij at t = μ with each image's hard discrete code.
double manifold_sensitivity(const Model& model, const DenseMatrix& images, std::size_t i, std::size_t j,
                            double h = 1e-4);

/// In-graph hinge on the first `rows` samples of a training batch, using the
/// batch's own t, ẑ and e_s. Gradients reach generators, decoder and encoders.
struct HingeVars {
    Var loss;
    std::vector<Var> d;      // per pair, 1×1 batch means
    std::vector<Var> delta;  // per pair, 1×1 batch means
};

HingeVars build_hinge(ModelGraph& mg, const ObjectiveVars& objective, std::size_t rows, double c,
                      double lambda_unc);

}  // namespace lgvae
