#pragma once

// Encoders, decoder, discrete pathway and the training losses.
//
// Batches are row-major, one sample per row. Images are flattened to
// side² pixels in [0,1]; the group embedding e_s and ẑ are length-n² rows read
// as n×n matrices, and the group acts by left multiplication.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lgvae/config.hpp"
#include "lgvae/gradcore.hpp"
#include "lgvae/liegroup.hpp"
#include "lgvae/matcore.hpp"

namespace lgvae {

namespace param_names {
inline constexpr const char* kGenerators = "lie.generators";
inline constexpr const char* kEmbedding = "emb";
inline constexpr const char* kImageEncoder = "img_enc";
inline constexpr const char* kGroupEncoder = "grp_enc";
inline constexpr const char* kDiscreteEncoder = "disc_enc";
inline constexpr const char* kDecoder = "dec";
inline constexpr const char* kPredictor = "mi";
}  // namespace param_names

class Model {
public:
    /// Fresh model: dense weights N(0, 2/(fan_in+fan_out)), zero biases,
    /// generators N(0, generator_init_scale²), embedding N(0, embedding_init_scale²).
    Model(const ModelConfig& config, std::uint64_t seed);
    /// Restores a model; throws DimensionError if any parameter is missing or
    /// has the wrong shape for `config`.
    Model(const ModelConfig& config, ParameterSet params);

    const ModelConfig& config() const noexcept { return config_; }
    const ParameterSet& params() const noexcept { return params_; }
    ParameterSet& params() noexcept { return params_; }
    GeneratorBank bank() const;

    /// Expected parameter shapes for a configuration.
    static std::map<std::string, std::pair<std::size_t, std::size_t>> layout(const ModelConfig& config);

private:
    ModelConfig config_;
    ParameterSet params_;
};

struct EncodeVars {
    Var z_hat;
    Var mu;
    Var logvar;
    Var logits;
};

/// Binds a model's parameters into a graph on first use.
class ModelGraph {
public:
    ModelGraph(Graph& graph, const Model& model, bool trainable);

    Graph& graph() noexcept { return graph_; }
    const Model& model() const noexcept { return model_; }
    Var param(const std::string& name);
    Var generators() { return param(param_names::kGenerators); }

    EncodeVars encode(Var images);
    Var discrete_logits(Var images);
    Var decode_logits(Var s_prime);
    Var predictor_logits(Var images);
    /// codes[B×K] · Emb[K×n²].
    Var embed(Var codes);

private:
    Var mlp(const std::string& prefix, Var input, std::size_t layers);

    Graph& graph_;
    const Model& model_;
    bool trainable_;
    std::map<std::string, Var> bound_;
};

struct EncodeResult {
    DenseMatrix z_hat;
    DenseMatrix mu;
    DenseMatrix logvar;
    DenseMatrix logits;
};

/// Deterministic encoding of a batch of flattened images.
EncodeResult encode(const Model& model, const DenseMatrix& images);

/// t = μ + exp(logσ²/2) ⊙ ε.
DenseMatrix reparameterize(const DenseMatrix& mu, const DenseMatrix& logvar, const DenseMatrix& eps);
Var reparameterize(Graph& g, Var mu, Var logvar, Var eps);

struct DiscreteCode {
    std::vector<double> logits;
    std::vector<double> soft;
    std::vector<double> hard;
    std::size_t index = 0;
};

/// Gumbel perturbation g = −log(−log(u)) for u in (0,1).
DenseMatrix gumbel_from_uniform(const DenseMatrix& uniform);

/// soft = softmax((logits + g)/τ), hard = one-hot(argmax soft).
DiscreteCode gumbel_softmax(std::span<const double> logits, double temperature,
                            std::span<const double> uniform_noise);

/// One-hot rows at the argmax of each logit row.
DenseMatrix hard_codes(const DenseMatrix& logits);

/// Sigmoid images for a batch of s' rows.
DenseMatrix decode(const Model& model, const DenseMatrix& s_prime);
/// Pre-sigmoid decoder outputs.
DenseMatrix decode_logits(const Model& model, const DenseMatrix& s_prime);

struct VaeLossVars {
    Var recon;
    Var consistency;
    Var kl;
    Var total;
};

/// recon: pixel BCE from decoder logits, summed over pixels, batch mean.
/// consistency: α·‖z − ẑ‖²/n², batch mean. kl: β·Σ_j ½(μ² + σ² − 1 − logσ²), batch mean.
VaeLossVars loss_vae(Graph& g, Var decoder_logits, Var images, Var z, Var z_hat, Var mu,
                     Var logvar, double alpha, double beta);

/// −Σ_s soft_s · log softmax(predictor_logits)_s, batch mean.
Var loss_mi(Graph& g, Var predictor_logits, Var soft);
double loss_mi(const DenseMatrix& predictor_logits, const DenseMatrix& soft);

/// log K − H(batch mean of soft codes).
Var loss_usage(Graph& g, Var soft);
double loss_usage(const DenseMatrix& soft);

/// Per-batch random inputs: ε ~ N(0,I) (B×d) and Gumbel uniforms (B×K).
struct BatchNoise {
    DenseMatrix eps;
    DenseMatrix uniform;
};

struct ObjectiveVars {
    EncodeVars enc;
    Var t;
    Var group;       // rows vec(G(t))
    Var soft;
    Var embedding;   // e_s rows
    Var s_prime;
    Var decoder_logits;
    Var reconstruction;
    VaeLossVars vae;
    Var mi;
    Var usage;
    Var total;
};

/// loss_vae + λ_MI·loss_mi + λ_usage·loss_usage on one batch.
ObjectiveVars build_phase1_objective(ModelGraph& mg, const DenseMatrix& images, const BatchNoise& noise);

}  // namespace lgvae
