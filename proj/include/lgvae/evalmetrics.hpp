#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "lgvae/matcore.hpp"
#include "lgvae/model.hpp"
#include "lgvae/toydata.hpp"

namespace lgvae {

/// s' = vec(G(μ)·mat(e)) with e the embedding of each image's hard code.
DenseMatrix deterministic_s_prime(const Model& model, const DenseMatrix& images);

/// Mean per-image pixel BCE (summed over pixels) of the deterministic
/// reconstruction.
double reconstruction_error(const Model& model, const DenseMatrix& images);

/// Maps a batch of images, together with the factors they were rendered from,
/// to one latent row per image.
using LatentFn = std::function<DenseMatrix(const DenseMatrix& images, std::span<const FactorSpec> factors)>;

/// Encoder means, optionally followed by the one-hot hard code.
LatentFn model_latents(const Model& model, bool append_hard_code = false);

struct FvmOptions {
    std::size_t votes = 500;
    std::size_t samples_per_vote = 64;
    std::uint64_t seed = 0;
};

struct FvmResult {
    double score = 0.0;
    std::size_t active_dims = 0;  // latent dims with nonzero spread over the reference set
};

/// FactorVAE metric. Latents are divided by their standard deviation over
/// `reference`; dims with zero spread are dropped. Each vote fixes one factor
/// to a shared random value, renders `samples_per_vote` images with the other
/// factors resampled, and records the lowest-variance dimension. A
/// majority-vote classifier (dimension → factor) is fitted on `votes` votes
/// and scored on a further `votes` fresh votes. Throws InvalidInputError when
/// votes < 10 or samples_per_vote < 2.
FvmResult fvm_score(const LatentFn& latents, const Dataset& reference, const FvmOptions& options);

}  // namespace lgvae
