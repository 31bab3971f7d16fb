#include "lgvae/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lgvae/errors.hpp"
#include "lgvae/liegroup.hpp"

namespace lgvae {

DenseMatrix deterministic_s_prime(const Model& model, const DenseMatrix& images) {
    const EncodeResult enc = encode(model, images);
    const DenseMatrix emb = matmul(hard_codes(enc.logits), model.params().value(param_names::kEmbedding));
    const GeneratorBank bank = model.bank();
    DenseMatrix s(images.rows(), emb.cols());
    for (std::size_t r = 0; r < images.rows(); ++r) {
        const std::vector<double> row = act(group_element(bank, enc.mu.row(r)), emb.row(r));
        std::copy(row.begin(), row.end(), s.row(r).begin());
    }
    return s;
}

double reconstruction_error(const Model& model, const DenseMatrix& images) {
    if (images.rows() == 0) throw InvalidInputError("reconstruction_error: empty image set");
    const DenseMatrix logits = decode_logits(model, deterministic_s_prime(model, images));
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double l = logits[i];
        // softplus(l) − x·l, stable for large |l|
        total += std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l))) - images[i] * l;
    }
    return total / static_cast<double>(images.rows());
}

LatentFn model_latents(const Model& model, bool append_hard_code) {
    return [&model, append_hard_code](const DenseMatrix& images, std::span<const FactorSpec>) {
        const EncodeResult enc = encode(model, images);
        if (!append_hard_code) return enc.mu;
        const DenseMatrix hard = hard_codes(enc.logits);
        DenseMatrix out(images.rows(), enc.mu.cols() + hard.cols());
        for (std::size_t r = 0; r < out.rows(); ++r) {
            std::copy(enc.mu.row(r).begin(), enc.mu.row(r).end(), out.row(r).begin());
            std::copy(hard.row(r).begin(), hard.row(r).end(), out.row(r).begin() + enc.mu.cols());
        }
        return out;
    };
}

namespace {

struct Vote {
    std::size_t factor = 0;
    std::size_t dim = 0;
};

std::vector<double> column_std(const DenseMatrix& m) {
    std::vector<double> out(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) mean += m(r, c);
        mean /= static_cast<double>(m.rows());
        double var = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) var += (m(r, c) - mean) * (m(r, c) - mean);
        out[c] = std::sqrt(var / static_cast<double>(m.rows()));
    }
    return out;
}

Vote draw_vote(const LatentFn& latents, const std::vector<double>& scale, const std::vector<std::size_t>& kept,
               std::size_t samples, std::size_t side, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, kFactorCount - 1);
    Vote vote;
    vote.factor = pick(rng);
    const auto fixed = sample_factors(rng).as_array();
    std::vector<FactorSpec> specs(samples);
    for (auto& spec : specs) {
        auto values = sample_factors(rng).as_array();
        values[vote.factor] = fixed[vote.factor];
        spec = FactorSpec::from_array(values);
    }
    const Dataset batch = render_dataset(specs, side);
    const DenseMatrix z = latents(images_as_matrix(batch), specs);
    if (z.rows() != samples || z.cols() != scale.size())
        throw DimensionError("fvm_score: latent function changed its output shape");

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const std::size_t c = kept[k];
        double mean = 0.0;
        for (std::size_t r = 0; r < samples; ++r) mean += z(r, c) / scale[c];
        mean /= static_cast<double>(samples);
        double var = 0.0;
        for (std::size_t r = 0; r < samples; ++r) {
            const double d = z(r, c) / scale[c] - mean;
            var += d * d;
        }
        if (var < best) {
            best = var;
            vote.dim = k;
        }
    }
    return vote;
}

}  // namespace

FvmResult fvm_score(const LatentFn& latents, const Dataset& reference, const FvmOptions& options) {
    if (options.votes < 10) throw InvalidInputError("fvm_score: at least 10 votes are required");
    if (options.samples_per_vote < 2) throw InvalidInputError("fvm_score: samples_per_vote must be >= 2");
    if (reference.count() < 2) throw InvalidInputError("fvm_score: reference set needs >= 2 images");

    const DenseMatrix ref = latents(images_as_matrix(reference), reference.labels);
    const std::vector<double> scale = column_std(ref);
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < scale.size(); ++c)
        if (scale[c] > 0.0) kept.push_back(c);
    FvmResult result;
    result.active_dims = kept.size();
    if (kept.empty()) return result;

    std::mt19937_64 rng(options.seed);
    std::vector<std::vector<std::size_t>> counts(kept.size(), std::vector<std::size_t>(kFactorCount, 0));
    for (std::size_t v = 0; v < options.votes; ++v) {
        const Vote vote = draw_vote(latents, scale, kept, options.samples_per_vote, reference.side, rng);
        ++counts[vote.dim][vote.factor];
    }
    std::vector<std::size_t> predict(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k)
        predict[k] = static_cast<std::size_t>(std::max_element(counts[k].begin(), counts[k].end()) - counts[k].begin());

    std::size_t correct = 0;
    for (std::size_t v = 0; v < options.votes; ++v) {
        const Vote vote = draw_vote(latents, scale, kept, options.samples_per_vote, reference.side, rng);
        if (predict[vote.dim] == vote.factor) ++correct;
    }
    result.score = static_cast<double>(correct) / static_cast<double>(options.votes);
    return result;
}

}  // namespace lgvae
