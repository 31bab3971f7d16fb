#include "lgvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lgvae/errors.hpp"

namespace lgvae {

namespace {

using Shape = std::pair<std::size_t, std::size_t>;

struct MlpSpec {
    const char* prefix;
    std::vector<std::size_t> widths;  // input, hidden..., output
};

std::vector<MlpSpec> mlp_specs(const ModelConfig& c) {
    const std::size_t p = c.pixels(), h = c.hidden_width, e = c.embedding_dim();
    return {
        {param_names::kImageEncoder, {p, h, h, e}},
        {param_names::kGroupEncoder, {e, c.group_hidden_width, 2 * c.latent_dims}},
        {param_names::kDiscreteEncoder, {p, h, h, c.categories}},
        {param_names::kDecoder, {e, h, h, p}},
        {param_names::kPredictor, {p, h, h, c.categories}},
    };
}

std::string weight_name(const std::string& prefix, std::size_t layer) {
    return prefix + ".w" + std::to_string(layer);
}
std::string bias_name(const std::string& prefix, std::size_t layer) {
    return prefix + ".b" + std::to_string(layer);
}

std::size_t layer_count(const ModelConfig& c, const std::string& prefix) {
    for (const auto& spec : mlp_specs(c))
        if (prefix == spec.prefix) return spec.widths.size() - 1;
    throw InvalidInputError("unknown network '" + prefix + "'");
}

}  // namespace

std::map<std::string, Shape> Model::layout(const ModelConfig& c) {
    std::map<std::string, Shape> out;
    for (const auto& spec : mlp_specs(c)) {
        for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
            out[weight_name(spec.prefix, l)] = {spec.widths[l], spec.widths[l + 1]};
            out[bias_name(spec.prefix, l)] = {1, spec.widths[l + 1]};
        }
    }
    out[param_names::kEmbedding] = {c.categories, c.embedding_dim()};
    out[param_names::kGenerators] = {c.latent_dims, c.embedding_dim()};
    return out;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    std::mt19937_64 rng(seed);
    const GeneratorBank bank = init_generators(config.latent_dims, config.group_side,
                                               config.generator_init_scale, rng());
    for (const auto& [name, shape] : layout(config)) {
        DenseMatrix value(shape.first, shape.second);
        if (name == param_names::kGenerators) {
            value = bank.rows();
        } else if (name == param_names::kEmbedding) {
            std::normal_distribution<double> normal(0.0, config.embedding_init_scale);
            for (double& v : value.data()) v = normal(rng);
        } else if (name.find(".w") != std::string::npos) {
            const double stddev = std::sqrt(2.0 / static_cast<double>(shape.first + shape.second));
            std::normal_distribution<double> normal(0.0, stddev);
            for (double& v : value.data()) v = normal(rng);
        }
        params_.add(name, std::move(value));
    }
}

Model::Model(const ModelConfig& config, ParameterSet params) : config_(config), params_(std::move(params)) {
    const auto expected = layout(config);
    if (params_.slots().size() != expected.size())
        throw DimensionError("Model: expected " + std::to_string(expected.size()) +
                             " parameters, got " + std::to_string(params_.slots().size()));
    for (const auto& [name, shape] : expected) {
        if (!params_.contains(name)) throw DimensionError("Model: missing parameter '" + name + "'");
        const DenseMatrix& v = params_.value(name);
        if (v.rows() != shape.first || v.cols() != shape.second)
            throw DimensionError("Model: parameter '" + name + "' is " + std::to_string(v.rows()) +
                                 "x" + std::to_string(v.cols()) + ", config expects " +
                                 std::to_string(shape.first) + "x" + std::to_string(shape.second));
    }
}

GeneratorBank Model::bank() const {
    return GeneratorBank(config_.group_side, params_.value(param_names::kGenerators));
}

ModelGraph::ModelGraph(Graph& graph, const Model& model, bool trainable)
    : graph_(graph), model_(model), trainable_(trainable) {}

Var ModelGraph::param(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = graph_.input(model_.params().value(name), name, trainable_);
    bound_.emplace(name, v);
    return v;
}

Var ModelGraph::mlp(const std::string& prefix, Var input, std::size_t layers) {
    Var h = input;
    for (std::size_t l = 0; l < layers; ++l) {
        h = graph_.add_row(graph_.matmul(h, param(weight_name(prefix, l))), param(bias_name(prefix, l)));
        if (l + 1 < layers) h = graph_.tanh(h);
    }
    return h;
}

EncodeVars ModelGraph::encode(Var images) {
    const ModelConfig& c = model_.config();
    if (graph_.value(images).cols() != c.pixels())
        throw DimensionError("encode: images have " + std::to_string(graph_.value(images).cols()) +
                             " pixels, model expects " + std::to_string(c.pixels()));
    EncodeVars out;
    out.z_hat = mlp(param_names::kImageEncoder, images, layer_count(c, param_names::kImageEncoder));
    const Var stats = mlp(param_names::kGroupEncoder, out.z_hat, layer_count(c, param_names::kGroupEncoder));
    out.mu = graph_.slice_cols(stats, 0, c.latent_dims);
    out.logvar = graph_.clamp(graph_.slice_cols(stats, c.latent_dims, 2 * c.latent_dims), c.logvar_min,
                              c.logvar_max);
    out.logits = discrete_logits(images);
    return out;
}

Var ModelGraph::discrete_logits(Var images) {
    return mlp(param_names::kDiscreteEncoder, images,
               layer_count(model_.config(), param_names::kDiscreteEncoder));
}

Var ModelGraph::decode_logits(Var s_prime) {
    const ModelConfig& c = model_.config();
    if (graph_.value(s_prime).cols() != c.embedding_dim())
        throw DimensionError("decode: input rows have " + std::to_string(graph_.value(s_prime).cols()) +
                             " entries, expected " + std::to_string(c.embedding_dim()));
    return mlp(param_names::kDecoder, s_prime, layer_count(c, param_names::kDecoder));
}

Var ModelGraph::predictor_logits(Var images) {
    return mlp(param_names::kPredictor, images, layer_count(model_.config(), param_names::kPredictor));
}

Var ModelGraph::embed(Var codes) { return graph_.matmul(codes, param(param_names::kEmbedding)); }

EncodeResult encode(const Model& model, const DenseMatrix& images) {
    Graph g;
    ModelGraph mg(g, model, false);
    const EncodeVars v = mg.encode(g.constant(images));
    return {g.value(v.z_hat), g.value(v.mu), g.value(v.logvar), g.value(v.logits)};
}

DenseMatrix reparameterize(const DenseMatrix& mu, const DenseMatrix& logvar, const DenseMatrix& eps) {
    if (!mu.same_shape(logvar) || !mu.same_shape(eps))
        throw DimensionError("reparameterize: μ, logσ², ε shapes differ");
    DenseMatrix t(mu.rows(), mu.cols());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = mu[i] + std::exp(0.5 * logvar[i]) * eps[i];
    return t;
}

Var reparameterize(Graph& g, Var mu, Var logvar, Var eps) {
    return g.add(mu, g.mul(g.exp(g.scale(logvar, 0.5)), eps));
}

DenseMatrix gumbel_from_uniform(const DenseMatrix& uniform) {
    DenseMatrix out(uniform.rows(), uniform.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double u = uniform[i];
        if (!(u > 0.0 && u < 1.0)) throw InvalidInputError("gumbel noise must lie in (0,1)");
        out[i] = -std::log(-std::log(u));
    }
    return out;
}

DiscreteCode gumbel_softmax(std::span<const double> logits, double temperature,
                            std::span<const double> uniform_noise) {
    if (!(temperature > 0.0)) throw InvalidInputError("gumbel_softmax: temperature must be > 0");
    if (logits.size() != uniform_noise.size() || logits.empty())
        throw DimensionError("gumbel_softmax: logits and noise lengths differ");
    const DenseMatrix g = gumbel_from_uniform(DenseMatrix::row_vector(uniform_noise));
    DiscreteCode code;
    code.logits.assign(logits.begin(), logits.end());
    std::vector<double> perturbed(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k) {
        perturbed[k] = (logits[k] + g[k]) / temperature;
        mx = std::max(mx, perturbed[k]);
    }
    double z = 0.0;
    code.soft.resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) z += (code.soft[k] = std::exp(perturbed[k] - mx));
    for (double& s : code.soft) s /= z;
    code.index = static_cast<std::size_t>(
        std::max_element(code.soft.begin(), code.soft.end()) - code.soft.begin());
    code.hard.assign(logits.size(), 0.0);
    code.hard[code.index] = 1.0;
    return code;
}

DenseMatrix hard_codes(const DenseMatrix& logits) {
    DenseMatrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        const auto k = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        out(r, k) = 1.0;
    }
    return out;
}

DenseMatrix decode(const Model& model, const DenseMatrix& s_prime) {
    Graph g;
    ModelGraph mg(g, model, false);
    return g.value(g.sigmoid(mg.decode_logits(g.constant(s_prime))));
}

DenseMatrix decode_logits(const Model& model, const DenseMatrix& s_prime) {
    Graph g;
    ModelGraph mg(g, model, false);
    return g.value(mg.decode_logits(g.constant(s_prime)));
}

VaeLossVars loss_vae(Graph& g, Var decoder_logits, Var images, Var z, Var z_hat, Var mu, Var logvar,
                     double alpha, double beta) {
    const DenseMatrix& x = g.value(images);
    if (!g.value(decoder_logits).same_shape(x))
        throw DimensionError("loss_vae: reconstruction and image shapes differ");
    if (!g.value(z).same_shape(g.value(z_hat)))
        throw DimensionError("loss_vae: z and ẑ shapes differ");
    if (!g.value(mu).same_shape(g.value(logvar)))
        throw DimensionError("loss_vae: μ and logσ² shapes differ");
    const double inv_batch = 1.0 / static_cast<double>(x.rows());

    VaeLossVars out;
    // BCE(sigmoid(l), x) = softplus(l) − x·l
    const Var bce = g.sub(g.softplus(decoder_logits), g.mul(images, decoder_logits));
    out.recon = g.scale(g.sum(bce), inv_batch);
    const double inv_entries = 1.0 / static_cast<double>(g.value(z).cols());
    out.consistency = g.scale(g.frobenius_sq(g.sub(z, z_hat)), alpha * inv_batch * inv_entries);
    const DenseMatrix& mv = g.value(mu);
    const Var ones = g.constant(DenseMatrix::filled(mv.rows(), mv.cols(), 1.0));
    const Var kl_terms = g.sub(g.sub(g.add(g.square(mu), g.exp(logvar)), ones), logvar);
    out.kl = g.scale(g.sum(kl_terms), 0.5 * beta * inv_batch);
    out.total = g.add(g.add(out.recon, out.consistency), out.kl);
    return out;
}

Var loss_mi(Graph& g, Var predictor_logits, Var soft) {
    const double inv_batch = 1.0 / static_cast<double>(g.value(soft).rows());
    return g.scale(g.sum(g.mul(soft, g.log_softmax(predictor_logits))), -inv_batch);
}

double loss_mi(const DenseMatrix& predictor_logits, const DenseMatrix& soft) {
    Graph g;
    return g.scalar_value(loss_mi(g, g.constant(predictor_logits), g.constant(soft)));
}

Var loss_usage(Graph& g, Var soft) {
    const DenseMatrix& s = g.value(soft);
    if (s.rows() < 2) throw InvalidInputError("loss_usage: batch size must be >= 2");
    const Var averager = g.constant(DenseMatrix::filled(1, s.rows(), 1.0 / static_cast<double>(s.rows())));
    const Var mean_code = g.matmul(averager, soft);
    const Var safe = g.clamp(mean_code, std::numeric_limits<double>::min(), 1.0);
    const Var neg_entropy = g.sum(g.mul(mean_code, g.log(safe)));
    return g.add(neg_entropy, g.scalar(std::log(static_cast<double>(s.cols()))));
}

double loss_usage(const DenseMatrix& soft) {
    Graph g;
    return g.scalar_value(loss_usage(g, g.constant(soft)));
}

ObjectiveVars build_phase1_objective(ModelGraph& mg, const DenseMatrix& images, const BatchNoise& noise) {
    Graph& g = mg.graph();
    const ModelConfig& c = mg.model().config();
    if (noise.eps.rows() != images.rows() || noise.eps.cols() != c.latent_dims ||
        noise.uniform.rows() != images.rows() || noise.uniform.cols() != c.categories)
        throw DimensionError("build_phase1_objective: noise shape does not match batch");

    ObjectiveVars o;
    const Var x = g.constant(images);
    o.enc = mg.encode(x);
    o.t = reparameterize(g, o.enc.mu, o.enc.logvar, g.constant(noise.eps));
    o.group = lie_graph::exp(g, lie_graph::algebra(g, o.t, mg.generators()), c.group_side);
    const Var gumbel = g.constant(gumbel_from_uniform(noise.uniform));
    o.soft = g.softmax(g.add(o.enc.logits, gumbel), c.temperature);
    o.embedding = mg.embed(o.soft);
    o.s_prime = g.batched_matmul(o.group, o.embedding, c.group_side);
    o.decoder_logits = mg.decode_logits(o.s_prime);
    o.reconstruction = g.sigmoid(o.decoder_logits);
    o.vae = loss_vae(g, o.decoder_logits, x, o.group, o.enc.z_hat, o.enc.mu, o.enc.logvar, c.alpha, c.beta);

    const Var predictor_input =
        c.mi_grad_to_decoder ? o.reconstruction : g.constant(g.value(o.reconstruction));
    o.mi = loss_mi(g, mg.predictor_logits(predictor_input), o.soft);
    o.usage = loss_usage(g, o.soft);
    o.total = g.add(g.add(o.vae.total, g.scale(o.mi, c.lambda_mi)), g.scale(o.usage, c.lambda_usage));
    return o;
}

}  // namespace lgvae
