#include "lgvae/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "lgvae/errors.hpp"
#include "lgvae/kernels.hpp"

namespace lgvae {

std::vector<PairIndex> all_pairs(std::size_t dims) {
    std::vector<PairIndex> out;
    for (std::size_t i = 0; i < dims; ++i)
        for (std::size_t j = i + 1; j < dims; ++j) out.push_back({i, j});
    return out;
}

PairStats::PairStats(std::size_t dims) : dims_(dims), entries_(dims * (dims - 1) / 2) {
    if (dims < 2) throw InvalidInputError("PairStats: need at least 2 latent dimensions");
}

std::size_t PairStats::index_of(std::size_t i, std::size_t j) const {
    if (!(i < j) || j >= dims_)
        throw InvalidInputError("pair (" + std::to_string(i) + "," + std::to_string(j) +
                                ") is not an ordered pair i<j below " + std::to_string(dims_));
    // rows 0..i-1 contribute (d-1) + (d-2) + ... + (d-i) pairs
    return i * (2 * dims_ - i - 1) / 2 + (j - i - 1);
}

const PairStats::Entry& PairStats::at(std::size_t i, std::size_t j) const {
    return entries_[index_of(i, j)];
}

void PairStats::accumulate(std::size_t i, std::size_t j, double d, double delta) {
    if (!(d >= 0.0) || !(delta >= 0.0) || !std::isfinite(d) || !std::isfinite(delta))
        throw InvalidInputError("accumulate: D and Δ must be finite and non-negative");
    Entry& e = entries_[index_of(i, j)];
    ++e.count;
    const double n = static_cast<double>(e.count);
    e.d_mean += (d - e.d_mean) / n;
    e.delta_mean += (delta - e.delta_mean) / n;
}

bool PairStats::all_initialized() const {
    return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.count > 0; });
}

void PairStats::reset() { std::fill(entries_.begin(), entries_.end(), Entry{}); }

void PairStats::set(std::size_t i, std::size_t j, const Entry& entry) { entries_[index_of(i, j)] = entry; }

CalibrationState make_calibration_state(const CalibrationConfig& config) {
    CalibrationState s;
    s.c_min = config.c_min;
    s.c_max = config.c_max;
    s.eta_c = config.eta_c;
    s.f_target = config.f_target;
    s.eps_num = config.eps_num;
    s.freeze_epochs_remaining = config.freeze_epochs;
    s.c = std::clamp(1.0, s.c_min, s.c_max);
    s.c_emp = s.c;
    return s;
}

std::vector<double> scale_ratios(const PairStats& stats, double eps_num) {
    std::vector<double> out;
    out.reserve(stats.size());
    for (const auto& e : stats.entries()) {
        if (e.count == 0) throw InvalidStateError("scale_ratios: pair statistics not initialised");
        out.push_back(e.delta_mean / (e.d_mean + eps_num));
    }
    return out;
}

double calibrate_c(std::span<const double> ratios, double p, double c_min, double c_max) {
    if (ratios.empty()) throw InvalidStateError("calibrate_c: no ratios");
    return std::clamp(percentile(ratios, p), c_min, c_max);
}

double hinge_loss(const PairStats& stats, double c, double lambda_unc) {
    double acc = 0.0;
    for (const auto& e : stats.entries()) {
        const double gap = std::max(0.0, c * e.d_mean - e.delta_mean);
        acc += gap * gap;
    }
    return lambda_unc * acc / static_cast<double>(stats.size());
}

StabilityRatio stability_ratio(std::span<const double> d, std::span<const double> delta, double c,
                               double eps_num) {
    if (d.size() != delta.size() || d.empty())
        throw DimensionError("stability_ratio: D and Δ lists differ in length or are empty");
    StabilityRatio out;
    out.per_pair.resize(d.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) {
        out.per_pair[k] = delta[k] / (c * d[k] + eps_num);
        acc += out.per_pair[k];
    }
    out.mean = acc / static_cast<double>(d.size());
    return out;
}

StabilityRatio stability_ratio(const PairStats& stats, double c, double eps_num) {
    std::vector<double> d, delta;
    for (const auto& e : stats.entries()) {
        d.push_back(e.d_mean);
        delta.push_back(e.delta_mean);
    }
    return stability_ratio(d, delta, c, eps_num);
}

double active_fraction(const PairStats& stats, double c) {
    std::size_t active = 0;
    for (const auto& e : stats.entries())
        if (c * e.d_mean > e.delta_mean) ++active;
    return static_cast<double>(active) / static_cast<double>(stats.size());
}

CalibrationState update_c(CalibrationState state, double f_active) {
    state.c = std::clamp(state.c * std::exp(state.eta_c * (state.f_target - f_active)), state.c_min,
                         state.c_max);
    return state;
}

double bch_deviation(const GeneratorBank& bank, std::size_t i, std::size_t j, std::span<const double> t) {
    if (!(i < j) || j >= bank.dims())
        throw InvalidInputError("bch_deviation: need i < j < d, got (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
    if (t.size() != bank.dims()) throw DimensionError("bch_deviation: |t| must equal d");
    const DenseMatrix ai = scale(bank.generator(i), t[i]);
    const DenseMatrix aj = scale(bank.generator(j), t[j]);
    return frobenius_norm(sub(mat_exp(add(ai, aj)), matmul(mat_exp(ai), mat_exp(aj))));
}

Decoder model_decoder(const Model& model) {
    return [&model](const DenseMatrix& s) { return decode(model, s); };
}

SwapInputs draw_swap_inputs(const Model& model, const DenseMatrix& images, std::uint64_t seed) {
    const ModelConfig& c = model.config();
    const EncodeResult enc = encode(model, images);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    DenseMatrix eps(images.rows(), c.latent_dims);
    for (double& v : eps.data()) v = normal(rng);
    DenseMatrix perturbed = enc.logits;
    for (double& v : perturbed.data()) {
        const double u = std::max(uniform(rng), std::numeric_limits<double>::min());
        v += -std::log(-std::log(u));
    }
    SwapInputs out;
    out.t = reparameterize(enc.mu, enc.logvar, eps);
    out.z_hat = enc.z_hat;
    out.embedding = matmul(hard_codes(perturbed), model.params().value(param_names::kEmbedding));
    return out;
}

namespace {

// vec(a·b) for row-major n×n blocks held in spans.
void square_product(std::span<const double> a, std::span<const double> b, std::span<double> out,
                    std::size_t n) {
    kernels::gemm_nn(a, b, out, n, n, n);
}

void check_swap_inputs(const GeneratorBank& bank, const SwapInputs& in) {
    const std::size_t e = bank.side() * bank.side();
    if (in.t.cols() != bank.dims() || in.z_hat.cols() != e || in.embedding.cols() != e ||
        in.t.rows() != in.z_hat.rows() || in.t.rows() != in.embedding.rows() || in.t.rows() == 0)
        throw DimensionError("swap inputs do not match the generator bank");
}

}  // namespace

double order_swap_delta(const Decoder& decoder, const GeneratorBank& bank, const SwapInputs& inputs,
                        std::size_t i, std::size_t j) {
    if (!(i < j) || j >= bank.dims())
        throw InvalidInputError("order_swap_delta: need i < j < d");
    check_swap_inputs(bank, inputs);
    const std::size_t n = bank.side();
    const std::size_t e = n * n;
    const std::size_t batch = inputs.t.rows();
    const DenseMatrix ai = bank.generator(i);
    const DenseMatrix aj = bank.generator(j);

    DenseMatrix forward_order(batch, e), swapped_order(batch, e);
    std::vector<double> base(e), tmp(e);
    for (std::size_t r = 0; r < batch; ++r) {
        const DenseMatrix gi = mat_exp(scale(ai, inputs.t(r, i)));
        const DenseMatrix gj = mat_exp(scale(aj, inputs.t(r, j)));
        square_product(inputs.z_hat.row(r), inputs.embedding.row(r), base, n);
        square_product(gj.data(), base, tmp, n);
        square_product(gi.data(), tmp, forward_order.row(r), n);
        square_product(gi.data(), base, tmp, n);
        square_product(gj.data(), tmp, swapped_order.row(r), n);
    }
    const DenseMatrix x_forward = decoder(forward_order);
    const DenseMatrix x_swapped = decoder(swapped_order);
    if (!x_forward.same_shape(x_swapped) || x_forward.rows() != batch)
        throw DimensionError("order_swap_delta: decoder returned inconsistent shapes");
    double acc = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        double sq = 0.0;
        auto a = x_forward.row(r);
        auto b = x_swapped.row(r);
        for (std::size_t p = 0; p < a.size(); ++p) sq += (a[p] - b[p]) * (a[p] - b[p]);
        acc += std::sqrt(sq);
    }
    return acc / static_cast<double>(batch);
}

double order_swap_delta(const Model& model, const DenseMatrix& images, std::size_t i, std::size_t j,
                        std::uint64_t seed) {
    return order_swap_delta(model_decoder(model), model.bank(), draw_swap_inputs(model, images, seed), i, j);
}

std::vector<PairMeasurement> measure_pairs(const Decoder& decoder, const GeneratorBank& bank,
                                           const SwapInputs& inputs) {
    check_swap_inputs(bank, inputs);
    const std::vector<PairIndex> pairs = all_pairs(bank.dims());
    std::vector<PairMeasurement> out(pairs.size());
    const long count = static_cast<long>(pairs.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long k = 0; k < count; ++k) {
        const PairIndex p = pairs[k];
        double d_acc = 0.0;
        for (std::size_t r = 0; r < inputs.t.rows(); ++r) d_acc += bch_deviation(bank, p.i, p.j, inputs.t.row(r));
        out[k].pair = p;
        out[k].d = d_acc / static_cast<double>(inputs.t.rows());
        out[k].delta = order_swap_delta(decoder, bank, inputs, p.i, p.j);
    }
    return out;
}

double manifold_sensitivity(const Decoder& decoder, const GeneratorBank& bank,
                            std::span<const double> embedding, std::span<const double> at, std::size_t i,
                            std::size_t j, double h) {
    if (!(h > 0.0)) throw InvalidInputError("manifold_sensitivity: step must be > 0");
    if (i >= bank.dims() || j >= bank.dims() || i == j)
        throw InvalidInputError("manifold_sensitivity: need two distinct latent indices");
    const std::size_t n = bank.side();
    if (embedding.size() != n * n || at.size() != bank.dims())
        throw DimensionError("manifold_sensitivity: embedding or t has the wrong length");

    // rows: t_i + h, t_i − h, t_j + h, t_j − h
    DenseMatrix probes(4, n * n);
    const std::size_t axis[4] = {i, i, j, j};
    const double sign[4] = {1.0, -1.0, 1.0, -1.0};
    for (std::size_t k = 0; k < 4; ++k) {
        std::vector<double> t(at.begin(), at.end());
        t[axis[k]] += sign[k] * h;
        const std::vector<double> s = act(group_element(bank, t), embedding);
        std::copy(s.begin(), s.end(), probes.row(k).begin());
    }
    const DenseMatrix out = decoder(probes);
    const std::size_t pixels = out.cols();
    std::vector<double> col_i(pixels), col_j(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
        col_i[p] = (out(0, p) - out(1, p)) / (2.0 * h);
        col_j[p] = (out(2, p) - out(3, p)) / (2.0 * h);
    }
    return two_column_sigma_max(col_i, col_j);
}

double manifold_sensitivity(const Model& model, const DenseMatrix& images, std::size_t i, std::size_t j,
                            double h) {
    const EncodeResult enc = encode(model, images);
    const DenseMatrix emb = matmul(hard_codes(enc.logits), model.params().value(param_names::kEmbedding));
    const GeneratorBank bank = model.bank();
    const Decoder decoder = model_decoder(model);
    double acc = 0.0;
    for (std::size_t r = 0; r < images.rows(); ++r)
        acc += manifold_sensitivity(decoder, bank, emb.row(r), enc.mu.row(r), i, j, h);
    return acc / static_cast<double>(images.rows());
}

HingeVars build_hinge(ModelGraph& mg, const ObjectiveVars& objective, std::size_t rows, double c,
                      double lambda_unc) {
    Graph& g = mg.graph();
    const ModelConfig& cfg = mg.model().config();
    const std::size_t n = cfg.group_side;
    const std::size_t e = n * n;
    rows = std::min(rows, g.value(objective.t).rows());
    if (rows == 0) throw InvalidInputError("build_hinge: empty batch");

    const Var t = g.slice_rows(objective.t, 0, rows);
    const Var z_hat = g.slice_rows(objective.enc.z_hat, 0, rows);
    const Var emb = g.slice_rows(objective.embedding, 0, rows);
    const Var gens = mg.generators();
    const Var base = g.batched_matmul(z_hat, emb, n);  // Ĝ e_s
    const Var row_sum = g.constant(DenseMatrix::filled(e, 1, 1.0));

    std::vector<Var> scaled(cfg.latent_dims), single(cfg.latent_dims);
    for (std::size_t k = 0; k < cfg.latent_dims; ++k) {
        scaled[k] = g.matmul(g.slice_cols(t, k, k + 1), g.slice_rows(gens, k, k + 1));  // t_k A_k
        single[k] = lie_graph::exp(g, scaled[k], n);                                     // G_k
    }

    const std::vector<PairIndex> pairs = all_pairs(cfg.latent_dims);
    HingeVars out;
    std::vector<Var> decoder_inputs;
    for (const PairIndex& p : pairs) {
        const Var joint = lie_graph::exp(g, g.add(scaled[p.i], scaled[p.j]), n);
        const Var product = g.batched_matmul(single[p.i], single[p.j], n);
        const Var per_sample = g.sqrt(g.matmul(g.square(g.sub(joint, product)), row_sum));
        out.d.push_back(g.mean(per_sample));
        decoder_inputs.push_back(g.batched_matmul(single[p.i], g.batched_matmul(single[p.j], base, n), n));
        decoder_inputs.push_back(g.batched_matmul(single[p.j], g.batched_matmul(single[p.i], base, n), n));
    }
    const Var images = g.sigmoid(mg.decode_logits(g.concat_rows(decoder_inputs)));
    const Var pixel_sum = g.constant(DenseMatrix::filled(cfg.pixels(), 1, 1.0));

    std::vector<Var> penalties;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const Var fwd = g.slice_rows(images, 2 * k * rows, (2 * k + 1) * rows);
        const Var swp = g.slice_rows(images, (2 * k + 1) * rows, (2 * k + 2) * rows);
        const Var dist = g.sqrt(g.matmul(g.square(g.sub(fwd, swp)), pixel_sum));
        out.delta.push_back(g.mean(dist));
        const Var gap = g.relu(g.sub(g.scale(out.d[k], c), out.delta[k]));
        penalties.push_back(g.square(gap));
    }
    out.loss = g.scale(g.mean(g.concat_rows(penalties)), lambda_unc);
    return out;
}

}  // namespace lgvae
