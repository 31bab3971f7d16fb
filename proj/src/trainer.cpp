#include "lgvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "lgvae/checkpoint.hpp"
#include "lgvae/errors.hpp"
#include "lgvae/evalmetrics.hpp"

namespace lgvae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint32_t fnv1a32(const std::string& s) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

// Uniform in the open interval (0,1), as the Gumbel transform requires.
double open_uniform(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double v = u(rng);
    while (!(v > 0.0 && v < 1.0)) v = u(rng);
    return v;
}

BatchNoise draw_noise(std::mt19937_64& rng, std::size_t rows, std::size_t dims, std::size_t categories) {
    std::normal_distribution<double> normal(0.0, 1.0);
    BatchNoise noise{DenseMatrix(rows, dims), DenseMatrix(rows, categories)};
    for (double& v : noise.eps.data()) v = normal(rng);
    for (double& v : noise.uniform.data()) v = open_uniform(rng);
    return noise;
}

TrainerState fresh_state(const TrainConfig& c) {
    const std::size_t d = c.model.latent_dims;
    return TrainerState{Model(c.model, derive_seed(c.seed, "init", 0)), PairStats(d), PairStats(d),
                        make_calibration_state(c.calibration), 0, 0, false, 0.0};
}

AdamSettings adam_settings(const TrainConfig& c) {
    return {c.learning_rate, c.adam_beta1, c.adam_beta2, c.adam_eps};
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_text(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::ios_base::failure("cannot open '" + path + "' for writing");
    return out;
}

void finish_text(std::ofstream& out, const std::string& path) {
    out.close();
    if (!out) throw std::ios_base::failure("failed writing '" + path + "'");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, const std::string& stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      fnv1a32(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

std::vector<std::size_t> diagnostic_indices(const TrainConfig& config, std::size_t dataset_count) {
    std::vector<std::size_t> order(dataset_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(config.seed, "diag_batch", 0));
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(order.size(), config.calibration.diag_batch));
    return order;
}

bool TrainerState::operator==(const TrainerState& o) const {
    return model.params() == o.model.params() && stats == o.stats && phase1_stats == o.phase1_stats &&
           cal == o.cal && epochs_done == o.epochs_done && global_step == o.global_step &&
           calibrated == o.calibrated && phase1_f_active == o.phase1_f_active;
}

Trainer::Trainer(TrainConfig config, const Dataset& data) : Trainer(config, data, fresh_state(config)) {}

Trainer::Trainer(TrainConfig config, const Dataset& data, TrainerState state)
    : config_(std::move(config)), data_(data), state_(std::move(state)) {
    validate(config_);
    if (data_.count() == 0) throw InvalidInputError("trainer: empty dataset");
    if (data_.side != config_.model.image_side)
        throw DimensionError("trainer: dataset side " + std::to_string(data_.side) + " differs from model.image_side " +
                             std::to_string(config_.model.image_side));
    // Re-validates the parameter layout against this configuration.
    state_.model = Model(config_.model, state_.model.params());
    if (state_.stats.dims() != config_.model.latent_dims || state_.phase1_stats.dims() != config_.model.latent_dims)
        throw DimensionError("trainer: pair statistics do not match latent_dims");

    const std::vector<std::size_t> order = diagnostic_indices(config_, data_.count());
    std::vector<std::size_t> rows;
    for (std::size_t draw = 0; draw < config_.calibration.diag_draws; ++draw)
        rows.insert(rows.end(), order.begin(), order.end());
    diag_images_ = images_as_matrix(data_, rows);
}

void Trainer::begin_phase2() {
    if (state_.calibrated) return;
    if (!state_.stats.all_initialized())
        throw InvalidStateError("cannot calibrate C: some generator pairs have no Phase-1 diagnostics");
    const CalibrationConfig& k = config_.calibration;
    const std::vector<double> ratios = scale_ratios(state_.stats, k.eps_num);
    const double c_emp = calibrate_c(ratios, k.percentile, k.c_min, k.c_max);
    state_.cal.c = c_emp;
    state_.cal.c_emp = c_emp;
    state_.phase1_f_active = active_fraction(state_.stats, c_emp);
    state_.phase1_stats = state_.stats;
    state_.stats.reset();
    if (config_.reset_optimizer_phase2) state_.model.params().reset_moments();
    state_.calibrated = true;
}

void Trainer::diagnose(int phase, std::uint64_t epoch, double recon_since_last) {
    const Model& model = state_.model;
    const SwapInputs inputs = draw_swap_inputs(model, diag_images_, derive_seed(config_.seed, "diag", state_.global_step));
    const std::vector<PairMeasurement> measured = measure_pairs(model_decoder(model), model.bank(), inputs);
    for (const auto& m : measured) state_.stats.accumulate(m.pair.i, m.pair.j, m.d, m.delta);

    const double eps = config_.calibration.eps_num;
    const bool constrained = phase == 2;
    const double c = constrained ? state_.cal.c : kNaN;
    const double f = constrained ? active_fraction(state_.stats, c) : kNaN;

    std::vector<double> d, delta;
    for (const auto& m : measured) {
        const auto& e = state_.stats.at(m.pair.i, m.pair.j);
        DiagnosticRow row;
        row.step = state_.global_step;
        row.phase = phase;
        row.i = m.pair.i;
        row.j = m.pair.j;
        row.d = m.d;
        row.delta = m.delta;
        row.d_bar = e.d_mean;
        row.delta_bar = e.delta_mean;
        row.r = e.delta_mean / (e.d_mean + eps);
        row.c = c;
        row.ratio = constrained ? m.delta / (c * m.d + eps) : kNaN;
        row.f_active = f;
        log_.diagnostics.push_back(row);
        d.push_back(m.d);
        delta.push_back(m.delta);
    }
    IntervalRow iv;
    iv.step = state_.global_step;
    iv.phase = phase;
    iv.epoch = epoch;
    iv.recon = recon_since_last;
    iv.d_mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    iv.delta_mean = std::accumulate(delta.begin(), delta.end(), 0.0) / static_cast<double>(delta.size());
    iv.c = c;
    iv.r_bar = constrained ? stability_ratio(d, delta, c, eps).mean : kNaN;
    iv.f_active = f;
    log_.intervals.push_back(iv);
}

void Trainer::run_epoch() {
    if (finished()) throw InvalidStateError("run_epoch: curriculum already finished");
    const int phase = next_phase();
    if (phase == 2) begin_phase2();
    const std::uint64_t epoch = state_.epochs_done;
    const ModelConfig& mc = config_.model;
    const bool hinge_on = phase == 2 && config_.lambda_unc > 0.0;

    std::vector<std::size_t> order(data_.count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 order_rng(derive_seed(config_.seed, "order", epoch));
    std::shuffle(order.begin(), order.end(), order_rng);
    std::mt19937_64 noise_rng(derive_seed(config_.seed, "noise", epoch));

    double recon_sum = 0.0, total_sum = 0.0, hinge_sum = 0.0;
    std::size_t batches = 0;
    double recon_since = 0.0;
    std::size_t steps_since = 0;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
        const std::size_t size = std::min(config_.batch_size, order.size() - start);
        if (size < 2) break;  // the usage regulariser needs two samples
        const DenseMatrix images = images_as_matrix(data_, std::span(order).subspan(start, size));
        const BatchNoise noise = draw_noise(noise_rng, size, mc.latent_dims, mc.categories);

        Graph g;
        ModelGraph mg(g, state_.model, true);
        const ObjectiveVars obj = build_phase1_objective(mg, images, noise);
        Var total = obj.total;
        double hinge = 0.0;
        if (hinge_on) {
            const HingeVars h = build_hinge(mg, obj, config_.calibration.hinge_batch, state_.cal.c, config_.lambda_unc);
            total = g.add(total, h.loss);
            hinge = g.scalar_value(h.loss);
        }
        const double loss = g.scalar_value(total);
        const double recon = g.scalar_value(obj.vae.recon);
        last_losses_ = {{"total", loss},
                        {"recon", recon},
                        {"consistency", g.scalar_value(obj.vae.consistency)},
                        {"kl", g.scalar_value(obj.vae.kl)},
                        {"mi", g.scalar_value(obj.mi)},
                        {"usage", g.scalar_value(obj.usage)},
                        {"hinge", hinge}};
        if (!std::isfinite(loss))
            throw NumericalAbort("non-finite loss at step " + std::to_string(state_.global_step + 1) + " (phase " +
                                 std::to_string(phase) + ", epoch " + std::to_string(epoch) + ")");
        g.backward(total);
        const auto grads = g.gradients();
        for (const auto& [name, grad] : grads)
            if (!grad.all_finite())
                throw NumericalAbort("non-finite gradient for '" + name + "' at step " +
                                     std::to_string(state_.global_step + 1));
        adam_update(state_.model.params(), grads, adam_settings(config_));
        ++state_.global_step;

        recon_sum += recon;
        total_sum += loss;
        hinge_sum += hinge;
        ++batches;
        recon_since += recon;
        ++steps_since;
        if (state_.global_step % config_.calibration.diag_interval == 0) {
            diagnose(phase, epoch, recon_since / static_cast<double>(steps_since));
            recon_since = 0.0;
            steps_since = 0;
        }
    }

    EpochRow row;
    row.epoch = epoch;
    row.phase = phase;
    row.recon = batches ? recon_sum / static_cast<double>(batches) : kNaN;
    row.total = batches ? total_sum / static_cast<double>(batches) : kNaN;
    row.hinge = batches ? hinge_sum / static_cast<double>(batches) : kNaN;
    row.c = kNaN;
    row.f_active = kNaN;
    if (phase == 2) {
        const bool have_stats = state_.stats.all_initialized();
        const double f = have_stats ? active_fraction(state_.stats, state_.cal.c) : kNaN;
        if (state_.cal.freeze_epochs_remaining > 0)
            --state_.cal.freeze_epochs_remaining;
        else if (have_stats)
            state_.cal = update_c(state_.cal, f);
        row.c = state_.cal.c;
        row.f_active = f;
    }
    log_.epochs.push_back(row);
    ++state_.epochs_done;
}

void Trainer::run(const std::function<void(const Trainer&)>& after_epoch) {
    while (!finished()) {
        run_epoch();
        if (after_epoch) after_epoch(*this);
    }
}

TrainerState train_phase1(const TrainConfig& config, const Dataset& data, TrainLog* log) {
    TrainConfig c = config;
    c.epochs_phase2 = 0;
    Trainer trainer(c, data);
    trainer.run();
    if (log) *log = trainer.log();
    return trainer.state();
}

TrainerState train_phase2(const TrainConfig& config, const Dataset& data, TrainerState phase1, TrainLog* log) {
    if (phase1.epochs_done != config.epochs_phase1)
        throw InvalidStateError("train_phase2: state has not completed exactly epochs_phase1 epochs");
    Trainer trainer(config, data, std::move(phase1));
    trainer.begin_phase2();
    trainer.run();
    if (log) *log = trainer.log();
    return trainer.state();
}

Dataset dataset_for(const TrainConfig& config) {
    if (config.dataset.path.empty())
        return generate_dataset(config.dataset.count, config.dataset.side, config.dataset.seed);
    Dataset data = load_dataset(config.dataset.path);
    if (data.side != config.model.image_side)
        throw DimensionError("dataset '" + config.dataset.path + "' has side " + std::to_string(data.side) +
                             ", model.image_side is " + std::to_string(config.model.image_side));
    return data;
}

void write_diagnostics_csv(const std::vector<DiagnosticRow>& rows, const std::string& path) {
    std::ofstream out = open_text(path);
    out << "step,phase,i,j,D,Delta,Dbar,Deltabar,r,C,R,f_active\n";
    for (const auto& r : rows)
        out << r.step << ',' << r.phase << ',' << r.i << ',' << r.j << ',' << num(r.d) << ',' << num(r.delta) << ','
            << num(r.d_bar) << ',' << num(r.delta_bar) << ',' << num(r.r) << ',' << num(r.c) << ',' << num(r.ratio)
            << ',' << num(r.f_active) << '\n';
    finish_text(out, path);
}

void write_phases_csv(const std::vector<IntervalRow>& rows, const std::string& path) {
    std::ofstream out = open_text(path);
    out << "step,phase,epoch,recon,delta_mean,d_mean,C,R_bar,f_active\n";
    for (const auto& r : rows)
        out << r.step << ',' << r.phase << ',' << r.epoch << ',' << num(r.recon) << ',' << num(r.delta_mean) << ','
            << num(r.d_mean) << ',' << num(r.c) << ',' << num(r.r_bar) << ',' << num(r.f_active) << '\n';
    finish_text(out, path);
}

void write_epochs_csv(const std::vector<EpochRow>& rows, const std::string& path) {
    std::ofstream out = open_text(path);
    out << "epoch,phase,recon,total,hinge,C,f_active\n";
    for (const auto& r : rows)
        out << r.epoch << ',' << r.phase << ',' << num(r.recon) << ',' << num(r.total) << ',' << num(r.hinge) << ','
            << num(r.c) << ',' << num(r.f_active) << '\n';
    finish_text(out, path);
}

namespace {

using nlohmann::json;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double last_recon(const TrainLog& log, int phase) {
    for (auto it = log.epochs.rbegin(); it != log.epochs.rend(); ++it)
        if (it->phase == phase) return it->recon;
    return kNaN;
}

json build_report(const TrainConfig& config, const Trainer& trainer, const std::string& status,
                  const std::string& failure_stage) {
    const TrainerState& s = trainer.state();
    const TrainLog& log = trainer.log();
    const double eps = config.calibration.eps_num;
    const bool phase2_ran = s.epochs_done > config.epochs_phase1;

    json report;
    report["status"] = status;
    report["failure_stage"] = failure_stage.empty() ? json(nullptr) : json(failure_stage);
    report["seed"] = config.seed;
    report["phase2"] = config.epochs_phase2 == 0 ? "skipped" : (phase2_ran ? "completed" : "not reached");
    report["epochs_completed"] = s.epochs_done;
    report["global_steps"] = s.global_step;

    // C_emp for a Phase-1-only run is reported from the Phase-1 statistics
    // without entering Phase 2.
    double c_emp = kNaN, c_final = kNaN;
    const PairStats* pair_source = &s.stats;
    if (s.calibrated) {
        c_emp = s.cal.c_emp;
        c_final = s.cal.c;
        if (!s.stats.all_initialized()) pair_source = &s.phase1_stats;
    } else if (s.stats.all_initialized()) {
        c_emp = calibrate_c(scale_ratios(s.stats, eps), config.calibration.percentile, config.calibration.c_min,
                            config.calibration.c_max);
        c_final = c_emp;
    }
    json history = json::array();
    for (const auto& e : log.epochs)
        if (e.phase == 2) history.push_back({{"epoch", e.epoch}, {"C", e.c}, {"f_active", finite_or_null(e.f_active)}});
    report["calibration"] = {
        {"C_emp", finite_or_null(c_emp)},
        {"C_final", finite_or_null(c_final)},
        {"C_min", config.calibration.c_min},
        {"C_max", config.calibration.c_max},
        {"percentile", config.calibration.percentile},
        {"phase1_f_active",
         s.calibrated ? json(s.phase1_f_active)
                      : (std::isfinite(c_emp) ? json(active_fraction(s.stats, c_emp)) : json(nullptr))},
        {"history", history},
    };

    json pairs = json::array();
    if (pair_source->all_initialized() && std::isfinite(c_final)) {
        const StabilityRatio ratio = stability_ratio(*pair_source, c_final, eps);
        const auto idx = all_pairs(pair_source->dims());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& e = pair_source->entries()[k];
            pairs.push_back({{"i", idx[k].i},
                             {"j", idx[k].j},
                             {"Dbar", e.d_mean},
                             {"Deltabar", e.delta_mean},
                             {"r", e.delta_mean / (e.d_mean + eps)},
                             {"R", ratio.per_pair[k]},
                             {"count", e.count}});
        }
        report["R_bar"] = ratio.mean;
        report["f_active_final"] = active_fraction(*pair_source, c_final);
    }
    report["pairs"] = pairs;
    report["recon"] = {{"phase1_final_epoch", finite_or_null(last_recon(log, 1))},
                       {"phase2_final_epoch", finite_or_null(last_recon(log, 2))}};
    return report;
}

}  // namespace

RunResult run_curriculum(const TrainConfig& config, const std::string& out_dir) {
    return run_curriculum(config, dataset_for(config), out_dir);
}

RunResult run_curriculum(const TrainConfig& config, const Dataset& data, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    {
        std::ofstream out = open_text((dir / "config.json").string());
        out << config_to_json(config).dump(2) << '\n';
        finish_text(out, (dir / "config.json").string());
    }

    Trainer trainer(config, data);
    auto write_series = [&] {
        write_diagnostics_csv(trainer.log().diagnostics, (dir / "diagnostics.csv").string());
        write_phases_csv(trainer.log().intervals, (dir / "phases.csv").string());
        write_epochs_csv(trainer.log().epochs, (dir / "epochs.csv").string());
    };
    auto write_report = [&](const json& report) {
        std::ofstream out = open_text((dir / "report.json").string());
        out << report.dump(2) << '\n';
        finish_text(out, (dir / "report.json").string());
    };

    std::string stage = "phase1";
    bool phase1_saved = false;
    try {
        while (true) {
            if (!phase1_saved && trainer.state().epochs_done == config.epochs_phase1) {
                save_checkpoint((dir / "checkpoint_phase1.bin").string(), config, trainer.state());
                phase1_saved = true;
            }
            if (trainer.finished()) break;
            if (trainer.next_phase() == 2 && !trainer.state().calibrated) {
                stage = "calibration";
                trainer.begin_phase2();
            }
            stage = trainer.next_phase() == 1 ? "phase1" : "phase2";
            trainer.run_epoch();
        }

        stage = "evaluation";
        const Model& model = trainer.state().model;
        std::vector<std::size_t> eval_rows(std::min(config.eval_count, data.count()));
        std::iota(eval_rows.begin(), eval_rows.end(), std::size_t{0});
        const double recon_eval = reconstruction_error(model, images_as_matrix(data, eval_rows));
        const FvmResult fvm =
            fvm_score(model_latents(model), data,
                      {config.fvm_votes, config.fvm_samples_per_vote, derive_seed(config.seed, "fvm", 0)});

        save_checkpoint((dir / "checkpoint.bin").string(), config, trainer.state());
        write_series();
        json report = build_report(config, trainer, "completed", "");
        report["recon"]["eval"] = recon_eval;
        report["recon"]["eval_images"] = eval_rows.size();
        report["fvm"] = {{"score", fvm.score},
                         {"active_dims", fvm.active_dims},
                         {"votes", config.fvm_votes},
                         {"samples_per_vote", config.fvm_samples_per_vote}};
        write_report(report);
        return {trainer.state(), trainer.log(), report};
    } catch (const std::exception& e) {
        write_series();
        json report = build_report(config, trainer, "aborted", stage);
        report["error"] = e.what();
        json losses = json::object();
        for (const auto& [name, v] : trainer.last_losses()) losses[name] = finite_or_null(v);
        report["last_batch_losses"] = losses;
        write_report(report);
        throw;
    }
}

}  // namespace lgvae
