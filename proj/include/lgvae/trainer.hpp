#pragma once

// Two-phase curriculum. Phase 1 trains the unconstrained objective and
// accumulates pairwise D/Δ statistics; Phase 2 calibrates C from those
// statistics and adds the deformation-stability hinge.
//
// Every random draw comes from a stream keyed by (master seed, stream name,
// global epoch or step), so the training draws of epoch e do not depend on
// which phase it belongs to or on diagnostics having run.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lgvae/config.hpp"
#include "lgvae/diagnostics.hpp"
#include "lgvae/model.hpp"
#include "lgvae/toydata.hpp"

namespace lgvae {

std::uint64_t derive_seed(std::uint64_t master, const std::string& stream, std::uint64_t index);

struct TrainerState {
    Model model;
    PairStats stats;         // running means of the current phase
    PairStats phase1_stats;  // copy taken at the phase boundary
    CalibrationState cal;
    std::uint64_t epochs_done = 0;  // global epoch counter
    std::uint64_t global_step = 0;
    bool calibrated = false;
    double phase1_f_active = 0.0;  // f_active of the Phase-1 stats at C_emp

    bool operator==(const TrainerState&) const;
};

/// One row per pair per diagnostic evaluation. C, R and f_active are NaN in
/// Phase 1, before C exists.
struct DiagnosticRow {
    std::uint64_t step = 0;
    int phase = 1;
    std::size_t i = 0, j = 0;
    double d = 0.0, delta = 0.0;
    double d_bar = 0.0, delta_bar = 0.0;
    double r = 0.0;
    double c = 0.0;
    double ratio = 0.0;  // R_ij from this evaluation
    double f_active = 0.0;
};

/// Pair-averaged view of one diagnostic evaluation.
struct IntervalRow {
    std::uint64_t step = 0;
    int phase = 1;
    std::uint64_t epoch = 0;
    double recon = 0.0;  // mean training recon since the previous interval
    double delta_mean = 0.0;
    double d_mean = 0.0;
    double c = 0.0;
    double r_bar = 0.0;
    double f_active = 0.0;
};

struct EpochRow {
    std::uint64_t epoch = 0;
    int phase = 1;
    double recon = 0.0;  // mean over the epoch's batches
    double total = 0.0;
    double hinge = 0.0;
    double c = 0.0;
    double f_active = 0.0;
};

struct TrainLog {
    std::vector<DiagnosticRow> diagnostics;
    std::vector<IntervalRow> intervals;
    std::vector<EpochRow> epochs;
};

class Trainer {
public:
    /// Fresh model initialised from the "init" stream.
    Trainer(TrainConfig config, const Dataset& data);
    /// Continues from a saved state; throws DimensionError if it does not
    /// match the configuration.
    Trainer(TrainConfig config, const Dataset& data, TrainerState state);

    const TrainConfig& config() const noexcept { return config_; }
    const TrainerState& state() const noexcept { return state_; }
    const TrainLog& log() const noexcept { return log_; }

    std::uint64_t total_epochs() const noexcept { return config_.epochs_phase1 + config_.epochs_phase2; }
    bool finished() const noexcept { return state_.epochs_done >= total_epochs(); }
    /// Phase of the next epoch to run.
    int next_phase() const noexcept { return state_.epochs_done < config_.epochs_phase1 ? 1 : 2; }

    /// Calibrates C from the Phase-1 statistics. Runs automatically before
    /// the first Phase-2 epoch. Throws InvalidStateError if a pair has no
    /// samples.
    void begin_phase2();

    /// Runs the next epoch. Throws NumericalAbort on a non-finite loss.
    void run_epoch();
    void run(const std::function<void(const Trainer&)>& after_epoch = {});

    /// Loss components of the last batch, for abort reports.
    const std::vector<std::pair<std::string, double>>& last_losses() const noexcept { return last_losses_; }

private:
    void diagnose(int phase, std::uint64_t epoch, double recon_since_last);

    TrainConfig config_;
    const Dataset& data_;
    DenseMatrix diag_images_;
    TrainerState state_;
    TrainLog log_;
    std::vector<std::pair<std::string, double>> last_losses_;
};

/// Phase 1 only: the state after `epochs_phase1` epochs.
TrainerState train_phase1(const TrainConfig& config, const Dataset& data, TrainLog* log = nullptr);
/// Phase 2 from a Phase-1 state.
TrainerState train_phase2(const TrainConfig& config, const Dataset& data, TrainerState phase1,
                          TrainLog* log = nullptr);

/// Images of the held diagnostic batch: the first diag_batch entries of a
/// permutation drawn from the "diag_batch" stream.
std::vector<std::size_t> diagnostic_indices(const TrainConfig& config, std::size_t dataset_count);

/// Loads the configured dataset file, or generates it when no path is set.
Dataset dataset_for(const TrainConfig& config);

struct RunResult {
    TrainerState state;
    TrainLog log;
    nlohmann::json report;
};

/// Full curriculum with final evaluation. Writes config.json,
/// checkpoint_phase1.bin, checkpoint.bin, diagnostics.csv, phases.csv,
/// epochs.csv and report.json into `out_dir` (created if needed). On a
/// numerical abort the report records the failing stage and the exception is
/// rethrown.
RunResult run_curriculum(const TrainConfig& config, const std::string& out_dir);
RunResult run_curriculum(const TrainConfig& config, const Dataset& data, const std::string& out_dir);

void write_diagnostics_csv(const std::vector<DiagnosticRow>& rows, const std::string& path);
void write_phases_csv(const std::vector<IntervalRow>& rows, const std::string& path);
void write_epochs_csv(const std::vector<EpochRow>& rows, const std::string& path);

}  // namespace lgvae
