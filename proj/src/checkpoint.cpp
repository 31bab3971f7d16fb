#include "lgvae/checkpoint.hpp"

#include <cstring>

#include "byteio.hpp"
#include "lgvae/errors.hpp"

namespace lgvae {

namespace {

constexpr char kMagic[4] = {'L', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_matrix(byteio::Writer& w, const DenseMatrix& m) {
    for (double v : m.data()) w.f64(v);
}

DenseMatrix read_matrix(byteio::Reader& r, std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = r.f64();
    return DenseMatrix(rows, cols, std::move(v));
}

void write_stats(byteio::Writer& w, const PairStats& s) {
    w.u64(s.dims());
    for (const auto& e : s.entries()) {
        w.f64(e.d_mean);
        w.f64(e.delta_mean);
        w.u64(e.count);
    }
}

PairStats read_stats(byteio::Reader& r, std::size_t expected_dims) {
    const std::size_t dims = r.u64();
    if (dims != expected_dims) throw DimensionError("checkpoint: pair statistics do not match latent_dims");
    PairStats s(dims);
    for (const PairIndex& p : all_pairs(dims)) {
        PairStats::Entry e;
        e.d_mean = r.f64();
        e.delta_mean = r.f64();
        e.count = r.u64();
        s.set(p.i, p.j, e);
    }
    return s;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const TrainConfig& config, const TrainerState& state) {
    byteio::Writer w;
    w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
    w.u32(kVersion);
    w.str(config_to_json(config).dump());
    w.u64(state.epochs_done);
    w.u64(state.global_step);
    w.u32(state.calibrated ? 1 : 0);
    w.f64(state.phase1_f_active);

    const CalibrationState& c = state.cal;
    for (double v : {c.c, c.c_emp, c.c_min, c.c_max, c.eta_c, c.f_target, c.eps_num}) w.f64(v);
    w.u64(c.freeze_epochs_remaining);
    write_stats(w, state.stats);
    write_stats(w, state.phase1_stats);

    const ParameterSet& params = state.model.params();
    w.u64(params.step());
    w.u64(params.slots().size());
    for (const auto& [name, slot] : params.slots()) {
        w.str(name);
        w.u64(slot.value.rows());
        w.u64(slot.value.cols());
        write_matrix(w, slot.value);
        write_matrix(w, slot.first_moment);
        write_matrix(w, slot.second_moment);
    }
    return w.bytes();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw InvalidInputError("checkpoint: bad magic");
    byteio::Reader r(bytes);
    r.raw(4);
    if (r.u32() != kVersion) throw InvalidInputError("checkpoint: unsupported version");

    TrainConfig config;
    try {
        config = config_from_json(nlohmann::json::parse(r.str()));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("checkpoint: corrupt configuration echo: ") + e.what());
    }
    const std::uint64_t epochs_done = r.u64();
    const std::uint64_t global_step = r.u64();
    const bool calibrated = r.u32() != 0;
    const double phase1_f_active = r.f64();

    CalibrationState cal;
    for (double* v : {&cal.c, &cal.c_emp, &cal.c_min, &cal.c_max, &cal.eta_c, &cal.f_target, &cal.eps_num})
        *v = r.f64();
    cal.freeze_epochs_remaining = r.u64();
    PairStats stats = read_stats(r, config.model.latent_dims);
    PairStats phase1_stats = read_stats(r, config.model.latent_dims);

    ParameterSet params;
    params.set_step(r.u64());
    const std::size_t count = r.u64();
    for (std::size_t k = 0; k < count; ++k) {
        const std::string name = r.str();
        const std::size_t rows = r.u64();
        const std::size_t cols = r.u64();
        params.add(name, read_matrix(r, rows, cols));
        ParameterSet::Slot& slot = params.mutable_slot(name);
        slot.first_moment = read_matrix(r, rows, cols);
        slot.second_moment = read_matrix(r, rows, cols);
    }
    if (!r.done()) throw InvalidInputError("checkpoint: trailing bytes");

    TrainerState state{Model(config.model, std::move(params)), std::move(stats), std::move(phase1_stats), cal,
                       epochs_done, global_step, calibrated, phase1_f_active};
    return {config, std::move(state)};
}

void save_checkpoint(const std::string& path, const TrainConfig& config, const TrainerState& state) {
    byteio::write_file_atomic(path, serialize_checkpoint(config, state));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(byteio::read_file(path)); }

}  // namespace lgvae
