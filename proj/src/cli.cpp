#include "lgvae/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "lgvae/checkpoint.hpp"
#include "lgvae/config.hpp"
#include "lgvae/diagnostics.hpp"
#include "lgvae/errors.hpp"
#include "lgvae/toydata.hpp"
#include "lgvae/trainer.hpp"

namespace lgvae::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Bad flags or inputs that are not covered by a library error type.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int digits) {
    if (!std::isfinite(v)) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double json_number(const json& v) { return v.is_number() ? v.get<double>() : kNaN; }

struct GenerateArgs {
    std::size_t count = 2048;
    std::size_t side = 16;
    std::uint64_t seed = 7;
    std::string out;
};

int generate_data(const GenerateArgs& a, std::ostream& out) {
    const Dataset data = generate_dataset(a.count, a.side, a.seed);
    save_dataset(data, a.out);
    out << "wrote " << data.count() << " images of " << a.side << "x" << a.side << " to " << a.out << "\n";
    out << "checksum " << dataset_checksum(data) << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string config;
    std::string out_dir;
};

std::uint64_t seed_from_env(const char* value) {
    const std::string s(value);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used, 10);
    } catch (const std::exception&) {
        used = 0;
    }
    if (s.empty() || used != s.size() || s.front() == '-')
        throw UsageError(std::string(kSeedEnv) + " must be a non-negative integer, got '" + s + "'");
    return v;
}

int train(const TrainArgs& a, std::ostream& out) {
    TrainConfig config = load_config(a.config);
    if (const char* env = std::getenv(kSeedEnv)) config.seed = seed_from_env(env);
    if (!config.dataset.path.empty() && !fs::exists(config.dataset.path))
        throw UsageError("dataset.path '" + config.dataset.path + "' does not exist");
    const RunResult result = run_curriculum(config, a.out_dir);
    const json& r = result.report;
    out << "run complete: " << a.out_dir << "\n";
    out << "  phase2        " << r["phase2"].get<std::string>() << "\n";
    out << "  recon (eval)  " << fixed(json_number(r["recon"]["eval"]), 4) << "\n";
    out << "  FVM           " << fixed(json_number(r["fvm"]["score"]), 4) << "\n";
    out << "  C_emp         " << fixed(json_number(r["calibration"]["C_emp"]), 6) << "\n";
    out << "  C final       " << fixed(json_number(r["calibration"]["C_final"]), 6) << "\n";
    return kExitOk;
}

struct DiagnoseArgs {
    std::string checkpoint;
    std::string data;
    std::string pairs = "all";
    std::string out;
    std::optional<std::uint64_t> seed;
};

std::vector<PairIndex> parse_pairs(const std::string& spec, std::size_t dims) {
    if (spec == "all") return all_pairs(dims);
    const auto comma = spec.find(',');
    std::size_t i = 0, j = 0;
    bool ok = comma != std::string::npos;
    if (ok) {
        try {
            std::size_t used_i = 0, used_j = 0;
            const std::string a = spec.substr(0, comma), b = spec.substr(comma + 1);
            i = std::stoul(a, &used_i);
            j = std::stoul(b, &used_j);
            ok = used_i == a.size() && used_j == b.size() && a.front() != '-' && b.front() != '-';
        } catch (const std::exception&) {
            ok = false;
        }
    }
    if (!ok) throw UsageError("--pairs must be 'all' or 'i,j', got '" + spec + "'");
    if (!(i < j && j < dims))
        throw UsageError("--pairs " + spec + ": need i < j < " + std::to_string(dims));
    return {{i, j}};
}

int diagnose(const DiagnoseArgs& a, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const TrainConfig& config = ck.config;
    const Model& model = ck.state.model;
    const Dataset data = load_dataset(a.data);
    if (data.side != config.model.image_side)
        throw DimensionError("dataset side " + std::to_string(data.side) + " does not match checkpoint image_side " +
                             std::to_string(config.model.image_side));
    const std::vector<PairIndex> pairs = parse_pairs(a.pairs, config.model.latent_dims);

    const std::vector<std::size_t> base = diagnostic_indices(config, data.count());
    std::vector<std::size_t> rows;
    for (std::size_t k = 0; k < config.calibration.diag_draws; ++k) rows.insert(rows.end(), base.begin(), base.end());
    const DenseMatrix images = images_as_matrix(data, rows);
    const DenseMatrix base_images = images_as_matrix(data, base);
    const std::uint64_t seed = derive_seed(a.seed.value_or(config.seed), "diagnose", 0);
    const SwapInputs inputs = draw_swap_inputs(model, images, seed);
    const GeneratorBank bank = model.bank();
    const Decoder decoder = model_decoder(model);

    const double eps = config.calibration.eps_num;
    double c = kNaN;
    if (ck.state.calibrated) {
        c = ck.state.cal.c;
    } else if (ck.state.stats.all_initialized()) {
        c = calibrate_c(scale_ratios(ck.state.stats, eps), config.calibration.percentile, config.calibration.c_min,
                        config.calibration.c_max);
    }

    std::ostringstream csv;
    csv << "i,j,Dbar,Deltabar,r,C,R,U\n";
    for (const PairIndex& p : pairs) {
        double d = 0.0;
        for (std::size_t r = 0; r < inputs.t.rows(); ++r) d += bch_deviation(bank, p.i, p.j, inputs.t.row(r));
        d /= static_cast<double>(inputs.t.rows());
        const double delta = order_swap_delta(decoder, bank, inputs, p.i, p.j);
        const double u = manifold_sensitivity(model, base_images, p.i, p.j);
        csv << p.i << ',' << p.j << ',' << num(d) << ',' << num(delta) << ',' << num(delta / (d + eps)) << ','
            << num(c) << ',' << num(std::isfinite(c) ? delta / (c * d + eps) : kNaN) << ',' << num(u) << '\n';
    }
    if (a.out == "-") {
        out << csv.str();
    } else {
        std::ofstream f(a.out, std::ios::trunc);
        if (!f) throw std::ios_base::failure("cannot open '" + a.out + "' for writing");
        f << csv.str();
        f.close();
        if (!f) throw std::ios_base::failure("failed writing '" + a.out + "'");
        out << "wrote " << pairs.size() << " pair rows to " << a.out << "\n";
    }
    return kExitOk;
}

struct Table {
    std::map<std::string, std::size_t> columns;
    std::vector<std::vector<std::string>> rows;

    double number(std::size_t row, const std::string& column) const {
        auto it = columns.find(column);
        if (it == columns.end()) throw UsageError("series file lacks column '" + column + "'");
        return std::strtod(rows.at(row).at(it->second).c_str(), nullptr);
    }
};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

Table read_table(const fs::path& path) {
    if (!fs::exists(path)) throw UsageError("missing series file '" + path.string() + "'");
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open '" + path.string() + "'");
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw UsageError("empty series file '" + path.string() + "'");
    const auto header = split(line);
    for (std::size_t k = 0; k < header.size(); ++k) t.columns[header[k]] = k;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        t.rows.push_back(split(line));
        if (t.rows.back().size() != header.size())
            throw UsageError("malformed row in '" + path.string() + "'");
    }
    return t;
}

struct ReportArgs {
    std::string run_dir;
    std::string out;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
    f << text;
    f.close();
    if (!f) throw std::ios_base::failure("failed writing '" + path.string() + "'");
}

int report(const ReportArgs& a, std::ostream& out) {
    const fs::path run(a.run_dir);
    const Table phases = read_table(run / "phases.csv");
    const Table diags = read_table(run / "diagnostics.csv");
    if (!fs::exists(run / "report.json")) throw UsageError("missing '" + (run / "report.json").string() + "'");
    std::ifstream rin(run / "report.json");
    const json rep = json::parse(rin);
    const TrainConfig config = load_config((run / "config.json").string());
    const double eps = config.calibration.eps_num;
    const double c_emp = json_number(rep["calibration"]["C_emp"]);

    // Phase-1 rows carry no C; they are put on the same scale with C_emp.
    std::map<std::uint64_t, std::pair<double, std::size_t>> phase1_ratio;
    for (std::size_t r = 0; r < diags.rows.size(); ++r) {
        if (diags.number(r, "phase") != 1.0) continue;
        const auto step = static_cast<std::uint64_t>(diags.number(r, "step"));
        const double ratio = diags.number(r, "Delta") / (c_emp * diags.number(r, "D") + eps);
        auto& acc = phase1_ratio[step];
        acc.first += ratio;
        ++acc.second;
    }

    std::ostringstream top, middle, bottom;
    top << "step,phase,Delta_mean,scaled_CD_mean\n";
    middle << "step,phase,R_bar,boundary\n";
    bottom << "step,phase,recon\n";
    for (std::size_t r = 0; r < phases.rows.size(); ++r) {
        const auto step = static_cast<std::uint64_t>(phases.number(r, "step"));
        const int phase = static_cast<int>(phases.number(r, "phase"));
        const double c = phase == 1 ? c_emp : phases.number(r, "C");
        double r_bar = phases.number(r, "R_bar");
        if (phase == 1) {
            const auto it = phase1_ratio.find(step);
            r_bar = it == phase1_ratio.end() ? kNaN : it->second.first / static_cast<double>(it->second.second);
        }
        top << step << ',' << phase << ',' << num(phases.number(r, "delta_mean")) << ','
            << num(c * phases.number(r, "d_mean")) << '\n';
        middle << step << ',' << phase << ',' << num(r_bar) << ",1\n";
        bottom << step << ',' << phase << ',' << num(phases.number(r, "recon")) << '\n';
    }

    std::ostringstream summary;
    summary << "run: " << run.filename().string() << " (seed " << rep["seed"] << ", status "
            << rep["status"].get<std::string>() << ", phase 2 " << rep["phase2"].get<std::string>() << ")\n\n";
    summary << "Recon    FVM      C_emp       C_final     R_bar\n";
    const json& recon = rep["recon"];
    const double recon_eval = recon.contains("eval") ? json_number(recon["eval"]) : kNaN;
    const double fvm = rep.contains("fvm") ? json_number(rep["fvm"]["score"]) : kNaN;
    const double r_bar = rep.contains("R_bar") ? json_number(rep["R_bar"]) : kNaN;
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %-8s %-11s %-11s %s\n", fixed(recon_eval, 3).c_str(),
                  fixed(fvm, 3).c_str(), fixed(c_emp, 6).c_str(),
                  fixed(json_number(rep["calibration"]["C_final"]), 6).c_str(), fixed(r_bar, 3).c_str());
    summary << line;
    summary << "\nphase-1 final-epoch recon " << fixed(json_number(recon["phase1_final_epoch"]), 4)
            << ", phase-2 final-epoch recon " << fixed(json_number(recon["phase2_final_epoch"]), 4) << "\n";

    const fs::path dest(a.out);
    fs::create_directories(dest);
    write_text(dest / "panel_deformation.csv", top.str());
    write_text(dest / "panel_stability.csv", middle.str());
    write_text(dest / "panel_recon.csv", bottom.str());
    write_text(dest / "summary.txt", summary.str());
    out << summary.str();
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-phase Lie-group VAE with calibrated deformation-stability diagnostics", "lgvae"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate-data", "Render the procedural shapes dataset");
    gen_cmd->add_option("--count", gen.count, "Number of images")->capture_default_str();
    gen_cmd->add_option("--side", gen.side, "Image side in pixels")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Sampling seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output file")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Run the two-phase curriculum");
    train_cmd->add_option("--config", tr.config, "JSON configuration")->required();
    train_cmd->add_option("--out-dir", tr.out_dir, "Run directory")->required();

    DiagnoseArgs dg;
    auto* diag_cmd = app.add_subcommand("diagnose", "Pairwise D, Delta, r, R and U for a checkpoint");
    diag_cmd->add_option("--checkpoint", dg.checkpoint, "Checkpoint file")->required();
    diag_cmd->add_option("--data", dg.data, "Dataset file")->required();
    diag_cmd->add_option("--pairs", dg.pairs, "'all' or 'i,j'")->capture_default_str();
    diag_cmd->add_option("--out", dg.out, "CSV output ('-' for stdout)")->required();
    diag_cmd->add_option("--seed", dg.seed, "Seed for the latent draws (default: checkpoint seed)");

    ReportArgs rp;
    auto* report_cmd = app.add_subcommand("report", "Plot-ready series and a summary table for a run");
    report_cmd->add_option("--run-dir", rp.run_dir, "Run directory")->required();
    report_cmd->add_option("--out", rp.out, "Output directory")->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*gen_cmd) return generate_data(gen, out);
        if (*train_cmd) return train(tr, out);
        if (*diag_cmd) return diagnose(dg, out);
        if (*report_cmd) return report(rp, out);
    } catch (const NumericalAbort& e) {
        err << "numerical abort: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const ConfigError& e) {
        err << "invalid configuration: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::ios_base::failure& e) {
        err << "IO error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "IO error: " << e.what() << "\n";
        return kExitIo;
    } catch (const json::exception& e) {
        err << "malformed JSON: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::logic_error& e) {
        // DimensionError, InvalidInputError, InvalidStateError and UsageError
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitValidation;
}

}  // namespace lgvae::cli
