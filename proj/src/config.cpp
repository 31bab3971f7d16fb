#include "lgvae/config.hpp"

#include <fstream>
#include <cstdint>
#include <functional>
#include <map>
#include <type_traits>

namespace lgvae {

using nlohmann::json;

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed fields are read as size_t");

// Walks one JSON object, dispatching each key to a typed field and rejecting
// anything it does not know.
class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError(where("") + ": expected an object");
    }

    template <class T>
    Section& field(const std::string& key, T& target) {
        handlers_[key] = [this, key, &target](const json& v) { read(key, v, target); };
        return *this;
    }

    Section& section(const std::string& key, const std::function<void(const json&, const std::string&)>& fn) {
        handlers_[key] = [this, key, fn](const json& v) { fn(v, where(key)); };
        return *this;
    }

    void apply() {
        for (const auto& [key, value] : doc_.items()) {
            auto it = handlers_.find(key);
            if (it == handlers_.end()) throw ConfigError("unknown config key '" + where(key) + "'");
            it->second(value);
        }
    }

private:
    std::string where(const std::string& key) const {
        if (path_.empty()) return key;
        return key.empty() ? path_ : path_ + "." + key;
    }

    void read(const std::string& key, const json& v, double& out) {
        if (!v.is_number()) throw ConfigError("config key '" + where(key) + "' must be a number");
        out = v.get<double>();
    }
    void read(const std::string& key, const json& v, std::size_t& out) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
            throw ConfigError("config key '" + where(key) + "' must be a non-negative integer");
        out = v.get<std::size_t>();
    }
    void read(const std::string& key, const json& v, bool& out) {
        if (!v.is_boolean()) throw ConfigError("config key '" + where(key) + "' must be a boolean");
        out = v.get<bool>();
    }
    void read(const std::string& key, const json& v, std::string& out) {
        if (!v.is_string()) throw ConfigError("config key '" + where(key) + "' must be a string");
        out = v.get<std::string>();
    }

    const json& doc_;
    std::string path_;
    std::map<std::string, std::function<void(const json&)>> handlers_;
};

void read_model(const json& doc, const std::string& path, ModelConfig& m) {
    Section(doc, path)
        .field("image_side", m.image_side)
        .field("latent_dims", m.latent_dims)
        .field("group_side", m.group_side)
        .field("categories", m.categories)
        .field("hidden_width", m.hidden_width)
        .field("group_hidden_width", m.group_hidden_width)
        .field("generator_init_scale", m.generator_init_scale)
        .field("embedding_init_scale", m.embedding_init_scale)
        .field("alpha", m.alpha)
        .field("beta", m.beta)
        .field("lambda_mi", m.lambda_mi)
        .field("lambda_usage", m.lambda_usage)
        .field("temperature", m.temperature)
        .field("logvar_min", m.logvar_min)
        .field("logvar_max", m.logvar_max)
        .field("mi_grad_to_decoder", m.mi_grad_to_decoder)
        .apply();
}

void read_calibration(const json& doc, const std::string& path, CalibrationConfig& c) {
    Section(doc, path)
        .field("percentile", c.percentile)
        .field("eta_c", c.eta_c)
        .field("f_target", c.f_target)
        .field("c_min", c.c_min)
        .field("c_max", c.c_max)
        .field("freeze_epochs", c.freeze_epochs)
        .field("diag_interval", c.diag_interval)
        .field("eps_num", c.eps_num)
        .field("diag_batch", c.diag_batch)
        .field("diag_draws", c.diag_draws)
        .field("hinge_batch", c.hinge_batch)
        .apply();
}

void read_dataset(const json& doc, const std::string& path, DatasetConfig& d) {
    Section(doc, path)
        .field("path", d.path)
        .field("count", d.count)
        .field("side", d.side)
        .field("seed", d.seed)
        .apply();
}

void require(bool ok, const std::string& key, const std::string& rule) {
    if (!ok) throw ConfigError("config key '" + key + "': " + rule);
}

}  // namespace

TrainConfig config_from_json(const json& doc) {
    TrainConfig c;
    Section(doc, "")
        .field("seed", c.seed)
        .field("epochs_phase1", c.epochs_phase1)
        .field("epochs_phase2", c.epochs_phase2)
        .field("batch_size", c.batch_size)
        .field("learning_rate", c.learning_rate)
        .field("adam_beta1", c.adam_beta1)
        .field("adam_beta2", c.adam_beta2)
        .field("adam_eps", c.adam_eps)
        .field("lambda_unc", c.lambda_unc)
        .field("reset_optimizer_phase2", c.reset_optimizer_phase2)
        .field("fvm_votes", c.fvm_votes)
        .field("fvm_samples_per_vote", c.fvm_samples_per_vote)
        .field("eval_count", c.eval_count)
        .section("model", [&](const json& v, const std::string& p) { read_model(v, p, c.model); })
        .section("calibration",
                 [&](const json& v, const std::string& p) { read_calibration(v, p, c.calibration); })
        .section("dataset", [&](const json& v, const std::string& p) { read_dataset(v, p, c.dataset); })
        .apply();
    validate(c);
    return c;
}

void validate(const TrainConfig& c) {
    const ModelConfig& m = c.model;
    const CalibrationConfig& k = c.calibration;
    require(c.batch_size >= 1, "batch_size", "must be >= 1");
    require(c.learning_rate > 0.0, "learning_rate", "must be > 0");
    require(c.lambda_unc >= 0.0, "lambda_unc", "must be >= 0");
    require(m.alpha >= 0.0, "model.alpha", "must be >= 0");
    require(m.beta >= 0.0, "model.beta", "must be >= 0");
    require(m.lambda_mi >= 0.0, "model.lambda_mi", "must be >= 0");
    require(m.lambda_usage >= 0.0, "model.lambda_usage", "must be >= 0");
    require(m.temperature > 0.0, "model.temperature", "must be > 0");
    require(m.latent_dims >= 2, "model.latent_dims", "must be >= 2");
    require(m.group_side >= 2, "model.group_side", "must be >= 2");
    require(m.categories >= 2, "model.categories", "must be >= 2");
    require(m.hidden_width >= 1, "model.hidden_width", "must be >= 1");
    require(m.group_hidden_width >= 1, "model.group_hidden_width", "must be >= 1");
    require(m.image_side >= 12, "model.image_side", "must be >= 12");
    require(m.logvar_min < m.logvar_max, "model.logvar_min", "must be < logvar_max");
    require(m.generator_init_scale >= 0.0, "model.generator_init_scale", "must be >= 0");
    require(k.c_min > 0.0 && k.c_min < k.c_max, "calibration.c_min", "must satisfy 0 < c_min < c_max");
    require(k.percentile >= 0.0 && k.percentile <= 100.0, "calibration.percentile", "must be in [0,100]");
    require(k.f_target >= 0.0 && k.f_target <= 1.0, "calibration.f_target", "must be in [0,1]");
    require(k.eps_num > 0.0, "calibration.eps_num", "must be > 0");
    require(k.diag_interval >= 1, "calibration.diag_interval", "must be >= 1");
    require(k.diag_batch >= 1, "calibration.diag_batch", "must be >= 1");
    require(k.diag_draws >= 1, "calibration.diag_draws", "must be >= 1");
    require(k.hinge_batch >= 1, "calibration.hinge_batch", "must be >= 1");
    require(c.dataset.count >= 1, "dataset.count", "must be >= 1");
    require(c.dataset.side == m.image_side, "dataset.side", "must equal model.image_side");
    require(c.fvm_votes >= 10, "fvm_votes", "must be >= 10");
    require(c.fvm_samples_per_vote >= 2, "fvm_samples_per_vote", "must be >= 2");
    require(c.eval_count >= 1, "eval_count", "must be >= 1");
}

json config_to_json(const TrainConfig& c) {
    const ModelConfig& m = c.model;
    const CalibrationConfig& k = c.calibration;
    return json{
        {"seed", c.seed},
        {"epochs_phase1", c.epochs_phase1},
        {"epochs_phase2", c.epochs_phase2},
        {"batch_size", c.batch_size},
        {"learning_rate", c.learning_rate},
        {"adam_beta1", c.adam_beta1},
        {"adam_beta2", c.adam_beta2},
        {"adam_eps", c.adam_eps},
        {"lambda_unc", c.lambda_unc},
        {"reset_optimizer_phase2", c.reset_optimizer_phase2},
        {"fvm_votes", c.fvm_votes},
        {"fvm_samples_per_vote", c.fvm_samples_per_vote},
        {"eval_count", c.eval_count},
        {"model",
         {{"image_side", m.image_side},
          {"latent_dims", m.latent_dims},
          {"group_side", m.group_side},
          {"categories", m.categories},
          {"hidden_width", m.hidden_width},
          {"group_hidden_width", m.group_hidden_width},
          {"generator_init_scale", m.generator_init_scale},
          {"embedding_init_scale", m.embedding_init_scale},
          {"alpha", m.alpha},
          {"beta", m.beta},
          {"lambda_mi", m.lambda_mi},
          {"lambda_usage", m.lambda_usage},
          {"temperature", m.temperature},
          {"logvar_min", m.logvar_min},
          {"logvar_max", m.logvar_max},
          {"mi_grad_to_decoder", m.mi_grad_to_decoder}}},
        {"calibration",
         {{"percentile", k.percentile},
          {"eta_c", k.eta_c},
          {"f_target", k.f_target},
          {"c_min", k.c_min},
          {"c_max", k.c_max},
          {"freeze_epochs", k.freeze_epochs},
          {"diag_interval", k.diag_interval},
          {"eps_num", k.eps_num},
          {"diag_batch", k.diag_batch},
          {"diag_draws", k.diag_draws},
          {"hinge_batch", k.hinge_batch}}},
        {"dataset",
         {{"path", c.dataset.path},
          {"count", c.dataset.count},
          {"side", c.dataset.side},
          {"seed", c.dataset.seed}}},
    };
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open config '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(doc);
}

}  // namespace lgvae
