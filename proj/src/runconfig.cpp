#include "nbp/runconfig.hpp"

#include <fstream>
#include <set>

namespace nbp::io {

namespace {

// Strict object reader: every key must be consumed, extras are an error.
class strict_obj {
public:
    strict_obj(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw invalid_argument("config: " + where_ + " must be a JSON object");
    }

    template <class T>
    void opt(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw invalid_argument("config: bad value for " + where_ + "." + key + ": " + e.what());
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const nlohmann::json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw invalid_argument("config: unknown key '" + where_ + "." + it.key() + "'");
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace

void train_config::validate() const {
    if (epochs < 0) throw invalid_argument("train: epochs must be >= 0");
    if (tasks_per_epoch < 1 || batch_size < 1) throw invalid_argument("train: batch sizes must be positive");
    if (tasks_per_epoch % batch_size != 0)
        throw invalid_argument("train: tasks_per_epoch must be a multiple of batch_size");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw invalid_argument("train: ema_decay must lie in (0,1)");
    if (warmup_epochs < 0 || decay_epochs < 1) throw invalid_argument("train: bad warmup/decay epochs");
    if (lr_start <= 0 || lr_peak <= 0 || lr_end <= 0) throw invalid_argument("train: learning rates must be positive");
    if (log_every < 1) throw invalid_argument("train: log_every must be >= 1");
    if (grad_clip <= 0) throw invalid_argument("train: grad_clip must be positive");
}

void eval_protocol::validate() const {
    if (n_samples < 2) throw invalid_argument("eval: n_samples must be >= 2");
    if (repaint < 1) throw invalid_argument("eval: repaint must be >= 1");
}

void data_config::validate() const {
    task.validate();
    if (lengthscale && !(*lengthscale > 0.0)) throw invalid_argument("data: lengthscale must be positive");
    if (n_tasks < 1) throw invalid_argument("data: n_tasks must be >= 1");
}

void run_config::validate() const {
    schedule.validate();
    denoiser.validate();
    dataset.validate();
    train.validate();
    eval.validate();
    if (diffusion.alignment == model::alignment_kind::identity && dataset.task.d_x != 1)
        throw invalid_argument("config: identity alignment needs d_x == 1 GP tasks (outputs are scalar)");
}

run_config parse_run_config(const nlohmann::json& j) {
    strict_obj root(j, "");
    if (!root.has("version")) throw invalid_argument("config: missing schema version");
    const int version = root.raw("version").get<int>();
    if (version != run_config::schema_version)
        throw invalid_argument("config: unsupported schema version " + std::to_string(version) +
                               " (expected " + std::to_string(run_config::schema_version) + ")");

    run_config rc;
    if (root.has("label")) rc.label = root.raw("label").get<std::string>();

    if (root.has("schedule")) {
        strict_obj o(root.raw("schedule"), "schedule");
        std::string kind = to_string(rc.schedule.kind);
        o.opt("kind", kind);
        rc.schedule.kind = sched::schedule_kind_from_string(kind);
        o.opt("timesteps", rc.schedule.timesteps);
        o.opt("beta_start", rc.schedule.beta_start);
        o.opt("beta_end", rc.schedule.beta_end);
        o.done();
    }
    if (root.has("denoiser")) {
        strict_obj o(root.raw("denoiser"), "denoiser");
        o.opt("layers", rc.denoiser.layers);
        o.opt("hidden", rc.denoiser.hidden);
        o.opt("heads", rc.denoiser.heads);
        rc.denoiser.t_embed_dim = rc.denoiser.hidden;
        o.opt("t_embed_dim", rc.denoiser.t_embed_dim);
        o.done();
    }
    if (root.has("diffusion")) {
        strict_obj o(root.raw("diffusion"), "diffusion");
        o.opt("bridge_enabled", rc.diffusion.bridge_enabled);
        std::string al = to_string(rc.diffusion.alignment);
        o.opt("alignment", al);
        rc.diffusion.alignment = model::alignment_kind_from_string(al);
        o.opt("literal_gamma_init", rc.diffusion.literal_gamma_init);
        if (o.has("affine")) {
            strict_obj a(o.raw("affine"), "diffusion.affine");
            auto mat = a.raw("matrix").get<std::vector<std::vector<double>>>();
            auto bias = a.raw("bias").get<std::vector<double>>();
            a.done();
            if (mat.empty() || mat[0].empty()) throw invalid_argument("config: empty affine matrix");
            num::dtensor m({mat.size(), mat[0].size()});
            for (std::size_t i = 0; i < mat.size(); ++i) {
                if (mat[i].size() != mat[0].size()) throw invalid_argument("config: ragged affine matrix");
                for (std::size_t k = 0; k < mat[i].size(); ++k) m[i * mat[0].size() + k] = mat[i][k];
            }
            rc.diffusion.affine_matrix = std::move(m);
            rc.diffusion.affine_bias = num::dtensor({bias.size()}, std::vector<double>(bias));
        }
        o.done();
        if (rc.diffusion.alignment == model::alignment_kind::custom_affine &&
            rc.diffusion.affine_matrix.numel() == 0)
            throw invalid_argument("config: custom_affine alignment needs diffusion.affine");
    }
    if (root.has("data")) {
        strict_obj o(root.raw("data"), "data");
        o.opt("d_x", rc.dataset.task.d_x);
        if (o.has("kernel")) {
            strict_obj k(o.raw("kernel"), "data.kernel");
            std::string kind = to_string(rc.dataset.kernel);
            k.opt("kind", kind);
            rc.dataset.kernel = data::kernel_kind_from_string(kind);
            if (k.has("lengthscale")) rc.dataset.lengthscale = k.raw("lengthscale").get<double>();
            k.done();
        }
        if (o.has("n_context_range")) {
            auto r = o.raw("n_context_range").get<std::vector<int>>();
            if (r.size() != 2) throw invalid_argument("config: data.n_context_range must be [lo, hi]");
            rc.dataset.task.n_context_lo = r[0];
            rc.dataset.task.n_context_hi = r[1];
        }
        o.opt("n_target", rc.dataset.task.n_target);
        o.opt("noise_sigma", rc.dataset.task.noise_sigma);
        if (o.has("x_domain")) {
            auto r = o.raw("x_domain").get<std::vector<double>>();
            if (r.size() != 2) throw invalid_argument("config: data.x_domain must be [lo, hi]");
            rc.dataset.task.x_domain_lo = r[0];
            rc.dataset.task.x_domain_hi = r[1];
        }
        std::string mm = to_string(rc.dataset.task.mask);
        o.opt("mask_mode", mm);
        rc.dataset.task.mask = data::mask_mode_from_string(mm);
        o.opt("n_channels", rc.dataset.task.n_channels);
        o.opt("n_masked_channels", rc.dataset.task.n_masked_channels);
        o.opt("n_tasks", rc.dataset.n_tasks);
        o.done();
    }
    if (root.has("train")) {
        strict_obj o(root.raw("train"), "train");
        o.opt("epochs", rc.train.epochs);
        o.opt("tasks_per_epoch", rc.train.tasks_per_epoch);
        o.opt("batch_size", rc.train.batch_size);
        o.opt("lr_start", rc.train.lr_start);
        o.opt("lr_peak", rc.train.lr_peak);
        o.opt("lr_end", rc.train.lr_end);
        o.opt("warmup_epochs", rc.train.warmup_epochs);
        o.opt("decay_epochs", rc.train.decay_epochs);
        o.opt("ema_decay", rc.train.ema_decay);
        o.opt("seed", rc.train.seed);
        std::string lk = to_string(rc.train.loss);
        o.opt("loss", lk);
        rc.train.loss = model::loss_kind_from_string(lk);
        o.opt("log_every", rc.train.log_every);
        o.opt("grad_clip", rc.train.grad_clip);
        o.done();
    }
    if (root.has("eval")) {
        strict_obj o(root.raw("eval"), "eval");
        o.opt("n_samples", rc.eval.n_samples);
        o.opt("repaint", rc.eval.repaint);
        o.opt("seed", rc.eval.seed);
        o.done();
    }
    root.done();
    rc.validate();
    return rc;
}

run_config load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw invalid_argument("config: malformed JSON in '" + path + "': " + e.what());
    }
    return parse_run_config(j);
}

nlohmann::json to_json(const run_config& rc) {
    nlohmann::json j;
    j["version"] = run_config::schema_version;
    j["label"] = rc.label;
    j["schedule"] = {{"kind", to_string(rc.schedule.kind)},
                     {"timesteps", rc.schedule.timesteps},
                     {"beta_start", rc.schedule.beta_start},
                     {"beta_end", rc.schedule.beta_end}};
    j["denoiser"] = {{"layers", rc.denoiser.layers},
                     {"hidden", rc.denoiser.hidden},
                     {"heads", rc.denoiser.heads},
                     {"t_embed_dim", rc.denoiser.t_embed_dim}};
    j["diffusion"] = {{"bridge_enabled", rc.diffusion.bridge_enabled},
                      {"alignment", to_string(rc.diffusion.alignment)},
                      {"literal_gamma_init", rc.diffusion.literal_gamma_init}};
    if (rc.diffusion.affine_matrix.numel()) {
        const auto& m = rc.diffusion.affine_matrix;
        std::vector<std::vector<double>> mat(m.shape()[0], std::vector<double>(m.shape()[1]));
        for (std::size_t i = 0; i < m.shape()[0]; ++i)
            for (std::size_t k = 0; k < m.shape()[1]; ++k) mat[i][k] = m[i * m.shape()[1] + k];
        j["diffusion"]["affine"] = {
            {"matrix", mat},
            {"bias", std::vector<double>(rc.diffusion.affine_bias.data(),
                                         rc.diffusion.affine_bias.data() + rc.diffusion.affine_bias.numel())}};
    }
    nlohmann::json d;
    d["d_x"] = rc.dataset.task.d_x;
    d["kernel"] = {{"kind", to_string(rc.dataset.kernel)}};
    if (rc.dataset.lengthscale) d["kernel"]["lengthscale"] = *rc.dataset.lengthscale;
    d["n_context_range"] = {rc.dataset.task.n_context_lo, rc.dataset.task.n_context_hi};
    d["n_target"] = rc.dataset.task.n_target;
    d["noise_sigma"] = rc.dataset.task.noise_sigma;
    d["x_domain"] = {rc.dataset.task.x_domain_lo, rc.dataset.task.x_domain_hi};
    d["mask_mode"] = to_string(rc.dataset.task.mask);
    d["n_channels"] = rc.dataset.task.n_channels;
    d["n_masked_channels"] = rc.dataset.task.n_masked_channels;
    d["n_tasks"] = rc.dataset.n_tasks;
    j["data"] = d;
    j["train"] = {{"epochs", rc.train.epochs},
                  {"tasks_per_epoch", rc.train.tasks_per_epoch},
                  {"batch_size", rc.train.batch_size},
                  {"lr_start", rc.train.lr_start},
                  {"lr_peak", rc.train.lr_peak},
                  {"lr_end", rc.train.lr_end},
                  {"warmup_epochs", rc.train.warmup_epochs},
                  {"decay_epochs", rc.train.decay_epochs},
                  {"ema_decay", rc.train.ema_decay},
                  {"seed", rc.train.seed},
                  {"loss", to_string(rc.train.loss)},
                  {"log_every", rc.train.log_every},
                  {"grad_clip", rc.train.grad_clip}};
    j["eval"] = {{"n_samples", rc.eval.n_samples}, {"repaint", rc.eval.repaint}, {"seed", rc.eval.seed}};
    return j;
}

model::diffusion_model<float> build_model(const run_config& rc) {
    rc.validate();
    auto scfg = rc.schedule;
    scfg.force_zero_bridge = !rc.diffusion.bridge_enabled;
    model::diffusion_model<float> m;
    m.schedule = sched::build_schedule(scfg);
    m.net_cfg = rc.denoiser;
    m.params = model::init_denoiser<float>(rc.denoiser, rc.train.seed);
    m.alignment.kind = rc.diffusion.alignment;
    m.alignment.matrix = rc.diffusion.affine_matrix;
    m.alignment.bias = rc.diffusion.affine_bias;
    m.bridge_enabled = rc.diffusion.bridge_enabled;
    return m;
}

}  // namespace nbp::io
