#include "gtasr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "gtasr/analysis.hpp"

namespace gtasr {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Independent stream per (seed, stage, iteration) so paired ablations see identical
// batches, timesteps and noise.
std::mt19937_64 iteration_rng(std::uint64_t seed, int stage, std::int64_t iteration) {
    return std::mt19937_64(mix(mix(seed, 0x5354414745ULL + static_cast<std::uint64_t>(stage)),
                               static_cast<std::uint64_t>(iteration)));
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? " " : "") + std::to_string(seeds[i]);
    return out;
}

void check_finite(double value, const char* what, std::int64_t iteration, int stage, const Batch& batch) {
    if (std::isfinite(value)) return;
    throw TrainError("non-finite " + std::string(what) + " at stage " + std::to_string(stage) + " iteration " +
                     std::to_string(iteration) + "; batch sample seeds: " + join_seeds(batch.seeds));
}

double value_of(const std::optional<Tensor>& t) { return t ? static_cast<double>(t->item()) : 0.0; }

LossContext make_context(const TrainConfig& cfg, const PerceptualEncoder& enc, const NoiseSchedule& schedule) {
    LossContext ctx;
    ctx.schedule = schedule;
    ctx.encoder = &enc;
    ctx.charbonnier_eps = cfg.charbonnier_eps;
    ctx.stab_mode = cfg.stab_mode;
    return ctx;
}

void emit(const TrainHooks& hooks, HookPoint p, std::int64_t i, const NetworkTriplet& nets) {
    if (hooks.on_event) hooks.on_event(p, i, nets);
}

NamedArray to_array(const std::string& name, const Shape& shape, std::span<const real> values) {
    NamedArray a;
    a.name = name;
    for (auto e : shape) a.extents.push_back(static_cast<std::uint32_t>(e));
    a.values.assign(values.begin(), values.end());
    return a;
}

void load_net(const Checkpoint& ck, const std::string& prefix, PredictorNet& net) {
    for (const auto& [name, tensor] : net.named_parameters()) {
        const NamedArray* a = ck.find(prefix + name);
        if (!a) throw CheckpointError("checkpoint is missing array " + prefix + name);
        if (a->values.size() != static_cast<std::size_t>(tensor.numel()))
            throw CheckpointError("checkpoint array " + prefix + name + " has the wrong size");
        Tensor t = tensor;  // shares storage
        auto d = t.mutable_data();
        std::copy(a->values.begin(), a->values.end(), d.begin());
    }
}

std::string stab_mode_name(StabChannelMode m) { return m == StabChannelMode::Average ? "average" : "duplicate"; }

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer

void adam_step(const std::vector<Tensor>& params, const std::vector<std::span<const real>>& grads, AdamState& state,
               const AdamParams& hp) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const Tensor& p : params) {
            state.m.emplace_back(static_cast<std::size_t>(p.numel()), real(0));
            state.v.emplace_back(static_cast<std::size_t>(p.numel()), real(0));
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: optimizer state does not match");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].size() != static_cast<std::size_t>(params[k].numel()) || state.m[k].size() != grads[k].size())
            throw std::invalid_argument("adam_step: gradient shape mismatch for parameter " + std::to_string(k));
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
    const real b1 = static_cast<real>(hp.beta1), b2 = static_cast<real>(hp.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k];
        auto w = p.mutable_data();
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const real g = grads[k][i];
            m[i] = b1 * m[i] + (1 - b1) * g;
            v[i] = b2 * v[i] + (1 - b2) * g * g;
            const double mhat = m[i] / bc1, vhat = v[i] / bc2;
            w[i] = static_cast<real>(w[i] - hp.lr * mhat / (std::sqrt(vhat) + hp.eps));
        }
    }
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, const AdamParams& hp) {
    std::vector<std::span<const real>> grads;
    for (const Tensor& p : params) {
        if (!p.has_grad()) throw std::invalid_argument("adam_step: parameter without a gradient buffer");
        grads.push_back(p.grad());
    }
    adam_step(params, grads, state, hp);
}

// ---------------------------------------------------------------------------
// Configuration

TrainConfig TrainConfig::from_config(const Config& c) {
    static const char* kKnown[] = {
        "seed", "stage", "iterations_stage1", "iterations_stage2", "sync_period", "batch", "lr", "adam.beta1",
        "adam.beta2", "adam.eps", "schedule.T", "schedule.T_late", "schedule.n_stage1", "schedule.n_stage2",
        "loss.lambda_ta", "loss.lambda_dtm", "loss.lambda_stab", "loss.lambda_rect", "loss.charbonnier_eps",
        "loss.percep_seed", "loss.stab_channel_mode", "data.size", "data.scale", "data.blur_min", "data.blur_max",
        "data.noise_min", "data.noise_max", "model.width", "log_interval", "val_count", "out_dir", "init"};
    for (const auto& [k, _] : c.entries()) {
        bool ok = false;
        for (const char* known : kKnown) ok = ok || k == known;
        if (!ok) throw ConfigError("unknown config key '" + k + "'");
    }

    TrainConfig t;
    t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(t.seed)));
    t.stage = static_cast<int>(c.get_int("stage", t.stage));
    t.iterations_stage1 = c.get_int("iterations_stage1", t.iterations_stage1);
    t.iterations_stage2 = c.get_int("iterations_stage2", t.iterations_stage2);
    t.sync_period = c.get_int("sync_period", t.sync_period);
    t.batch = static_cast<int>(c.get_int("batch", t.batch));
    t.adam.lr = c.get_double("lr", t.adam.lr);
    t.adam.beta1 = c.get_double("adam.beta1", t.adam.beta1);
    t.adam.beta2 = c.get_double("adam.beta2", t.adam.beta2);
    t.adam.eps = c.get_double("adam.eps", t.adam.eps);
    t.total_steps = static_cast<int>(c.get_int("schedule.T", t.total_steps));
    t.late_total_steps = static_cast<int>(c.get_int("schedule.T_late", t.late_total_steps));
    t.n_stage1 = c.get_double("schedule.n_stage1", t.n_stage1);
    t.n_stage2 = c.get_double("schedule.n_stage2", t.n_stage2);
    t.weights.ta = c.get_double("loss.lambda_ta", t.weights.ta);
    t.weights.dtm = c.get_double("loss.lambda_dtm", t.weights.dtm);
    t.weights.stab = c.get_double("loss.lambda_stab", t.weights.stab);
    t.weights.rect = c.get_double("loss.lambda_rect", t.weights.rect);
    t.charbonnier_eps = c.get_double("loss.charbonnier_eps", t.charbonnier_eps);
    t.percep_seed = static_cast<std::uint64_t>(c.get_int("loss.percep_seed", static_cast<long long>(t.percep_seed)));
    const std::string mode = c.get_string("loss.stab_channel_mode", stab_mode_name(t.stab_mode));
    if (mode == "average") t.stab_mode = StabChannelMode::Average;
    else if (mode == "duplicate") t.stab_mode = StabChannelMode::Duplicate;
    else throw ConfigError("loss.stab_channel_mode must be 'average' or 'duplicate', got '" + mode + "'");
    t.data.size = static_cast<int>(c.get_int("data.size", t.data.size));
    t.data.scale = static_cast<int>(c.get_int("data.scale", t.data.scale));
    t.data.blur_min = c.get_double("data.blur_min", t.data.blur_min);
    t.data.blur_max = c.get_double("data.blur_max", t.data.blur_max);
    t.data.noise_min = c.get_double("data.noise_min", t.data.noise_min);
    t.data.noise_max = c.get_double("data.noise_max", t.data.noise_max);
    t.model.width = static_cast<int>(c.get_int("model.width", t.model.width));
    t.log_interval = c.get_int("log_interval", t.log_interval);
    t.val_count = static_cast<int>(c.get_int("val_count", t.val_count));
    t.out_dir = c.get_string("out_dir", t.out_dir.string());
    t.init_checkpoint = c.get_string("init", t.init_checkpoint.string());
    t.validate();
    return t;
}

Config TrainConfig::to_config() const {
    Config c;
    auto num = [](double v) { return format_number(v); };
    c.set("seed", std::to_string(seed));
    c.set("stage", std::to_string(stage));
    c.set("iterations_stage1", std::to_string(iterations_stage1));
    c.set("iterations_stage2", std::to_string(iterations_stage2));
    c.set("sync_period", std::to_string(sync_period));
    c.set("batch", std::to_string(batch));
    c.set("lr", num(adam.lr));
    c.set("adam.beta1", num(adam.beta1));
    c.set("adam.beta2", num(adam.beta2));
    c.set("adam.eps", num(adam.eps));
    c.set("schedule.T", std::to_string(total_steps));
    c.set("schedule.T_late", std::to_string(late_total_steps));
    c.set("schedule.n_stage1", num(n_stage1));
    c.set("schedule.n_stage2", num(n_stage2));
    c.set("loss.lambda_ta", num(weights.ta));
    c.set("loss.lambda_dtm", num(weights.dtm));
    c.set("loss.lambda_stab", num(weights.stab));
    c.set("loss.lambda_rect", num(weights.rect));
    c.set("loss.charbonnier_eps", num(charbonnier_eps));
    c.set("loss.percep_seed", std::to_string(percep_seed));
    c.set("loss.stab_channel_mode", stab_mode_name(stab_mode));
    c.set("data.size", std::to_string(data.size));
    c.set("data.scale", std::to_string(data.scale));
    c.set("data.blur_min", num(data.blur_min));
    c.set("data.blur_max", num(data.blur_max));
    c.set("data.noise_min", num(data.noise_min));
    c.set("data.noise_max", num(data.noise_max));
    c.set("model.width", std::to_string(model.width));
    c.set("log_interval", std::to_string(log_interval));
    c.set("val_count", std::to_string(val_count));
    return c;
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
    if (iterations_stage1 < 0 || iterations_stage2 < 0) throw ConfigError("iteration counts must be >= 0");
    if (sync_period < 1) throw ConfigError("sync_period must be >= 1");
    if (stage == 2 && iterations_stage2 > 0 && sync_period > iterations_stage2)
        throw ConfigError("sync_period must not exceed iterations_stage2");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (!(adam.lr > 0)) throw ConfigError("lr must be > 0");
    if (total_steps < 1) throw ConfigError("schedule.T must be >= 1");
    if (late_total_steps < 0 || late_total_steps > total_steps) throw ConfigError("schedule.T_late must be in [0, T]");
    if (!(n_stage1 > 0) || !(n_stage2 > 0)) throw ConfigError("schedule exponents must be > 0");
    if (weights.ta < 0 || weights.dtm < 0 || weights.stab < 0 || weights.rect < 0)
        throw ConfigError("loss weights must be >= 0");
    if (data.size != 16 && data.size != 32 && data.size != 64) throw ConfigError("data.size must be 16, 32 or 64");
    if (data.scale < 1 || data.size % data.scale) throw ConfigError("data.scale must divide data.size");
    if (model.width < 1) throw ConfigError("model.width must be >= 1");
    if (log_interval < 1) throw ConfigError("log_interval must be >= 1");
    if (val_count < 0) throw ConfigError("val_count must be >= 0");
}

NoiseSchedule schedule_for(const TrainConfig& cfg, int stage, std::int64_t iteration) {
    const std::int64_t n_iter = stage == 1 ? cfg.iterations_stage1 : cfg.iterations_stage2;
    const bool late = cfg.late_total_steps > 0 && iteration > n_iter / 2;
    return NoiseSchedule(late ? cfg.late_total_steps : cfg.total_steps, stage == 1 ? cfg.n_stage1 : cfg.n_stage2);
}

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint make_checkpoint(const NetworkTriplet& nets, const AdamState& adam, std::int64_t iteration, int stage) {
    Checkpoint ck;
    ck.iteration = static_cast<std::uint32_t>(iteration);
    ck.stage = static_cast<std::uint8_t>(stage);
    for (const auto& [name, t] : nets.online.named_parameters())
        ck.arrays.push_back(to_array("online/" + name, t.shape(), t.data()));
    if (stage == 2) {
        for (const auto& [name, t] : nets.target.named_parameters())
            ck.arrays.push_back(to_array("target/" + name, t.shape(), t.data()));
    }
    if (!adam.m.empty()) {
        const auto& params = nets.online.named_parameters();
        for (std::size_t k = 0; k < params.size(); ++k) {
            ck.arrays.push_back(to_array("adam/m/" + params[k].first, params[k].second.shape(), adam.m[k]));
            ck.arrays.push_back(to_array("adam/v/" + params[k].first, params[k].second.shape(), adam.v[k]));
        }
        const real step = static_cast<real>(adam.step);
        ck.arrays.push_back(to_array("adam/step", {1}, std::span<const real>(&step, 1)));
    }
    return ck;
}

void restore_checkpoint(const Checkpoint& ck, NetworkTriplet& nets, AdamState* adam) {
    load_net(ck, "online/", nets.online);
    if (ck.find("target/" + nets.target.named_parameters().front().first)) load_net(ck, "target/", nets.target);
    else nets.sync_target();
    nets.copy_reference();
    if (adam) {
        *adam = AdamState{};
        if (const NamedArray* step = ck.find("adam/step")) {
            adam->step = static_cast<std::int64_t>(step->values.at(0));
            for (const auto& [name, t] : nets.online.named_parameters()) {
                const NamedArray* m = ck.find("adam/m/" + name);
                const NamedArray* v = ck.find("adam/v/" + name);
                if (!m || !v) throw CheckpointError("checkpoint is missing optimizer state for " + name);
                adam->m.emplace_back(m->values.begin(), m->values.end());
                adam->v.emplace_back(v->values.begin(), v->values.end());
            }
        }
    }
}

ModelConfig model_config_from_checkpoint(const Checkpoint& ck) {
    const NamedArray* w = ck.find("online/in_conv.weight");
    const NamedArray* out = ck.find("online/out_conv.weight");
    if (!w || !out || w->extents.size() != 4 || out->extents.size() != 4)
        throw CheckpointError("checkpoint does not hold a predictor network");
    ModelConfig m;
    m.width = static_cast<int>(w->extents[0]);
    m.image_channels = static_cast<int>(out->extents[0]);
    return m;
}

PredictorNet network_from_checkpoint(const Checkpoint& ck, const ModelConfig& model) {
    PredictorNet net(model, 0);
    load_net(ck, "online/", net);
    return net;
}

PredictorNet target_from_checkpoint(const Checkpoint& ck, const ModelConfig& model) {
    PredictorNet net(model, 0);
    const bool has_target = ck.find("target/" + net.named_parameters().front().first) != nullptr;
    load_net(ck, has_target ? "target/" : "online/", net);
    return net;
}

// ---------------------------------------------------------------------------
// Training loops

ValSummary evaluate_val(const PredictorNet& net, const DataConfig& data, int total_steps, int count,
                        std::uint64_t seed) {
    ValSummary s;
    s.count = count;
    if (count == 0) return s;
    const Predictor f = net.as_predictor(total_steps);
    const NoiseSchedule schedule(total_steps, 1.0);  // the one-step sampler only touches t = T
    for (int i = 0; i < count; ++i) {
        const Sample smp = make_sample(data, seed, Split::Val, static_cast<std::uint64_t>(i));
        Tensor out = sample_onestep(f, smp.lr, schedule, mix(seed ^ 0x76616cULL, static_cast<std::uint64_t>(i)));
        std::vector<real> v = out.to_vector();
        for (real& x : v) x = std::clamp(x, real(0), real(1));
        out = Tensor::from_vector(out.shape(), std::move(v));
        s.psnr += psnr(out, smp.hr);
        s.ssim += ssim(out, smp.hr);
    }
    s.psnr /= count;
    s.ssim /= count;
    return s;
}

namespace {

struct Loop {
    const TrainConfig& cfg;
    const TrainHooks& hooks;
    int stage;
    PerceptualEncoder encoder;
    BatchStream stream;
    TrainResult result;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    Loop(const TrainConfig& c, const TrainHooks& h, int s)
        : cfg(c), hooks(h), stage(s), encoder(c.percep_seed),
          stream(c.data, mix(c.seed, static_cast<std::uint64_t>(s)), Split::Train, c.batch) {}

    void run_iteration(std::int64_t i) {
        NetworkTriplet& nets = result.nets;
        const NoiseSchedule schedule = schedule_for(cfg, stage, i);
        const LossContext ctx = make_context(cfg, encoder, schedule);
        const int T = schedule.total_steps;

        if (stage == 2 && is_sync_iteration(i, cfg.sync_period)) {
            nets.sync_target();
            emit(hooks, HookPoint::AfterSync, i, nets);
        }

        std::mt19937_64 rng = iteration_rng(cfg.seed, stage, i);
        const Batch batch = stream.batch_at(static_cast<std::uint64_t>(i - 1));
        const int t = std::uniform_int_distribution<int>(1, T)(rng);
        const Tensor noise = Tensor::randn(batch.x0.shape(), rng);

        const Tensor x_t = forward_project(schedule, batch.x0, batch.y0, t, noise);
        nets.copy_reference();
        const Tensor x0_hat = nets.online.predict(x_t, batch.y0, t, T);

        LossComponents parts;
        parts.ct = loss_ct_from_prediction(x0_hat, nets.reference, batch.x0, batch.y0, t, noise, ctx);
        IterationStats st;
        st.iteration = i;
        st.t = t;
        if (stage == 1) {
            std::vector<Tensor> step_noise;
            for (int s = 0; s < T; ++s) step_noise.push_back(Tensor::randn(batch.x0.shape(), rng));
            parts.ta = loss_ta_from_prediction(x0_hat, batch.x0, batch.y0, step_noise, ctx);
        } else {
            const int t_prime = std::uniform_int_distribution<int>(1, T)(rng);
            const Tensor noise_p = Tensor::randn(batch.x0.shape(), rng);
            st.t_prime = t_prime;
            // One pair of frozen target evaluations feeds both trajectory losses.
            const TargetEndpoints e = target_endpoints(nets.target, x0_hat, batch.x0, batch.y0, t_prime, noise_p,
                                                       schedule);
            const Tensor delta = sub(e.fake, e.real_state);
            parts.dtm = loss_dtm_from_delta(x0_hat, batch.x0, delta, ctx);
            parts.stab = loss_stab_from_delta(x0_hat, batch.x0, sub(sobel(e.fake), sobel(e.real_state)), ctx);
            parts.rect = loss_rect(nets.online, batch.x0, batch.y0, t_prime, noise_p, ctx);
        }
        const Tensor total = stage_total(parts, stage, cfg.weights);

        st.total = total.item();
        st.ct = value_of(parts.ct);
        st.ta = value_of(parts.ta);
        st.dtm = value_of(parts.dtm);
        st.stab = value_of(parts.stab);
        st.rect = value_of(parts.rect);
        check_finite(st.total, "loss", i, stage, batch);

        backward(total);
        emit(hooks, HookPoint::AfterBackward, i, nets);
        adam_step(nets.online.parameters(), result.adam, cfg.adam);
        nets.online.zero_grad();
        emit(hooks, HookPoint::AfterStep, i, nets);

        st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(st);
    }

    void finish(std::int64_t iterations) {
        result.checkpoint = make_checkpoint(result.nets, result.adam, iterations, stage);
        result.val = evaluate_val(result.nets.online, cfg.data, cfg.total_steps, cfg.val_count, cfg.seed);
    }
};

}  // namespace

TrainResult train_stage1(const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    Loop loop(cfg, hooks, 1);
    loop.result.nets = NetworkTriplet(cfg.model, cfg.seed);
    for (std::int64_t i = 1; i <= cfg.iterations_stage1; ++i) loop.run_iteration(i);
    loop.finish(cfg.iterations_stage1);
    return std::move(loop.result);
}

TrainResult train_stage2(const TrainConfig& cfg, const Checkpoint& init, const TrainHooks& hooks) {
    cfg.validate();
    if (init.stage != 1) throw TrainError("stage 2 must start from a stage 1 checkpoint");
    Loop loop(cfg, hooks, 2);
    loop.result.nets = NetworkTriplet(cfg.model, cfg.seed);
    // Fresh optimizer moments: the stage 2 objective differs from stage 1.
    restore_checkpoint(init, loop.result.nets, nullptr);
    loop.result.nets.sync_target();
    for (std::int64_t i = 1; i <= cfg.iterations_stage2; ++i) loop.run_iteration(i);
    loop.finish(cfg.iterations_stage2);
    return std::move(loop.result);
}

std::string metrics_csv_header() {
    return "iteration,t,t_prime,loss_total,loss_ct,loss_ta,loss_dtm,loss_stab,loss_rect,wall_time_s\n";
}

std::string metrics_csv_row(const IterationStats& s) {
    std::ostringstream o;
    o << s.iteration << ',' << s.t << ',' << s.t_prime << ',' << format_number(s.total) << ',' << format_number(s.ct)
      << ',' << format_number(s.ta) << ',' << format_number(s.dtm) << ',' << format_number(s.stab) << ','
      << format_number(s.rect) << ',' << format_number(s.wall_seconds) << '\n';
    return o.str();
}

TrainResult run_training(const TrainConfig& cfg, const TrainHooks& hooks) {
    if (cfg.out_dir.empty()) throw TrainError("no output directory configured");
    std::filesystem::create_directories(cfg.out_dir);
    TrainResult r;
    if (cfg.stage == 1) {
        r = train_stage1(cfg, hooks);
    } else {
        if (cfg.init_checkpoint.empty()) throw TrainError("stage 2 requires an init checkpoint (--init)");
        if (!std::filesystem::exists(cfg.init_checkpoint))
            throw TrainError("init checkpoint not found: " + cfg.init_checkpoint.string());
        r = train_stage2(cfg, load_checkpoint(cfg.init_checkpoint), hooks);
    }
    save_checkpoint(r.checkpoint, cfg.out_dir / "checkpoint.bin");

    std::string csv = metrics_csv_header();
    for (const auto& s : r.history)
        if (s.iteration % cfg.log_interval == 0 || s.iteration == cfg.iterations()) csv += metrics_csv_row(s);
    write_text_file(cfg.out_dir / "metrics.csv", csv);
    write_text_file(cfg.out_dir / "config.txt", cfg.to_config().dump());
    write_text_file(cfg.out_dir / "summary.csv", "stage,iterations,val_count,val_psnr,val_ssim\n" +
                                                    std::to_string(cfg.stage) + "," +
                                                    std::to_string(cfg.iterations()) + "," +
                                                    std::to_string(r.val.count) + "," + format_number(r.val.psnr) +
                                                    "," + format_number(r.val.ssim) + "\n");
    return r;
}

}  // namespace gtasr
