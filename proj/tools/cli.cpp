#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

#include "gtasr/analysis.hpp"
#include "gtasr/config.hpp"
#include "gtasr/image_io.hpp"
#include "gtasr/report.hpp"
#include "gtasr/train.hpp"
#include "gtasr/verify.hpp"

namespace gtasr::cli {

namespace {

namespace fs = std::filesystem;

// Operational failure: reported on stderr, exit code 1.
struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr const char* kConfigHelp = R"(
Config file: flat text, one `key = value` per line, `#` starts a comment.
Keys (defaults in brackets):
  seed [42]  stage [1]  iterations_stage1 [3000]  iterations_stage2 [600]
  sync_period [150]  batch [8]  lr [5e-4]  adam.beta1 [0.9]  adam.beta2 [0.999]
  adam.eps [1e-8]  schedule.T [5]  schedule.T_late [0 = off]  schedule.n_stage1 [2.5]
  schedule.n_stage2 [1.0]  loss.lambda_ta [0.5]  loss.lambda_dtm [1.6]
  loss.lambda_stab [0.032]  loss.lambda_rect [1.0]  loss.charbonnier_eps [1e-3]
  loss.percep_seed [1234]  loss.stab_channel_mode [average|duplicate]
  data.size [32]  data.scale [4]  data.blur_min [0.5]  data.blur_max [1.5]
  data.noise_min [0.01]  data.noise_max [0.05]  model.width [16]
  log_interval [10]  val_count [64]  out_dir  init
Command-line flags override the file; --set KEY=VALUE overrides any key.

Outputs in --out DIR:
  checkpoint.bin  binary little-endian: "GTCK" u32 version, u32 count, then per
                  array u16 name length, name, u8 rank, u32 extents, f32 values;
                  trailing u32 iteration, u8 stage
  metrics.csv     iteration,t,t_prime,loss_total,loss_ct,loss_ta,loss_dtm,
                  loss_stab,loss_rect,wall_time_s (one row per log interval)
  summary.csv     stage,iterations,val_count,val_psnr,val_ssim
  config.txt      effective configuration
)";

DataConfig data_from(const Config& c) {
    return TrainConfig::from_config(c).data;
}

int cmd_gen_data(const fs::path& out, int count, std::uint64_t seed, const Config& overrides, std::ostream& log) {
    if (count < 0) throw Failure("--count must be >= 0");
    const DataConfig data = data_from(overrides);
    fs::create_directories(out);
    std::string manifest = "# hr lr kind blur_sigma noise_sigma scale seed\n";
    for (int i = 0; i < count; ++i) {
        const Sample s = make_sample(data, seed, Split::Train, static_cast<std::uint64_t>(i));
        char hr[32], lr[32];
        std::snprintf(hr, sizeof hr, "hr_%06d.pgm", i);
        std::snprintf(lr, sizeof lr, "lr_%06d.pgm", i);
        write_pgm(out / hr, s.hr);
        write_pgm(out / lr, s.lr);
        manifest += std::string(hr) + " " + lr + " " + to_string(s.kind) + " " + format_number(s.degrade.blur_sigma) +
                    " " + format_number(s.degrade.noise_sigma) + " " + std::to_string(s.degrade.scale) + " " +
                    std::to_string(s.seed) + "\n";
    }
    write_text_file(out / "manifest.txt", manifest);
    log << "wrote " << count << " pairs to " << out.string() << "\n";
    return 0;
}

Checkpoint load_existing(const fs::path& path) {
    if (path.empty()) throw Failure("no checkpoint path given");
    if (!fs::exists(path)) throw Failure("checkpoint not found: " + path.string());
    return load_checkpoint(path);
}

double default_exponent(const Checkpoint& ck) { return ck.stage == 2 ? 1.0 : 2.5; }

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Desk-scale one-step super-resolution consistency training: data generation, two-stage training, "
                 "sampling, diagnostics and verification.",
                 "gtasr"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Print help for every subcommand");
    app.footer("Exit codes: 0 success, 1 operational failure, 2 usage error.\n"
               "GTASR_THREADS caps internal parallelism (0 = all cores).");
    std::uint64_t seed = 42;
    app.add_option("--seed", seed, "Seed for all randomness")->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Write synthetic (HR, degraded) image pairs as PGM files");
    fs::path gen_out;
    int gen_count = 16;
    std::vector<std::string> gen_set;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", gen_count, "Number of pairs")->capture_default_str();
    gen->add_option("--set", gen_set, "Data override KEY=VALUE (data.* keys)");
    gen->add_option("--seed", seed, "Seed")->capture_default_str();
    gen->footer("Writes hr_%06d.pgm / lr_%06d.pgm (binary PGM P5, 8-bit, maxval 255; lr is the degraded image "
                "upsampled back to HR size) and manifest.txt with one line per pair:\n"
                "  hr_file lr_file kind blur_sigma noise_sigma scale sample_seed");

    // train
    auto* train = app.add_subcommand("train", "Run Stage 1 or Stage 2 training");
    int stage = 1;
    fs::path cfg_path, init_path, train_out;
    long long iterations = -1;
    std::vector<std::string> train_set;
    train->add_option("--stage", stage, "Training stage")->required()->check(CLI::IsMember({1, 2}));
    train->add_option("--config", cfg_path, "Flat key=value config file");
    train->add_option("--init", init_path, "Stage 1 checkpoint (required for --stage 2)");
    train->add_option("--out", train_out, "Run directory (overrides out_dir)");
    train->add_option("--iterations", iterations, "Iterations for the selected stage");
    train->add_option("--set", train_set, "Config override KEY=VALUE (repeatable)");
    train->add_option("--seed", seed, "Seed")->capture_default_str();
    train->footer(kConfigHelp);

    // sample
    auto* sample = app.add_subcommand("sample", "Restore a degraded image with a trained network");
    fs::path sample_ckpt, sample_in, sample_out;
    int sample_steps = 1;
    sample->add_option("--checkpoint", sample_ckpt, "Checkpoint file")->required();
    sample->add_option("--input", sample_in, "Degraded input (PGM P5 at output resolution)")->required();
    sample->add_option("--out", sample_out, "Output PGM")->required();
    sample->add_option("--steps", sample_steps, "Sampler steps (1 = one-step)")->capture_default_str();
    sample->add_option("--seed", seed, "Seed for the terminal noise")->capture_default_str();
    sample->footer("Input and output are binary PGM (P5, maxval <= 255); extents must be even.");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Consistency or decoupling probe of a checkpoint");
    std::string probe;
    fs::path an_ckpt, an_out;
    int an_count = 200, an_tprime = 0, an_size = 32;
    double an_n = 0.0;
    std::string an_net = "online";
    analyze->add_option("--probe", probe, "Probe kind")->required()->check(CLI::IsMember({"consistency", "decoupling"}));
    analyze->add_option("--checkpoint", an_ckpt, "Checkpoint file")->required();
    analyze->add_option("--out", an_out, "Output CSV")->required();
    analyze->add_option("--count", an_count, "Validation instances")->capture_default_str();
    analyze->add_option("--t-prime", an_tprime, "Fixed t' for decoupling (0 = uniform over 1..T)")->capture_default_str();
    analyze->add_option("--exponent", an_n, "Schedule exponent n (0 = 2.5 for stage 1, 1.0 for stage 2 checkpoints)");
    analyze->add_option("--size", an_size, "Image size of the probe instances")->capture_default_str();
    analyze->add_option("--frozen", an_net, "Network evaluated as the frozen target")
        ->check(CLI::IsMember({"online", "target"}))
        ->capture_default_str();
    analyze->add_option("--seed", seed, "Seed")->capture_default_str();
    analyze->footer("CSV formats:\n"
                    "  consistency: t,psnr_db,prediction_mean  (one row per t = 1..T, batch-averaged PSNR)\n"
                    "  decoupling:  instance,t_prime,pixel_mae,structural_mae  (one row per instance; MAEs are\n"
                    "               mean absolute differences of target outputs / their Sobel maps)");

    // verify
    auto* verify = app.add_subcommand("verify", "Run the numerical verification harness");
    fs::path verify_out;
    bool corrupt = false;
    verify->add_option("--out", verify_out, "Report file")->required();
    verify->add_flag("--corrupt-sobel", corrupt, "Perturb the Sobel stencil (harness self-test)");
    verify->add_option("--seed", seed, "Seed")->capture_default_str();
    verify->footer("Report: one line per check, `PASS|FAIL name: detail`, then `k/n checks passed`.\n"
                   "Exit status 1 if any check fails.");

    // report
    auto* report = app.add_subcommand("report", "Summarise training runs and paired ablations");
    fs::path runs_dir, report_out;
    report->add_option("--runs", runs_dir, "Directory containing run directories")->required();
    report->add_option("--out", report_out, "Output directory")->required();
    report->footer("Reads metrics.csv, summary.csv, config.txt (and decoupling.csv if present) from every run.\n"
                   "Writes report.txt, report_runs.csv (run,stage,seed,iterations,val_psnr,val_ssim,final_loss,\n"
                   "structural_mae), report_deltas.csv (ablation,full_run,ablated_run,delta_psnr,delta_ssim,\n"
                   "delta_structural_mae; full minus ablated) and report_curves.csv.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);  // --help
        err << "error: " << e.what() << "\n\n";
        const CLI::App* sub = nullptr;
        for (const CLI::App* s : app.get_subcommands()) sub = s;
        err << (sub ? sub->help() : app.help());
        return 2;
    }

    auto parse_sets = [](const std::vector<std::string>& sets) {
        Config c;
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
            c.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return c;
    };

    try {
        if (*gen) {
            Config c = parse_sets(gen_set);
            return cmd_gen_data(gen_out, gen_count, seed, c, out);
        }
        if (*train) {
            Config c;
            if (!cfg_path.empty()) {
                if (!fs::exists(cfg_path)) throw Failure("config file not found: " + cfg_path.string());
                c = Config::load(cfg_path);
            }
            c.merge(parse_sets(train_set));
            c.set("stage", std::to_string(stage));
            if (train->count("--seed") || app.count("--seed") || !c.has("seed")) c.set("seed", std::to_string(seed));
            if (!init_path.empty()) c.set("init", init_path.string());
            if (!train_out.empty()) c.set("out_dir", train_out.string());
            if (iterations >= 0) c.set(stage == 1 ? "iterations_stage1" : "iterations_stage2", std::to_string(iterations));
            const TrainConfig tc = TrainConfig::from_config(c);
            if (tc.out_dir.empty()) throw ConfigError("no output directory: pass --out or set out_dir");
            if (tc.stage == 2 && tc.init_checkpoint.empty())
                throw ConfigError("stage 2 needs a stage 1 checkpoint: pass --init or set init");
            const TrainResult r = run_training(tc);
            out << "stage " << tc.stage << " finished after " << tc.iterations() << " iterations; val PSNR "
                << format_number(r.val.psnr) << " dB, SSIM " << format_number(r.val.ssim) << "\n";
            return 0;
        }
        if (*sample) {
            const Checkpoint ck = load_existing(sample_ckpt);
            if (!fs::exists(sample_in)) throw Failure("input image not found: " + sample_in.string());
            const PredictorNet net = network_from_checkpoint(ck, model_config_from_checkpoint(ck));
            const Tensor y0 = read_pgm(sample_in);
            const NoiseSchedule sched(5, default_exponent(ck));
            if (sample_steps < 1 || sample_steps > sched.total_steps)
                throw Failure("--steps must be in [1, " + std::to_string(sched.total_steps) + "]");
            const Tensor x = sample_multistep(net.as_predictor(sched.total_steps), y0, SamplerConfig{sample_steps, sched}, seed);
            write_pgm(sample_out, x);
            out << "wrote " << sample_out.string() << "\n";
            return 0;
        }
        if (*analyze) {
            const Checkpoint ck = load_existing(an_ckpt);
            const ModelConfig mc = model_config_from_checkpoint(ck);
            const PredictorNet online = network_from_checkpoint(ck, mc);
            const NoiseSchedule sched(5, an_n > 0 ? an_n : default_exponent(ck));
            DataConfig data;
            data.size = an_size;
            std::string csv;
            if (probe == "consistency") {
                std::vector<Tensor> hr, lr;
                for (int i = 0; i < an_count; ++i) {
                    const Sample s = make_sample(data, seed, Split::Val, static_cast<std::uint64_t>(i));
                    hr.push_back(s.hr);
                    lr.push_back(s.lr);
                }
                if (hr.empty()) throw Failure("--count must be >= 1");
                csv = consistency_csv(consistency_probe(online.as_predictor(sched.total_steps), stack_batch(hr),
                                                        stack_batch(lr), sched, seed));
            } else {
                const PredictorNet frozen = an_net == "target" ? target_from_checkpoint(ck, mc) : online;
                DecouplingOptions opt;
                opt.data = data;
                opt.schedule = sched;
                opt.t_prime = an_tprime;
                opt.count = an_count;
                opt.seed = seed;
                csv = decoupling_csv(decoupling_scatter(frozen, online, opt));
            }
            write_text_file(an_out, csv);
            out << "wrote " << an_out.string() << "\n";
            return 0;
        }
        if (*verify) {
            VerifyOptions opt;
            opt.seed = seed;
            opt.corrupt_sobel = corrupt;
            const VerifyReport rep = verify_math(opt);
            write_text_file(verify_out, rep.text());
            out << rep.text();
            return rep.passed() ? 0 : 1;
        }
        if (*report) {
            const Report rep = build_report(runs_dir);
            write_report(rep, report_out);
            out << rep.text();
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace gtasr::cli
