#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtasr {

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunSummary {
    std::string name;  // run directory relative to the report root
    int stage = 0;
    std::string seed;
    long long iterations = 0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
    double final_loss = 0.0;  // mean loss_total over the last logged tenth of the run
    bool has_structural = false;
    double structural_mae = 0.0;  // mean of decoupling.csv when present
};

struct AblationDelta {
    std::string ablation;  // "ta" or "drsr"
    std::string full_run;
    std::string ablated_run;
    double delta_psnr = 0.0;  // full - ablated
    double delta_ssim = 0.0;
    bool has_structural = false;
    double delta_structural_mae = 0.0;
};

struct Report {
    std::vector<RunSummary> runs;
    std::vector<AblationDelta> deltas;
    std::string curves_csv;

    std::string summary_csv() const;
    std::string deltas_csv() const;
    std::string text() const;
};

/// Scans `run_dir` recursively for run directories (each holding metrics.csv, summary.csv
/// and config.txt). Runs whose configs differ only by zeroed loss weights are paired.
Report build_report(const std::filesystem::path& run_dir);
/// Writes report.txt, report_runs.csv, report_deltas.csv and report_curves.csv into out_dir.
void write_report(const Report& report, const std::filesystem::path& out_dir);

}  // namespace gtasr
