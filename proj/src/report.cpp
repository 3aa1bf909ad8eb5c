#include "gtasr/report.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "gtasr/analysis.hpp"
#include "gtasr/config.hpp"

namespace gtasr {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) out.push_back(cell);
    return out;
}

// Rows of a header-led CSV as column-name -> value maps.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ReportError(path.string() + ": empty CSV");
    const auto header = split(line, ',');
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) throw ReportError(path.string() + ": ragged row");
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < cells.size(); ++i) row[header[i]] = cells[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

double num(const std::map<std::string, std::string>& row, const std::string& key) {
    const auto it = row.find(key);
    if (it == row.end()) throw ReportError("missing column " + key);
    return std::stod(it->second);
}

struct LoadedRun {
    RunSummary summary;
    Config config;
};

LoadedRun load_run(const fs::path& dir, const std::string& name, std::string& curves) {
    LoadedRun r;
    r.summary.name = name;
    if (fs::exists(dir / "config.txt")) r.config = Config::load(dir / "config.txt");
    r.summary.seed = r.config.get_string("seed", "");
    r.summary.stage = static_cast<int>(r.config.get_int("stage", 0));

    const auto metrics = read_csv(dir / "metrics.csv");
    if (!metrics.empty()) {
        const std::size_t tail = std::max<std::size_t>(1, metrics.size() / 10);
        double acc = 0.0;
        for (std::size_t i = metrics.size() - tail; i < metrics.size(); ++i) acc += num(metrics[i], "loss_total");
        r.summary.final_loss = acc / static_cast<double>(tail);
    }
    for (const auto& m : metrics) {
        curves += name + "," + m.at("iteration") + "," + m.at("loss_total") + "," + m.at("loss_ct") + "," +
                  m.at("loss_ta") + "," + m.at("loss_dtm") + "," + m.at("loss_stab") + "," + m.at("loss_rect") + "\n";
    }
    if (fs::exists(dir / "summary.csv")) {
        const auto rows = read_csv(dir / "summary.csv");
        if (!rows.empty()) {
            r.summary.iterations = static_cast<long long>(num(rows.front(), "iterations"));
            r.summary.val_psnr = num(rows.front(), "val_psnr");
            r.summary.val_ssim = num(rows.front(), "val_ssim");
        }
    }
    if (fs::exists(dir / "decoupling.csv")) {
        const auto rows = read_csv(dir / "decoupling.csv");
        double acc = 0.0;
        for (const auto& row : rows) acc += num(row, "structural_mae");
        r.summary.has_structural = !rows.empty();
        r.summary.structural_mae = rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
    }
    return r;
}

// Keys whose zeroing defines each ablation.
const std::map<std::string, std::set<std::string>>& ablations() {
    static const std::map<std::string, std::set<std::string>> table = {
        {"ta", {"loss.lambda_ta"}},
        {"drsr", {"loss.lambda_stab", "loss.lambda_rect"}},
    };
    return table;
}

// Returns the ablation name when `ablated` equals `full` except for zeroed weights of one ablation.
std::string match_ablation(const Config& full, const Config& ablated) {
    std::set<std::string> keys;
    for (const auto& [k, _] : full.entries()) keys.insert(k);
    for (const auto& [k, _] : ablated.entries()) keys.insert(k);
    std::set<std::string> differing;
    for (const auto& k : keys)
        if (full.get_string(k, "") != ablated.get_string(k, "")) differing.insert(k);
    if (differing.empty()) return {};
    for (const auto& [name, weight_keys] : ablations()) {
        if (!std::includes(weight_keys.begin(), weight_keys.end(), differing.begin(), differing.end())) continue;
        bool ablated_zero = true, full_nonzero = false;
        for (const auto& k : weight_keys) {
            ablated_zero = ablated_zero && ablated.get_double(k, 0.0) == 0.0;
            full_nonzero = full_nonzero || full.get_double(k, 0.0) != 0.0;
        }
        if (ablated_zero && full_nonzero) return name;
    }
    return {};
}

}  // namespace

Report build_report(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir)) throw ReportError("run directory not found: " + run_dir.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::recursive_directory_iterator(run_dir))
        if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") dirs.push_back(entry.path().parent_path());
    if (dirs.empty()) throw ReportError("no runs (metrics.csv) found under " + run_dir.string());
    std::sort(dirs.begin(), dirs.end());

    Report rep;
    rep.curves_csv = "run,iteration,loss_total,loss_ct,loss_ta,loss_dtm,loss_stab,loss_rect\n";
    std::vector<LoadedRun> loaded;
    for (const auto& d : dirs) {
        std::string name = fs::relative(d, run_dir).generic_string();
        loaded.push_back(load_run(d, name, rep.curves_csv));
        rep.runs.push_back(loaded.back().summary);
    }
    for (const auto& full : loaded)
        for (const auto& abl : loaded) {
            if (&full == &abl) continue;
            const std::string name = match_ablation(full.config, abl.config);
            if (name.empty()) continue;
            AblationDelta d;
            d.ablation = name;
            d.full_run = full.summary.name;
            d.ablated_run = abl.summary.name;
            d.delta_psnr = full.summary.val_psnr - abl.summary.val_psnr;
            d.delta_ssim = full.summary.val_ssim - abl.summary.val_ssim;
            d.has_structural = full.summary.has_structural && abl.summary.has_structural;
            if (d.has_structural) d.delta_structural_mae = full.summary.structural_mae - abl.summary.structural_mae;
            rep.deltas.push_back(d);
        }
    return rep;
}

std::string Report::summary_csv() const {
    std::string out = "run,stage,seed,iterations,val_psnr,val_ssim,final_loss,structural_mae\n";
    for (const auto& r : runs)
        out += r.name + "," + std::to_string(r.stage) + "," + r.seed + "," + std::to_string(r.iterations) + "," +
               format_number(r.val_psnr) + "," + format_number(r.val_ssim) + "," + format_number(r.final_loss) + "," +
               (r.has_structural ? format_number(r.structural_mae) : "") + "\n";
    return out;
}

std::string Report::deltas_csv() const {
    std::string out = "ablation,full_run,ablated_run,delta_psnr,delta_ssim,delta_structural_mae\n";
    for (const auto& d : deltas)
        out += d.ablation + "," + d.full_run + "," + d.ablated_run + "," + format_number(d.delta_psnr) + "," +
               format_number(d.delta_ssim) + "," + (d.has_structural ? format_number(d.delta_structural_mae) : "") +
               "\n";
    return out;
}

std::string Report::text() const {
    std::ostringstream o;
    o << runs.size() << " run(s)\n";
    for (const auto& r : runs)
        o << "  " << r.name << ": stage " << r.stage << ", seed " << r.seed << ", val PSNR " << format_number(r.val_psnr)
          << " dB, SSIM " << format_number(r.val_ssim) << "\n";
    if (!deltas.empty()) o << deltas.size() << " paired ablation(s), full minus ablated\n";
    for (const auto& d : deltas) {
        o << "  " << d.ablation << ": " << d.full_run << " vs " << d.ablated_run << ": PSNR "
          << (d.delta_psnr >= 0 ? "+" : "") << format_number(d.delta_psnr) << " dB";
        if (d.has_structural)
            o << ", structural MAE " << (d.delta_structural_mae >= 0 ? "+" : "") << format_number(d.delta_structural_mae);
        o << "\n";
    }
    return o.str();
}

void write_report(const Report& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_text_file(out_dir / "report.txt", report.text());
    write_text_file(out_dir / "report_runs.csv", report.summary_csv());
    write_text_file(out_dir / "report_deltas.csv", report.deltas_csv());
    write_text_file(out_dir / "report_curves.csv", report.curves_csv);
}

}  // namespace gtasr
