#include "etchpit/image_io.hpp"
#include "etchpit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace etchpit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kPanel = 220;
constexpr int kMargin = 20;

const std::array<std::array<std::uint8_t, 3>, 3> kTypeColor = {{{200, 60, 40}, {40, 110, 200}, {40, 160, 70}}};

struct Canvas {
    io::RgbImage img;

    Canvas(int w, int h)
    {
        img.width = w;
        img.height = h;
        img.pixels.assign(static_cast<std::size_t>(w) * h, {255, 255, 255});
    }
    void put(int x, int y, std::array<std::uint8_t, 3> c)
    {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
        img.pixels[static_cast<std::size_t>(y) * img.width + x] = c;
    }
    void line(double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> c)
    {
        const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            put(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
        }
    }
};

std::string fixed(double v, int digits)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::vector<std::vector<std::string>> read_rows(const fs::path& path)
{
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(std::move(cells));
    }
    return rows;
}

/// errors.csv back into a report; the header is the one write_errors_csv emits.
analyze::RmseReport read_errors(const fs::path& path)
{
    analyze::RmseReport r;
    const auto rows = read_rows(path);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 10) throw FormatError(path.string() + ": expected 10 fields per row");
        analyze::ImageError e;
        try {
            e.image_id = std::stoi(rows[i][0]);
            for (int k = 0; k < 3; ++k) {
                e.truth[k] = std::stod(rows[i][1 + k]);
                e.predicted[k] = std::stod(rows[i][4 + k]);
                e.error[k] = std::stod(rows[i][7 + k]);
            }
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": bad number in row " + std::to_string(i + 1));
        }
        r.images.push_back(e);
    }
    return r;
}

void markdown_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows)
{
    if (rows.empty()) return;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << '|';
        for (const auto& c : rows[i]) out << ' ' << c << " |";
        out << '\n';
        if (i == 0) {
            out << '|';
            for (std::size_t k = 0; k < rows[0].size(); ++k) out << " --- |";
            out << '\n';
        }
    }
    out << '\n';
}

}  // namespace

void write_rmse_plot(const fs::path& path, const analyze::RmseReport& report)
{
    Canvas cv(3 * kPanel, kPanel);
    for (std::size_t k = 0; k < 3; ++k) {
        double hi = 1.0;
        for (const auto& e : report.images) hi = std::max({hi, e.truth[k], e.predicted[k]});
        const double x0 = static_cast<double>(k) * kPanel + kMargin;
        const double y0 = kPanel - kMargin;
        const double span = kPanel - 2.0 * kMargin;
        auto px = [&](double v) { return x0 + v / hi * span; };
        auto py = [&](double v) { return y0 - v / hi * span; };
        cv.line(x0, y0, x0 + span, y0, {0, 0, 0});
        cv.line(x0, y0, x0, y0 - span, {0, 0, 0});
        cv.line(px(0), py(0), px(hi), py(hi), {170, 170, 170});
        for (const auto& e : report.images) {
            const int cx = static_cast<int>(std::lround(px(e.truth[k])));
            const int cy = static_cast<int>(std::lround(py(e.predicted[k])));
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) cv.put(cx + dx, cy + dy, kTypeColor[k]);
        }
    }
    io::write_rgb_png(path, cv.img);
}

StageResult build_report(const config::PipelineConfig& cfg, const fs::path& dir)
{
    StageResult res;
    res.stage = "report";
    const fs::path detect = stage_dir(cfg, "detect");
    const fs::path eval = stage_dir(cfg, "eval");
    const fs::path density = stage_dir(cfg, "density");

    std::ofstream md(dir / "index.md");
    md << "# Etch-pit report\n\n";

    md << "## Detections per image\n\n";
    {
        const auto rows = read_rows(detect / "counts.csv");
        fs::copy_file(detect / "counts.csv", dir / "counts.csv", fs::copy_options::overwrite_existing);
        res.artifacts.push_back("counts.csv");
        std::array<double, 3> totals{};
        for (std::size_t i = 1; i < rows.size(); ++i)
            for (int k = 0; k < 3; ++k) totals[k] += rows[i].size() == 5 ? std::stod(rows[i][2 + k]) : 0.0;
        markdown_table(md, {{"images", "BPD", "TED", "TSD"},
                            {std::to_string(rows.empty() ? 0 : rows.size() - 1), fixed(totals[0], 0),
                             fixed(totals[1], 0), fixed(totals[2], 0)}});
        md << "Per-image counts: [counts.csv](counts.csv)\n\n";
        res.summary["detections"] = {{"BPD", totals[0]}, {"TED", totals[1]}, {"TSD", totals[2]}};
    }

    md << "## Count accuracy\n\n";
    if (fs::exists(eval / "rmse.json") && fs::exists(eval / "errors.csv")) {
        std::ifstream in(eval / "rmse.json");
        const json r = json::parse(in);
        const auto rep = read_errors(eval / "errors.csv");
        write_rmse_plot(dir / "rmse_plot.png", rep);
        fs::copy_file(eval / "errors.csv", dir / "errors.csv", fs::copy_options::overwrite_existing);
        res.artifacts.insert(res.artifacts.end(), {"rmse_plot.png", "errors.csv"});
        markdown_table(md, {{"dataset", "images", "RMSE BPD", "RMSE TED", "RMSE TSD"},
                            {r.value("dataset", ""), std::to_string(rep.images.size()),
                             fixed(r["rmse"].value("BPD", 0.0), 3), fixed(r["rmse"].value("TED", 0.0), 3),
                             fixed(r["rmse"].value("TSD", 0.0), 3)}});
        md << "![true vs predicted counts per image; panels BPD, TED, TSD](rmse_plot.png)\n\n"
           << "x: true count, y: predicted count, grey line: exact count. Per-image errors: [errors.csv](errors.csv)\n\n";
        res.summary["rmse"] = r["rmse"];
    } else {
        md << "No evaluation found (run `etchpit eval`).\n\n";
        res.warnings.push_back("no eval outputs; the report has no RMSE section");
    }

    md << "## Density\n\n";
    if (fs::exists(density / "summary.json")) {
        std::ifstream in(density / "summary.json");
        const json s = json::parse(in);
        md << "Bin " << fixed(s.value("bin_um", 0.0), 1) << " um, " << s.value("duplicates_removed", 0)
           << " overlap duplicates removed.\n\n";
        for (const char* t : {"BPD", "TED", "TSD"}) {
            const std::string png = std::string("density_") + t + ".png";
            const std::string csv = std::string("density_") + t + ".csv";
            for (const auto& f : {png, csv}) {
                if (!fs::exists(density / f)) continue;
                fs::copy_file(density / f, dir / f, fs::copy_options::overwrite_existing);
                res.artifacts.push_back(f);
            }
            md << "### " << t << "\n\n![" << t << " density](" << png << ")\n\n[bins in cm^-2](" << csv << ")\n\n";
        }
        for (const char* f : {"part_counts.csv", "size_classes.csv"}) {
            if (!fs::exists(density / f)) continue;
            fs::copy_file(density / f, dir / f, fs::copy_options::overwrite_existing);
            res.artifacts.push_back(f);
        }
        md << "## Parts\n\n";
        const auto parts = read_rows(density / "part_counts.csv");
        markdown_table(md, parts);
        md << "## Size classes\n\n";
        markdown_table(md, read_rows(density / "size_classes.csv"));
    } else {
        md << "No density maps found (run `etchpit density`).\n\n";
        res.warnings.push_back("no density outputs; the report has no density section");
    }
    res.artifacts.push_back("index.md");
    return res;
}

}  // namespace etchpit::pipeline
