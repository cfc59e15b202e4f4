// Writes a procedural wafer fixture (tiles, manifest, truth, texture seed)
// and a matching run config.

#include "etchpit/config.hpp"
#include "etchpit/pitgen.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Generate a synthetic wafer fixture for the etchpit pipeline"};
    std::string out;
    int cols = 5, rows = 4, width = 320, height = 240, pits = 14, overlap = 16;
    int scene_size = 256;
    std::uint64_t seed = 7;
    app.add_option("-o,--out", out, "Output directory")->required();
    app.add_option("--cols", cols, "Tile columns")->check(CLI::PositiveNumber);
    app.add_option("--rows", rows, "Tile rows")->check(CLI::PositiveNumber);
    app.add_option("--width", width, "Tile width")->check(CLI::Range(64, 8192));
    app.add_option("--height", height, "Tile height")->check(CLI::Range(64, 8192));
    app.add_option("--pits", pits, "Pits per tile")->check(CLI::NonNegativeNumber);
    app.add_option("--overlap", overlap, "Tile overlap in pixels")->check(CLI::NonNegativeNumber);
    app.add_option("--scene-size", scene_size, "Synthetic scene side written into config.json")->check(CLI::Range(32, 4096));
    app.add_option("--seed", seed, "Fixture seed");
    CLI11_PARSE(app, argc, argv);

    try {
        namespace fs = std::filesystem;
        etchpit::pitgen::write_wafer_fixture(out, cols, rows, width, height, pits, seed, overlap);

        etchpit::config::PipelineConfig cfg;
        cfg.io.manifest = "manifest.csv";
        cfg.io.work_dir = "work";
        cfg.synth.background_seeds = {"seed.png"};
        cfg.synth.width = scene_size;
        cfg.synth.height = scene_size;
        cfg.synth.background_size = scene_size + scene_size / 4;
        std::ofstream f(fs::path(out) / "config.json");
        f << etchpit::config::to_json(cfg).dump(2) << '\n';
        if (!f) throw std::runtime_error("cannot write config.json");
        std::cout << "fixture: " << cols * rows << " tiles in " << out << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
