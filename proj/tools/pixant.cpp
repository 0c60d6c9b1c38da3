// pixant command-line tool.
//
//   pixant simulate <mask.pbm>       simulate a mask as a symmetric element pair
//   pixant optimize                  binary swarm search over the configured grid
//   pixant baseline                  standard patch for f0 (dims, then simulation)
//   pixant export-mask <out.pbm>     write a mask of the configured grid
//   pixant report <file.s2p>         summarize a Touchstone file at f0
//
// Common flags: --config <path>, --seed <int>, --out <dir>.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pixant/config.hpp"
#include "pixant/grid.hpp"
#include "pixant/touchstone.hpp"
#include "pixant/workflow.hpp"

namespace {

void print_summary(const pixant::PairReport& r, const pixant::RunConfig& cfg) {
  std::cout << pixant::report_text("summary", r, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixant: pixelated patch pair synthesis"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Swarm seed (overrides the configuration)");
  app.add_option("--out", out_dir, "Output directory (overrides [output] dir)");

  auto* simulate = app.add_subcommand("simulate", "Simulate a P1 mask as both elements");
  std::string mask_path;
  simulate->add_option("mask", mask_path, "P1 mask file")->required();

  auto* optimize = app.add_subcommand("optimize", "Optimize the pixel layout");
  std::string resume;
  int stop_after = -1;
  optimize->add_option("--resume", resume, "Continue from a checkpoint file")->check(CLI::ExistingFile);
  optimize->add_option("--stop-after", stop_after, "Stop after this many completed iterations")
      ->check(CLI::NonNegativeNumber);

  auto* baseline = app.add_subcommand("baseline", "Standard patch dims and all-metal pair simulation");

  auto* export_mask = app.add_subcommand("export-mask", "Write a mask for the configured grid");
  std::string mask_out;
  std::string hex;
  int fill = 1;
  export_mask->add_option("path", mask_out, "Output .pbm path")->required();
  export_mask->add_option("--hex", hex, "Packed bits as in history.csv (repaired before writing)");
  export_mask->add_option("--fill", fill, "Uniform fill when --hex is absent")->check(CLI::Range(0, 1));

  auto* report = app.add_subcommand("report", "Summarize a Touchstone file at f0");
  std::string s2p;
  report->add_option("s2p", s2p, "Touchstone .s2p file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    pixant::RunConfig cfg = config_path.empty() ? pixant::RunConfig{} : pixant::parse_config(config_path);
    if (seed) cfg.swarm.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (*simulate) {
      const auto r = pixant::cmd_simulate(cfg, mask_path, cfg.out_dir);
      if (r.repaired) std::cerr << "pixant: note: floating pixels were removed from the mask\n";
      print_summary(r.report, cfg);
    } else if (*optimize) {
      pixant::OptimizeOptions opt;
      if (!resume.empty()) opt.resume = resume;
      opt.stop_after = stop_after;
      opt.on_step = [](const pixant::BinarySwarm<pixant::PixelProblem>& s) {
        const auto& h = s.history().back();
        std::fprintf(stderr, "iter %d  cost %.6g  s11 %.6g dB  s21 %.6g dB  hit %.3f\n", h.iter, h.gbest_cost,
                     h.s11_db, h.s21_db, h.cache_hit_rate);
      };
      const auto r = pixant::cmd_optimize(cfg, cfg.out_dir, opt);
      if (!r.complete) {
        std::cout << "stopped after iteration " << r.result.history.size() << "; resume from "
                  << (std::filesystem::path(cfg.out_dir) / "checkpoint.txt").string() << '\n';
      } else {
        std::cout << pixant::read_file(std::filesystem::path(cfg.out_dir) / "report.txt");
      }
    } else if (*baseline) {
      try {
        const auto r = pixant::cmd_baseline(cfg, cfg.out_dir);
        print_summary(r.report, cfg);
      } catch (const std::invalid_argument& ex) {
        std::cout << pixant::read_file(std::filesystem::path(cfg.out_dir) / "dims.txt");
        throw;
      }
    } else if (*export_mask) {
      pixant::PixelGrid g = cfg.like();
      if (!hex.empty()) g = pixant::with_bits(g, pixant::bits_from_hex(hex, cfg.nx, cfg.ny));
      else std::fill(g.bits.begin(), g.bits.end(), static_cast<std::uint8_t>(fill));
      pixant::export_mask(pixant::repair_floating(g), mask_out);
    } else if (*report) {
      const auto set = pixant::touchstone_read(s2p);
      print_summary(pixant::summarize(set, cfg), cfg);
    }
  } catch (const pixant::ConfigError& ex) {
    std::cerr << "pixant: " << ex.what() << '\n';
    return 2;
  } catch (const pixant::ParseError& ex) {
    std::cerr << "pixant: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "pixant: error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
