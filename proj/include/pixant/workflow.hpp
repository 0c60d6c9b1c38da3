#pragma once

// End-to-end workflows behind the command-line tool: simulate a mask pair,
// simulate the standard-patch baseline, and optimize a pixel layout with the
// FDTD evaluator. Every workflow writes into one run directory guarded by a
// lock file and stamped with the resolved configuration.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <string>
#include <vector>

#include "pixant/bench.hpp"
#include "pixant/config.hpp"
#include "pixant/emcore.hpp"
#include "pixant/error.hpp"
#include "pixant/grid.hpp"
#include "pixant/optim.hpp"
#include "pixant/sparam.hpp"
#include "pixant/touchstone.hpp"

namespace pixant {

namespace fs = std::filesystem;

inline constexpr const char* kHistoryHeader = "iter,gbest_cost,s11_db,s21_db,cache_hit_rate,bits_hex";

/// Two-port response of an element pair on the configured lattice. A
/// left-right symmetric pair needs only one run; the second is its mirror.
inline SParamSet simulate_pair(const PixelGrid& a, const PixelGrid& b, const RunConfig& cfg) {
  const Scene scene = build_scene(a, b, cfg.spacing, cfg.materials, cfg.resolution, cfg.lattice);
  const TimeSeries r1 = run_fdtd(scene, 1, cfg.max_steps, cfg.pulse(), cfg.run_options());
  const TimeSeries r2 = a == b ? mirror_run(r1) : run_fdtd(scene, 2, cfg.max_steps, cfg.pulse(), cfg.run_options());
  return extract_sparams({r1, r2}, cfg.cost.band, cfg.cost.nfreq);
}

inline PairEvaluator make_fdtd_evaluator(const RunConfig& cfg) {
  return [cfg](const PixelGrid& a, const PixelGrid& b) { return simulate_pair(a, b, cfg); };
}

/// Refuses frequencies the lattice cannot serve at desk scale.
inline void require_simulable(const RunConfig& cfg) {
  const double f0 = cfg.cost.f0;
  if (f0 < cfg.cost.band.fmin || f0 > cfg.cost.band.fmax) {
    std::ostringstream m;
    m << "f0 = " << f0 / 1e9 << " GHz lies outside the analysis band " << cfg.cost.band.fmin / 1e9 << "-"
      << cfg.cost.band.fmax / 1e9 << " GHz; a patch for this frequency needs a lattice beyond desk scale, "
      << "so only the dimensions are produced";
    throw std::invalid_argument(m.str());
  }
}

// ---- run directory ---------------------------------------------------------

/// Exclusive claim on an output directory, released on destruction.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / "run.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(dir.string(), "cannot create output directory: " + ec.message());
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (!f) throw IoError(path_.string(), "output directory is in use by another run (or a stale lock remains)");
    std::fprintf(f, "pixant %s\n", kVersion);
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

/// Writes `text` to `path` via a temporary file and a rename.
inline void write_file(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string(), "cannot open for writing");
    out << text;
    out.flush();
    if (!out) throw IoError(tmp.string(), "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(path.string(), "cannot replace file: " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Resolved configuration echo; with the version and seed lines it is enough
/// to reproduce the run.
inline void write_config_echo(const fs::path& dir, const RunConfig& cfg) {
  std::ostringstream out;
  out << "# pixant " << kVersion << '\n';
  out << "# seed " << cfg.swarm.seed << '\n';
  out << "# fingerprint " << config_fingerprint(cfg) << '\n';
  out << config_text(cfg);
  write_file(dir / "config.resolved.ini", out.str());
}

inline std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = std::string(kHistoryHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.iter) + ',' + fmt6(r.gbest_cost) + ',' + fmt6(r.s11_db) + ',' + fmt6(r.s21_db) + ',' +
           fmt6(r.cache_hit_rate) + ',' + r.bits_hex + '\n';
  return out;
}

// ---- reports ---------------------------------------------------------------

struct PairReport {
  double s11_db = 0.0;
  double s21_db = 0.0;
  double cost = 0.0;
  Resonance resonance{};
  SanityReport sanity{};
};

inline PairReport summarize(const SParamSet& s, const RunConfig& cfg) {
  PairReport r;
  r.s11_db = s11_db(s, cfg.cost.f0);
  r.s21_db = s21_db(s, cfg.cost.f0);
  r.cost = cfg.cost.cost(r.s11_db, r.s21_db);
  r.resonance = resonance_min(s, 1);
  r.sanity = sanity_check(s, cfg.materials.loss_tangent == 0.0);
  return r;
}

inline std::string report_text(const std::string& title, const PairReport& r, const RunConfig& cfg) {
  std::ostringstream o;
  o << title << '\n';
  o << "f0_hz " << fmt6(cfg.cost.f0) << '\n';
  o << "s11_db_at_f0 " << fmt6(r.s11_db) << '\n';
  o << "s21_db_at_f0 " << fmt6(r.s21_db) << '\n';
  o << "cost " << fmt6(r.cost) << '\n';
  o << "resonance_hz " << fmt6(r.resonance.freq) << '\n';
  o << "resonance_db " << fmt6(r.resonance.db) << '\n';
  o << "passivity_max " << fmt6(r.sanity.passivity_max) << (r.sanity.passivity_ok ? " ok" : " VIOLATED") << '\n';
  o << "reciprocity_max " << fmt6(r.sanity.reciprocity_max) << (r.sanity.reciprocity_ok ? " ok" : " VIOLATED")
    << '\n';
  return o.str();
}

// ---- simulate --------------------------------------------------------------

struct SimulateResult {
  SParamSet sparams;
  PairReport report;
  bool repaired = false;  // the mask had floating pixels or an inactive feed
};

/// Simulates the mask as both elements of the symmetric pair.
inline SimulateResult cmd_simulate(const RunConfig& cfg, const std::string& mask_path, const fs::path& out_dir) {
  const PixelGrid like = cfg.like();
  PixelGrid g = import_mask(mask_path, &like);
  if (g.nx != cfg.nx || g.ny != cfg.ny)
    throw std::invalid_argument("simulate: mask is " + std::to_string(g.nx) + "x" + std::to_string(g.ny) +
                                " but the configuration expects " + std::to_string(cfg.nx) + "x" +
                                std::to_string(cfg.ny));
  g.feed = like.feed;
  require_simulable(cfg);
  RunLock lock(out_dir);
  write_config_echo(out_dir, cfg);
  SimulateResult r;
  const PixelGrid fixed = repair_floating(g);
  r.repaired = !(fixed == g);
  r.sparams = simulate_pair(fixed, fixed, cfg);
  r.report = summarize(r.sparams, cfg);
  touchstone_write(r.sparams, (out_dir / "simulate.s2p").string());
  export_mask(fixed, (out_dir / "simulate.pbm").string());
  std::string text = report_text("pixant simulate", r.report, cfg);
  text += "mask " + mask_path + (r.repaired ? " (floating pixels removed)" : "") + '\n';
  write_file(out_dir / "simulate_report.txt", text);
  return r;
}

// ---- baseline --------------------------------------------------------------

struct BaselineResult {
  PatchDims dims{};
  PixelGrid grid;        // all-ones grid rasterizing the patch at the config pitch
  double f_model = 0.0;  // closed-form resonance of the rasterized patch
  std::optional<SParamSet> sparams;
  PairReport report{};
};

/// All-ones grid approximating a W x L patch at `pitch`. The column count is
/// kept odd so the bottom-centre feed sits on the patch axis.
inline PixelGrid rasterize_patch(const PatchDims& d, double pitch) {
  int nx = std::max(1, static_cast<int>(std::lround(d.W / pitch)));
  if (nx % 2 == 0) nx += (d.W / pitch >= nx) ? 1 : -1;
  const int ny = std::max(1, static_cast<int>(std::lround(d.L / pitch)));
  return make_grid(std::max(nx, 1), ny, true, pitch);
}

/// Standard patch for the configured f0 and stack; dims always written, the
/// pair simulated only when f0 lies in the analysis band.
inline BaselineResult cmd_baseline(const RunConfig& cfg, const fs::path& out_dir) {
  BaselineResult r;
  RunLock lock(out_dir);
  write_config_echo(out_dir, cfg);
  r.dims = design_standard_patch(cfg.cost.f0, cfg.materials.eps_r, cfg.materials.h);
  r.grid = rasterize_patch(r.dims, cfg.pitch);
  r.f_model = hammerstad_resonance(r.grid.nx * cfg.pitch, r.grid.ny * cfg.pitch, cfg.materials.eps_r, cfg.materials.h);
  {
    std::ostringstream o;
    o << "f0_hz " << fmt6(cfg.cost.f0) << '\n';
    o << "eps_r " << fmt6(cfg.materials.eps_r) << '\n';
    o << "h_m " << fmt6(cfg.materials.h) << '\n';
    o << "W_m " << detail::sig9(r.dims.W) << '\n';
    o << "L_m " << detail::sig9(r.dims.L) << '\n';
    o << "delta_L_m " << detail::sig9(r.dims.delta_L) << '\n';
    o << "eps_eff " << detail::sig9(r.dims.eps_eff) << '\n';
    o << "grid " << r.grid.nx << ' ' << r.grid.ny << '\n';
    o << "pitch_m " << detail::sig9(cfg.pitch) << '\n';
    o << "rasterized_W_m " << detail::sig9(r.grid.nx * cfg.pitch) << '\n';
    o << "rasterized_L_m " << detail::sig9(r.grid.ny * cfg.pitch) << '\n';
    o << "rasterized_model_resonance_hz " << detail::sig9(r.f_model) << '\n';
    write_file(out_dir / "dims.txt", o.str());
  }
  require_simulable(cfg);
  RunConfig c = cfg;
  c.nx = r.grid.nx;
  c.ny = r.grid.ny;
  c.feed_ix = -1;
  c.feed_iy = 0;
  r.grid.feed = c.feed();
  r.sparams = simulate_pair(r.grid, r.grid, c);
  r.report = summarize(*r.sparams, c);
  touchstone_write(*r.sparams, (out_dir / "baseline.s2p").string());
  write_file(out_dir / "baseline_report.txt",
             report_text("pixant baseline", r.report, c) + "model_resonance_hz " + fmt6(r.f_model) + '\n');
  return r;
}

// ---- optimize --------------------------------------------------------------

struct OptimizeOptions {
  std::optional<std::string> resume;  // checkpoint to continue from
  int stop_after = -1;                // stop once this many iterations are done
  PairEvaluator evaluator;            // defaults to the FDTD pipeline
  std::function<void(const BinarySwarm<PixelProblem>&)> on_step;
};

struct OptimizeResult {
  bool complete = false;
  OptResult result;
  PixelGrid best_a, best_b;
  std::optional<SParamSet> best_sparams;
  std::optional<SParamSet> baseline_sparams;
  Evaluation baseline;
  double isolation_improvement_db = 0.0;
};

inline void save_checkpoint(const BinarySwarm<PixelProblem>& swarm, const fs::path& path, const std::string& tag) {
  std::ostringstream s;
  swarm.save(s, tag);
  write_file(path, s.str());
}

inline OptimizeResult cmd_optimize(const RunConfig& cfg, const fs::path& out_dir, const OptimizeOptions& opt = {}) {
  require_simulable(cfg);
  RunLock lock(out_dir);
  write_config_echo(out_dir, cfg);
  const PairEvaluator eval = opt.evaluator ? opt.evaluator : make_fdtd_evaluator(cfg);
  const PixelProblem problem(cfg.like(), cfg.cost, eval, cfg.symmetric);
  BinarySwarm<PixelProblem> swarm(problem, cfg.swarm);
  const std::string tag = " config=" + config_fingerprint(cfg);
  const fs::path ckpt = out_dir / "checkpoint.txt";

  if (opt.resume) {
    std::ifstream in(*opt.resume, std::ios::binary);
    if (!in) throw IoError(*opt.resume, "cannot open checkpoint");
    swarm.load(in, *opt.resume, tag);
  } else {
    swarm.initialize();
  }
  write_file(out_dir / "history.csv", history_csv(swarm.history()));
  save_checkpoint(swarm, ckpt, tag);

  while (swarm.iteration() < cfg.swarm.n_iters && (opt.stop_after < 0 || swarm.iteration() < opt.stop_after)) {
    swarm.step();  // NumericalInstability propagates; the last checkpoint stays on disk
    write_file(out_dir / "history.csv", history_csv(swarm.history()));
    if (swarm.iteration() % cfg.checkpoint_interval == 0 || swarm.iteration() == cfg.swarm.n_iters)
      save_checkpoint(swarm, ckpt, tag);
    if (opt.on_step) opt.on_step(swarm);
  }
  if (swarm.iteration() % cfg.checkpoint_interval != 0) save_checkpoint(swarm, ckpt, tag);

  OptimizeResult r;
  r.result = swarm.result();
  r.complete = swarm.iteration() >= cfg.swarm.n_iters;
  if (!r.complete) return r;

  std::tie(r.best_a, r.best_b) = problem.decode(r.result.best_bits);
  if (cfg.symmetric) {
    export_mask(r.best_a, (out_dir / "best.pbm").string());
  } else {
    export_mask(r.best_a, (out_dir / "best_a.pbm").string());
    export_mask(r.best_b, (out_dir / "best_b.pbm").string());
  }
  PixelGrid ones = cfg.like();
  std::fill(ones.bits.begin(), ones.bits.end(), std::uint8_t{1});
  std::ostringstream rep;
  rep << "pixant optimize\n";
  rep << "iterations " << swarm.iteration() << '\n';
  rep << "distinct_evaluations " << r.result.evaluations << '\n';
  rep << "cache_hit_rate " << fmt6(swarm.cache().hit_rate()) << '\n';
  rep << "best_bits_hex " << problem.encode(r.result.best_bits) << '\n';
  rep << "best_cost " << fmt6(r.result.best.cost) << '\n';
  rep << "best_s11_db_at_f0 " << fmt6(r.result.best.s11_db) << '\n';
  rep << "best_s21_db_at_f0 " << fmt6(r.result.best.s21_db) << '\n';
  try {
    r.best_sparams = eval(r.best_a, r.best_b);
    r.baseline_sparams = eval(ones, ones);
    r.baseline = cfg.cost.score(*r.baseline_sparams);
    r.isolation_improvement_db = isolation_improvement(*r.baseline_sparams, *r.best_sparams, cfg.cost.f0);
    touchstone_write(*r.best_sparams, (out_dir / "best.s2p").string());
    touchstone_write(*r.baseline_sparams, (out_dir / "baseline.s2p").string());
    const SanityReport sane = sanity_check(*r.best_sparams, cfg.materials.loss_tangent == 0.0);
    rep << "best_passivity_max " << fmt6(sane.passivity_max) << '\n';
    rep << "best_reciprocity_max " << fmt6(sane.reciprocity_max) << '\n';
    rep << "baseline_cost " << fmt6(r.baseline.cost) << '\n';
    rep << "baseline_s11_db_at_f0 " << fmt6(r.baseline.s11_db) << '\n';
    rep << "baseline_s21_db_at_f0 " << fmt6(r.baseline.s21_db) << '\n';
    rep << "isolation_improvement_db " << fmt6(r.isolation_improvement_db) << '\n';
  } catch (const NumericalInstability&) {
    throw;
  } catch (const std::exception& ex) {
    rep << "final_evaluation_error " << detail::one_line(ex.what()) << '\n';
  }
  rep << "reference_improvement_db 18 (measured hardware against standard patches; not comparable)\n";
  write_file(out_dir / "report.txt", rep.str());
  return r;
}

}  // namespace pixant
