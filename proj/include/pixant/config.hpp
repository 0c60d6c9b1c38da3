#pragma once

// Run configuration: a sectioned "key = value" text file.
//
//   [grid]       nx ny pitch feed_ix feed_iy spacing resolution symmetric
//   [materials]  preset eps_r h loss_tangent
//   [cost]       f0 t_match t_iso alpha beta fmin fmax nfreq
//   [swarm]      n_particles n_iters w_start w_end c1 c2 v_max transfer seed
//                init_density threads
//   [solver]     max_steps decay_threshold pml_cells air_cells substrate_cells
//                z_grading feed_length cfl pulse_center
//   [output]     dir checkpoint_interval
//
// '#' and ';' start comments. Missing keys keep their defaults; unknown keys,
// repeated keys and bad values are errors. f0 also accepts the presets
// "design" (5.4 GHz) and "gps" (1.57 GHz).

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixant/bench.hpp"
#include "pixant/emcore.hpp"
#include "pixant/error.hpp"
#include "pixant/grid.hpp"
#include "pixant/optim.hpp"
#include "pixant/touchstone.hpp"

namespace pixant {

inline constexpr const char* kVersion = "1.0.0";

struct RunConfig {
  // [grid]
  int nx = 8;
  int ny = 8;
  double pitch = 2.2e-3;
  int feed_ix = -1;  // -1: bottom centre
  int feed_iy = 0;
  double spacing = 4.4e-3;
  int resolution = 2;
  bool symmetric = true;
  // [materials]
  std::string material_preset = "rogers-like";
  MaterialStack materials{};
  // [cost]
  CostSpec cost{};
  // [swarm]
  SwarmConfig swarm{};
  // [solver]
  std::size_t max_steps = 80000;
  double decay_threshold = 1e-8;
  LatticeSpec lattice{};
  double cfl = 0.99;
  double pulse_center = 5.5e9;
  // [output]
  std::string out_dir = "run";
  int checkpoint_interval = 1;

  Cell feed() const { return Cell{feed_ix < 0 ? nx / 2 : feed_ix, feed_iy}; }

  /// Empty grid of the configured shape, pitch and feed.
  PixelGrid like() const {
    PixelGrid g = make_grid(nx, ny, false, pitch);
    g.feed = feed();
    g.validate();
    return g;
  }

  Pulse pulse() const {
    Pulse p;
    p.center = pulse_center;
    return p;
  }

  RunOptions run_options() const {
    RunOptions o;
    o.decay_threshold = decay_threshold;
    o.cfl = cfl;
    return o;
  }
};

namespace detail {

struct ConfigField {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;  // throws invalid_argument
};

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& s) {
  double v = 0.0;
  if (!parse_double(s, v)) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

inline long long to_int(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("expected an integer, got ''");
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (...) {
    used = 0;
  }
  if (used != s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

inline bool to_bool(const std::string& s) {
  const std::string u = upper(s);
  if (u == "TRUE" || u == "1" || u == "YES" || u == "ON") return true;
  if (u == "FALSE" || u == "0" || u == "NO" || u == "OFF") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

inline int int_min(const std::string& s, long long lo) {
  const long long v = to_int(s);
  if (v < lo || v > 1000000000LL) throw std::invalid_argument("must be an integer >= " + std::to_string(lo));
  return static_cast<int>(v);
}

inline double positive(const std::string& s) {
  const double v = to_double(s);
  if (!(v > 0.0)) throw std::invalid_argument("must be > 0");
  return v;
}

inline double frequency(const std::string& s) {
  const std::string u = upper(s);
  if (u == "DESIGN") return kDesignFrequency;
  if (u == "GPS") return kGpsFrequency;
  return positive(s);
}

inline std::vector<ConfigField> config_fields() {
  using R = RunConfig;
  using S = const std::string&;
  auto num = [](double v) { return fmt17(v); };
  std::vector<ConfigField> f;
  auto add = [&](const char* sec, const char* key, std::function<std::string(const R&)> g,
                 std::function<void(R&, S)> s) { f.push_back({sec, key, std::move(g), std::move(s)}); };

  add("grid", "nx", [](const R& c) { return std::to_string(c.nx); }, [](R& c, S v) { c.nx = int_min(v, 1); });
  add("grid", "ny", [](const R& c) { return std::to_string(c.ny); }, [](R& c, S v) { c.ny = int_min(v, 1); });
  add("grid", "pitch", [=](const R& c) { return num(c.pitch); }, [](R& c, S v) { c.pitch = positive(v); });
  add("grid", "feed_ix", [](const R& c) { return std::to_string(c.feed().ix); },
      [](R& c, S v) { c.feed_ix = int_min(v, 0); });
  add("grid", "feed_iy", [](const R& c) { return std::to_string(c.feed_iy); },
      [](R& c, S v) { c.feed_iy = int_min(v, 0); });
  add("grid", "spacing", [=](const R& c) { return num(c.spacing); }, [](R& c, S v) {
    c.spacing = to_double(v);
    if (!(c.spacing >= 0.0)) throw std::invalid_argument("must be >= 0");
  });
  add("grid", "resolution", [](const R& c) { return std::to_string(c.resolution); },
      [](R& c, S v) { c.resolution = int_min(v, 2); });
  add("grid", "symmetric", [](const R& c) { return std::string(c.symmetric ? "true" : "false"); },
      [](R& c, S v) { c.symmetric = to_bool(v); });

  add("materials", "preset", [](const R& c) { return c.material_preset; }, [](R& c, S v) {
    if (v != "rogers-like") throw std::invalid_argument("unknown preset '" + v + "' (known: rogers-like)");
    c.material_preset = v;
    c.materials.eps_r = 2.2;
    c.materials.h = 0.787e-3;
  });
  add("materials", "eps_r", [=](const R& c) { return num(c.materials.eps_r); }, [](R& c, S v) {
    c.materials.eps_r = to_double(v);
    if (!(c.materials.eps_r >= 1.0)) throw std::invalid_argument("must be >= 1");
  });
  add("materials", "h", [=](const R& c) { return num(c.materials.h); }, [](R& c, S v) { c.materials.h = positive(v); });
  add("materials", "loss_tangent", [=](const R& c) { return num(c.materials.loss_tangent); }, [](R& c, S v) {
    c.materials.loss_tangent = to_double(v);
    if (!(c.materials.loss_tangent >= 0.0)) throw std::invalid_argument("must be >= 0");
  });

  add("cost", "f0", [=](const R& c) { return num(c.cost.f0); }, [](R& c, S v) { c.cost.f0 = frequency(v); });
  add("cost", "t_match", [=](const R& c) { return num(c.cost.t_match); }, [](R& c, S v) {
    c.cost.t_match = to_double(v);
    if (!(c.cost.t_match < 0.0)) throw std::invalid_argument("must be < 0 dB");
  });
  add("cost", "t_iso", [=](const R& c) { return num(c.cost.t_iso); }, [](R& c, S v) { c.cost.t_iso = to_double(v); });
  add("cost", "alpha", [=](const R& c) { return num(c.cost.alpha); }, [](R& c, S v) {
    c.cost.alpha = to_double(v);
    if (!(c.cost.alpha >= 0.0)) throw std::invalid_argument("must be >= 0");
  });
  add("cost", "beta", [=](const R& c) { return num(c.cost.beta); }, [](R& c, S v) {
    c.cost.beta = to_double(v);
    if (!(c.cost.beta >= 0.0)) throw std::invalid_argument("must be >= 0");
  });
  add("cost", "fmin", [=](const R& c) { return num(c.cost.band.fmin); }, [](R& c, S v) { c.cost.band.fmin = positive(v); });
  add("cost", "fmax", [=](const R& c) { return num(c.cost.band.fmax); }, [](R& c, S v) { c.cost.band.fmax = positive(v); });
  add("cost", "nfreq", [](const R& c) { return std::to_string(c.cost.nfreq); },
      [](R& c, S v) { c.cost.nfreq = static_cast<std::size_t>(int_min(v, 2)); });

  add("swarm", "n_particles", [](const R& c) { return std::to_string(c.swarm.n_particles); },
      [](R& c, S v) { c.swarm.n_particles = int_min(v, 2); });
  add("swarm", "n_iters", [](const R& c) { return std::to_string(c.swarm.n_iters); },
      [](R& c, S v) { c.swarm.n_iters = int_min(v, 0); });
  add("swarm", "w_start", [=](const R& c) { return num(c.swarm.w_start); }, [](R& c, S v) { c.swarm.w_start = positive(v); });
  add("swarm", "w_end", [=](const R& c) { return num(c.swarm.w_end); }, [](R& c, S v) { c.swarm.w_end = positive(v); });
  add("swarm", "c1", [=](const R& c) { return num(c.swarm.c1); }, [](R& c, S v) {
    c.swarm.c1 = to_double(v);
    if (!(c.swarm.c1 >= 0.0)) throw std::invalid_argument("must be >= 0");
  });
  add("swarm", "c2", [=](const R& c) { return num(c.swarm.c2); }, [](R& c, S v) {
    c.swarm.c2 = to_double(v);
    if (!(c.swarm.c2 >= 0.0)) throw std::invalid_argument("must be >= 0");
  });
  add("swarm", "v_max", [=](const R& c) { return num(c.swarm.v_max); }, [](R& c, S v) { c.swarm.v_max = positive(v); });
  add("swarm", "transfer", [](const R& c) { return std::string(to_string(c.swarm.transfer)); },
      [](R& c, S v) { c.swarm.transfer = parse_transfer(v); });
  add("swarm", "seed", [](const R& c) { return std::to_string(c.swarm.seed); }, [](R& c, S v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    try {
      c.swarm.seed = std::stoull(v);
    } catch (...) {
      throw std::invalid_argument("seed out of range");
    }
  });
  add("swarm", "init_density", [=](const R& c) { return num(c.swarm.init_density); }, [](R& c, S v) {
    c.swarm.init_density = to_double(v);
    if (!(c.swarm.init_density >= 0.0 && c.swarm.init_density <= 1.0)) throw std::invalid_argument("must lie in [0, 1]");
  });
  add("swarm", "threads", [](const R& c) { return std::to_string(c.swarm.threads); },
      [](R& c, S v) { c.swarm.threads = int_min(v, 1); });

  add("solver", "max_steps", [](const R& c) { return std::to_string(c.max_steps); },
      [](R& c, S v) { c.max_steps = static_cast<std::size_t>(int_min(v, 1)); });
  add("solver", "decay_threshold", [=](const R& c) { return num(c.decay_threshold); }, [](R& c, S v) {
    c.decay_threshold = positive(v);
    if (!(c.decay_threshold < 1.0)) throw std::invalid_argument("must be < 1");
  });
  add("solver", "pml_cells", [](const R& c) { return std::to_string(c.lattice.boundary.pml_cells); },
      [](R& c, S v) { c.lattice.boundary.pml_cells = int_min(v, 6); });
  add("solver", "air_cells", [](const R& c) { return std::to_string(c.lattice.air_cells); },
      [](R& c, S v) { c.lattice.air_cells = int_min(v, 10); });
  add("solver", "substrate_cells", [](const R& c) { return std::to_string(c.lattice.substrate_cells); },
      [](R& c, S v) { c.lattice.substrate_cells = int_min(v, 3); });
  add("solver", "z_grading", [=](const R& c) { return num(c.lattice.z_grading); }, [](R& c, S v) {
    c.lattice.z_grading = to_double(v);
    if (!(c.lattice.z_grading >= 1.0)) throw std::invalid_argument("must be >= 1");
  });
  add("solver", "feed_length", [](const R& c) { return std::to_string(c.lattice.feed_length_pixels); },
      [](R& c, S v) { c.lattice.feed_length_pixels = int_min(v, 1); });
  add("solver", "cfl", [=](const R& c) { return num(c.cfl); }, [](R& c, S v) {
    c.cfl = positive(v);
    if (!(c.cfl <= 1.0)) throw std::invalid_argument("must be <= 1");
  });
  add("solver", "pulse_center", [=](const R& c) { return num(c.pulse_center); },
      [](R& c, S v) { c.pulse_center = positive(v); });

  add("output", "dir", [](const R& c) { return c.out_dir; }, [](R& c, S v) {
    if (v.empty()) throw std::invalid_argument("must not be empty");
    c.out_dir = v;
  });
  add("output", "checkpoint_interval", [](const R& c) { return std::to_string(c.checkpoint_interval); },
      [](R& c, S v) { c.checkpoint_interval = int_min(v, 1); });
  return f;
}

}  // namespace detail

/// Cross-field checks; `where` maps "section.key" to the line it was read from.
inline void validate_config(const RunConfig& c, const std::map<std::string, int>& where = {}) {
  auto line = [&](const std::string& k) {
    const auto it = where.find(k);
    return it == where.end() ? 0 : it->second;
  };
  auto fail = [&](const std::string& sec, const std::string& key, const std::string& what) {
    throw ConfigError(sec, key, line(sec + "." + key), what);
  };
  if (c.feed().ix >= c.nx) fail("grid", "feed_ix", "feed column outside the grid");
  if (c.feed_iy >= c.ny) fail("grid", "feed_iy", "feed row outside the grid");
  if (!(c.cost.t_iso < c.cost.t_match)) fail("cost", "t_iso", "must be below t_match");
  if (c.cost.alpha == 0.0 && c.cost.beta == 0.0) fail("cost", "beta", "alpha and beta must not both be 0");
  if (!(c.cost.band.fmax > c.cost.band.fmin)) fail("cost", "fmax", "must exceed fmin");
  try {
    c.materials.validate();
    c.cost.validate();
    c.swarm.validate();
    c.lattice.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("config", "", 0, ex.what());
  }
}

inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  const auto fields = detail::config_fields();
  struct Entry {
    const detail::ConfigField* field;
    std::string value;
    int line;
  };
  std::vector<Entry> entries;
  std::map<std::string, int> where;
  std::string section;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(section, "", lineno, "malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields) known = known || f.section == section;
      if (!known) throw ConfigError(section, "", lineno, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(section, line, lineno, "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("", key, lineno, "key outside any section");
    const detail::ConfigField* field = nullptr;
    for (const auto& f : fields)
      if (f.section == section && f.key == key) field = &f;
    if (!field) throw ConfigError(section, key, lineno, "unknown key");
    if (where.count(section + "." + key)) throw ConfigError(section, key, lineno, "repeated key");
    where[section + "." + key] = lineno;
    entries.push_back({field, value, lineno});
  }
  // A preset sets several keys at once; explicit keys override it.
  std::stable_partition(entries.begin(), entries.end(), [](const Entry& e) { return e.field->key == "preset"; });
  for (const auto& e : entries) {
    try {
      e.field->set(cfg, e.value);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(e.field->section, e.field->key, e.line, ex.what());
    }
  }
  if (cfg.materials.eps_r != 2.2 || cfg.materials.h != 0.787e-3) cfg.material_preset = "custom";
  validate_config(cfg, where);
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open config");
  return parse_config(in);
}

/// Every key with its resolved value, in a form parse_config reads back to
/// the same configuration. Sections listed in `skip` are left out.
inline std::string config_text(const RunConfig& cfg, const std::vector<std::string>& skip = {}) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : detail::config_fields()) {
    if (std::find(skip.begin(), skip.end(), f.section) != skip.end()) continue;
    if (f.section == "materials" && f.key == "preset" && cfg.material_preset == "custom") continue;
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

/// FNV-1a over the result-relevant configuration. Output location and thread
/// count do not enter, so they may change between a run and its resume.
inline std::string config_fingerprint(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.swarm.threads = 1;
  const std::string text = config_text(c, {"output"});
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pixant
