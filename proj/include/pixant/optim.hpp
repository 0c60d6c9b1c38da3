#pragma once

// Binary particle swarm optimization over bit vectors.
//
// A Problem supplies the search dimension, a canonicalization of raw bit
// vectors (for pixel grids: floating-pixel repair) and a thread-safe
// evaluation of canonical vectors. Particles adopt the canonical form of
// their position after every move, so every stored position is a valid
// design and equivalent phenotypes share one cache entry.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pixant/error.hpp"
#include "pixant/grid.hpp"
#include "pixant/rng.hpp"
#include "pixant/sparam.hpp"

namespace pixant {

enum class Transfer { S_SHAPED, V_SHAPED };

inline const char* to_string(Transfer t) { return t == Transfer::S_SHAPED ? "s-shaped" : "v-shaped"; }

inline Transfer parse_transfer(const std::string& s) {
  if (s == "s-shaped" || s == "S" || s == "s") return Transfer::S_SHAPED;
  if (s == "v-shaped" || s == "V" || s == "v") return Transfer::V_SHAPED;
  throw std::invalid_argument("unknown transfer function '" + s + "' (expected s-shaped or v-shaped)");
}

inline double transfer(double v, Transfer kind) {
  if (kind == Transfer::S_SHAPED) return 1.0 / (1.0 + std::exp(-v));
  return std::abs(std::tanh(v));
}

struct SwarmConfig {
  int n_particles = 30;
  int n_iters = 200;
  double w_start = 0.9;
  double w_end = 0.4;
  double c1 = 2.0;
  double c2 = 2.0;
  double v_max = 6.0;
  Transfer transfer = Transfer::S_SHAPED;
  std::uint64_t seed = 1;
  double init_density = 0.5;
  /// Worker threads for evaluation; results do not depend on it.
  int threads = 1;

  void validate() const {
    if (n_particles < 2) throw std::invalid_argument("swarm: n_particles must be >= 2");
    if (n_iters < 0) throw std::invalid_argument("swarm: n_iters must be >= 0");
    if (!(w_start > 0.0) || !(w_end > 0.0)) throw std::invalid_argument("swarm: inertia weights must be > 0");
    if (!(c1 >= 0.0) || !(c2 >= 0.0)) throw std::invalid_argument("swarm: c1, c2 must be >= 0");
    if (!(v_max > 0.0)) throw std::invalid_argument("swarm: v_max must be > 0");
    if (!(init_density >= 0.0 && init_density <= 1.0))
      throw std::invalid_argument("swarm: init_density must lie in [0, 1]");
    if (threads < 1) throw std::invalid_argument("swarm: threads must be >= 1");
  }

  /// Inertia for the move made in iteration t (0-based), linear from
  /// w_start to w_end over the run.
  double inertia(int t) const {
    if (n_iters <= 1) return w_start;
    const double u = std::clamp(static_cast<double>(t) / (n_iters - 1), 0.0, 1.0);
    return w_start + (w_end - w_start) * u;
  }
};

/// v'_d = clamp(w v_d + c1 r1_d (pbest_d - x_d) + c2 r2_d (gbest_d - x_d), +-v_max)
inline void velocity_update(std::vector<double>& v, const BitVector& x, const BitVector& pbest,
                            const BitVector& gbest, double w, double c1, double c2, double v_max,
                            const std::vector<double>& r1, const std::vector<double>& r2) {
  const std::size_t n = v.size();
  if (x.size() != n || pbest.size() != n || gbest.size() != n || r1.size() != n || r2.size() != n)
    throw std::invalid_argument("velocity_update: shape mismatch");
  for (std::size_t d = 0; d < n; ++d) {
    const double xd = x[d] ? 1.0 : 0.0;
    const double pd = pbest[d] ? 1.0 : 0.0;
    const double gd = gbest[d] ? 1.0 : 0.0;
    const double nv = w * v[d] + c1 * r1[d] * (pd - xd) + c2 * r2[d] * (gd - xd);
    v[d] = std::clamp(nv, -v_max, v_max);
  }
}

/// S-shaped: bit set iff r_d < S(v_d). V-shaped: bit flipped iff r_d < V(v_d).
inline void position_update(BitVector& x, const std::vector<double>& v, Transfer kind,
                            const std::vector<double>& r) {
  if (x.size() != v.size() || r.size() != v.size()) throw std::invalid_argument("position_update: shape mismatch");
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double p = transfer(v[d], kind);
    if (kind == Transfer::S_SHAPED) x[d] = r[d] < p ? 1 : 0;
    else if (r[d] < p) x[d] = x[d] ? 0 : 1;
  }
}

/// Outcome of one design evaluation. `cost` is +inf when the evaluator failed.
struct Evaluation {
  double cost = std::numeric_limits<double>::infinity();
  double s11_db = 0.0;
  double s21_db = 0.0;
  bool ok = false;
  std::string error;

  friend bool operator==(const Evaluation&, const Evaluation&) = default;
};

struct CostSpec {
  double f0 = 5.4e9;
  double t_match = -10.0;
  double t_iso = -40.0;
  double alpha = 1.0;
  double beta = 1.0;
  Band band{};
  std::size_t nfreq = 251;

  void validate() const {
    if (!(t_match < 0.0)) throw std::invalid_argument("cost: t_match must be < 0 dB");
    if (!(t_iso < t_match)) throw std::invalid_argument("cost: t_iso must be below t_match");
    if (!(alpha >= 0.0) || !(beta >= 0.0) || (alpha == 0.0 && beta == 0.0))
      throw std::invalid_argument("cost: alpha, beta must be >= 0 and not both 0");
    if (!(band.fmin > 0.0) || !(band.fmax > band.fmin)) throw std::invalid_argument("cost: invalid band");
    if (nfreq < 2) throw std::invalid_argument("cost: nfreq must be >= 2");
  }

  /// Hinge sum of the two shortfalls; zero iff both targets are met.
  double cost(double s11db, double s21db) const {
    return alpha * std::max(0.0, s11db - t_match) + beta * std::max(0.0, s21db - t_iso);
  }

  Evaluation score(const SParamSet& s) const {
    Evaluation e;
    e.s11_db = s11_db(s, f0);
    e.s21_db = s21_db(s, f0);
    e.cost = cost(e.s11_db, e.s21_db);
    e.ok = true;
    return e;
  }
};

/// Maps a repaired element pair to its two-port response.
using PairEvaluator = std::function<SParamSet(const PixelGrid&, const PixelGrid&)>;

/// Decodes, repairs and scores one design. Both elements carry `bits` when
/// `symmetric`; otherwise the first half of `bits` is element A and the
/// second half element B.
inline Evaluation evaluate_cost(const BitVector& bits, const PixelGrid& like, const CostSpec& spec,
                                const PairEvaluator& evaluator, bool symmetric = true) {
  const std::size_t n = like.size();
  if (bits.size() != (symmetric ? n : 2 * n)) throw std::invalid_argument("evaluate_cost: bit count mismatch");
  const PixelGrid a = repair_floating(with_bits(like, BitVector(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(n))));
  const PixelGrid b = symmetric ? a : repair_floating(with_bits(like, BitVector(bits.begin() + static_cast<std::ptrdiff_t>(n), bits.end())));
  try {
    return spec.score(evaluator(a, b));
  } catch (const NumericalInstability&) {
    throw;
  } catch (const std::exception& ex) {
    Evaluation e;
    e.error = ex.what();
    return e;
  }
}

/// Memo table keyed by canonical bit strings.
class EvalCache {
 public:
  const Evaluation* find(const std::string& key) const {
    const auto it = table_.find(key);
    return it == table_.end() ? nullptr : &it->second;
  }
  void insert(const std::string& key, const Evaluation& e) { table_.emplace(key, e); }
  std::size_t size() const { return table_.size(); }
  const std::map<std::string, Evaluation>& entries() const { return table_; }

  std::uint64_t hits = 0;
  std::uint64_t misses = 0;

  double hit_rate() const {
    const auto total = hits + misses;
    return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  }

 private:
  std::map<std::string, Evaluation> table_;
};

template <class P>
concept SwarmProblem = requires(const P& p, const BitVector& b) {
  { p.dimension() } -> std::convertible_to<std::size_t>;
  { p.canonical(b) } -> std::same_as<BitVector>;
  { p.evaluate(b) } -> std::same_as<Evaluation>;
  { p.encode(b) } -> std::convertible_to<std::string>;
};

/// Bit-level problem scored by a plain function; canonical form is identity.
class FunctionProblem {
 public:
  FunctionProblem(std::size_t n, std::function<double(const BitVector&)> f) : n_(n), f_(std::move(f)) {}
  std::size_t dimension() const { return n_; }
  BitVector canonical(const BitVector& b) const { return b; }
  Evaluation evaluate(const BitVector& b) const {
    Evaluation e;
    e.cost = f_(b);
    e.ok = true;
    return e;
  }
  std::string encode(const BitVector& b) const { return bits_hex(b, static_cast<int>(n_), 1); }

 private:
  std::size_t n_;
  std::function<double(const BitVector&)> f_;
};

/// Pixel-pair problem: one grid shared by both elements (symmetric) or one
/// grid per element.
class PixelProblem {
 public:
  PixelProblem(PixelGrid like, CostSpec spec, PairEvaluator evaluator, bool symmetric = true)
      : like_(std::move(like)), spec_(spec), eval_(std::move(evaluator)), symmetric_(symmetric) {
    like_.validate();
    spec_.validate();
  }

  std::size_t dimension() const { return symmetric_ ? like_.size() : 2 * like_.size(); }
  bool symmetric() const { return symmetric_; }
  const PixelGrid& like() const { return like_; }
  const CostSpec& cost_spec() const { return spec_; }

  BitVector canonical(const BitVector& b) const {
    const std::size_t n = like_.size();
    if (b.size() != dimension()) throw std::invalid_argument("pixel problem: bit count mismatch");
    BitVector out = repair_floating(with_bits(like_, BitVector(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n)))).bits;
    if (!symmetric_) {
      const auto second = repair_floating(with_bits(like_, BitVector(b.begin() + static_cast<std::ptrdiff_t>(n), b.end()))).bits;
      out.insert(out.end(), second.begin(), second.end());
    }
    return out;
  }

  Evaluation evaluate(const BitVector& b) const { return evaluate_cost(b, like_, spec_, eval_, symmetric_); }

  std::string encode(const BitVector& b) const {
    const std::size_t n = like_.size();
    std::string out = bits_hex(BitVector(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n)), like_.nx, like_.ny);
    if (!symmetric_) out += bits_hex(BitVector(b.begin() + static_cast<std::ptrdiff_t>(n), b.end()), like_.nx, like_.ny);
    return out;
  }

  /// Element grids of a canonical design.
  std::pair<PixelGrid, PixelGrid> decode(const BitVector& b) const {
    const std::size_t n = like_.size();
    PixelGrid a = with_bits(like_, BitVector(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n)));
    PixelGrid c = symmetric_ ? a : with_bits(like_, BitVector(b.begin() + static_cast<std::ptrdiff_t>(n), b.end()));
    return {a, c};
  }

 private:
  PixelGrid like_;
  CostSpec spec_;
  PairEvaluator eval_;
  bool symmetric_;
};

struct Particle {
  BitVector position;
  std::vector<double> velocity;
  BitVector pbest_position;
  Evaluation pbest;
  Evaluation current;
  Rng rng;
  std::uint64_t stream = 0;
};

struct HistoryRow {
  int iter = 0;
  double gbest_cost = 0.0;
  double s11_db = 0.0;
  double s21_db = 0.0;
  double cache_hit_rate = 0.0;
  std::string bits_hex;
};

struct OptResult {
  BitVector best_bits;
  Evaluation best;
  std::vector<HistoryRow> history;
  std::uint64_t evaluations = 0;  // distinct designs evaluated
};

namespace detail {

inline std::string bit_string(const BitVector& b) {
  std::string s(b.size(), '0');
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i]) s[i] = '1';
  return s;
}

inline BitVector bits_from_string(const std::string& s) {
  BitVector b(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '1') throw std::invalid_argument("bit string contains '" + std::string(1, s[i]) + "'");
    b[i] = s[i] == '1';
  }
  return b;
}

inline std::string hexfloat(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

/// Error text with whitespace flattened so it fits on one checkpoint line.
inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  return s;
}

}  // namespace detail

template <SwarmProblem Problem>
class BinarySwarm {
 public:
  BinarySwarm(const Problem& problem, SwarmConfig config) : problem_(problem), cfg_(config) {
    cfg_.validate();
    if (problem_.dimension() == 0) throw std::invalid_argument("swarm: problem has no bits");
  }

  /// Random population (Bernoulli(init_density) bits from each particle's
  /// stream), zero velocities, evaluated; pbest = initial positions.
  void initialize() {
    const std::size_t n = problem_.dimension();
    particles_.clear();
    for (int p = 0; p < cfg_.n_particles; ++p) {
      Particle pt;
      pt.stream = static_cast<std::uint64_t>(p);
      pt.rng = make_stream(cfg_.seed, pt.stream);
      pt.position.resize(n);
      for (auto& b : pt.position) b = uniform01(pt.rng) < cfg_.init_density ? 1 : 0;
      pt.velocity.assign(n, 0.0);
      particles_.push_back(std::move(pt));
    }
    iteration_ = 0;
    have_gbest_ = false;
    history_.clear();
    evaluate_all();
    for (auto& pt : particles_) {
      pt.pbest_position = pt.position;
      pt.pbest = pt.current;
    }
    reduce_gbest();
  }

  /// One generation: move every particle using the bests found so far, then
  /// evaluate and update pbest/gbest in ascending particle order.
  void step() {
    if (particles_.empty()) throw std::logic_error("swarm: step before initialize");
    const double w = cfg_.inertia(iteration_);
    const std::size_t n = problem_.dimension();
    std::vector<double> r1(n), r2(n), r(n);
    for (auto& pt : particles_) {
      for (std::size_t d = 0; d < n; ++d) {
        r1[d] = uniform01(pt.rng);
        r2[d] = uniform01(pt.rng);
      }
      velocity_update(pt.velocity, pt.position, pt.pbest_position, gbest_bits_, w, cfg_.c1, cfg_.c2,
                      cfg_.v_max, r1, r2);
      for (std::size_t d = 0; d < n; ++d) r[d] = uniform01(pt.rng);
      position_update(pt.position, pt.velocity, cfg_.transfer, r);
    }
    evaluate_all();
    for (auto& pt : particles_)
      if (pt.current.cost < pt.pbest.cost) {
        pt.pbest_position = pt.position;
        pt.pbest = pt.current;
      }
    reduce_gbest();
    ++iteration_;
    history_.push_back(HistoryRow{iteration_, gbest_.cost, gbest_.s11_db, gbest_.s21_db, cache_.hit_rate(),
                                  problem_.encode(gbest_bits_)});
  }

  /// Runs steps until n_iters; `on_step` is called after each one.
  OptResult run(const std::function<void(const BinarySwarm&)>& on_step = {}) {
    if (particles_.empty()) initialize();
    while (iteration_ < cfg_.n_iters) {
      step();
      if (on_step) on_step(*this);
    }
    return result();
  }

  OptResult result() const { return OptResult{gbest_bits_, gbest_, history_, cache_.misses}; }

  int iteration() const { return iteration_; }
  const SwarmConfig& config() const { return cfg_; }
  const std::vector<Particle>& particles() const { return particles_; }
  const BitVector& gbest_bits() const { return gbest_bits_; }
  const Evaluation& gbest() const { return gbest_; }
  const EvalCache& cache() const { return cache_; }
  const std::vector<HistoryRow>& history() const { return history_; }

  // ---- checkpoint ----------------------------------------------------------

  /// Identifies the run a checkpoint belongs to.
  std::string fingerprint() const {
    std::ostringstream f;
    f << "dim=" << problem_.dimension() << " particles=" << cfg_.n_particles << " iters=" << cfg_.n_iters
      << " w=" << detail::hexfloat(cfg_.w_start) << ',' << detail::hexfloat(cfg_.w_end)
      << " c=" << detail::hexfloat(cfg_.c1) << ',' << detail::hexfloat(cfg_.c2)
      << " vmax=" << detail::hexfloat(cfg_.v_max) << " transfer=" << to_string(cfg_.transfer)
      << " seed=" << cfg_.seed << " density=" << detail::hexfloat(cfg_.init_density);
    return f.str();
  }

  void save(std::ostream& out, const std::string& extra_fingerprint = "") const {
    using detail::hexfloat;
    auto eval_fields = [&](const Evaluation& e) {
      return hexfloat(e.cost) + ' ' + hexfloat(e.s11_db) + ' ' + hexfloat(e.s21_db) + ' ' + (e.ok ? '1' : '0');
    };
    out << "pixant-checkpoint 1\n";
    out << "fingerprint " << fingerprint() << extra_fingerprint << '\n';
    out << "iteration " << iteration_ << '\n';
    out << "counters " << cache_.hits << ' ' << cache_.misses << '\n';
    out << "gbest " << (have_gbest_ ? 1 : 0) << ' ' << eval_fields(gbest_) << ' ' << detail::bit_string(gbest_bits_) << '\n';
    out << "gbest_error " << detail::one_line(gbest_.error) << '\n';
    out << "particles " << particles_.size() << '\n';
    for (const auto& pt : particles_) {
      out << "particle " << pt.stream << '\n';
      out << "position " << detail::bit_string(pt.position) << '\n';
      out << "velocity";
      for (double v : pt.velocity) out << ' ' << hexfloat(v);
      out << '\n';
      out << "current " << eval_fields(pt.current) << '\n';
      out << "current_error " << detail::one_line(pt.current.error) << '\n';
      out << "pbest " << eval_fields(pt.pbest) << ' ' << detail::bit_string(pt.pbest_position) << '\n';
      out << "pbest_error " << detail::one_line(pt.pbest.error) << '\n';
      out << "rng " << rng_state(pt.rng) << '\n';
    }
    out << "cache " << cache_.size() << '\n';
    for (const auto& [key, e] : cache_.entries()) {
      out << "entry " << key << ' ' << eval_fields(e) << '\n';
      out << "entry_error " << detail::one_line(e.error) << '\n';
    }
    out << "history " << history_.size() << '\n';
    for (const auto& h : history_)
      out << "row " << h.iter << ' ' << hexfloat(h.gbest_cost) << ' ' << hexfloat(h.s11_db) << ' '
          << hexfloat(h.s21_db) << ' ' << hexfloat(h.cache_hit_rate) << ' ' << h.bits_hex << '\n';
    out << "end\n";
  }

  void load(std::istream& in, const std::string& source = "checkpoint", const std::string& extra_fingerprint = "") {
    int lineno = 0;
    std::string line;
    auto next = [&](const std::string& tag) -> std::string {
      if (!std::getline(in, line)) throw ParseError(source, lineno + 1, "unexpected end of file, expected '" + tag + "'");
      ++lineno;
      if (line.compare(0, tag.size(), tag) != 0 || (line.size() > tag.size() && line[tag.size()] != ' '))
        throw ParseError(source, lineno, "expected '" + tag + "'");
      return line.size() > tag.size() ? line.substr(tag.size() + 1) : std::string();
    };
    auto fail = [&](const std::string& what) -> ParseError { return ParseError(source, lineno, what); };
    auto words = [](const std::string& s) {
      std::istringstream ss(s);
      std::vector<std::string> w;
      for (std::string t; ss >> t;) w.push_back(t);
      return w;
    };
    auto num = [&](const std::string& s) {
      try {
        return detail::parse_hexfloat(s);
      } catch (const std::exception&) {
        throw fail("bad number '" + s + "'");
      }
    };
    auto count = [&](const std::string& s) -> std::uint64_t {
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) throw fail("bad count '" + s + "'");
      return std::stoull(s);
    };
    auto eval_from = [&](const std::vector<std::string>& w, std::size_t at) {
      if (w.size() < at + 4) throw fail("truncated evaluation record");
      Evaluation e;
      e.cost = num(w[at]);
      e.s11_db = num(w[at + 1]);
      e.s21_db = num(w[at + 2]);
      if (w[at + 3] != "0" && w[at + 3] != "1") throw fail("bad ok flag");
      e.ok = w[at + 3] == "1";
      return e;
    };
    auto bits = [&](const std::string& s) {
      try {
        BitVector b = detail::bits_from_string(s);
        if (b.size() != problem_.dimension()) throw fail("bit string has wrong length");
        return b;
      } catch (const ParseError&) {
        throw;
      } catch (const std::exception& ex) {
        throw fail(ex.what());
      }
    };

    if (!std::getline(in, line) || line != "pixant-checkpoint 1") throw ParseError(source, 1, "not a version 1 checkpoint");
    ++lineno;
    if (next("fingerprint") != fingerprint() + extra_fingerprint)
      throw fail("checkpoint belongs to a different configuration");
    const int iter = static_cast<int>(count(next("iteration")));
    if (iter > cfg_.n_iters) throw fail("iteration beyond configured n_iters");
    EvalCache cache;
    {
      const auto w = words(next("counters"));
      if (w.size() != 2) throw fail("expected hit and miss counters");
      cache.hits = count(w[0]);
      cache.misses = count(w[1]);
    }
    Evaluation gbest;
    BitVector gbits;
    bool have = false;
    {
      const auto w = words(next("gbest"));
      if (w.size() != 6 || (w[0] != "0" && w[0] != "1")) throw fail("malformed gbest record");
      have = w[0] == "1";
      gbest = eval_from(w, 1);
      gbits = bits(w[5]);
      gbest.error = next("gbest_error");
    }
    const auto np = count(next("particles"));
    if (np != static_cast<std::uint64_t>(cfg_.n_particles)) throw fail("particle count mismatch");
    std::vector<Particle> ps;
    for (std::uint64_t p = 0; p < np; ++p) {
      Particle pt;
      pt.stream = count(next("particle"));
      pt.position = bits(next("position"));
      for (const auto& t : words(next("velocity"))) pt.velocity.push_back(num(t));
      if (pt.velocity.size() != problem_.dimension()) throw fail("velocity has wrong length");
      pt.current = eval_from(words(next("current")), 0);
      pt.current.error = next("current_error");
      const auto w = words(next("pbest"));
      if (w.size() != 5) throw fail("malformed pbest record");
      pt.pbest = eval_from(w, 0);
      pt.pbest_position = bits(w[4]);
      pt.pbest.error = next("pbest_error");
      const std::string state = next("rng");
      std::istringstream rs(state);
      rs >> pt.rng;
      if (!rs) throw fail("malformed generator state");
      ps.push_back(std::move(pt));
    }
    const auto nc = count(next("cache"));
    for (std::uint64_t c = 0; c < nc; ++c) {
      const auto w = words(next("entry"));
      if (w.size() != 5) throw fail("malformed cache entry");
      Evaluation e = eval_from(w, 1);
      e.error = next("entry_error");
      cache.insert(w[0], e);
    }
    const auto nh = count(next("history"));
    std::vector<HistoryRow> hist;
    for (std::uint64_t h = 0; h < nh; ++h) {
      const auto w = words(next("row"));
      if (w.size() != 6) throw fail("malformed history row");
      hist.push_back(HistoryRow{static_cast<int>(count(w[0])), num(w[1]), num(w[2]), num(w[3]), num(w[4]), w[5]});
    }
    if (hist.size() != static_cast<std::size_t>(iter)) throw fail("history length does not match iteration");
    next("end");

    particles_ = std::move(ps);
    cache_ = std::move(cache);
    history_ = std::move(hist);
    gbest_ = gbest;
    gbest_bits_ = gbits;
    have_gbest_ = have;
    iteration_ = iter;
  }

 private:
  std::string key(const BitVector& b) const { return detail::bit_string(b); }

  /// Canonicalizes positions, then evaluates each distinct design not yet in
  /// the cache. Hit/miss accounting runs in particle order so it does not
  /// depend on the thread count.
  void evaluate_all() {
    std::vector<std::string> keys(particles_.size());
    std::vector<std::pair<std::string, BitVector>> todo;
    std::map<std::string, bool> scheduled;
    for (std::size_t p = 0; p < particles_.size(); ++p) {
      particles_[p].position = problem_.canonical(particles_[p].position);
      keys[p] = key(particles_[p].position);
      if (cache_.find(keys[p]) || scheduled.count(keys[p])) {
        ++cache_.hits;
      } else {
        ++cache_.misses;
        scheduled[keys[p]] = true;
        todo.emplace_back(keys[p], particles_[p].position);
      }
    }
    std::vector<Evaluation> results(todo.size());
    const int workers = std::min<int>(cfg_.threads, static_cast<int>(todo.size()));
    if (workers <= 1) {
      for (std::size_t t = 0; t < todo.size(); ++t) results[t] = problem_.evaluate(todo[t].second);
    } else {
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t t; (t = next.fetch_add(1)) < todo.size();) {
            try {
              results[t] = problem_.evaluate(todo[t].second);
            } catch (...) {
              std::lock_guard<std::mutex> lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      for (auto& th : pool) th.join();
      if (failure) std::rethrow_exception(failure);
    }
    for (std::size_t t = 0; t < todo.size(); ++t) cache_.insert(todo[t].first, results[t]);
    for (std::size_t p = 0; p < particles_.size(); ++p) particles_[p].current = *cache_.find(keys[p]);
  }

  /// gbest changes only on strict improvement, scanning particles in order.
  void reduce_gbest() {
    for (const auto& pt : particles_)
      if (!have_gbest_ || pt.pbest.cost < gbest_.cost) {
        gbest_ = pt.pbest;
        gbest_bits_ = pt.pbest_position;
        have_gbest_ = true;
      }
  }

  Problem problem_;
  SwarmConfig cfg_;
  std::vector<Particle> particles_;
  BitVector gbest_bits_;
  Evaluation gbest_;
  bool have_gbest_ = false;
  EvalCache cache_;
  std::vector<HistoryRow> history_;
  int iteration_ = 0;
};

/// Initialize and run to completion.
template <SwarmProblem Problem>
OptResult optimize(const Problem& problem, const SwarmConfig& config) {
  BinarySwarm<Problem> swarm(problem, config);
  swarm.initialize();
  return swarm.run();
}

}  // namespace pixant
