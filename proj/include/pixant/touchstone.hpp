#pragma once

// Touchstone version 1 two-port files (.s2p).
//
// Written files carry the option line "# HZ S RI R <z0>" and one data line per
// frequency: f, then real/imaginary pairs of S11, S21, S12, S22, all with nine
// significant digits. The reader also accepts KHZ/MHZ/GHZ units and MA/DB
// formats; comments start with '!'.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pixant/error.hpp"
#include "pixant/sparam.hpp"

namespace pixant {

namespace detail {

inline std::string sig9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

inline bool parse_double(const std::string& tok, double& out) {
  if (tok.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(tok, &used);
  } catch (...) {
    return false;
  }
  return used == tok.size() && std::isfinite(out);
}

}  // namespace detail

inline void touchstone_write(std::ostream& out, const SParamSet& set) {
  set.validate();
  out << "! pixant two-port scattering parameters\n";
  out << "# HZ S RI R " << detail::sig9(set.z0) << '\n';
  for (std::size_t k = 0; k < set.size(); ++k) {
    const SMatrix& m = set.s[k];
    out << detail::sig9(set.freqs[k]);
    for (const cplx& v : {m[0][0], m[1][0], m[0][1], m[1][1]})
      out << ' ' << detail::sig9(v.real()) << ' ' << detail::sig9(v.imag());
    out << '\n';
  }
}

inline void touchstone_write(const SParamSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  touchstone_write(out, set);
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

inline SParamSet touchstone_read(std::istream& in, const std::string& source = "touchstone") {
  SParamSet set;
  double unit = 1e9;  // version 1 defaults: GHZ S MA R 50
  std::string format = "MA";
  bool have_options = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto bang = line.find('!'); bang != std::string::npos) line.erase(bang);
    std::istringstream toks(line);
    std::vector<std::string> words;
    for (std::string w; toks >> w;) words.push_back(w);
    if (words.empty()) continue;

    if (words[0][0] == '#') {
      if (have_options) throw ParseError(source, lineno, "duplicate option line");
      if (!set.freqs.empty()) throw ParseError(source, lineno, "option line after data");
      have_options = true;
      if (words[0] != "#") words[0].erase(0, 1);
      else words.erase(words.begin());
      for (std::size_t w = 0; w < words.size(); ++w) {
        const std::string u = detail::upper(words[w]);
        if (u == "HZ") unit = 1.0;
        else if (u == "KHZ") unit = 1e3;
        else if (u == "MHZ") unit = 1e6;
        else if (u == "GHZ") unit = 1e9;
        else if (u == "S") {}
        else if (u == "Y" || u == "Z" || u == "H" || u == "G")
          throw ParseError(source, lineno, "only S parameters are supported");
        else if (u == "RI" || u == "MA" || u == "DB") format = u;
        else if (u == "R") {
          double r = 0.0;
          if (w + 1 >= words.size() || !detail::parse_double(words[w + 1], r) || !(r > 0.0))
            throw ParseError(source, lineno, "option 'R' needs a positive reference impedance");
          set.z0 = r;
          ++w;
        } else {
          throw ParseError(source, lineno, "malformed option line: unknown token '" + words[w] + "'");
        }
      }
      continue;
    }

    if (words.size() != 9)
      throw ParseError(source, lineno, "expected 9 columns, found " + std::to_string(words.size()));
    double v[9];
    for (int c = 0; c < 9; ++c)
      if (!detail::parse_double(words[static_cast<std::size_t>(c)], v[c]))
        throw ParseError(source, lineno, "column " + std::to_string(c + 1) + " is not a number");
    const double f = v[0] * unit;
    if (!(f >= 0.0)) throw ParseError(source, lineno, "negative frequency");
    if (!set.freqs.empty() && !(f > set.freqs.back()))
      throw ParseError(source, lineno, "frequencies must ascend strictly");
    auto value = [&](double p, double q) -> cplx {
      if (format == "RI") return {p, q};
      const double deg = q * std::numbers::pi / 180.0;
      const double mag = format == "MA" ? p : std::pow(10.0, p / 20.0);
      return std::polar(mag, deg);
    };
    SMatrix m{};
    m[0][0] = value(v[1], v[2]);
    m[1][0] = value(v[3], v[4]);
    m[0][1] = value(v[5], v[6]);
    m[1][1] = value(v[7], v[8]);
    set.freqs.push_back(f);
    set.s.push_back(m);
  }
  if (set.freqs.empty()) throw ParseError(source, lineno + 1, "no data lines");
  return set;
}

inline SParamSet touchstone_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  return touchstone_read(in, path);
}

}  // namespace pixant
