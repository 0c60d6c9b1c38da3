#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pixant {

/// Malformed text input (masks, Touchstone files, checkpoints). Carries the
/// 1-based line number of the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Non-finite field values during time stepping.
class NumericalInstability : public std::runtime_error {
 public:
  explicit NumericalInstability(std::size_t step)
      : std::runtime_error("numerical instability: non-finite field at step " +
                           std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Signals that did not decay enough for a trustworthy spectrum.
class AccuracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& section, const std::string& key, int line,
              const std::string& what)
      : std::runtime_error(format(section, key, line, what)),
        section_(section),
        key_(key),
        line_(line) {}

  const std::string& section() const noexcept { return section_; }
  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& section, const std::string& key,
                            int line, const std::string& what) {
    std::string where = "config";
    if (line > 0) where += ":" + std::to_string(line);
    where += ": [" + section + "]";
    if (!key.empty()) where += " " + key;
    return where + ": " + what;
  }

  std::string section_;
  std::string key_;
  int line_;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace pixant
