#pragma once

#include <cstdlib>
#include <map>
#include <set>

#include "crossmodal/io.hpp"

namespace crossmodal {

// Merged run configuration: declared defaults, overlaid by a plain-text
// key=value file, overlaid by command-line overrides. Every key must be
// declared before use; unknown keys in the file or on the command line are
// errors. The fully resolved state can be echoed back out and re-read to
// reproduce a run.
class RunConfig {
 public:
  void declare(const std::string& key, const std::string& default_value) {
    CM_CHECK(!declared_.count(key), "duplicate config key '" << key << "'");
    declared_.insert(key);
    values_[key] = default_value;
  }

  void set(const std::string& key, const std::string& value) {
    CM_CHECK(declared_.count(key), "unknown config key '" << key << "'");
    values_[key] = value;
  }

  // Parses "key=value" lines; '#' starts a comment, blank lines ignored.
  void load_file(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto strip = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      line = strip(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      CM_CHECK(eq != std::string::npos,
               path << ":" << lineno << ": expected key=value, got '" << line << "'");
      set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    CM_CHECK(it != values_.end(), "config key '" << key << "' not declared");
    return it->second;
  }
  int64_t integer(const std::string& key) const {
    const auto& s = str(key);
    size_t pos = 0;
    int64_t v = 0;
    try {
      v = std::stoll(s, &pos);
    } catch (...) {
      pos = 0;
    }
    CM_CHECK(pos == s.size() && !s.empty(),
             "config key '" << key << "' is not an integer: '" << s << "'");
    return v;
  }
  double number(const std::string& key) const {
    const auto& s = str(key);
    size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(s, &pos);
    } catch (...) {
      pos = 0;
    }
    CM_CHECK(pos == s.size() && !s.empty(),
             "config key '" << key << "' is not a number: '" << s << "'");
    return v;
  }
  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    CM_CHECK(false, "config key '" << key << "' is not a boolean: '" << s << "'");
    return false;
  }

  // Root seed resolution: explicit value wins, then CROSSMODAL_SEED, then 0.
  uint64_t seed() const {
    const auto& s = str("seed");
    if (!s.empty()) return static_cast<uint64_t>(std::stoull(s));
    if (const char* env = std::getenv("CROSSMODAL_SEED"))
      return static_cast<uint64_t>(std::stoull(env));
    return 0;
  }

  std::string resolved() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
    return out.str();
  }
  void echo_to(const std::string& dir) const {
    write_text_file(dir + "/config_resolved.txt", resolved());
  }

 private:
  std::set<std::string> declared_;
  std::map<std::string, std::string> values_;
};

}  // namespace crossmodal
