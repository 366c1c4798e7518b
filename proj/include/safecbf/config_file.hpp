#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace safecbf {

/// Error with the 1-based line of the offending entry (0 when not tied to a line).
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& file, int line, const std::string& msg);
  int line = 0;
};

/// A small TOML subset: [section.sub] headers, key = value with numbers,
/// booleans, "strings", and (nested) arrays of numbers or strings. '#' comments.
class ConfigFile {
 public:
  struct Value {
    using Array = std::vector<Value>;
    std::variant<double, bool, std::string, Array> data;
    int line = 0;
  };

  static ConfigFile parse(const std::string& text, const std::string& name = "<config>");
  static ConfigFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const Value* find(const std::string& key) const;

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) const;
  int integer(const std::string& key, std::optional<int> fallback = std::nullopt) const;
  bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt) const;
  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) const;
  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) const;
  std::vector<std::vector<double>> matrix(const std::string& key) const;
  std::vector<std::string> strings(const std::string& key,
                                   std::optional<std::vector<std::string>> fallback = std::nullopt) const;

  /// Throws on the first key that was never read (schema: unknown keys rejected).
  void reject_unused() const;

  const std::string& name() const { return name_; }
  const std::string& text() const { return text_; }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const;

  std::string name_;
  std::string text_;
  std::map<std::string, Value> values_;
  mutable std::set<std::string> used_;
};

}  // namespace safecbf
