#include "safecbf/config_file.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace safecbf {

ConfigError::ConfigError(const std::string& file, int ln, const std::string& msg)
    : std::runtime_error(file + (ln > 0 ? ":" + std::to_string(ln) : std::string()) + ": " + msg), line(ln) {}

namespace {

struct Cursor {
  const std::string& s;
  std::size_t i = 0;
  const std::string& file;
  int line;

  [[noreturn]] void error(const std::string& msg) const { throw ConfigError(file, line, msg); }
  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool done() {
    skip_ws();
    return i >= s.size() || s[i] == '#';
  }
  char peek() {
    skip_ws();
    return i < s.size() ? s[i] : '\0';
  }
};

ConfigFile::Value parse_value(Cursor& c) {
  ConfigFile::Value v;
  v.line = c.line;
  const char ch = c.peek();
  if (ch == '"') {
    ++c.i;
    std::string out;
    while (c.i < c.s.size() && c.s[c.i] != '"') {
      if (c.s[c.i] == '\\' && c.i + 1 < c.s.size()) ++c.i;
      out += c.s[c.i++];
    }
    if (c.i >= c.s.size()) c.error("unterminated string");
    ++c.i;
    v.data = out;
    return v;
  }
  if (ch == '[') {
    ++c.i;
    ConfigFile::Value::Array arr;
    if (c.peek() == ']') {
      ++c.i;
      v.data = arr;
      return v;
    }
    while (true) {
      arr.push_back(parse_value(c));
      const char d = c.peek();
      if (d == ',') {
        ++c.i;
        if (c.peek() == ']') {
          ++c.i;
          break;
        }
        continue;
      }
      if (d == ']') {
        ++c.i;
        break;
      }
      c.error("expected ',' or ']' in array");
    }
    v.data = arr;
    return v;
  }
  std::size_t j = c.i;
  while (j < c.s.size() && (std::isalnum(static_cast<unsigned char>(c.s[j])) || c.s[j] == '.' || c.s[j] == '-' ||
                            c.s[j] == '+' || c.s[j] == '_')) {
    ++j;
  }
  const std::string tok = c.s.substr(c.i, j - c.i);
  if (tok.empty()) c.error("expected a value");
  c.i = j;
  if (tok == "true" || tok == "false") {
    v.data = (tok == "true");
    return v;
  }
  std::string clean;
  for (char t : tok) {
    if (t != '_') clean += t;
  }
  std::size_t used = 0;
  double num = 0.0;
  try {
    num = std::stod(clean, &used);
  } catch (const std::exception&) {
    c.error("invalid value '" + tok + "'");
  }
  if (used != clean.size()) c.error("invalid number '" + tok + "'");
  v.data = num;
  return v;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char ch : k) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) return false;
  }
  return k.front() != '.' && k.back() != '.';
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& name) {
  ConfigFile cf;
  cf.name_ = name;
  cf.text_ = text;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int ln = 0;
  while (std::getline(in, raw)) {
    ++ln;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) throw ConfigError(name, ln, "unterminated section header");
      const std::string rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest[0] != '#') throw ConfigError(name, ln, "trailing characters after section header");
      section = trim(line.substr(1, close - 1));
      if (!valid_key(section)) throw ConfigError(name, ln, "invalid section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(name, ln, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw ConfigError(name, ln, "invalid key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cf.values_.count(full)) throw ConfigError(name, ln, "duplicate key '" + full + "'");
    const std::string rhs = line.substr(eq + 1);
    Cursor c{rhs, 0, name, ln};
    Value v = parse_value(c);
    if (!c.done()) c.error("trailing characters after value");
    cf.values_[full] = std::move(v);
  }
  return cf;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const ConfigFile::Value* ConfigFile::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void ConfigFile::fail(const std::string& key, const std::string& msg) const {
  const auto it = values_.find(key);
  throw ConfigError(name_, it == values_.end() ? 0 : it->second.line, "'" + key + "': " + msg);
}

double ConfigFile::number(const std::string& key, std::optional<double> fallback) const {
  const Value* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    fail(key, "required key missing");
  }
  if (const auto* d = std::get_if<double>(&v->data)) return *d;
  fail(key, "expected a number");
}

int ConfigFile::integer(const std::string& key, std::optional<int> fallback) const {
  const Value* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    fail(key, "required key missing");
  }
  const auto* d = std::get_if<double>(&v->data);
  if (!d || std::floor(*d) != *d) fail(key, "expected an integer");
  return static_cast<int>(*d);
}

bool ConfigFile::boolean(const std::string& key, std::optional<bool> fallback) const {
  const Value* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    fail(key, "required key missing");
  }
  if (const auto* b = std::get_if<bool>(&v->data)) return *b;
  fail(key, "expected true or false");
}

std::string ConfigFile::string(const std::string& key, std::optional<std::string> fallback) const {
  const Value* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    fail(key, "required key missing");
  }
  if (const auto* s = std::get_if<std::string>(&v->data)) return *s;
  fail(key, "expected a string");
}

std::vector<double> ConfigFile::numbers(const std::string& key, std::optional<std::vector<double>> fallback) const {
  const Value* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    fail(key, "required key missing");
  }
  const auto* arr = std::get_if<Value::Array>(&v->data);
  if (!arr) fail(key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : *arr) {
    const auto* d = std::get_if<double>(&e.data);
    if (!d) fail(key, "expected an array of numbers");
    out.push_back(*d);
  }
  return out;
}

std::vector<std::vector<double>> ConfigFile::matrix(const std::string& key) const {
  const Value* v = find(key);
  if (!v) fail(key, "required key missing");
  const auto* arr = std::get_if<Value::Array>(&v->data);
  if (!arr) fail(key, "expected an array of arrays");
  std::vector<std::vector<double>> out;
  for (const auto& row : *arr) {
    const auto* r = std::get_if<Value::Array>(&row.data);
    if (!r) fail(key, "expected an array of arrays");
    std::vector<double> vals;
    for (const auto& e : *r) {
      const auto* d = std::get_if<double>(&e.data);
      if (!d) fail(key, "expected numbers inside nested arrays");
      vals.push_back(*d);
    }
    out.push_back(std::move(vals));
  }
  return out;
}

std::vector<std::string> ConfigFile::strings(const std::string& key,
                                             std::optional<std::vector<std::string>> fallback) const {
  const Value* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    fail(key, "required key missing");
  }
  const auto* arr = std::get_if<Value::Array>(&v->data);
  if (!arr) fail(key, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *arr) {
    const auto* s = std::get_if<std::string>(&e.data);
    if (!s) fail(key, "expected an array of strings");
    out.push_back(*s);
  }
  return out;
}

void ConfigFile::reject_unused() const {
  const Value* first = nullptr;
  std::string first_key;
  for (const auto& [k, v] : values_) {
    if (used_.count(k)) continue;
    if (!first || v.line < first->line) {
      first = &v;
      first_key = k;
    }
  }
  if (first) throw ConfigError(name_, first->line, "unknown key '" + first_key + "'");
}

}  // namespace safecbf
