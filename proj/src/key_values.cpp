#include "kfbf/key_values.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "kfbf/error.hpp"

namespace kfbf {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw ContractError("config key '" + key + "': '" + value + "' is not a valid " + kind);
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(key, text, "non-negative integer");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto line_offset = offset;
    offset += line.size() + 1;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) + " has no '='", line_offset);
    }
    kv.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValues::set(const std::string& key, double value) { values_[key] = format_double(value); }

void KeyValues::set(const std::string& key, const std::vector<std::size_t>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(values[i]);
  }
  values_[key] = s;
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValues::str(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValues::real(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  double out = 0.0;
  const auto* end = v->data() + v->size();
  auto [p, ec] = std::from_chars(v->data(), end, out);
  if (ec != std::errc() || p != end) bad_value(key, *v, "number");
  return out;
}

std::size_t KeyValues::count(const std::string& key, std::size_t fallback) const {
  auto v = get(key);
  return v ? parse_count(key, *v) : fallback;
}

bool KeyValues::flag(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  bad_value(key, *v, "boolean");
}

std::vector<std::size_t> KeyValues::counts(const std::string& key,
                                           const std::vector<std::size_t>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  if (v->empty()) return out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, trim(item)));
  return out;
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

}  // namespace kfbf
