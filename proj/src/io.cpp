#include "csl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#ifndef CSL_GIT_REVISION
#define CSL_GIT_REVISION "unknown"
#endif

namespace csl {

namespace {

const std::vector<std::string> kSections = {"lattice", "collapse", "scenario", "run"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool parse_number(const std::string& text, double& out) {
  const char* b = text.data();
  const char* e = b + text.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  auto error = [&](const std::string& what) {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    const auto hash = s.find_first_of("#;");
    if (hash != std::string::npos) s.erase(hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') error("unterminated section header '" + s + "'");
      section = lower(trim(s.substr(1, s.size() - 2)));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end())
        error("unknown section [" + section + "]; expected lattice, collapse, scenario or run");
      if (cfg.section_line_.count(section)) error("duplicate section [" + section + "]");
      cfg.section_line_[section] = line;
      cfg.sections_[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) error("expected 'key = value', got '" + s + "'");
    if (section.empty()) error("key outside of any section");
    const std::string key = lower(trim(s.substr(0, eq)));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) error("empty key");
    if (value.empty()) error("[" + section + "] " + key + ": empty value");
    auto& sec = cfg.sections_[section];
    if (sec.count(key)) {
      error("[" + section + "] " + key + ": duplicate key (first set on line " + std::to_string(sec[key].line) + ")");
    }
    sec[key] = {value, line};
    cfg.order_[section].push_back(key);
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

const ConfigEntry* Config::find(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

void Config::fail(const std::string& section, const std::string& key, const std::string& what) const {
  const ConfigEntry* e = find(section, key);
  std::string where = source_;
  if (e && e->line > 0) {
    where += ":" + std::to_string(e->line);
  } else if (auto s = section_line_.find(section); s != section_line_.end()) {
    where += ":" + std::to_string(s->second);
  }
  throw ConfigError(where + ": [" + section + "] " + key + ": " + what);
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
  const ConfigEntry* e = find(section, key);
  if (!e) fail(section, key, "required field is missing");
  return e->value;
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
  const ConfigEntry* e = find(section, key);
  return e ? e->value : fallback;
}

double Config::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get_string(section, key);
  double out = 0.0;
  if (!parse_number(v, out)) fail(section, key, "'" + v + "' is not a number");
  if (!std::isfinite(out)) fail(section, key, "must be finite");
  return out;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

long long Config::get_int(const std::string& section, const std::string& key) const {
  const std::string v = get_string(section, key);
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) fail(section, key, "'" + v + "' is not an integer");
  return out;
}

long long Config::get_int(const std::string& section, const std::string& key, long long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = lower(get_string(section, key));
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  fail(section, key, "'" + v + "' is not a boolean");
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(section, key))) {
    double v = 0.0;
    if (!parse_number(item, v) || !std::isfinite(v)) fail(section, key, "'" + item + "' is not a finite number");
    out.push_back(v);
  }
  if (out.empty()) fail(section, key, "empty list");
  return out;
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback) const {
  return has(section, key) ? get_doubles(section, key) : fallback;
}

std::vector<std::string> Config::keys(const std::string& section) const {
  auto it = order_.find(section);
  return it == order_.end() ? std::vector<std::string>{} : it->second;
}

void Config::check_keys(const std::string& section, const std::vector<std::string>& allowed) const {
  for (const auto& k : keys(section))
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) fail(section, k, "unknown field");
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  auto& sec = sections_[section];
  if (!sec.count(key)) order_[section].push_back(key);
  sec[key] = {value, 0};
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [section, entries] : sections_)
    for (const auto& [key, e] : entries) {
      if (section == "run" && (key == "threads" || key == "out_dir" || key == "format")) continue;
      out += section + "." + key + "=" + e.value + "\n";
    }
  return out;
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string git_revision() { return CSL_GIT_REVISION; }

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) throw InvariantViolation("cannot format number");
  return std::string(buf, p);
}

void Table::add_row(std::vector<double> row) {
  if (row.size() != columns.size())
    throw InvariantViolation("row has " + std::to_string(row.size()) + " entries, table has " +
                             std::to_string(columns.size()) + " columns");
  rows.push_back(std::move(row));
}

std::string emit_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out += ',';
    out += table.columns[c];
  }
  out += '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.columns.size()) throw InvariantViolation("ragged row " + std::to_string(r) + " in table");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!std::isfinite(row[c]))
        throw InvariantViolation("non-finite value in column '" + table.columns[c] + "' at row " + std::to_string(r));
      if (c) out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (n == 1) {
      t.columns = cells;
      continue;
    }
    if (cells.size() != t.columns.size())
      throw IoError("csv line " + std::to_string(n) + ": expected " + std::to_string(t.columns.size()) + " cells");
    std::vector<double> row;
    for (const auto& c : cells) {
      double v = 0.0;
      if (!parse_number(c, v)) throw IoError("csv line " + std::to_string(n) + ": bad number '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void check_finite(const Json& j, const std::string& path) {
  if (j.is_number_float() && !std::isfinite(j.get<double>()))
    throw InvariantViolation("non-finite value at " + path);
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) check_finite(it.value(), path + "." + it.key());
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) check_finite(j[i], path + "[" + std::to_string(i) + "]");
  }
}

std::string emit_summary(const Json& body, const std::string& config_hash, std::uint64_t seed) {
  check_finite(body);
  Json out;
  out["config_hash"] = config_hash;
  out["git_revision"] = git_revision();
  out["seed"] = seed;
  for (auto it = body.begin(); it != body.end(); ++it) out[it.key()] = it.value();
  return out.dump(2) + "\n";
}

Json parse_summary(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed summary: ") + e.what());
  }
}

OutputTransaction::OutputTransaction(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError(dir_.string() + ": cannot create output directory: " + ec.message());
}

OutputTransaction::~OutputTransaction() {
  if (committed_) return;
  for (auto& [tmp, final_path] : staged_) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
  }
}

void OutputTransaction::stage(const std::string& name, const std::string& content) {
  const auto final_path = dir_ / name;
  const auto tmp = dir_ / ("." + name + ".tmp" + std::to_string(::getpid()));
  staged_.emplace_back(tmp, final_path);
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(tmp.string() + ": cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out) throw IoError(tmp.string() + ": write failed");
}

std::vector<std::filesystem::path> OutputTransaction::commit() {
  std::vector<std::filesystem::path> done;
  for (auto& [tmp, final_path] : staged_) {
    std::error_code ec;
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) throw IoError(final_path.string() + ": rename failed: " + ec.message());
    done.push_back(final_path);
  }
  committed_ = true;
  return done;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto dir = path.parent_path();
  if (dir.empty()) dir = ".";
  OutputTransaction tx(dir);
  tx.stage(path.filename().string(), content);
  tx.commit();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return ss.str();
}

}  // namespace csl
