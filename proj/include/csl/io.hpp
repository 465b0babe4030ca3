#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csl/errors.hpp"
#include "csl/lattice.hpp"

namespace csl {

/// One `key = value` entry with the line it came from.
struct ConfigEntry {
  std::string value;
  int line = 0;
};

/// Parsed INI-style experiment configuration: sections [lattice], [collapse], [scenario], [run].
/// Every lookup error names the source, the line and the field.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  const std::string& source() const { return source_; }
  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  /// Comma or whitespace separated numbers.
  std::vector<double> get_doubles(const std::string& section, const std::string& key) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;

  /// Keys of one section in file order.
  std::vector<std::string> keys(const std::string& section) const;

  /// Raises ConfigError for keys in `section` outside `allowed`.
  void check_keys(const std::string& section, const std::vector<std::string>& allowed) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  /// "section.key=value" lines, sorted; the [run] keys threads, out_dir and format are left out
  /// because they do not change results.
  std::string canonical() const;

  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const;

 private:
  const ConfigEntry* find(const std::string& section, const std::string& key) const;

  std::string source_;
  std::map<std::string, std::map<std::string, ConfigEntry>> sections_;
  std::map<std::string, std::vector<std::string>> order_;
  std::map<std::string, int> section_line_;
};

/// 64-bit FNV-1a, as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

/// Revision baked in at configure time ("unknown" outside a git checkout).
std::string git_revision();

/// Shortest-safe decimal form: 17 significant digits, '.' decimal, locale independent.
std::string format_double(double v);

/// Column-major numeric table for CSV output.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> row);
};

/// Throws InvariantViolation naming the column and row when any entry is not finite.
std::string emit_csv(const Table& table);
Table parse_csv(const std::string& text);

using Json = nlohmann::ordered_json;

/// Throws InvariantViolation naming the JSON path of any non-finite number.
void check_finite(const Json& j, const std::string& path = "$");

/// Wraps `body` with the provenance block {config_hash, git_revision, seed} and serialises it with
/// two-space indentation and a trailing newline. Non-finite numbers are rejected.
std::string emit_summary(const Json& body, const std::string& config_hash, std::uint64_t seed);
Json parse_summary(const std::string& text);

/// Files staged under temporary names inside one output directory. commit() renames each into
/// place; a transaction destroyed before commit() removes whatever it staged.
class OutputTransaction {
 public:
  explicit OutputTransaction(std::filesystem::path dir);
  ~OutputTransaction();
  OutputTransaction(const OutputTransaction&) = delete;
  OutputTransaction& operator=(const OutputTransaction&) = delete;

  void stage(const std::string& name, const std::string& content);
  /// Final paths, valid after commit().
  std::vector<std::filesystem::path> commit();
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;  // temp, final
  bool committed_ = false;
};

/// Single-file convenience: temp file in the same directory, then rename.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace csl
