#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "geodisagg/geometry.hpp"

namespace geodisagg {

/// Comma-separated table with a header row. Fields are not quoted.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // source line of each row, 0 for built tables

  /// Index of a header column, or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in, const std::string& name);
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// 10 significant digits.
std::string format_number(double value);

double parse_double(const std::string& text, const std::string& file, int line, int column);
std::int64_t parse_int(const std::string& text, const std::string& file, int line, int column);
std::uint64_t parse_unsigned(const std::string& text, const std::string& file, int line, int column);

/// cells.csv: cell_id, x, y, population, cov_<name>...
/// membership.csv: area_id, cell_id, coverage
/// areas.csv: area_id, count
std::shared_ptr<const DisaggregationProblem> parse_inputs(const CsvTable& cells, const CsvTable& membership,
                                                          const CsvTable& areas, const std::string& cells_name,
                                                          const std::string& membership_name,
                                                          const std::string& areas_name);
std::shared_ptr<const DisaggregationProblem> parse_inputs(const std::filesystem::path& cells,
                                                          const std::filesystem::path& membership,
                                                          const std::filesystem::path& areas);

std::vector<AreaMembership> parse_membership(const CsvTable& table, const std::string& name);

CsvTable cells_table(const DisaggregationProblem& problem);
CsvTable membership_table(const DisaggregationProblem& problem);
CsvTable membership_table(const std::vector<AreaMembership>& members);
CsvTable areas_table(const DisaggregationProblem& problem);

/// Flat key=value file; '#' starts a comment. Keys keep their dotted form.
struct KeyValueConfig {
  std::map<std::string, std::string> values;
  std::map<std::string, int> lines;
  std::string source;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_unsigned(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
};

KeyValueConfig read_config(std::istream& in, const std::string& name);
KeyValueConfig read_config(const std::filesystem::path& path);
/// Keys in sorted order, one key=value per line.
void write_config(const std::filesystem::path& path, const KeyValueConfig& config);

}  // namespace geodisagg
