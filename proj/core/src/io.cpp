#include "geodisagg/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "geodisagg/error.hpp"

namespace geodisagg {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string(), 0, 0, "cannot open file");
  return in;
}

int require_column(const CsvTable& t, const std::string& column, const std::string& file) {
  const int c = t.column(column);
  if (c < 0) throw InputError(file, 1, 0, "missing column '" + column + "'");
  return c;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(std::istream& in, const std::string& name) {
  CsvTable t;
  std::string line;
  int number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw InputError(name, number, 0,
                       "expected " + std::to_string(t.header.size()) + " fields, found " +
                           std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(number);
  }
  if (!have_header) throw InputError(name, 0, 0, "missing header row");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return read_csv(in, path.string());
}

void write_csv(std::ostream& out, const CsvTable& table) {
  auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& row : table.rows) write_row(row);
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string(), 0, 0, "cannot write file");
  write_csv(out, table);
  if (!out) throw InputError(path.string(), 0, 0, "write failed");
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", value == 0.0 ? 0.0 : value);
  return buf;
}

double parse_double(const std::string& text, const std::string& file, int line, int column) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw InputError(file, line, column, "expected a number, found '" + text + "'");
  }
  return value;
}

std::uint64_t parse_unsigned(const std::string& text, const std::string& file, int line, int column) {
  std::uint64_t value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw InputError(file, line, column, "expected a nonnegative integer, found '" + text + "'");
  }
  return value;
}

std::int64_t parse_int(const std::string& text, const std::string& file, int line, int column) {
  std::int64_t value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw InputError(file, line, column, "expected an integer, found '" + text + "'");
  }
  return value;
}

std::vector<AreaMembership> parse_membership(const CsvTable& t, const std::string& name) {
  const int ca = require_column(t, "area_id", name);
  const int cc = require_column(t, "cell_id", name);
  const int cv = require_column(t, "coverage", name);
  std::vector<AreaMembership> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const int line = t.line_numbers.empty() ? 0 : t.line_numbers[r];
    AreaMembership m;
    m.area_id = static_cast<int>(parse_int(row[ca], name, line, ca + 1));
    m.cell_id = static_cast<int>(parse_int(row[cc], name, line, cc + 1));
    m.coverage = parse_double(row[cv], name, line, cv + 1);
    if (!(m.coverage > 0.0 && m.coverage <= 1.0)) {
      throw InputError(name, line, cv + 1, "coverage must lie in (0, 1]");
    }
    out.push_back(m);
  }
  return out;
}

std::shared_ptr<const DisaggregationProblem> parse_inputs(const CsvTable& cells, const CsvTable& membership,
                                                          const CsvTable& areas, const std::string& cells_name,
                                                          const std::string& membership_name,
                                                          const std::string& areas_name) {
  auto line_of = [](const CsvTable& t, std::size_t r) { return t.line_numbers.empty() ? 0 : t.line_numbers[r]; };

  // cells
  const int cid = require_column(cells, "cell_id", cells_name);
  const int cx = require_column(cells, "x", cells_name);
  const int cy = require_column(cells, "y", cells_name);
  const int cp = require_column(cells, "population", cells_name);
  std::vector<std::string> names;
  std::vector<int> cov_columns;
  for (std::size_t i = 0; i < cells.header.size(); ++i) {
    if (cells.header[i].starts_with("cov_")) {
      names.push_back(cells.header[i].substr(4));
      cov_columns.push_back(static_cast<int>(i));
    }
  }
  std::vector<GridCell> grid;
  grid.reserve(cells.rows.size());
  std::unordered_map<int, int> cell_line;
  for (std::size_t r = 0; r < cells.rows.size(); ++r) {
    const auto& row = cells.rows[r];
    const int line = line_of(cells, r);
    GridCell c;
    c.id = static_cast<int>(parse_int(row[cid], cells_name, line, cid + 1));
    c.center = Point{parse_double(row[cx], cells_name, line, cx + 1), parse_double(row[cy], cells_name, line, cy + 1)};
    c.population = parse_double(row[cp], cells_name, line, cp + 1);
    if (!(c.population >= 0.0)) throw InputError(cells_name, line, cp + 1, "population must be nonnegative");
    for (int col : cov_columns) c.covariates.push_back(parse_double(row[col], cells_name, line, col + 1));
    if (!cell_line.emplace(c.id, line).second) {
      throw InputError(cells_name, line, cid + 1, "duplicate cell_id " + std::to_string(c.id));
    }
    grid.push_back(std::move(c));
  }

  // areas
  const int aid = require_column(areas, "area_id", areas_name);
  const int ac = require_column(areas, "count", areas_name);
  std::vector<Area> area_list;
  std::unordered_map<int, int> area_line;
  for (std::size_t r = 0; r < areas.rows.size(); ++r) {
    const auto& row = areas.rows[r];
    const int line = line_of(areas, r);
    Area a;
    a.id = static_cast<int>(parse_int(row[aid], areas_name, line, aid + 1));
    a.count = parse_int(row[ac], areas_name, line, ac + 1);
    if (a.count < 0) throw InputError(areas_name, line, ac + 1, "count must be nonnegative");
    if (!area_line.emplace(a.id, line).second) {
      throw InputError(areas_name, line, aid + 1, "duplicate area_id " + std::to_string(a.id));
    }
    area_list.push_back(a);
  }

  // membership, checked row by row so errors point at the offending line
  std::vector<AreaMembership> members = parse_membership(membership, membership_name);
  const int mc_area = membership.column("area_id");
  const int mc_cell = membership.column("cell_id");
  const int mc_cov = membership.column("coverage");
  std::unordered_set<std::uint64_t> seen;
  std::unordered_map<int, double> cell_total;
  std::unordered_set<int> covered_areas;
  for (std::size_t r = 0; r < members.size(); ++r) {
    const AreaMembership& m = members[r];
    const int line = line_of(membership, r);
    if (!area_line.count(m.area_id)) {
      throw InputError(membership_name, line, mc_area + 1, "unknown area_id " + std::to_string(m.area_id));
    }
    if (!cell_line.count(m.cell_id)) {
      throw InputError(membership_name, line, mc_cell + 1, "unknown cell_id " + std::to_string(m.cell_id));
    }
    const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(m.area_id)) << 32) |
                              static_cast<std::uint32_t>(m.cell_id);
    if (!seen.insert(key).second) {
      throw InputError(membership_name, line, 0,
                       "duplicate pair (area_id " + std::to_string(m.area_id) + ", cell_id " +
                           std::to_string(m.cell_id) + ")");
    }
    double& total = cell_total[m.cell_id];
    total += m.coverage;
    if (total > 1.0 + DisaggregationProblem::kCoverageTolerance) {
      throw InputError(membership_name, line, mc_cov + 1,
                       "total coverage of cell " + std::to_string(m.cell_id) + " exceeds 1");
    }
    covered_areas.insert(m.area_id);
  }
  for (const Area& a : area_list) {
    if (!covered_areas.count(a.id)) {
      throw InputError(areas_name, area_line[a.id], aid + 1,
                       "area " + std::to_string(a.id) + " has no membership rows");
    }
  }

  try {
    return std::make_shared<const DisaggregationProblem>(std::move(names), std::move(grid), std::move(members),
                                                         std::move(area_list));
  } catch (const Error& e) {
    throw InputError(membership_name, 0, 0, e.what());
  }
}

std::shared_ptr<const DisaggregationProblem> parse_inputs(const std::filesystem::path& cells,
                                                          const std::filesystem::path& membership,
                                                          const std::filesystem::path& areas) {
  return parse_inputs(read_csv(cells), read_csv(membership), read_csv(areas), cells.string(), membership.string(),
                      areas.string());
}

CsvTable cells_table(const DisaggregationProblem& problem) {
  CsvTable t;
  t.header = {"cell_id", "x", "y", "population"};
  for (const std::string& name : problem.covariate_names()) t.header.push_back("cov_" + name);
  for (const GridCell& c : problem.cells()) {
    std::vector<std::string> row{std::to_string(c.id), format_number(c.center.x), format_number(c.center.y),
                                 format_number(c.population)};
    for (double v : c.covariates) row.push_back(format_number(v));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable membership_table(const std::vector<AreaMembership>& members) {
  CsvTable t;
  t.header = {"area_id", "cell_id", "coverage"};
  for (const AreaMembership& m : members) {
    t.rows.push_back({std::to_string(m.area_id), std::to_string(m.cell_id), format_number(m.coverage)});
  }
  return t;
}

CsvTable membership_table(const DisaggregationProblem& problem) {
  std::vector<AreaMembership> members;
  members.reserve(problem.N());
  for (const StackedRow& r : problem.rows()) {
    members.push_back({problem.areas()[r.area].id, problem.cells()[r.cell].id, r.coverage});
  }
  return membership_table(members);
}

CsvTable areas_table(const DisaggregationProblem& problem) {
  CsvTable t;
  t.header = {"area_id", "count"};
  for (const Area& a : problem.areas()) t.rows.push_back({std::to_string(a.id), std::to_string(a.count)});
  return t;
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  return parse_double(it->second, source, lines.at(key), 0);
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  return parse_int(it->second, source, lines.at(key), 0);
}

std::uint64_t KeyValueConfig::get_unsigned(const std::string& key, std::uint64_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  return parse_unsigned(it->second, source, lines.at(key), 0);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes" || it->second == "on") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no" || it->second == "off") return false;
  throw InputError(source, lines.at(key), 0, "expected a boolean for '" + key + "'");
}

KeyValueConfig read_config(std::istream& in, const std::string& name) {
  KeyValueConfig c;
  c.source = name;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(name, number, 0, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InputError(name, number, 1, "empty key");
    if (c.values.count(key)) throw InputError(name, number, 1, "duplicate key '" + key + "'");
    c.values[key] = trim(line.substr(eq + 1));
    c.lines[key] = number;
  }
  return c;
}

KeyValueConfig read_config(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return read_config(in, path.string());
}

void write_config(const std::filesystem::path& path, const KeyValueConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string(), 0, 0, "cannot write file");
  for (const auto& [key, value] : config.values) out << key << '=' << value << '\n';
  if (!out) throw InputError(path.string(), 0, 0, "write failed");
}

}  // namespace geodisagg
