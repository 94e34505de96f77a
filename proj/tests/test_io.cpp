#include <gtest/gtest.h>

#include <sstream>

#include "geodisagg/error.hpp"
#include "geodisagg/io.hpp"
#include "support.hpp"

using namespace geodisagg;

namespace {

CsvTable csv(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  return read_csv(in, name);
}

std::shared_ptr<const DisaggregationProblem> load(const std::string& cells, const std::string& membership,
                                                  const std::string& areas) {
  return parse_inputs(csv(cells, "cells.csv"), csv(membership, "membership.csv"), csv(areas, "areas.csv"),
                      "cells.csv", "membership.csv", "areas.csv");
}

template <class F>
InputError capture(F&& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e;
  }
  ADD_FAILURE() << "no InputError thrown";
  return InputError("", 0, 0, "");
}

const std::string kCells = "cell_id,x,y,population,cov_x1\n0,0.5,0.5,10,0.2\n1,1.5,0.5,5,0.4\n";
const std::string kAreas = "area_id,count\n3,4\n";

}  // namespace

TEST(Io, MinimalTrio) {
  auto p = load("cell_id,x,y,population\n1,0,0,10\n", "area_id,cell_id,coverage\n1,1,1\n", "area_id,count\n1,3\n");
  EXPECT_EQ(p->n(), 1);
  EXPECT_EQ(p->N(), 1);
  EXPECT_EQ(p->areas()[0].count, 3);
}

TEST(Io, CovariatesAndBom) {
  auto p = load("\xEF\xBB\xBF" + kCells, "area_id,cell_id,coverage\n3,0,1\n\n3,1,0.5\n", kAreas);
  ASSERT_EQ(p->covariate_names().size(), 1u);
  EXPECT_EQ(p->covariate_names()[0], "x1");
  EXPECT_EQ(p->cells()[1].covariates[0], 0.4);
  EXPECT_EQ(p->rows()[1].coverage, 0.5);
}

TEST(Io, UnknownCellNamesLine) {
  InputError e = capture([] { load(kCells, "area_id,cell_id,coverage\n3,0,1\n3,7,1\n", kAreas); });
  EXPECT_EQ(e.file(), "membership.csv");
  EXPECT_EQ(e.line(), 3);
  EXPECT_EQ(e.column(), 2);
  EXPECT_NE(std::string(e.what()).find("membership.csv:3:2"), std::string::npos);
}

TEST(Io, DuplicatePair) {
  InputError e = capture([] { load(kCells, "area_id,cell_id,coverage\n3,0,1\n3,1,1\n3,0,1\n", kAreas); });
  EXPECT_EQ(e.line(), 4);
}

TEST(Io, SchemaErrors) {
  EXPECT_EQ(capture([] { load(kCells, "area_id,cell_id\n3,0\n", kAreas); }).line(), 1);
  EXPECT_EQ(capture([] { load(kCells, "area_id,cell_id,coverage\n3,0,x\n", kAreas); }).column(), 3);
  EXPECT_EQ(capture([] { load(kCells, "area_id,cell_id,coverage\n3,0,1.2\n", kAreas); }).line(), 2);
  EXPECT_EQ(capture([] { load(kCells, "area_id,cell_id,coverage\n3,0,1\n", "area_id,count\n3,-1\n"); }).line(), 2);
  EXPECT_EQ(capture([] { load(kCells, "area_id,cell_id,coverage\n3,0,1,9\n", kAreas); }).line(), 2);
  // Area without memberships.
  EXPECT_EQ(capture([] { load(kCells, "area_id,cell_id,coverage\n3,0,1\n", "area_id,count\n3,1\n4,2\n"); }).line(),
            3);
  // Membership of an area with no count.
  EXPECT_EQ(capture([] { load(kCells, "area_id,cell_id,coverage\n3,0,1\n5,1,1\n", kAreas); }).line(), 3);
  // A cell covered more than once in total.
  EXPECT_EQ(capture([] {
              load(kCells, "area_id,cell_id,coverage\n3,0,0.7\n4,0,0.7\n", "area_id,count\n3,1\n4,1\n");
            }).line(),
            3);
}

TEST(Io, NumberFormatting) {
  EXPECT_EQ(format_number(0.1 + 0.2), "0.3");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(1234567.891234), "1234567.891");
  EXPECT_EQ(format_number(1e-12), "1e-12");
  EXPECT_EQ(parse_int("42", "f", 1, 1), 42);
  EXPECT_THROW(parse_int("4.2", "f", 1, 1), InputError);
  EXPECT_THROW(parse_double("", "f", 1, 1), InputError);
}

TEST(Io, TablesRoundTripByteIdentical) {
  auto p = geodisagg::testing::tiled_problem(6, 3, 2);
  for (const CsvTable& table : {cells_table(*p), membership_table(*p), areas_table(*p)}) {
    std::ostringstream first;
    write_csv(first, table);
    std::ostringstream second;
    write_csv(second, csv(first.str(), "t.csv"));
    EXPECT_EQ(first.str(), second.str());
  }
  // Problems also round-trip through the writers.
  std::ostringstream c, m, a;
  write_csv(c, cells_table(*p));
  write_csv(m, membership_table(*p));
  write_csv(a, areas_table(*p));
  auto q = load(c.str(), m.str(), a.str());
  std::ostringstream c2;
  write_csv(c2, cells_table(*q));
  EXPECT_EQ(c.str(), c2.str());
  EXPECT_EQ(q->N(), p->N());
}

TEST(Io, Config) {
  std::istringstream in("# comment\nmodel.family = exponential\nfit.restarts=5  # trailing\n\nflag=on\n");
  KeyValueConfig c = read_config(in, "run.cfg");
  EXPECT_EQ(c.get("model.family", ""), "exponential");
  EXPECT_EQ(c.get_int("fit.restarts", 0), 5);
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get_double("missing", 2.5), 2.5);
  std::istringstream dup("a=1\na=2\n");
  EXPECT_EQ(capture([&] { read_config(dup, "d.cfg"); }).line(), 2);
  std::istringstream bad("novalue\n");
  EXPECT_THROW(read_config(bad, "b.cfg"), InputError);
}
