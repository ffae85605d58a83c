#include <gtest/gtest.h>

#include <random>

#include "affect/common.hpp"
#include "support.hpp"

using namespace affect;

TEST(Dates, RoundTripAndArithmetic) {
  const Date d = parse_date("2024-02-28");
  EXPECT_EQ(format_date(d), "2024-02-28");
  EXPECT_EQ(format_date(add_days(d, 1)), "2024-02-29");
  EXPECT_EQ(format_date(add_days(d, 2)), "2024-03-01");
  EXPECT_EQ(days_between(d, add_days(d, 7)), 7);
  EXPECT_EQ(days_between(add_days(d, 7), d), -7);
}

TEST(Dates, RejectsMalformed) {
  EXPECT_THROW(parse_date("2024-13-01"), DataError);
  EXPECT_THROW(parse_date("2023-02-29"), DataError);
  EXPECT_THROW(parse_date("2024/01/01"), DataError);
  EXPECT_THROW(parse_date("24-01-01"), DataError);
  EXPECT_THROW(parse_date(""), DataError);
}

TEST(Hashing, Fnv1aKnownVectors) {
  // Reference values of 64-bit FNV-1a.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Hashing, DerivedSeedsDependOnBothInputs) {
  EXPECT_EQ(derive_seed(7, "fold"), derive_seed(7, "fold"));
  EXPECT_NE(derive_seed(7, "fold"), derive_seed(8, "fold"));
  EXPECT_NE(derive_seed(7, "fold"), derive_seed(7, "fold2"));
}

TEST(Csv, SplitHandlesQuotes) {
  const auto cells = split_csv_line(R"(a,"b,c","d ""e""",,f)");
  ASSERT_EQ(cells.size(), 5u);
  EXPECT_EQ(cells[1], "b,c");
  EXPECT_EQ(cells[2], "d \"e\"");
  EXPECT_EQ(cells[3], "");
}

TEST(Csv, EscapeRoundTrips) {
  for (std::string s : {"plain", "with,comma", "quote\"inside", ""}) {
    const auto cells = split_csv_line(csv_escape(s) + ",x");
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_EQ(cells[0], s);
  }
}

TEST(Numbers, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) / 3.0;
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_THROW(parse_double("1.5x"), DataError);
  EXPECT_THROW(parse_double("  "), DataError);
  EXPECT_EQ(trim("  a b \t\n"), "a b");
}

TEST(Files, AtomicWriteReplacesContent) {
  testing_support::TempDir dir("common");
  const auto p = dir.path() / "sub" / "x.txt";
  write_file_atomic(p, "one");
  write_file_atomic(p, "two");
  EXPECT_EQ(read_file(p), "two");
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "sub" / "x.txt.tmp"));
  EXPECT_EQ(file_checksum(p), fnv1a64("two"));
  EXPECT_THROW(read_file(dir.path() / "missing"), Error);
}

TEST(Errors, MessagesCarryLocation) {
  const DataError e("bad value", "obs.csv", 12, "steps");
  EXPECT_EQ(e.line(), 12u);
  EXPECT_EQ(e.field(), "steps");
  EXPECT_NE(std::string(e.what()).find("obs.csv:12"), std::string::npos);
  const DivergenceError d("stage 2", 3, 4);
  EXPECT_EQ(d.epoch(), 3u);
  EXPECT_EQ(d.batch(), 4u);
}
