#include <sstream>

#include "doctest.h"
#include "flips/flip_data.hpp"

using namespace flips;

namespace {

const char* kToyCsv =
    "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
    "P1,C1,web,P1-s1,0,H,H\n"
    "P1,C1,web,P1-s1,1,H,T\n"
    "P1,C1,web,P1-s1,2,T,T\n"
    "P2,C2,lab,P2-s1,0,T,H\n"
    "P2,C2,lab,P2-s1,1,H,H\n";

FlipDataset toy() {
  std::istringstream in(kToyCsv);
  return ingest_csv(in, true);
}

}  // namespace

TEST_CASE("ingest parses ids, sides, and sorted unit lists") {
  auto d = toy();
  REQUIRE(d.records.size() == 5);
  CHECK(d.persons == std::vector<std::string>{"P1", "P2"});
  CHECK(d.coins == std::vector<std::string>{"C1", "C2"});
  CHECK(d.records[0].same_side());
  CHECK_FALSE(d.records[1].same_side());
  CHECK(d.records[3].start == Side::tails);
  CHECK(d.records[3].landed == Side::heads);
  CHECK(d.violations.empty());
}

TEST_CASE("write_csv round trips") {
  auto d = toy();
  std::ostringstream out;
  write_csv(d, out);
  std::istringstream in(out.str());
  auto d2 = ingest_csv(in, true);
  CHECK(d2.records == d.records);
}

TEST_CASE("header and field validation") {
  std::istringstream bad_header("person,coin\nx,y\n");
  CHECK_THROWS_AS(ingest_csv(bad_header, true), ParseError);

  std::istringstream bad_side(
      "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
      "P1,C1,web,s1,0,H,X\n");
  CHECK_THROWS_AS(ingest_csv(bad_side, true), ParseError);

  std::istringstream bad_index(
      "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
      "P1,C1,web,s1,-3,H,T\n");
  CHECK_THROWS_AS(ingest_csv(bad_index, true), ParseError);

  std::istringstream missing_field(
      "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
      "P1,C1,web,s1,0,H\n");
  CHECK_THROWS_AS(ingest_csv(missing_field, true), ParseError);
}

TEST_CASE("protocol violations: strict aborts, lenient collects") {
  // second flip starts on the side the previous one did NOT land on
  const char* broken =
      "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
      "P1,C1,web,s1,0,H,T\n"
      "P1,C1,web,s1,1,H,H\n";
  std::istringstream strict_in(broken);
  CHECK_THROWS_AS(ingest_csv(strict_in, true), IntegrityError);

  std::istringstream lenient_in(broken);
  auto d = ingest_csv(lenient_in, false);
  REQUIRE(d.violations.size() == 1);
  CHECK(d.violations[0].row == 3);
  // the data is reported as-is, never repaired
  CHECK(d.records[1].start == Side::heads);
}

TEST_CASE("duplicate flip_index within a person is an integrity error") {
  const char* dup =
      "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
      "P1,C1,web,s1,0,H,H\n"
      "P1,C1,web,s2,0,H,H\n";
  std::istringstream in(dup);
  CHECK_THROWS_AS(ingest_csv(in, true), IntegrityError);
}

TEST_CASE("aggregate conserves totals and splits by start side") {
  auto d = toy();
  auto cells = aggregate(d);
  std::int64_t trials = 0, heads = 0, same = 0;
  for (const auto& c : cells) {
    trials += c.n_trials;
    heads += c.n_heads;
    same += c.n_same;
  }
  CHECK(trials == 5);
  CHECK(heads == 3);
  CHECK(same == 3);

  auto table = CellTable::from(d);
  CHECK(table.total_flips() == doctest::Approx(5.0));
  double same2 = 0.0;
  for (const auto& c : table.cells) same2 += table.same_of(c);
  CHECK(same2 == doctest::Approx(3.0));
}

TEST_CASE("summaries are sorted by proportion with beta intervals") {
  auto d = toy();
  auto rows = summarize_by(d, SummaryUnit::person);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].proportion <= rows[1].proportion);
  for (const auto& r : rows) {
    CHECK(r.ci_low < r.proportion + 1e-12);
    CHECK(r.ci_high > r.proportion - 1e-12);
    CHECK(r.ci_low >= 0.0);
    CHECK(r.ci_high <= 1.0);
  }
  auto coin_rows = summarize_by(d, SummaryUnit::coin);
  REQUIRE(coin_rows.size() == 2);
  // person rows carry sites, coin rows leave it empty
  CHECK((rows[0].site == "web" || rows[0].site == "lab"));
  CHECK(coin_rows[0].site.empty());
}

TEST_CASE("outlier exclusion removes whole persons above the threshold") {
  const char* csv =
      "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
      "A,C1,web,a1,0,H,H\n"
      "A,C1,web,a1,1,H,H\n"
      "A,C1,web,a1,2,H,H\n"
      "A,C1,web,a1,3,H,H\n"
      "B,C1,web,b1,0,H,H\n"
      "B,C1,web,b1,1,H,T\n";
  std::istringstream in(csv);
  auto d = ingest_csv(in, true);
  auto filtered = exclude_outliers(d, 0.53);
  CHECK(filtered.excluded_persons == std::vector<std::string>{"A"});
  CHECK(filtered.data.records.size() == 2);
  CHECK(filtered.data.persons == std::vector<std::string>{"B"});
  // exclusion is strict: a person exactly at the threshold stays
  const char* csv2 =
      "person_id,coin_id,site,sequence_id,flip_index,start,landed\n"
      "A,C1,web,a1,0,H,H\n"
      "A,C1,web,a1,1,H,H\n"
      "A,C1,web,a1,2,H,H\n"
      "A,C1,web,a1,3,H,T\n"
      "B,C1,web,b1,0,H,H\n"
      "B,C1,web,b1,1,H,T\n";
  std::istringstream in2(csv2);
  auto d2 = ingest_csv(in2, true);  // A at 3/4 same, B at 1/2
  auto keep_all = exclude_outliers(d2, 0.75);
  CHECK(keep_all.excluded_persons.empty());
  CHECK(keep_all.data.records.size() == 6);
  CHECK(exclude_outliers(d2, 0.74).excluded_persons ==
        std::vector<std::string>{"A"});
  // the threshold must be a proportion strictly between one half and one
  CHECK_THROWS_AS(exclude_outliers(d, 1.0), std::domain_error);
  CHECK_THROWS_AS(exclude_outliers(d, 0.5), std::domain_error);
  CHECK_THROWS_AS(exclude_outliers(d, -0.1), std::domain_error);
}

TEST_CASE("betting edge frozen examples") {
  CHECK(betting_edge(0.5, 1000.0) == doctest::Approx(0.0));
  CHECK(betting_edge(0.5077, 1000.0) == doctest::Approx(15.4).epsilon(0.01));
  CHECK(betting_edge(0.5095, 1000.0) == doctest::Approx(19.0).epsilon(0.01));
}
