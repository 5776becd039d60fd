#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace flips {

enum class Side : std::uint8_t { heads, tails };

char side_char(Side s);
Side side_from_token(const std::string& tok);  // "H" or "T"

struct FlipRecord {
  std::string person_id;
  std::string coin_id;   // currency x denomination, e.g. "0.50EUR"
  std::string site;      // recruitment source
  std::string sequence_id;
  std::int64_t flip_index = 0;  // global per person, toss order
  Side start = Side::heads;
  Side landed = Side::heads;

  bool same_side() const { return start == landed; }
  bool operator==(const FlipRecord&) const = default;
};

struct ProtocolViolation {
  std::size_t row = 0;  // 1-based CSV line number
  std::string message;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Immutable after ingestion; person/coin indices are sorted unique id lists.
struct FlipDataset {
  std::vector<FlipRecord> records;
  std::vector<std::string> persons;
  std::vector<std::string> coins;
  std::vector<ProtocolViolation> violations;  // lenient-mode findings, never repairs
};

// CSV schema (header required): person_id,coin_id,site,sequence_id,flip_index,start,landed.
// strict: any protocol violation (start != previous landed within a sequence) aborts.
// lenient: violations are collected on the dataset.
FlipDataset ingest_csv(std::istream& in, bool strict);
FlipDataset ingest_csv_file(const std::string& path, bool strict);
void write_csv(const FlipDataset& d, std::ostream& out);

struct AggregateCell {
  std::string coin_id;
  std::string person_id;
  Side start = Side::heads;
  std::int64_t n_trials = 0;
  std::int64_t n_heads = 0;
  std::int64_t n_same = 0;
};

// One cell per observed (coin, person, start) triple; totals conserved.
std::vector<AggregateCell> aggregate(const FlipDataset& d);

// Integer-indexed view of the aggregate cells; the likelihood input for the models.
struct CellTable {
  struct Cell {
    int coin = 0;
    int person = 0;
    double sign = 1.0;  // +1 start=heads, -1 start=tails
    double n = 0.0;
    double heads = 0.0;
  };
  std::vector<std::string> persons;
  std::vector<std::string> coins;
  std::vector<Cell> cells;

  static CellTable from(const FlipDataset& d);
  static CellTable from(const std::vector<AggregateCell>& cells);
  double total_flips() const;
  double same_of(const Cell& c) const { return c.sign > 0 ? c.heads : c.n - c.heads; }
};

enum class SummaryUnit { person, coin };

struct SummaryRow {
  std::string unit_id;
  std::int64_t k = 0;  // same-side count (person) or heads count (coin)
  std::int64_t n = 0;
  int degree = 0;  // distinct coins (person rows) or persons (coin rows)
  double proportion = 0.0;
  double ci_low = 0.0;   // central 95% of Beta(k+1, n-k+1)
  double ci_high = 0.0;
  std::string site;  // person rows only
};

// Rows sorted ascending by proportion; ties broken by unit id.
std::vector<SummaryRow> summarize_by(const FlipDataset& d, SummaryUnit unit);

struct OutlierFilter {
  FlipDataset data;
  std::vector<std::string> excluded_persons;
};

// Removes all records of persons whose same-side proportion exceeds the threshold.
OutlierFilter exclude_outliers(const FlipDataset& d, double threshold = 0.53);

// Expected profit of n_bets even-money bets on the starting side.
double betting_edge(double p_same, double n_bets, double stake = 1.0);

}  // namespace flips
