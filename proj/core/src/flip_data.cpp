#include "flips/flip_data.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "flips/numerics.hpp"

namespace flips {

char side_char(Side s) { return s == Side::heads ? 'H' : 'T'; }

Side side_from_token(const std::string& tok) {
  if (tok == "H") return Side::heads;
  if (tok == "T") return Side::tails;
  throw ParseError("bad side token '" + tok + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

FlipDataset ingest_csv(std::istream& in, bool strict) {
  static const std::vector<std::string> kHeader = {
      "person_id", "coin_id", "site", "sequence_id", "flip_index", "start", "landed"};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input: header row required");
  if (split_csv_line(strip_cr(line)) != kHeader)
    throw ParseError("bad header: expected person_id,coin_id,site,sequence_id,flip_index,start,landed");

  FlipDataset d;
  std::set<std::pair<std::string, std::int64_t>> seen;  // duplicate (person, flip_index)
  // chaining state per (person, sequence); flip-index state per person
  std::map<std::pair<std::string, std::string>, Side> last_landed;
  std::map<std::string, std::int64_t> last_index;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw ParseError("row " + std::to_string(row) + ": expected 7 fields");
    FlipRecord r;
    r.person_id = f[0];
    r.coin_id = f[1];
    r.site = f[2];
    r.sequence_id = f[3];
    try {
      std::size_t pos = 0;
      r.flip_index = std::stoll(f[4], &pos);
      if (pos != f[4].size()) throw std::invalid_argument(f[4]);
    } catch (const std::exception&) {
      throw ParseError("row " + std::to_string(row) + ": bad flip_index '" + f[4] + "'");
    }
    if (r.flip_index < 0) throw ParseError("row " + std::to_string(row) + ": negative flip_index");
    try {
      r.start = side_from_token(f[5]);
      r.landed = side_from_token(f[6]);
    } catch (const ParseError& e) {
      throw ParseError("row " + std::to_string(row) + ": " + e.what());
    }

    if (!seen.insert({r.person_id, r.flip_index}).second)
      throw IntegrityError("row " + std::to_string(row) + ": duplicate (person, flip_index) (" +
                           r.person_id + ", " + std::to_string(r.flip_index) + ")");
    if (auto it = last_index.find(r.person_id);
        it != last_index.end() && r.flip_index <= it->second) {
      const std::string msg = "row " + std::to_string(row) + ": flip_index not increasing for person " + r.person_id;
      if (strict) throw IntegrityError(msg);
      d.violations.push_back({row, msg});
    }
    last_index[r.person_id] = r.flip_index;
    const auto key = std::make_pair(r.person_id, r.sequence_id);
    if (auto it = last_landed.find(key); it != last_landed.end() && r.start != it->second) {
      const std::string msg = "row " + std::to_string(row) + ": start differs from previous landed in sequence " +
                              r.sequence_id + " of person " + r.person_id;
      if (strict) throw IntegrityError(msg);
      d.violations.push_back({row, msg});
    }
    last_landed[key] = r.landed;
    d.records.push_back(std::move(r));
  }

  std::set<std::string> ps, cs;
  for (const auto& r : d.records) {
    ps.insert(r.person_id);
    cs.insert(r.coin_id);
  }
  d.persons.assign(ps.begin(), ps.end());
  d.coins.assign(cs.begin(), cs.end());
  return d;
}

FlipDataset ingest_csv_file(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file: " + path);
  return ingest_csv(in, strict);
}

void write_csv(const FlipDataset& d, std::ostream& out) {
  out << "person_id,coin_id,site,sequence_id,flip_index,start,landed\n";
  for (const auto& r : d.records) {
    out << r.person_id << ',' << r.coin_id << ',' << r.site << ',' << r.sequence_id << ','
        << r.flip_index << ',' << side_char(r.start) << ',' << side_char(r.landed) << '\n';
  }
}

std::vector<AggregateCell> aggregate(const FlipDataset& d) {
  std::map<std::tuple<std::string, std::string, int>, AggregateCell> acc;
  for (const auto& r : d.records) {
    auto& c = acc[{r.coin_id, r.person_id, static_cast<int>(r.start)}];
    if (c.n_trials == 0) {
      c.coin_id = r.coin_id;
      c.person_id = r.person_id;
      c.start = r.start;
    }
    c.n_trials += 1;
    c.n_heads += r.landed == Side::heads;
    c.n_same += r.same_side();
  }
  std::vector<AggregateCell> out;
  out.reserve(acc.size());
  for (auto& [k, v] : acc) out.push_back(std::move(v));
  return out;
}

CellTable CellTable::from(const FlipDataset& d) { return from(aggregate(d)); }

CellTable CellTable::from(const std::vector<AggregateCell>& cells) {
  CellTable t;
  std::set<std::string> ps, cs;
  for (const auto& c : cells) {
    ps.insert(c.person_id);
    cs.insert(c.coin_id);
  }
  t.persons.assign(ps.begin(), ps.end());
  t.coins.assign(cs.begin(), cs.end());
  auto index_of = [](const std::vector<std::string>& v, const std::string& x) {
    return static_cast<int>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };
  t.cells.reserve(cells.size());
  for (const auto& c : cells) {
    Cell cc;
    cc.coin = index_of(t.coins, c.coin_id);
    cc.person = index_of(t.persons, c.person_id);
    cc.sign = c.start == Side::heads ? 1.0 : -1.0;
    cc.n = static_cast<double>(c.n_trials);
    cc.heads = static_cast<double>(c.n_heads);
    t.cells.push_back(cc);
  }
  return t;
}

double CellTable::total_flips() const {
  double s = 0.0;
  for (const auto& c : cells) s += c.n;
  return s;
}

std::vector<SummaryRow> summarize_by(const FlipDataset& d, SummaryUnit unit) {
  struct Acc {
    std::int64_t k = 0, n = 0;
    std::set<std::string> partners;
    std::string site;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : d.records) {
    const bool by_person = unit == SummaryUnit::person;
    auto& a = acc[by_person ? r.person_id : r.coin_id];
    a.n += 1;
    a.k += by_person ? r.same_side() : (r.landed == Side::heads);
    a.partners.insert(by_person ? r.coin_id : r.person_id);
    if (by_person) a.site = r.site;
  }
  std::vector<SummaryRow> rows;
  rows.reserve(acc.size());
  for (const auto& [id, a] : acc) {
    SummaryRow row;
    row.unit_id = id;
    row.k = a.k;
    row.n = a.n;
    row.degree = static_cast<int>(a.partners.size());
    row.proportion = static_cast<double>(a.k) / static_cast<double>(a.n);
    row.ci_low = beta_quantile(0.025, a.k + 1.0, a.n - a.k + 1.0);
    row.ci_high = beta_quantile(0.975, a.k + 1.0, a.n - a.k + 1.0);
    row.site = a.site;
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
    if (a.proportion != b.proportion) return a.proportion < b.proportion;
    return a.unit_id < b.unit_id;
  });
  return rows;
}

OutlierFilter exclude_outliers(const FlipDataset& d, double threshold) {
  if (!(threshold > 0.5) || !(threshold < 1.0))
    throw std::domain_error("exclude_outliers: threshold outside (0.5, 1)");
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> tally;  // same, n
  for (const auto& r : d.records) {
    auto& t = tally[r.person_id];
    t.first += r.same_side();
    t.second += 1;
  }
  OutlierFilter out;
  std::set<std::string> drop;
  for (const auto& [id, t] : tally)
    if (static_cast<double>(t.first) / static_cast<double>(t.second) > threshold) drop.insert(id);
  out.excluded_persons.assign(drop.begin(), drop.end());
  std::set<std::string> ps, cs;
  for (const auto& r : d.records) {
    if (drop.count(r.person_id)) continue;
    out.data.records.push_back(r);
    ps.insert(r.person_id);
    cs.insert(r.coin_id);
  }
  out.data.persons.assign(ps.begin(), ps.end());
  out.data.coins.assign(cs.begin(), cs.end());
  return out;
}

double betting_edge(double p_same, double n_bets, double stake) {
  if (p_same < 0.0 || p_same > 1.0) throw std::domain_error("betting_edge: p outside [0,1]");
  return n_bets * stake * (2.0 * p_same - 1.0);
}

}  // namespace flips
