#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "flips/flip_data.hpp"
#include "support/reconstruct.hpp"

using namespace flips;
using namespace flips::testsupport;

using LL = long long;
using Window = std::pair<LL, LL>;

TEST_CASE("stays_window hand cases") {
  // constant sequences: everything stays except possibly the first flip
  CHECK(stays_window(10, 10) == Window{9, 10});
  CHECK(stays_window(10, 0) == Window{9, 10});
  // an even split allows the fully alternating extreme
  CHECK(stays_window(10, 5) == Window{0, 9});
  // 7 heads of 10: at most 2*3 run boundaries
  CHECK(stays_window(10, 7) == Window{3, 9});
  CHECK(stays_window(1, 1) == Window{0, 1});
}

TEST_CASE("alloc_with_caps respects bounds and totals") {
  std::vector<std::pair<LL, LL>> caps = {{0, 5}, {2, 4}, {1, 3}};
  bool ok = false;
  auto got = alloc_with_caps(7, caps, &ok);
  REQUIRE(ok);
  REQUIRE(got.size() == caps.size());
  LL total = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i] >= caps[i].first);
    CHECK(got[i] <= caps[i].second);
    total += got[i];
  }
  CHECK(total == 7);
  alloc_with_caps(100, caps, &ok);
  CHECK_FALSE(ok);
  alloc_with_caps(1, caps, &ok);  // below the sum of lower bounds
  CHECK_FALSE(ok);
}

TEST_CASE("split_block plans exact sequence margins") {
  bool ok = false;
  auto plans = split_block(230, 120, 110, &ok);
  REQUIRE(ok);
  LL len = 0, stays = 0, heads = 0;
  for (const auto& p : plans) {
    len += p.len;
    stays += p.stays;
    heads += p.heads;
    CHECK(p.len <= 100);
    auto [lo, hi] = stays_window(p.len, p.heads);
    CHECK(p.stays >= lo);
    CHECK(p.stays <= hi);
  }
  CHECK(len == 230);
  CHECK(stays == 120);
  CHECK(heads == 110);
}

TEST_CASE("realize_sequence matches requested margins exactly") {
  for (LL len : {7LL, 50LL, 100LL}) {
    for (LL heads = 0; heads <= len; heads += (len > 20 ? 13 : 1)) {
      auto [lo, hi] = stays_window(len, heads);
      for (LL stays : {lo, (lo + hi) / 2, hi}) {
        if (stays < lo || stays > hi) continue;
        bool ok = false;
        auto seq = realize_sequence(len, stays, heads, &ok);
        REQUIRE(ok);
        REQUIRE(static_cast<LL>(seq.landed.size()) == len);
        LL h = 0, st = 0;
        Side prev = seq.start;
        for (LL i = 0; i < len; ++i) {
          h += seq.landed[i] == Side::heads;
          st += seq.landed[i] == prev;  // protocol: next start = previous landed
          prev = seq.landed[i];
        }
        CHECK(h == heads);
        CHECK(st == stays);
      }
    }
  }
}

namespace {

struct PersonMargin {
  std::string person_id;
  LL same_side = 0;
  LL flips = 0;
};

std::vector<PersonMargin> read_person_margins(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);  // header
  std::vector<PersonMargin> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string person, same, flips;
    std::getline(ls, person, ',');
    std::getline(ls, same, ',');
    std::getline(ls, flips, ',');
    out.push_back({person, std::stoll(same), std::stoll(flips)});
  }
  return out;
}

}  // namespace

TEST_CASE("full reconstruction reproduces every pinned margin") {
  auto d = reconstruct_dataset(data_file("blocks.csv"), data_file("person_margins.csv"));
  REQUIRE(d.records.size() == 350757);
  CHECK(d.persons.size() == 48);
  CHECK(d.coins.size() == 44);

  std::int64_t same = 0, heads = 0;
  for (const auto& r : d.records) {
    same += r.same_side();
    heads += r.landed == Side::heads;
  }
  CHECK(same == 178079);
  CHECK(heads == 175421);

  // per-person margins match the person table exactly
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> by_person;
  for (const auto& r : d.records) {
    auto& [s, n] = by_person[r.person_id];
    s += r.same_side();
    n += 1;
  }
  auto margins = read_person_margins(data_file("person_margins.csv"));
  REQUIRE(by_person.size() == margins.size());
  for (const auto& m : margins) {
    auto it = by_person.find(m.person_id);
    REQUIRE(it != by_person.end());
    CHECK(it->second.first == m.same_side);
    CHECK(it->second.second == m.flips);
  }

  // outlier exclusion leaves the pinned subset
  auto filtered = exclude_outliers(d, 0.53);
  std::int64_t same_x = 0, heads_x = 0;
  for (const auto& r : filtered.data.records) {
    same_x += r.same_side();
    heads_x += r.landed == Side::heads;
  }
  CHECK(filtered.data.records.size() == 338985);
  CHECK(same_x == 171517);
  CHECK(heads_x == 169635);
  // the excluded group's heads count, needed for the heads-robustness check
  CHECK(heads - heads_x == 5786);
}

TEST_CASE("reconstruction is protocol-clean and round trips through ingestion") {
  auto d = reconstruct_dataset(data_file("blocks.csv"), data_file("person_margins.csv"));
  std::ostringstream out;
  write_csv(d, out);
  std::istringstream in(out.str());
  auto d2 = ingest_csv(in, true);  // strict: throws on any protocol break
  CHECK(d2.records.size() == d.records.size());
  CHECK(d2.violations.empty());
}
