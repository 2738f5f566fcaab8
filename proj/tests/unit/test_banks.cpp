#include <doctest.h>

#include <map>
#include <random>

#include "mois/banks/banks.hpp"
#include "support/bank_reference.hpp"

using namespace mois::banks;

namespace {

using Bank = ExemplarBank<int>;

std::vector<int> payloads(const Bank& b) {
  std::vector<int> out;
  for (const auto& e : b.entries()) out.push_back(e.payload);
  return out;
}

std::vector<mois::testing::RefEntry> as_ref(const Bank& b) {
  std::vector<mois::testing::RefEntry> out;
  for (const auto& e : b.entries()) out.push_back({e.lesion, e.slice, e.prompted, e.counter});
  return out;
}

}  // namespace

TEST_CASE("prompted newcomer evicts the non-prompted entry") {
  Bank b(2);
  b.insert(0, 0, false, 1);
  b.insert(0, 1, true, 2);
  auto out = b.insert(0, 2, true, 3);
  CHECK(out.stored);
  CHECK(out.evicted == 0u);
  CHECK(payloads(b) == std::vector<int>{2, 3});
}

TEST_CASE("newer prompted replaces the older prompted entry") {
  Bank b(2);
  b.insert(0, 0, true, 1);
  b.insert(0, 1, true, 2);
  b.insert(0, 2, true, 3);
  CHECK(payloads(b) == std::vector<int>{2, 3});
}

TEST_CASE("non-prompted newcomer is dropped by a bank of prompted entries") {
  Bank b(2);
  b.insert(0, 0, true, 1);
  b.insert(0, 1, true, 2);
  auto out = b.insert(0, 2, false, 3);
  CHECK(!out.stored);
  CHECK(payloads(b) == std::vector<int>{1, 2});
}

TEST_CASE("update switches the flag and refreshes recency") {
  Bank b(3);
  b.insert(1, 4, false, 10);
  b.insert(2, 5, false, 20);
  CHECK(b.recency_rank(*b.find(1, 4)) == 1);
  b.update(1, 4, true, 11);
  const auto* e = b.find(1, 4);
  REQUIRE(e);
  CHECK(e->prompted);
  CHECK(e->payload == 11);
  CHECK(b.recency_rank(*e) == 0);
  b.update(1, 4, false, 12);
  CHECK(b.find(1, 4)->prompted);
  CHECK(b.size() == 2);
  // No match: inserted.
  auto out = b.update(3, 1, true, 30);
  CHECK(!out.updated);
  CHECK(b.size() == 3);
  // Re-insert of the same pair updates instead of duplicating.
  b.insert(2, 5, false, 21);
  CHECK(b.size() == 3);
  CHECK(b.find(2, 5)->payload == 21);
}

TEST_CASE("select_context ordering") {
  Bank b(10);
  b.insert(0, 1, false, 1);
  b.insert(0, 4, false, 4);
  b.insert(0, 7, false, 7);
  auto ctx = b.select_context(5, 10);
  REQUIRE(ctx.size() == 3);
  CHECK(ctx[0]->slice == 4);
  CHECK(ctx[1]->slice == 7);
  CHECK(ctx[2]->slice == 1);
  CHECK(b.select_context(5, 2).size() == 2);

  Bank t(10);
  t.insert(0, 3, false, 1);
  t.insert(1, 7, true, 2);
  t.insert(2, 7, false, 3);
  t.insert(3, 3, false, 4);
  auto c = t.select_context(5, 10);
  CHECK(c[0]->payload == 2);  // prompted wins the distance tie
  CHECK(c[1]->payload == 4);  // then newer
  CHECK(c[2]->payload == 3);
  CHECK(c[3]->payload == 1);
  CHECK(Bank(3).select_context(0, 5).empty());
}

TEST_CASE("select_context does not mutate") {
  Bank b(4);
  for (int i = 0; i < 6; ++i) b.insert(i, i, i % 2, i);
  auto before = as_ref(b);
  (void)b.select_context(3, 2);
  CHECK(as_ref(b) == before);
}

TEST_CASE("bank matches the priority-queue reference on exhaustive sequences") {
  // Alphabet: 0 insert prompted, 1 insert non-prompted, 2 click-refresh of the
  // oldest live entry, 3 propagated re-insert of the newest live entry.
  int sequences = 0;
  for (int k = 1; k <= 3; ++k) {
    for (int len = 0; len <= 6; ++len) {
      int total = 1;
      for (int i = 0; i < len; ++i) total *= 4;
      for (int code = 0; code < total; ++code) {
        Bank bank(k);
        mois::testing::ReferenceBank ref(k);
        int c = code, next_key = 0;
        for (int step = 0; step < len; ++step, c /= 4) {
          int op = c % 4;
          if (op <= 1 || bank.empty()) {
            bool prompted = op == 0;
            auto got = bank.insert(next_key, next_key, prompted, next_key);
            auto want = ref.insert(next_key, next_key, prompted);
            REQUIRE(got.stored == want.first);
            REQUIRE((got.evicted ? static_cast<int64_t>(*got.evicted) : -1) == want.second);
            ++next_key;
          } else if (op == 2) {
            auto e = bank.entries().front();
            bank.update(e.lesion, e.slice, true, -1);
            ref.refresh(e.lesion, e.slice, true);
          } else {
            auto e = bank.entries().back();
            bank.insert(e.lesion, e.slice, false, -2);
            ref.insert(e.lesion, e.slice, false);
          }
          REQUIRE(as_ref(bank) == ref.state());
        }
        ++sequences;
      }
    }
  }
  CHECK(sequences == 3 * (1 + 4 + 16 + 64 + 256 + 1024 + 4096));
}

TEST_CASE("capacity and prompted dominance over random sequences") {
  std::mt19937_64 rng(21);
  for (int seq = 0; seq < 2000; ++seq) {
    int k = 1 + static_cast<int>(rng() % 6);
    Bank bank(k);
    int len = 1 + static_cast<int>(rng() % 30);
    for (int step = 0; step < len; ++step) {
      int lesion = static_cast<int>(rng() % 4), slice = static_cast<int>(rng() % 6);
      bool prompted = rng() % 3 == 0;
      std::map<uint64_t, bool> flag_of;
      for (const auto& e : bank.entries()) flag_of[e.counter] = e.prompted;
      auto out = bank.insert(lesion, slice, prompted, step);
      REQUIRE(static_cast<int>(bank.size()) <= k);
      bool lost_prompted = out.evicted && flag_of.at(*out.evicted);
      if (lost_prompted) {
        for (const auto& e : bank.entries()) CHECK(e.prompted);
      }
    }
  }
}

TEST_CASE("memory bank pins prompted entries and evicts fifo") {
  MemoryBank<int> m(3);
  m.push(4, true, 0);
  m.push(5, false, 1);
  m.push(6, false, 2);
  m.push(7, false, 3);
  REQUIRE(m.size() == 3);
  CHECK(m.entries()[0].slice == 4);
  CHECK(m.entries()[1].slice == 6);
  CHECK(m.entries()[2].slice == 7);
  for (int s = 8; s < 20; ++s) m.push(s, false, s);
  CHECK(m.entries()[0].prompted);
  CHECK(m.entries()[0].slice == 4);
  // Propagated decode does not override the prompted slice.
  m.push(4, false, 99);
  CHECK(m.entries()[0].payload == 0);
  m.clear_unpinned();
  CHECK(m.size() == 1);
  m.clear();
  CHECK(m.empty());
}

TEST_CASE("memory bank prompted overflow drops oldest prompted") {
  MemoryBank<int> m(2);
  m.push(1, true, 1);
  m.push(2, true, 2);
  m.push(3, true, 3);
  REQUIRE(m.size() == 2);
  CHECK(m.entries()[0].slice == 2);
  m.push(2, true, 22);
  CHECK(m.entries().back().payload == 22);
  CHECK(m.size() == 2);
}
