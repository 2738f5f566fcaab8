#pragma once

// Per-lesion memory bank and the shared exemplar bank. Both are generic over
// the payload (features, pointers) so the bookkeeping can be tested alone.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mois::banks {

template <typename P>
struct Exemplar {
  int lesion = 0;
  int slice = 0;
  bool prompted = false;
  uint64_t counter = 0;  // insertion order; refreshed on update
  P payload{};
};

struct InsertOutcome {
  bool stored = false;                  // false: discarded (bank full of prompted entries)
  bool updated = false;                 // an entry for (lesion, slice) was refreshed instead
  std::optional<uint64_t> evicted;      // counter of the displaced entry
};

template <typename P>
class ExemplarBank {
 public:
  explicit ExemplarBank(int capacity = 10) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("exemplar bank capacity must be >= 1");
  }

  int capacity() const { return capacity_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  // Oldest first.
  const std::vector<Exemplar<P>>& entries() const { return entries_; }
  uint64_t next_counter() const { return next_counter_; }

  const Exemplar<P>* find(int lesion, int slice) const {
    for (const auto& e : entries_)
      if (e.lesion == lesion && e.slice == slice) return &e;
    return nullptr;
  }

  // New exemplar for (lesion, slice). An existing entry for the pair is
  // updated instead. When full: a prompted exemplar displaces the oldest
  // non-prompted one if any, otherwise the oldest entry of its own kind; a
  // non-prompted exemplar facing a bank of prompted entries is dropped.
  InsertOutcome insert(int lesion, int slice, bool prompted, P payload) {
    if (find(lesion, slice)) return update(lesion, slice, prompted, std::move(payload));
    InsertOutcome out;
    if (static_cast<int>(entries_.size()) >= capacity_) {
      auto victim = entries_.end();
      if (prompted) victim = oldest(false);
      if (victim == entries_.end()) victim = oldest(prompted);
      if (victim == entries_.end()) return out;
      out.evicted = victim->counter;
      entries_.erase(victim);
    }
    entries_.push_back({lesion, slice, prompted, next_counter_++, std::move(payload)});
    out.stored = true;
    return out;
  }

  // Replaces the fields of the (lesion, slice) exemplar. A click-derived
  // refinement switches a non-prompted entry to prompted; the entry becomes
  // the newest. Inserts when no entry matches.
  InsertOutcome update(int lesion, int slice, bool from_click, P payload) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Exemplar<P>& e) { return e.lesion == lesion && e.slice == slice; });
    if (it == entries_.end()) return insert(lesion, slice, from_click, std::move(payload));
    Exemplar<P> e = std::move(*it);
    entries_.erase(it);
    e.prompted = e.prompted || from_click;
    e.payload = std::move(payload);
    e.counter = next_counter_++;
    entries_.push_back(std::move(e));
    InsertOutcome out;
    out.stored = true;
    out.updated = true;
    return out;
  }

  // Closest slices first; ties prompted first, then newer. Does not mutate.
  std::vector<const Exemplar<P>*> select_context(int current_slice, int limit) const {
    std::vector<const Exemplar<P>*> out;
    for (const auto& e : entries_) out.push_back(&e);
    std::sort(out.begin(), out.end(), [&](const Exemplar<P>* a, const Exemplar<P>* b) {
      int da = std::abs(a->slice - current_slice), db = std::abs(b->slice - current_slice);
      if (da != db) return da < db;
      if (a->prompted != b->prompted) return a->prompted;
      return a->counter > b->counter;
    });
    if (limit >= 0 && static_cast<int>(out.size()) > limit) out.resize(limit);
    return out;
  }

  // 0 = most recently inserted or refreshed.
  int recency_rank(const Exemplar<P>& e) const {
    int rank = 0;
    for (const auto& o : entries_) rank += o.counter > e.counter;
    return rank;
  }

  void clear() { entries_.clear(); }

  // Restores a serialized state; entries must be ordered by counter.
  void restore(std::vector<Exemplar<P>> entries, uint64_t next_counter) {
    if (static_cast<int>(entries.size()) > capacity_) throw std::invalid_argument("exemplar bank over capacity");
    for (size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].counter >= next_counter || (i > 0 && entries[i].counter <= entries[i - 1].counter)) {
        throw std::invalid_argument("exemplar bank counters out of order");
      }
    }
    entries_ = std::move(entries);
    next_counter_ = next_counter;
  }

 private:
  typename std::vector<Exemplar<P>>::iterator oldest(bool prompted) {
    // entries_ is kept in counter order, so the first match is the oldest.
    return std::find_if(entries_.begin(), entries_.end(), [&](const Exemplar<P>& e) { return e.prompted == prompted; });
  }

  int capacity_;
  uint64_t next_counter_ = 0;
  std::vector<Exemplar<P>> entries_;
};

template <typename P>
struct MemoryEntry {
  int slice = 0;
  bool prompted = false;
  P payload{};
};

// Prompted entries are pinned; the remaining room holds the most recent
// non-prompted entries. If prompted entries alone overflow the capacity the
// oldest prompted one is dropped. A push for a slice already present replaces
// that entry, except that a propagated entry never replaces a prompted one.
template <typename P>
class MemoryBank {
 public:
  explicit MemoryBank(int capacity = 7) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("memory bank capacity must be >= 1");
  }

  int capacity() const { return capacity_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  // Oldest first.
  const std::vector<MemoryEntry<P>>& entries() const { return entries_; }

  void push(int slice, bool prompted, P payload) {
    if (!prompted) {
      for (const auto& e : entries_)
        if (e.slice == slice && e.prompted) return;  // a propagated decode never overrides a prompted slice
    }
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                  [&](const MemoryEntry<P>& e) { return e.slice == slice; }),
                   entries_.end());
    entries_.push_back({slice, prompted, std::move(payload)});
    while (static_cast<int>(entries_.size()) > capacity_) {
      auto it = std::find_if(entries_.begin(), entries_.end(), [](const MemoryEntry<P>& e) { return !e.prompted; });
      if (it == entries_.end()) it = entries_.begin();
      entries_.erase(it);
    }
  }

  // Drops propagated entries, keeping the pinned prompted ones.
  void clear_unpinned() {
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(), [](const MemoryEntry<P>& e) { return !e.prompted; }),
                   entries_.end());
  }
  void clear() { entries_.clear(); }
  void restore(std::vector<MemoryEntry<P>> entries) {
    if (static_cast<int>(entries.size()) > capacity_) throw std::invalid_argument("memory bank over capacity");
    entries_ = std::move(entries);
  }

 private:
  int capacity_;
  std::vector<MemoryEntry<P>> entries_;
};

}  // namespace mois::banks
