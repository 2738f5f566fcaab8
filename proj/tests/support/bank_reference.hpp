#pragma once

// Priority-queue model of the exemplar bank: a full bank evicts the entry with
// the smallest (prompted, counter) key when that key's flag does not exceed
// the newcomer's, and otherwise drops the newcomer.

#include <cstdint>
#include <map>
#include <queue>
#include <tuple>
#include <vector>

namespace mois::testing {

struct RefEntry {
  int lesion, slice;
  bool prompted;
  uint64_t counter;
  bool operator==(const RefEntry&) const = default;
};

class ReferenceBank {
 public:
  explicit ReferenceBank(int k) : k_(k) {}

  // Returns {stored, evicted counter or -1}.
  std::pair<bool, int64_t> insert(int lesion, int slice, bool prompted) {
    auto key = std::make_pair(lesion, slice);
    if (live_.count(key)) return refresh(lesion, slice, prompted);
    int64_t evicted = -1;
    if (static_cast<int>(live_.size()) >= k_) {
      drop_stale();
      auto [flag, counter, l, s] = heap_.top();
      if (flag > static_cast<int>(prompted)) return {false, -1};
      heap_.pop();
      live_.erase({l, s});
      evicted = static_cast<int64_t>(counter);
    }
    add(lesion, slice, prompted);
    return {true, evicted};
  }

  std::pair<bool, int64_t> refresh(int lesion, int slice, bool from_click) {
    auto it = live_.find({lesion, slice});
    if (it == live_.end()) return insert(lesion, slice, from_click);
    bool flag = it->second.prompted || from_click;
    live_.erase(it);  // old heap record becomes stale
    add(lesion, slice, flag);
    return {true, -1};
  }

  // Live entries ordered by counter.
  std::vector<RefEntry> state() const {
    std::map<uint64_t, RefEntry> by_counter;
    for (const auto& [key, e] : live_) by_counter[e.counter] = e;
    std::vector<RefEntry> out;
    for (const auto& [c, e] : by_counter) out.push_back(e);
    return out;
  }

 private:
  using Rec = std::tuple<int, uint64_t, int, int>;  // flag, counter, lesion, slice

  void add(int lesion, int slice, bool prompted) {
    RefEntry e{lesion, slice, prompted, counter_++};
    live_[{lesion, slice}] = e;
    heap_.push({prompted ? 1 : 0, e.counter, lesion, slice});
  }

  void drop_stale() {
    while (!heap_.empty()) {
      auto [flag, counter, l, s] = heap_.top();
      auto it = live_.find({l, s});
      if (it != live_.end() && it->second.counter == counter) return;
      heap_.pop();
    }
  }

  int k_;
  uint64_t counter_ = 0;
  std::map<std::pair<int, int>, RefEntry> live_;
  std::priority_queue<Rec, std::vector<Rec>, std::greater<Rec>> heap_;
};

}  // namespace mois::testing
