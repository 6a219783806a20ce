#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "nirgnn/error.hpp"
#include "nirgnn/ingest/sessions.hpp"

namespace nirgnn::ingest {

inline constexpr std::int64_t seconds_per_day = 86400;

struct DatasetSplit {
  std::vector<Session> train_sessions;
  std::vector<Session> test_sessions;
  std::set<std::string> candidate_pool;
  std::int64_t boundary = 0;
};

/// Sessions whose last event is at or after max_ts - boundary_days go to
/// test; earlier ones go to train. Input order is kept within each side.
inline DatasetSplit time_split(const std::vector<Session>& sessions, int boundary_days = 7) {
  if (sessions.empty()) throw ConfigError("time split needs at least one session");
  if (boundary_days < 0) throw ConfigError("boundary_days must be non-negative");
  std::int64_t max_ts = sessions.front().last_ts();
  for (const auto& s : sessions) max_ts = std::max(max_ts, s.last_ts());

  DatasetSplit split;
  split.boundary = max_ts - static_cast<std::int64_t>(boundary_days) * seconds_per_day;
  for (const auto& s : sessions) {
    for (const auto& e : s.events) split.candidate_pool.insert(e.item);
    if (s.last_ts() >= split.boundary) {
      split.test_sessions.push_back(s);
    } else {
      split.train_sessions.push_back(s);
    }
  }
  if (split.train_sessions.empty()) {
    throw ConfigError("time split left the training side empty (all sessions within " +
                      std::to_string(boundary_days) + " days of the newest)");
  }
  if (split.test_sessions.empty()) throw ConfigError("time split left the test side empty");
  return split;
}

}  // namespace nirgnn::ingest
