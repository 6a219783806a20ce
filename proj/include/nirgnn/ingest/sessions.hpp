#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nirgnn/error.hpp"

namespace nirgnn::ingest {

struct Event {
  std::string item;
  std::int64_t ts = 0;

  bool operator==(const Event&) const = default;
};

struct Session {
  std::string session_id;
  std::vector<Event> events;

  std::int64_t last_ts() const {
    if (events.empty()) throw ProtocolError("session '" + session_id + "' has no events");
    return events.back().ts;
  }

  std::vector<std::string> items() const {
    std::vector<std::string> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back(e.item);
    return out;
  }
};

struct SessionLog {
  std::vector<Session> sessions;
  std::size_t resorted = 0;  // sessions whose events arrived out of time order
};

/// Parses the JSON-lines sessions format:
///   {"session_id": str, "events": [{"item": str, "ts": int}, ...]}
/// Blank lines are ignored.
inline SessionLog parse_sessions(std::istream& in, const std::string& source = "<sessions>") {
  SessionLog log;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw IngestError(source + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed JSON (") + e.what() + ")");
    }
    if (!j.is_object()) fail("expected an object");
    if (!j.contains("session_id") || !j["session_id"].is_string()) fail("missing string field 'session_id'");
    if (!j.contains("events") || !j["events"].is_array()) fail("missing array field 'events'");
    Session s;
    s.session_id = j["session_id"].get<std::string>();
    if (!seen.insert(s.session_id).second) fail("duplicate session_id '" + s.session_id + "'");
    for (const auto& ev : j["events"]) {
      if (!ev.is_object()) fail("event is not an object");
      if (!ev.contains("item") || !ev["item"].is_string()) fail("event missing string field 'item'");
      if (!ev.contains("ts") || !ev["ts"].is_number_integer()) fail("event missing integer field 'ts'");
      s.events.push_back({ev["item"].get<std::string>(), ev["ts"].get<std::int64_t>()});
    }
    const bool ordered = std::is_sorted(s.events.begin(), s.events.end(),
                                        [](const Event& a, const Event& b) { return a.ts < b.ts; });
    if (!ordered) {
      std::stable_sort(s.events.begin(), s.events.end(),
                       [](const Event& a, const Event& b) { return a.ts < b.ts; });
      ++log.resorted;
    }
    log.sessions.push_back(std::move(s));
  }
  return log;
}

inline SessionLog load_sessions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open sessions file " + path);
  return parse_sessions(in, path);
}

}  // namespace nirgnn::ingest
