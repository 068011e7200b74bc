#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace vf {

enum class EventKind {
  Connect,    // a cliqué link came up; peer = fellow index
  Input,      // an input was recorded; peer = slot index
  Broadcast,  // the voter started broadcasting its own input
  Vote,       // all N inputs present, algorithm ran
  Deliver,    // outcome sent on the output link
  Done,       // DONE sent to the user module
  Refused,
  Quit,
  Reset,
  Departed,   // a fellow's link closed
  Rejected,   // a duplicate input was dropped
  Error,
};

inline std::string_view event_name(EventKind k) {
  switch (k) {
    case EventKind::Connect: return "connect";
    case EventKind::Input: return "input";
    case EventKind::Broadcast: return "broadcast";
    case EventKind::Vote: return "vote";
    case EventKind::Deliver: return "deliver";
    case EventKind::Done: return "done";
    case EventKind::Refused: return "refused";
    case EventKind::Quit: return "quit";
    case EventKind::Reset: return "reset";
    case EventKind::Departed: return "departed";
    case EventKind::Rejected: return "rejected";
    case EventKind::Error: return "error";
  }
  return "?";
}

struct Event {
  std::uint64_t seq = 0;
  std::chrono::steady_clock::time_point at;
  int farm_id = 0;
  int voter = 0;
  EventKind kind = EventKind::Error;
  int peer = -1;
  std::string detail;
};

// Totally ordered, thread-safe record of voter activity.
class EventLog {
 public:
  void record(int farm_id, int voter, EventKind kind, int peer = -1, std::string detail = {}) {
    std::lock_guard lock(mu_);
    events_.push_back(Event{next_++, std::chrono::steady_clock::now(), farm_id, voter, kind, peer,
                            std::move(detail)});
  }

  std::vector<Event> snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  std::vector<Event> of_kind(EventKind kind) const {
    std::vector<Event> out;
    std::lock_guard lock(mu_);
    for (const auto& e : events_)
      if (e.kind == kind) out.push_back(e);
    return out;
  }

  void clear() {
    std::lock_guard lock(mu_);
    events_.clear();
  }

  void print(std::ostream& os) const {
    auto events = snapshot();
    if (events.empty()) return;
    auto t0 = events.front().at;
    for (const auto& e : events) {
      auto us = std::chrono::duration_cast<std::chrono::microseconds>(e.at - t0).count();
      os << "#" << e.seq << " +" << us << "us farm " << e.farm_id << " voter " << e.voter << " "
         << event_name(e.kind);
      if (e.peer >= 0) os << " peer " << e.peer;
      if (!e.detail.empty()) os << " " << e.detail;
      os << '\n';
    }
  }

 private:
  mutable std::mutex mu_;
  std::vector<Event> events_;
  std::uint64_t next_ = 0;
};

}  // namespace vf
