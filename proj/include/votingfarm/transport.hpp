#pragma once

// In-process message-passing substrate: paired link endpoints, rendezvous
// connection by (node pair, request id), blocking receive, and select with a
// deadline.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stop_token>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "votingfarm/protocol.hpp"

namespace vf::transport {

using Clock = std::chrono::steady_clock;

namespace detail {

struct Waiter {
  std::mutex mu;
  std::condition_variable cv;
  bool signaled = false;

  void notify() {
    {
      std::lock_guard lock(mu);
      signaled = true;
    }
    cv.notify_all();
  }
};

// One direction of a link. The owner of the receiving endpoint reads it; the
// peer endpoint writes it.
struct Inbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> queue;
  bool writer_closed = false;
  bool reader_closed = false;
  std::vector<Waiter*> waiters;

  // Ready means a recv would not block: either data or a closed writer.
  bool ready_locked() const { return !queue.empty() || writer_closed; }

  void wake_locked() {
    cv.notify_all();
    for (auto* w : waiters) w->notify();
  }
};

inline std::uint64_t next_endpoint_id() {
  static std::atomic<std::uint64_t> id{1};
  return id.fetch_add(1);
}

}  // namespace detail

class SelectOption;
class Registry;

// Bidirectional, reliable, FIFO endpoint. Move-only: each endpoint has a
// single owner at a time. Destroying an endpoint closes it.
class Link {
 public:
  Link() = default;
  Link(const Link&) = delete;
  Link& operator=(const Link&) = delete;
  Link(Link&& other) noexcept { swap(other); }
  Link& operator=(Link&& other) noexcept {
    if (this != &other) {
      close();
      swap(other);
    }
    return *this;
  }
  ~Link() { close(); }

  bool is_open() const { return in_ != nullptr; }
  explicit operator bool() const { return is_open(); }
  std::uint64_t id() const { return id_; }
  std::uint64_t peer_id() const { return peer_id_; }

  void close() {
    if (!in_) return;
    {
      std::lock_guard lock(in_->mu);
      in_->reader_closed = true;
      in_->queue.clear();
    }
    {
      std::lock_guard lock(out_->mu);
      out_->writer_closed = true;
      out_->wake_locked();
    }
    in_.reset();
    out_.reset();
  }

  friend std::pair<Link, Link> local_link_pair();
  friend int send(Link& link, ByteView payload);
  friend std::optional<Bytes> recv(Link& link, std::size_t max);
  friend class SelectOption;
  friend class Registry;

 private:
  void swap(Link& other) noexcept {
    std::swap(in_, other.in_);
    std::swap(out_, other.out_);
    std::swap(id_, other.id_);
    std::swap(peer_id_, other.peer_id_);
  }

  std::shared_ptr<detail::Inbox> in_;
  std::shared_ptr<detail::Inbox> out_;
  std::uint64_t id_ = 0;
  std::uint64_t peer_id_ = 0;
};

inline std::pair<Link, Link> local_link_pair() {
  auto ab = std::make_shared<detail::Inbox>();
  auto ba = std::make_shared<detail::Inbox>();
  Link a, b;
  a.in_ = ba;
  a.out_ = ab;
  b.in_ = ab;
  b.out_ = ba;
  a.id_ = detail::next_endpoint_id();
  b.id_ = detail::next_endpoint_id();
  a.peer_id_ = b.id_;
  b.peer_id_ = a.id_;
  return {std::move(a), std::move(b)};
}

// Returns the number of bytes queued for the peer, or -1 when either side is
// closed. Sends never block: capacity is unbounded.
inline int send(Link& link, ByteView payload) {
  if (!link.is_open()) return -1;
  auto& box = *link.out_;
  std::lock_guard lock(box.mu);
  if (box.reader_closed) return -1;
  box.queue.emplace_back(payload.begin(), payload.end());
  box.wake_locked();
  return static_cast<int>(payload.size());
}

// Blocks until one whole message is available. Returns nullopt when the peer
// has closed with nothing left queued, when this endpoint is closed, or when
// the next message is longer than max.
inline std::optional<Bytes> recv(Link& link, std::size_t max) {
  if (!link.is_open()) return std::nullopt;
  auto& box = *link.in_;
  std::unique_lock lock(box.mu);
  box.cv.wait(lock, [&] { return box.ready_locked(); });
  if (box.queue.empty()) return std::nullopt;
  if (box.queue.front().size() > max) return std::nullopt;
  Bytes msg = std::move(box.queue.front());
  box.queue.pop_front();
  return msg;
}

// Receive readiness on a link, or an absolute deadline.
class SelectOption {
 public:
  static SelectOption receive(Link& link) { return SelectOption(link.in_); }
  static SelectOption deadline(Clock::time_point when) { return SelectOption(when); }
  static SelectOption timeout(std::chrono::milliseconds after) {
    return deadline(Clock::now() + after);
  }

  bool is_deadline() const { return std::holds_alternative<Clock::time_point>(v_); }

 private:
  explicit SelectOption(std::shared_ptr<detail::Inbox> box) : v_(std::move(box)) {}
  explicit SelectOption(Clock::time_point t) : v_(t) {}

  friend int select(std::span<const SelectOption> options);
  std::variant<std::shared_ptr<detail::Inbox>, Clock::time_point> v_;
};

// Returns the lowest index among ready receive options; otherwise waits. Once
// the earliest deadline passes with nothing ready, returns that deadline's
// index. Returns -1 for an empty option list or a closed endpoint option with
// no deadline to fall back on.
inline int select(std::span<const SelectOption> options) {
  if (options.empty()) return -1;

  std::optional<Clock::time_point> deadline;
  int deadline_index = -1;
  std::vector<std::pair<int, detail::Inbox*>> boxes;
  for (int i = 0; i < static_cast<int>(options.size()); ++i) {
    const auto& opt = options[static_cast<std::size_t>(i)];
    if (const auto* t = std::get_if<Clock::time_point>(&opt.v_)) {
      if (!deadline || *t < *deadline) {
        deadline = *t;
        deadline_index = i;
      }
    } else if (const auto& box = std::get<std::shared_ptr<detail::Inbox>>(opt.v_)) {
      boxes.emplace_back(i, box.get());
    }
  }

  detail::Waiter waiter;
  auto scan = [&]() -> int {
    for (auto [i, box] : boxes) {
      std::lock_guard lock(box->mu);
      if (box->ready_locked()) return i;
    }
    return -1;
  };

  for (auto [i, box] : boxes) {
    std::lock_guard lock(box->mu);
    box->waiters.push_back(&waiter);
  }
  int chosen = -1;
  for (;;) {
    {
      std::lock_guard lock(waiter.mu);
      waiter.signaled = false;
    }
    chosen = scan();
    if (chosen >= 0) break;
    std::unique_lock lock(waiter.mu);
    if (deadline) {
      if (!waiter.cv.wait_until(lock, *deadline, [&] { return waiter.signaled; })) {
        lock.unlock();
        chosen = scan();
        if (chosen < 0) chosen = deadline_index;
        break;
      }
    } else if (boxes.empty()) {
      break;
    } else {
      waiter.cv.wait(lock, [&] { return waiter.signaled; });
    }
  }
  for (auto [i, box] : boxes) {
    std::lock_guard lock(box->mu);
    std::erase(box->waiters, &waiter);
  }
  return chosen;
}

// ---------------------------------------------------------------------------
// Registry: rendezvous and endpoint tokens for one simulated machine.
// ---------------------------------------------------------------------------

class Registry {
 public:
  enum class ConnectError { Timeout, Stopped, InUse, BadRequest };

  // Blocks until the counterpart connect(peer, request_id) from `peer` arrives
  // (symmetric: neither side is client or server), the bound elapses, or the
  // stop token fires.
  std::variant<Link, ConnectError> connect(int self_node, int peer_node, int request_id,
                                           std::chrono::milliseconds bound,
                                           std::stop_token stop = {}) {
    if (request_id <= 0) return ConnectError::BadRequest;
    Key key{std::min(self_node, peer_node), std::max(self_node, peer_node), request_id};

    std::unique_lock lock(mu_);
    auto it = pending_.find(key);
    if (it != pending_.end()) {
      auto& slot = *it->second;
      if (!slot.claimed) {
        slot.claimed = true;
        Link mine = std::move(slot.second);
        cv_.notify_all();
        in_use_[key] = slot.watch;
        pending_.erase(it);
        return mine;
      }
    }
    if (auto used = in_use_.find(key); used != in_use_.end()) {
      if (still_open(used->second)) return ConnectError::InUse;
      in_use_.erase(used);
    }

    auto slot = std::make_shared<Pending>();
    auto [a, b] = local_link_pair();
    slot->watch = {a.in_, b.in_};
    slot->second = std::move(b);
    Link mine = std::move(a);
    pending_[key] = slot;

    auto until = Clock::now() + bound;
    cv_.wait_until(lock, stop, until, [&] { return slot->claimed; });
    if (slot->claimed) return mine;

    if (auto p = pending_.find(key); p != pending_.end() && p->second == slot) pending_.erase(p);
    if (stop.stop_requested()) return ConnectError::Stopped;
    return ConnectError::Timeout;
  }

  // Parks an endpoint under a fresh token so another thread can claim it.
  std::uint64_t register_endpoint(Link link) {
    std::lock_guard lock(mu_);
    auto token = next_token_++;
    parked_.emplace(token, std::move(link));
    return token;
  }

  std::optional<Link> claim(std::uint64_t token) {
    std::lock_guard lock(mu_);
    auto it = parked_.find(token);
    if (it == parked_.end()) return std::nullopt;
    Link link = std::move(it->second);
    parked_.erase(it);
    return link;
  }

  // Records the voter table declared for farm_id. Every live participant of
  // one farm must declare the same table; returns false on a mismatch.
  bool declare_farm(int farm_id, const std::vector<int>& nodes) {
    std::lock_guard lock(mu_);
    auto [it, fresh] = farms_.try_emplace(farm_id, Declaration{nodes, 0});
    if (!fresh && it->second.nodes != nodes) return false;
    ++it->second.refs;
    return true;
  }

  void release_farm(int farm_id) {
    std::lock_guard lock(mu_);
    auto it = farms_.find(farm_id);
    if (it != farms_.end() && --it->second.refs <= 0) farms_.erase(it);
  }

  std::size_t pending_count() const {
    std::lock_guard lock(mu_);
    return pending_.size();
  }

 private:
  using Key = std::tuple<int, int, int>;
  using Watch = std::pair<std::weak_ptr<detail::Inbox>, std::weak_ptr<detail::Inbox>>;

  struct Pending {
    Link second;
    bool claimed = false;
    Watch watch;
  };

  static bool still_open(const Watch& w) {
    for (const auto& weak : {w.first, w.second}) {
      if (auto box = weak.lock()) {
        std::lock_guard lock(box->mu);
        if (!box->reader_closed) return true;
      }
    }
    return false;
  }

  struct Declaration {
    std::vector<int> nodes;
    int refs = 0;
  };

  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::map<int, Declaration> farms_;
  std::map<Key, std::shared_ptr<Pending>> pending_;
  std::map<Key, Watch> in_use_;
  std::unordered_map<std::uint64_t, Link> parked_;
  std::uint64_t next_token_ = 1;
};

}  // namespace vf::transport
