#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <thread>

#include "votingfarm/algorithms.hpp"
#include "votingfarm/event_log.hpp"
#include "votingfarm/protocol.hpp"
#include "votingfarm/transport.hpp"

namespace vf {

enum class Activation { Unset, Running, Terminated };

// Per-farm settings that the original runtime obtained from its environment.
struct FarmConfig {
  // Node this user module (and its local voter) runs on.
  int local_node = 0;
  // Rendezvous registry shared by every farm of one simulated machine.
  std::shared_ptr<transport::Registry> registry;
  // vf_get wait bound.
  std::chrono::milliseconds event_timeout = kDefaultEventTimeout;
  // Bound on each cliqué rendezvous.
  std::chrono::milliseconds connect_timeout = kDefaultEventTimeout;
  std::shared_ptr<EventLog> log;
};

inline const std::shared_ptr<transport::Registry>& default_registry() {
  static const auto registry = std::make_shared<transport::Registry>();
  return registry;
}

// Rendezvous id for the link between voters v and w of farm vfn.
constexpr int request_id(int vfn, int v, int w) {
  int a = v < w ? v : w;
  int b = v < w ? w : v;
  return kRequestIdBase * (vfn + 1) + kMaxVoters * a + b;
}

namespace detail {

inline std::atomic<int>& open_farm_count() {
  static std::atomic<int> count{0};
  return count;
}

inline bool reserve_farm_slot() {
  auto& count = open_farm_count();
  int cur = count.load();
  while (cur < kMaxFarms) {
    if (count.compare_exchange_weak(cur, cur + 1)) return true;
  }
  return false;
}

}  // namespace detail

// The shared picture of one voting farm, as seen by one user module. The user
// thread owns it; after vf_run the voter thread reads the stacks and metric
// and is the only writer of the three flags.
class FarmDescriptor {
 public:
  FarmDescriptor(int farm_id, Metric metric, FarmConfig config)
      : farm_id(farm_id), metric(std::move(metric)), config(std::move(config)) {
    if (!this->config.registry) this->config.registry = default_registry();
    auto [user_side, voter_side] = transport::local_link_pair();
    user_link = std::move(user_side);
    voter_link = std::move(voter_side);
  }

  FarmDescriptor(const FarmDescriptor&) = delete;
  FarmDescriptor& operator=(const FarmDescriptor&) = delete;

  ~FarmDescriptor() {
    // Closing the user side wakes a voter parked in its event loop.
    user_link.close();
    if (voter_thread.joinable()) {
      voter_thread.request_stop();
      voter_thread.join();
    }
    if (declared) config.registry->release_farm(farm_id);
    detail::open_farm_count().fetch_sub(1);
  }

  int farm_id = 0;
  std::array<int, kMaxVoters> node_stack{};
  std::array<int, kMaxVoters> ident_stack{};
  int n = 0;  // stack pointer shared by both stacks
  std::optional<int> this_voter;
  Metric metric;

  std::atomic<bool> broadcast_done{false};
  std::atomic<bool> inp_msg_got{false};
  std::atomic<bool> destroy_requested{false};  // never read
  std::atomic<Activation> user_thread{Activation::Unset};

  transport::Link user_link;   // user module's end of the pipe
  transport::Link voter_link;  // local voter's end of the pipe
  FarmConfig config;

  std::atomic<ErrorCode> last_error{ErrorCode::None};
  std::atomic<ErrorCode> voter_status{ErrorCode::None};
  bool declared = false;  // voter table lodged with the registry
  std::jthread voter_thread;

  ErrorCode fail(ErrorCode e) {
    last_error = e;
    return raise(e);
  }

  void record(EventKind kind, int peer = -1, std::string detail = {}) const {
    if (config.log) config.log->record(farm_id, this_voter.value_or(-1), kind, peer, std::move(detail));
  }

  // Waits for the voter thread to end and returns its exit status.
  ErrorCode join_voter() {
    if (voter_thread.joinable()) voter_thread.join();
    return voter_status.load();
  }
};

}  // namespace vf
