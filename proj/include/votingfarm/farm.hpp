#pragma once

// User-module API: open, describe, activate, control, read and close a farm.

#include <algorithm>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include "votingfarm/descriptor.hpp"
#include "votingfarm/protocol.hpp"
#include "votingfarm/transport.hpp"
#include "votingfarm/voter.hpp"

namespace vf {

using FarmHandle = std::unique_ptr<FarmDescriptor>;

// Returns nullptr on failure; last_error() then holds the reason.
inline FarmHandle vf_open(int farm_id, Metric metric, FarmConfig config = {}) {
  if (farm_id <= 0) {
    log_line(LogLevel::Error, "VF_open",
             "Illegal VotingFarm Identifier (" + std::to_string(farm_id) +
                 ") --- should be greater than 0");
    raise(ErrorCode::WrongVfId);
    return nullptr;
  }
  if (!metric) {
    log_line(LogLevel::Error, "VF_open", "Invalid Metric Function (NULL)");
    raise(ErrorCode::WrongDistance);
    return nullptr;
  }
  if (!detail::reserve_farm_slot()) {
    log_line(LogLevel::Error, "VF_open", "Too many farms");
    raise(ErrorCode::TooMany);
    return nullptr;
  }
  try {
    auto farm = std::make_unique<FarmDescriptor>(farm_id, std::move(metric), std::move(config));
    raise(ErrorCode::None);
    return farm;
  } catch (const std::bad_alloc&) {
    detail::open_farm_count().fetch_sub(1);
    raise(ErrorCode::CantAlloc);
    return nullptr;
  }
}

namespace detail {

inline ErrorCode check_defined(FarmDescriptor* farm, std::string_view fn) {
  if (farm == nullptr) {
    log_line(LogLevel::Error, fn, "Undefined VotingFarm (A VF_open is probably needed.)");
    return raise(ErrorCode::UndefinedVf);
  }
  if (farm->farm_id <= 0 || farm->n < 0 || farm->n > kMaxVoters)
    return farm->fail(ErrorCode::InvalidVf);
  return ErrorCode::None;
}

inline ErrorCode check_described(FarmDescriptor& farm, std::string_view fn) {
  if (farm.n == 0) {
    log_line(LogLevel::Error, fn,
             "Undescribed VotingFarm (You probably need to execute a VF_add statement.)");
    return farm.fail(ErrorCode::Undescribed);
  }
  return ErrorCode::None;
}

inline ErrorCode check_active(FarmDescriptor& farm, std::string_view fn) {
  if (farm.user_thread == Activation::Unset) {
    log_line(LogLevel::Error, fn,
             "Inactive VotingFarm (You probably need to execute a VF_run statement.)");
    return farm.fail(ErrorCode::Inactive);
  }
  return ErrorCode::None;
}

}  // namespace detail

// Describes one voter as (node, ident). The entry on the local node becomes
// this farm's local voter.
inline ErrorCode vf_add(FarmDescriptor* farm, int node, int ident) {
  if (auto e = detail::check_defined(farm, "VF_add"); e != ErrorCode::None) return e;
  if (farm->user_thread != Activation::Unset) return farm->fail(ErrorCode::InvalidVf);
  if (farm->n >= kMaxVoters) {
    log_line(LogLevel::Error, "VF_add", "Stack Overflow (Increase the value of VF_MAX_NTS)");
    return farm->fail(ErrorCode::Overflow);
  }
  if (node == farm->config.local_node) {
    if (farm->this_voter) {
      log_line(LogLevel::Error, "VF_add", "There must be only one local voter");
      return farm->fail(ErrorCode::TooManyLocalVoters);
    }
    farm->this_voter = farm->n;
  }
  auto top = static_cast<std::size_t>(farm->n);
  farm->node_stack[top] = node;
  farm->ident_stack[top] = ident;
  ++farm->n;
  return ErrorCode::None;
}

// Spawns the local voter.
inline ErrorCode vf_run(FarmDescriptor* farm) {
  if (auto e = detail::check_defined(farm, "VF_run"); e != ErrorCode::None) return e;
  if (auto e = detail::check_described(*farm, "VF_run"); e != ErrorCode::None) return e;
  if (!farm->this_voter) {
    log_line(LogLevel::Error, "VF_run", "No voter has been defined to be local");
    return farm->fail(ErrorCode::NoLocalVoter);
  }
  if (farm->user_thread != Activation::Unset) return farm->fail(ErrorCode::CantSpawn);

  if (!farm->declared) {
    std::vector<int> nodes(farm->node_stack.begin(), farm->node_stack.begin() + farm->n);
    if (!farm->config.registry->declare_farm(farm->farm_id, nodes)) {
      log_line(LogLevel::Error, "VF_run", "Farm description differs from its fellows'");
      return farm->fail(ErrorCode::InvalidVf);
    }
    farm->declared = true;
  }

  farm->user_thread = Activation::Running;
  try {
    farm->voter_thread = std::jthread([farm](std::stop_token stop) {
      farm->voter_status = voter_main(*farm, std::move(stop));
      farm->user_thread = Activation::Terminated;
    });
  } catch (const std::system_error&) {
    farm->user_thread = Activation::Unset;
    return farm->fail(ErrorCode::CantSpawn);
  }
  return ErrorCode::None;
}

// Sends 1..10 messages to the local voter as one batch.
inline ErrorCode vf_control_list(FarmDescriptor* farm, std::span<const ControlMessage> msgs) {
  if (auto e = detail::check_defined(farm, "VF_control_list"); e != ErrorCode::None) return e;
  if (auto e = detail::check_described(*farm, "VF_control_list"); e != ErrorCode::None) return e;
  if (auto e = detail::check_active(*farm, "VF_control_list"); e != ErrorCode::None) return e;
  if (msgs.empty() || msgs.size() > static_cast<std::size_t>(kMaxMsgsPerBatch)) {
    log_line(LogLevel::Error, "VF_control_list",
             "Wrong number of messages (" + std::to_string(msgs.size()) +
                 ") --- should be between 1 and " + std::to_string(kMaxMsgsPerBatch));
    return farm->fail(ErrorCode::WrongMsgNb);
  }
  if (!farm->user_link) return farm->fail(ErrorCode::InvalidVf);
  Bytes buf = encode_batch(msgs);
  if (transport::send(farm->user_link, buf) != static_cast<int>(buf.size()))
    return farm->fail(ErrorCode::SendLink);
  return ErrorCode::None;
}

inline ErrorCode vf_control(FarmDescriptor* farm, const ControlMessage& msg) {
  return vf_control_list(farm, std::span<const ControlMessage>(&msg, 1));
}

namespace detail {

// Keeps at most the first 31 messages.
inline std::span<const ControlMessage> clamp_send_args(std::span<const ControlMessage> msgs) {
  return msgs.first(std::min(msgs.size(), static_cast<std::size_t>(kMaxSendArgs)));
}

}  // namespace detail

inline ErrorCode vf_send(FarmDescriptor* farm, std::span<const ControlMessage> msgs) {
  auto kept = detail::clamp_send_args(msgs);
  std::vector<ControlMessage> batch(kept.begin(), kept.end());
  return vf_control_list(farm, batch);
}

inline ErrorCode vf_send(FarmDescriptor* farm, std::initializer_list<ControlMessage> msgs) {
  return vf_send(farm, std::span<const ControlMessage>(msgs.begin(), msgs.size()));
}

// Waits up to the event timeout for the next voter report. Failures come back
// as an ERROR message carrying the code in its length field.
inline ControlMessage vf_get(FarmDescriptor* farm) {
  auto error_message = [&](ErrorCode e) {
    if (farm) farm->fail(e);
    else raise(e);
    return make_code_message(MessageCode::Error, to_int(e));
  };
  if (auto e = detail::check_defined(farm, "VF_get"); e != ErrorCode::None) return error_message(e);
  if (auto e = detail::check_active(*farm, "VF_get"); e != ErrorCode::None) return error_message(e);

  const transport::SelectOption options[] = {
      transport::SelectOption::receive(farm->user_link),
      transport::SelectOption::timeout(farm->config.event_timeout),
  };
  switch (transport::select(options)) {
    case 0: {
      auto buf = transport::recv(farm->user_link, SIZE_MAX);
      if (!buf) return error_message(ErrorCode::RecvLink);
      auto batch = decode_batch(*buf);
      if (!batch) return error_message(ErrorCode::RecvLink);
      return std::move(batch->front());
    }
    case 1:
      log_line(LogLevel::Message, "VF_get", "Timeout condition reached");
      return error_message(ErrorCode::EventTimeout);
    default:
      return error_message(ErrorCode::Select);
  }
}

// Asks the voter to shut down; it answers QUIT, or REFUSED while its round is
// still short of its own broadcast.
inline ErrorCode vf_close(FarmDescriptor* farm) {
  return vf_control(farm, make_code_message(MessageCode::Destroy));
}

inline ErrorCode vf_add(const FarmHandle& farm, int node, int ident) { return vf_add(farm.get(), node, ident); }
inline ErrorCode vf_run(const FarmHandle& farm) { return vf_run(farm.get()); }
inline ErrorCode vf_control_list(const FarmHandle& farm, std::span<const ControlMessage> msgs) {
  return vf_control_list(farm.get(), msgs);
}
inline ErrorCode vf_control(const FarmHandle& farm, const ControlMessage& msg) {
  return vf_control(farm.get(), msg);
}
inline ErrorCode vf_send(const FarmHandle& farm, std::initializer_list<ControlMessage> msgs) {
  return vf_send(farm.get(), msgs);
}
inline ControlMessage vf_get(const FarmHandle& farm) { return vf_get(farm.get()); }
inline ErrorCode vf_close(const FarmHandle& farm) { return vf_close(farm.get()); }

}  // namespace vf
