#pragma once

// The voter thread: one per user module. It builds the cliqué, then loops
// over its user pipe and fellow links, broadcasts its own input in ascending
// voter order, votes when all N inputs are in, and reports to the user.

#include <cstring>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "votingfarm/algorithms.hpp"
#include "votingfarm/descriptor.hpp"
#include "votingfarm/protocol.hpp"
#include "votingfarm/transport.hpp"

namespace vf {

struct VoterState {
  std::vector<std::optional<Bytes>> inputs;  // indexed by voter
  int input_nr = 0;
  int input_length = 0;
  int algorithm = static_cast<int>(AlgorithmId::Majority);
  double epsilon = kDefaultEpsilon;
  double scaling_factor = kDefaultScalingFactor;
  std::optional<transport::Link> output_link;
  std::vector<transport::Link> fellow_links;  // indexed by voter; own slot unused
  std::vector<bool> departed;
  VoteResult result;
  bool voted = false;
  // Fellow inputs that arrived for the next round before our RESET did.
  std::vector<std::optional<Bytes>> early;
  bool quit = false;

  explicit VoterState(int n = 0)
      : inputs(static_cast<std::size_t>(n)),
        fellow_links(static_cast<std::size_t>(n)),
        departed(static_cast<std::size_t>(n), false),
        early(static_cast<std::size_t>(n)) {}
};

// Encodes a 64-bit registry token as an OUT_LCB payload.
inline ControlMessage build_output_link_message(std::uint64_t token) {
  Bytes payload(sizeof token);
  for (std::size_t i = 0; i < sizeof token; ++i)
    payload[i] = static_cast<std::byte>((token >> (8 * i)) & 0xFF);
  return ControlMessage{MessageCode::OutLcb, Payload::own(std::move(payload)),
                        static_cast<int>(sizeof token)};
}

inline std::optional<std::uint64_t> decode_output_link_token(ByteView b) {
  if (b.size() != sizeof(std::uint64_t)) return std::nullopt;
  std::uint64_t token = 0;
  for (std::size_t i = 0; i < b.size(); ++i)
    token |= static_cast<std::uint64_t>(std::to_integer<unsigned>(b[i])) << (8 * i);
  return token;
}

class Voter {
 public:
  explicit Voter(FarmDescriptor& farm, std::stop_token stop = {})
      : farm_(farm), stop_(std::move(stop)), n_(farm.n), state_(farm.n) {}

  const VoterState& state() const { return state_; }
  VoterState& state() { return state_; }

  // Thread body. On an error exit the user is told with an ERROR message whose
  // length field carries the code.
  ErrorCode run() {
    ErrorCode status = validate();
    if (status == ErrorCode::None) status = establish_clique();
    if (status == ErrorCode::None) status = event_loop();
    if (status != ErrorCode::None && status != ErrorCode::RecvLink) {
      log_line(LogLevel::Error, "VF_voter", describe_error(status));
      farm_.record(EventKind::Error, -1, std::string(describe_error(status)));
      send_to_user(make_code_message(MessageCode::Error, to_int(status)));
    }
    farm_.last_error = status;
    return status;
  }

  ErrorCode validate() {
    if (farm_.farm_id <= 0 || farm_.n < 1 || farm_.n > kMaxVoters || !farm_.this_voter)
      return raise(ErrorCode::InvalidVf);
    me_ = *farm_.this_voter;
    if (me_ < 0 || me_ >= n_) return raise(ErrorCode::InvalidVf);
    if (farm_.node_stack[static_cast<std::size_t>(me_)] != farm_.config.local_node)
      return raise(ErrorCode::InvalidVf);
    return ErrorCode::None;
  }

  // Connects to every fellow in ascending index order, which lets the pairwise
  // rendezvous complete without a cycle of waits.
  ErrorCode establish_clique() {
    auto& registry = *farm_.config.registry;
    for (int i = 0; i < n_; ++i) {
      if (i == me_) continue;
      int rid = request_id(farm_.farm_id, i, me_);
      auto r = registry.connect(farm_.config.local_node, farm_.node_stack[idx(i)], rid,
                                farm_.config.connect_timeout, stop_);
      if (auto* link = std::get_if<transport::Link>(&r)) {
        state_.fellow_links[idx(i)] = std::move(*link);
        farm_.record(EventKind::Connect, i, "rid " + std::to_string(rid));
      } else {
        log_line(LogLevel::Error, "VF_voter", "Cannot connect to voter " + std::to_string(i));
        return raise(ErrorCode::CantConnect);
      }
    }
    return ErrorCode::None;
  }

  // Option i is fellow i, except option this_voter, which is the user pipe.
  ErrorCode event_loop() {
    std::vector<transport::SelectOption> options;
    std::vector<int> sender;
    while (!state_.quit) {
      options.clear();
      sender.clear();
      for (int i = 0; i < n_; ++i) {
        if (i == me_) {
          options.push_back(transport::SelectOption::receive(farm_.voter_link));
        } else if (!state_.departed[idx(i)]) {
          options.push_back(transport::SelectOption::receive(state_.fellow_links[idx(i)]));
        } else {
          continue;
        }
        sender.push_back(i);
      }
      int k = transport::select(options);
      if (k < 0 || k >= static_cast<int>(sender.size())) {
        log_line(LogLevel::Error, "VF_voter", "Unknown sender");
        return raise(ErrorCode::UnknownSender);
      }
      int from = sender[static_cast<std::size_t>(k)];

      ErrorCode e = ErrorCode::None;
      if (from == me_) {
        auto buf = transport::recv(farm_.voter_link, SIZE_MAX);
        if (!buf) return raise(ErrorCode::RecvLink);  // user module gone
        auto batch = decode_batch(*buf);
        if (!batch) return raise(ErrorCode::RecvLink);
        e = handle_user_batch(*batch);
      } else {
        auto buf = transport::recv(state_.fellow_links[idx(from)], kMaxWireBytes);
        if (!buf) {
          state_.departed[idx(from)] = true;
          farm_.record(EventKind::Departed, from);
          continue;
        }
        auto wire = decode_wire(*buf);
        if (!wire) return raise(ErrorCode::RecvLink);
        e = handle_clique_message(from, *wire);
      }
      if (e != ErrorCode::None) return e;
    }
    return ErrorCode::None;
  }

  ErrorCode handle_user_batch(std::span<const ControlMessage> batch) {
    for (const auto& m : batch) {
      ErrorCode e = ErrorCode::None;
      switch (m.code) {
        case MessageCode::InpMsg:
          e = handle_user_input(m);
          break;
        case MessageCode::SelectAlg:
          state_.algorithm = m.length;
          break;
        case MessageCode::Epsilon:
          if (auto x = decode_double(m.bytes())) state_.epsilon = *x;
          else log_line(LogLevel::Message, "VF_voter", "Malformed epsilon message");
          break;
        case MessageCode::ScalingFactor:
          if (auto x = decode_double(m.bytes())) state_.scaling_factor = *x;
          else log_line(LogLevel::Message, "VF_voter", "Malformed scaling factor message");
          break;
        case MessageCode::OutLcb:
          e = install_output_link(m);
          break;
        case MessageCode::Reset:
          e = reset();
          break;
        case MessageCode::Destroy:
          handle_destroy();
          if (state_.quit) return ErrorCode::None;
          break;
        case MessageCode::Nop:
          break;
        default:
          log_line(LogLevel::Message, "VF_voter",
                   "Unknown message code " + std::to_string(to_int(m.code)));
          break;
      }
      if (e != ErrorCode::None) return e;
    }
    return ErrorCode::None;
  }

  ErrorCode broadcast_input() {
    const auto& own = *state_.inputs[idx(me_)];
    Bytes wire = encode_wire(MessageCode::VInpMsg, own);
    farm_.record(EventKind::Broadcast, me_);
    auto send_to = [&](int i) -> ErrorCode {
      if (state_.departed[idx(i)]) return ErrorCode::None;
      if (transport::send(state_.fellow_links[idx(i)], wire) != static_cast<int>(wire.size())) {
        log_line(LogLevel::Error, "VF_voter", "Cannot SendLink to voter " + std::to_string(i));
        return raise(ErrorCode::SendLink);
      }
      return ErrorCode::None;
    };
    for (int i = me_ + 1; i < n_; ++i)
      if (auto e = send_to(i); e != ErrorCode::None) return e;
    for (int i = 0; i < me_; ++i)
      if (auto e = send_to(i); e != ErrorCode::None) return e;
    return ErrorCode::None;
  }

  // Our turn comes once inputs 0..this_voter-1 and our own are all in.
  ErrorCode maybe_broadcast() {
    if (me_ != state_.input_nr - 1 || !farm_.inp_msg_got || farm_.broadcast_done)
      return ErrorCode::None;
    auto e = broadcast_input();
    farm_.broadcast_done = true;
    return e;
  }

  ErrorCode handle_clique_message(int from, const WireMessage& wire) {
    if (wire.code != MessageCode::VInpMsg) return ErrorCode::None;
    auto& slot = state_.inputs[idx(from)];
    if (slot) {
      // A correct fellow only repeats itself after its own RESET; hold that
      // input for our next round.
      if (!state_.early[idx(from)]) {
        state_.early[idx(from)] = wire.payload;
      } else {
        reject(from);
      }
      return ErrorCode::None;
    }
    int len = static_cast<int>(wire.payload.size());
    if (state_.input_length == 0) {
      state_.input_length = len;
    } else if (state_.input_length != len) {
      log_line(LogLevel::Error, "VF_voter", "Wrong input size");
      return raise(ErrorCode::InputSize);
    }
    slot = wire.payload;
    ++state_.input_nr;
    farm_.record(EventKind::Input, from);
    if (auto e = vote_and_notify(); e != ErrorCode::None) return e;
    return maybe_broadcast();
  }

  ErrorCode vote_and_notify() {
    if (state_.input_nr != n_) return ErrorCode::None;
    if (!is_valid_algorithm(state_.algorithm)) {
      log_line(LogLevel::Error, "VF_voter",
               "Wrong Algorithm number: " + std::to_string(state_.algorithm) + ", not in [0," +
                   std::to_string(kAlgorithmCount) + "[");
      return raise(ErrorCode::WrongAlgId);
    }
    std::vector<Bytes> items;
    items.reserve(static_cast<std::size_t>(n_));
    for (const auto& in : state_.inputs) items.push_back(in.value_or(Bytes{}));
    VoteInputs vin{items, farm_.metric, state_.epsilon, state_.scaling_factor};
    auto r = dispatch(state_.algorithm, vin);
    if (!r) return r.error();
    state_.result = *r;
    state_.voted = true;
    farm_.record(EventKind::Vote, -1, state_.result.success() ? "success" : "failure");

    ControlMessage done{MessageCode::Done, Payload::own(state_.result.vote),
                        to_int_outcome(state_.result.outcome)};
    send_to_user(done);
    farm_.record(EventKind::Done);
    if (state_.output_link) return deliver_outcome();
    return ErrorCode::None;
  }

  ErrorCode deliver_outcome() {
    auto& link = *state_.output_link;
    if (state_.result.success()) {
      const auto& vote = state_.result.vote;
      if (transport::send(link, vote) != static_cast<int>(vote.size()) ||
          static_cast<int>(vote.size()) != state_.input_length) {
        log_line(LogLevel::Error, "VF_voter", "Cannot deliver the output");
        return raise(ErrorCode::Deliver);
      }
    } else {
      const std::byte zero{0};
      if (transport::send(link, ByteView(&zero, 1)) != 1) {
        log_line(LogLevel::Error, "VF_voter", "Cannot deliver the negative result");
        return raise(ErrorCode::Deliver);
      }
    }
    farm_.record(EventKind::Deliver, -1, state_.result.success() ? "success" : "failure");
    return ErrorCode::None;
  }

 private:
  static std::size_t idx(int i) { return static_cast<std::size_t>(i); }
  static int to_int_outcome(Outcome o) { return static_cast<int>(o); }

  void send_to_user(const ControlMessage& m) {
    Bytes buf = encode_batch(std::span<const ControlMessage>(&m, 1));
    if (transport::send(farm_.voter_link, buf) < 0)
      log_line(LogLevel::Debug, "VF_voter", "user module unreachable");
  }

  void reject(int slot) {
    log_line(LogLevel::Message, "VF_voter", describe_error(ErrorCode::BusySlot));
    farm_.record(EventKind::Rejected, slot, std::string(describe_error(ErrorCode::BusySlot)));
  }

  ErrorCode handle_user_input(const ControlMessage& m) {
    int len = static_cast<int>(m.bytes().size());
    if (len < 1 || len > kMaxInputBytes || m.length != len ||
        (state_.input_length != 0 && state_.input_length != len)) {
      log_line(LogLevel::Error, "VF_voter", "Wrong input size");
      return raise(ErrorCode::InputSize);
    }
    auto& slot = state_.inputs[idx(me_)];
    if (slot) {
      reject(me_);
      return ErrorCode::None;
    }
    slot = Bytes(m.bytes().begin(), m.bytes().end());
    state_.input_length = len;
    ++state_.input_nr;
    farm_.record(EventKind::Input, me_);
    if (auto e = vote_and_notify(); e != ErrorCode::None) return e;
    farm_.inp_msg_got = true;
    return maybe_broadcast();
  }

  ErrorCode install_output_link(const ControlMessage& m) {
    auto token = decode_output_link_token(m.bytes());
    std::optional<transport::Link> link;
    if (token) link = farm_.config.registry->claim(*token);
    if (!link) {
      log_line(LogLevel::Message, "VF_voter", "Invalid output link control block - can't deliver.");
      return ErrorCode::None;
    }
    state_.output_link = std::move(*link);
    if (state_.voted && state_.result.success()) return deliver_outcome();
    return ErrorCode::None;
  }

  void handle_destroy() {
    if (!farm_.broadcast_done && n_ != 1) {
      send_to_user(make_code_message(MessageCode::Refused));
      farm_.record(EventKind::Refused);
      return;
    }
    send_to_user(make_code_message(MessageCode::Quit));
    farm_.record(EventKind::Quit);
    state_.quit = true;
  }

  ErrorCode reset() {
    for (auto& in : state_.inputs) in.reset();
    state_.input_nr = 0;
    state_.input_length = 0;
    state_.output_link.reset();
    state_.result = VoteResult{};
    state_.voted = false;
    farm_.inp_msg_got = false;
    farm_.broadcast_done = false;
    farm_.record(EventKind::Reset);
    for (int i = 0; i < n_; ++i) {
      if (auto early = std::move(state_.early[idx(i)])) {
        state_.early[idx(i)].reset();
        auto e = handle_clique_message(i, WireMessage{MessageCode::VInpMsg, std::move(*early)});
        if (e != ErrorCode::None) return e;
      }
    }
    return ErrorCode::None;
  }

  FarmDescriptor& farm_;
  std::stop_token stop_;
  int n_ = 0;
  int me_ = -1;
  VoterState state_;
};

// Entry point of the voter thread.
inline ErrorCode voter_main(FarmDescriptor& farm, std::stop_token stop = {}) {
  Voter voter(farm, std::move(stop));
  return voter.run();
}

}  // namespace vf
