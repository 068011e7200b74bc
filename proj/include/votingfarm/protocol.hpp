#pragma once

// Shared constants, message and error codes, and the message/result value
// types exchanged between a user module, its local voter, and the farm.

#include <array>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <iostream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace vf {

using Bytes = std::vector<std::byte>;
using ByteView = std::span<const std::byte>;

// ---------------------------------------------------------------------------
// Limits
// ---------------------------------------------------------------------------

inline constexpr int kMaxVoters = 16;            // size of the voter stacks
inline constexpr int kMaxFarms = 64;             // simultaneously open farms
inline constexpr int kMaxInputBytes = 512;       // largest input message
inline constexpr int kMaxMsgsPerBatch = 10;      // control batch size
inline constexpr int kMaxSendArgs = 31;          // vf_send clamp
inline constexpr double kDefaultEpsilon = 5e-5;
inline constexpr double kDefaultScalingFactor = 1.0;
inline constexpr std::chrono::milliseconds kDefaultEventTimeout{10'000};
inline constexpr int kRequestIdBase = kMaxVoters * kMaxVoters;

// ---------------------------------------------------------------------------
// Message codes
// ---------------------------------------------------------------------------

enum class MessageCode : std::int32_t {
  // user <-> local voter
  InpMsg = 100,
  OutLcb = 101,
  SelectAlg = 102,
  Destroy = 103,
  Nop = 104,
  Reset = 105,
  Refused = 106,
  Quit = 107,
  Done = 108,
  Epsilon = 109,
  Error = 110,
  ScalingFactor = 111,
  // voter <-> voter
  VInpMsg = 200,
  VDestroy = 203,
  VNop = 204,
  VReset = 205,
  VError = 210,
};

inline constexpr std::array<MessageCode, 12> kUserCodes = {
    MessageCode::InpMsg,  MessageCode::OutLcb, MessageCode::SelectAlg, MessageCode::Destroy,
    MessageCode::Nop,     MessageCode::Reset,  MessageCode::Refused,   MessageCode::Quit,
    MessageCode::Done,    MessageCode::Epsilon, MessageCode::Error,    MessageCode::ScalingFactor,
};

inline constexpr std::array<MessageCode, 5> kVoterCodes = {
    MessageCode::VInpMsg, MessageCode::VDestroy, MessageCode::VNop, MessageCode::VReset,
    MessageCode::VError,
};

constexpr std::int32_t to_int(MessageCode c) { return static_cast<std::int32_t>(c); }

inline std::optional<std::string_view> code_name(MessageCode c) {
  switch (c) {
    case MessageCode::InpMsg: return "VF_INP_MSG";
    case MessageCode::OutLcb: return "VF_OUT_LCB";
    case MessageCode::SelectAlg: return "VF_SELECT_ALG";
    case MessageCode::Destroy: return "VF_DESTROY";
    case MessageCode::Nop: return "VF_NOP";
    case MessageCode::Reset: return "VF_RESET";
    case MessageCode::Refused: return "VF_REFUSED";
    case MessageCode::Quit: return "VF_QUIT";
    case MessageCode::Done: return "VF_DONE";
    case MessageCode::Epsilon: return "VF_EPSILON";
    case MessageCode::Error: return "VF_ERROR";
    case MessageCode::ScalingFactor: return "VF_SCALING_FACTOR";
    case MessageCode::VInpMsg: return "VF_V_INP_MSG";
    case MessageCode::VDestroy: return "VF_V_DESTROY";
    case MessageCode::VNop: return "VF_V_NOP";
    case MessageCode::VReset: return "VF_V_RESET";
    case MessageCode::VError: return "VF_V_ERROR";
  }
  return std::nullopt;
}

inline std::optional<MessageCode> code_from_name(std::string_view name) {
  for (auto c : kUserCodes)
    if (code_name(c) == name) return c;
  for (auto c : kVoterCodes)
    if (code_name(c) == name) return c;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Error codes
// ---------------------------------------------------------------------------

enum class ErrorCode : int {
  None = 0,
  Overflow = -1,
  CantAlloc = -2,
  UndefinedVf = -3,
  WrongNode = -4,
  GetGlobId = -5,
  CantSpawn = -6,
  CantConnect = -7,
  RecvLink = -8,
  Broadcast = -9,
  Deliver = -10,
  BusySlot = -11,
  WrongVfId = -12,
  WrongDistance = -13,
  InvalidVf = -14,
  NoLocalVoter = -15,
  TooManyLocalVoters = -16,
  WrongMsgNb = -17,
  SendLink = -18,
  InputSize = -19,
  Undescribed = -20,
  Inactive = -21,
  UnknownSender = -22,
  EventTimeout = -23,
  Select = -24,
  WrongAlgId = -25,
  NullPtr = -26,
  TooMany = -27,
};

// Number of errors plus one ("no error").
inline constexpr int kErrorTableSize = 28;

constexpr int to_int(ErrorCode e) { return static_cast<int>(e); }

inline constexpr std::array<std::string_view, kErrorTableSize> kErrorDescriptions = {
    "no error",
    "An internal stack has reached its upper limit",
    "The system was not able to execute allocation",
    "This operation requires a defined voting farm",
    "A wrong node has been specified",
    "The system was not able to get the global id",
    "The system was not able to execute CreateThread",
    "The system was not able to execute ConnectLink",
    "The system was not able to execute RecvLink",
    "The system was not able to perform broadcasting",
    "Invalid output (LinkCB_t*) - can't deliver",
    "Duplicated input message",
    "Invalid voting farm id",
    "Invalid metric function pointer",
    "Inconsistent voting farm object",
    "No local voters---one voter has to be specified",
    "More than one local voter has been specified",
    "A wrong number of messages has been specified",
    "The system was not able to execute SendLink",
    "Inconsistency in the size of the input message",
    "This operation requires a described voting farm",
    "This operation requires an active voting farm",
    "Inconsistency - sender unknown",
    "Time-out reached during a Select()",
    "A Select() returned an index out of range",
    "Algorithm Id out of range",
    "NULL in a call-by-reference pointer",
    "Maximun number of opened voting farms exceeded",
};

inline constexpr std::string_view kUnknownError = "unknown error";

inline std::string_view describe_error(int code) {
  if (code > 0 || code <= -kErrorTableSize) return kUnknownError;
  return kErrorDescriptions[static_cast<std::size_t>(-code)];
}

inline std::string_view describe_error(ErrorCode code) { return describe_error(to_int(code)); }

// Last error raised on the calling thread. Farm-bound errors are also kept in
// the farm's own cell (see FarmDescriptor::last_error).
inline ErrorCode& thread_last_error() {
  thread_local ErrorCode err = ErrorCode::None;
  return err;
}

inline ErrorCode last_error() { return thread_last_error(); }

inline ErrorCode raise(ErrorCode e) {
  thread_last_error() = e;
  return e;
}

// Small value-or-error carrier; the toolchain predates std::expected.
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Result(ErrorCode e) : v_(e) {}             // NOLINT(google-explicit-constructor)

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& { return std::get<T>(v_); }
  T& value() & { return std::get<T>(v_); }
  T&& value() && { return std::get<T>(std::move(v_)); }
  const T& operator*() const& { return value(); }
  const T* operator->() const { return &value(); }

  ErrorCode error() const { return ok() ? ErrorCode::None : std::get<ErrorCode>(v_); }

 private:
  std::variant<T, ErrorCode> v_;
};

// ---------------------------------------------------------------------------
// Algorithm ids, outcome flags, server phases
// ---------------------------------------------------------------------------

enum class AlgorithmId : int {
  ExactConsensus = 0,
  Majority = 1,
  Median = 2,
  Plurality = 3,
  WeightedAverage = 4,
  SimpleMajority = 5,
  SimpleAverage = 6,
};

inline constexpr int kAlgorithmCount = 7;

constexpr bool is_valid_algorithm(int id) { return id >= 0 && id < kAlgorithmCount; }

inline constexpr std::array<std::string_view, kAlgorithmCount> kAlgorithmNames = {
    "exact", "majority", "median", "plurality", "weighted-average", "simple-majority",
    "simple-average",
};

inline std::optional<AlgorithmId> algorithm_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kAlgorithmNames.size(); ++i)
    if (kAlgorithmNames[i] == name) return static_cast<AlgorithmId>(i);
  return std::nullopt;
}

inline std::string_view algorithm_name(AlgorithmId id) {
  int i = static_cast<int>(id);
  return is_valid_algorithm(i) ? kAlgorithmNames[static_cast<std::size_t>(i)] : "invalid";
}

enum class Outcome : int { Failure = 0, Success = 1 };

// Phase codes reported to a supervising server. Kept for table fidelity only.
enum class Phase : int {
  Initialising = 0,
  Connecting = 1,
  Broadcasting = 2,
  Voting = 3,
  Waiting = 4,
  Failed = 5,
  Quitting = 6,
};

// ---------------------------------------------------------------------------
// Real encoding: IEEE-754 binary64, little-endian
// ---------------------------------------------------------------------------

inline Bytes encode_double(double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  Bytes out(sizeof bits);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xffU);
  return out;
}

inline std::optional<double> decode_double(ByteView b) {
  if (b.size() != sizeof(double)) return std::nullopt;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < b.size(); ++i)
    bits |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(b[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void put_i32(Bytes& out, std::int32_t v) {
  auto u = static_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((u >> (8 * i)) & 0xffU));
}

inline std::int32_t get_i32(ByteView b) {
  std::uint32_t u = 0;
  for (std::size_t i = 0; i < 4; ++i)
    u |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(b[i])) << (8 * i);
  return static_cast<std::int32_t>(u);
}

// ---------------------------------------------------------------------------
// ControlMessage: (code, payload, length)
// ---------------------------------------------------------------------------

// A control message either references caller-owned bytes (the user->voter
// direction never copies) or owns them (built-in encodings, voter replies).
class Payload {
 public:
  Payload() = default;
  static Payload view(ByteView bytes) { return Payload(bytes); }
  static Payload own(Bytes bytes) { return Payload(std::move(bytes)); }

  ByteView bytes() const {
    if (const auto* v = std::get_if<ByteView>(&data_)) return *v;
    return std::get<Bytes>(data_);
  }
  bool is_view() const { return std::holds_alternative<ByteView>(data_); }
  std::size_t size() const { return bytes().size(); }
  bool empty() const { return bytes().empty(); }

 private:
  explicit Payload(ByteView v) : data_(v) {}
  explicit Payload(Bytes b) : data_(std::move(b)) {}
  std::variant<ByteView, Bytes> data_{ByteView{}};
};

struct ControlMessage {
  MessageCode code = MessageCode::Nop;
  Payload payload;
  int length = 0;

  ByteView bytes() const { return payload.bytes(); }
};

inline Result<ControlMessage> build_input_message(const std::byte* data, int size) {
  if (data == nullptr) return raise(ErrorCode::NullPtr);
  if (size < 1 || size > kMaxInputBytes) return raise(ErrorCode::InputSize);
  return ControlMessage{MessageCode::InpMsg,
                        Payload::view(ByteView(data, static_cast<std::size_t>(size))), size};
}

inline Result<ControlMessage> build_input_message(ByteView payload) {
  return build_input_message(payload.data(), static_cast<int>(payload.size()));
}

inline ControlMessage build_scaling_factor_message(double sf) {
  return ControlMessage{MessageCode::ScalingFactor, Payload::own(encode_double(sf)),
                        static_cast<int>(sizeof(double))};
}

inline ControlMessage build_epsilon_message(double eps) {
  return ControlMessage{MessageCode::Epsilon, Payload::own(encode_double(eps)),
                        static_cast<int>(sizeof(double))};
}

// The id travels in the length field; it is validated only at vote time.
inline ControlMessage build_algorithm_message(int alg) {
  return ControlMessage{MessageCode::SelectAlg, Payload{}, alg};
}

inline ControlMessage build_algorithm_message(AlgorithmId alg) {
  return build_algorithm_message(static_cast<int>(alg));
}

inline ControlMessage make_code_message(MessageCode code, int length = 0) {
  return ControlMessage{code, Payload{}, length};
}

// Batch framing on the user pipe, per message:
//   i32 code | i32 length | u32 payload size | payload bytes   (little-endian)
inline Bytes encode_batch(std::span<const ControlMessage> msgs) {
  Bytes out;
  for (const auto& m : msgs) {
    put_i32(out, to_int(m.code));
    put_i32(out, m.length);
    auto p = m.bytes();
    put_i32(out, static_cast<std::int32_t>(p.size()));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

// Returns nullopt unless the buffer is an exact concatenation of messages.
inline std::optional<std::vector<ControlMessage>> decode_batch(ByteView buf) {
  std::vector<ControlMessage> msgs;
  std::size_t pos = 0;
  while (pos < buf.size()) {
    if (buf.size() - pos < 12) return std::nullopt;
    auto code = get_i32(buf.subspan(pos, 4));
    auto length = get_i32(buf.subspan(pos + 4, 4));
    auto size = static_cast<std::uint32_t>(get_i32(buf.subspan(pos + 8, 4)));
    pos += 12;
    if (buf.size() - pos < size) return std::nullopt;
    auto p = buf.subspan(pos, size);
    msgs.push_back(ControlMessage{static_cast<MessageCode>(code), Payload::own(Bytes(p.begin(), p.end())),
                                  length});
    pos += size;
  }
  if (msgs.empty()) return std::nullopt;
  return msgs;
}

// ---------------------------------------------------------------------------
// WireMessage: voter <-> voter, 4-byte LE signed code followed by payload
// ---------------------------------------------------------------------------

struct WireMessage {
  MessageCode code = MessageCode::VNop;
  Bytes payload;
};

inline constexpr std::size_t kWireHeaderBytes = 4;
inline constexpr std::size_t kMaxWireBytes = kWireHeaderBytes + kMaxInputBytes;

inline Bytes encode_wire(MessageCode code, ByteView payload) {
  Bytes out;
  out.reserve(kWireHeaderBytes + payload.size());
  put_i32(out, to_int(code));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline std::optional<WireMessage> decode_wire(ByteView buf) {
  if (buf.size() < kWireHeaderBytes || buf.size() > kMaxWireBytes) return std::nullopt;
  return WireMessage{static_cast<MessageCode>(get_i32(buf.first(4))),
                     Bytes(buf.begin() + kWireHeaderBytes, buf.end())};
}

// ---------------------------------------------------------------------------
// VoteResult
// ---------------------------------------------------------------------------

// On Failure the vote bytes carry no meaning and stay empty.
struct VoteResult {
  Outcome outcome = Outcome::Failure;
  Bytes vote;

  bool success() const { return outcome == Outcome::Success; }
  friend bool operator==(const VoteResult&, const VoteResult&) = default;
};

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

enum class LogLevel : int { Silent = 0, Error = 1, Message = 2, Debug = 3 };

inline std::atomic<int>& log_level_cell() {
  static std::atomic<int> level{static_cast<int>(LogLevel::Silent)};
  return level;
}

inline void set_log_level(LogLevel level) { log_level_cell() = static_cast<int>(level); }

inline void log_line(LogLevel level, std::string_view fn, std::string_view text) {
  if (static_cast<int>(level) > log_level_cell().load()) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[" << fn << "] " << text << '\n';
}

}  // namespace vf
