#pragma once

// Desk-scale NMR experiments: scenario configuration, one-shot votes, and
// full farm simulations with fault injection.

#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "votingfarm/algorithms.hpp"
#include "votingfarm/event_log.hpp"
#include "votingfarm/farm.hpp"
#include "votingfarm/protocol.hpp"

namespace vf::scenario {

enum class FaultMode { Corrupt, Silent };

struct Fault {
  FaultMode mode = FaultMode::Corrupt;
  std::string value;  // replacement input for Corrupt
};

struct ScenarioConfig {
  int n = 3;
  AlgorithmId algorithm = AlgorithmId::Majority;
  double epsilon = kDefaultEpsilon;
  double scaling_factor = kDefaultScalingFactor;
  std::vector<std::string> inputs;
  std::map<int, Fault> faults;
  std::chrono::milliseconds timeout{2000};
  std::uint64_t seed = 1;
};

struct UsageError {
  std::string message;
};

// ---------------------------------------------------------------------------
// Values: decimal reals, or 0x-prefixed hex byte strings
// ---------------------------------------------------------------------------

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool is_hex_value(std::string_view s) {
  return s.size() >= 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X');
}

inline std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  std::size_t used = 0;
  try {
    double x = std::stod(buf, &used);
    if (used != buf.size()) return std::nullopt;
    return x;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::optional<Bytes> parse_hex(std::string_view s) {
  s.remove_prefix(2);
  if (s.empty() || s.size() % 2 != 0) return std::nullopt;
  Bytes out;
  for (std::size_t i = 0; i < s.size(); i += 2) {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(s.data() + i, s.data() + i + 2, v, 16);
    if (ec != std::errc{} || p != s.data() + i + 2) return std::nullopt;
    out.push_back(static_cast<std::byte>(v));
  }
  return out;
}

inline std::optional<Bytes> encode_value(std::string_view s) {
  s = trim(s);
  if (is_hex_value(s)) return parse_hex(s);
  if (auto x = parse_real(s)) return encode_double(*x);
  return std::nullopt;
}

inline std::string format_real(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, p);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string format_value(ByteView b, bool as_real) {
  if (as_real) {
    if (auto x = decode_double(b)) return format_real(*x);
  }
  std::ostringstream os;
  os << "0x" << std::hex << std::setfill('0');
  for (auto c : b) os << std::setw(2) << std::to_integer<unsigned>(c);
  return os.str();
}

inline std::optional<AlgorithmId> parse_algorithm(std::string_view s) {
  s = trim(s);
  if (auto id = algorithm_from_name(s)) return id;
  static const std::map<std::string_view, AlgorithmId> aliases = {
      {"exact-consensus", AlgorithmId::ExactConsensus},
      {"weighted", AlgorithmId::WeightedAverage},
      {"weighted-avg", AlgorithmId::WeightedAverage},
  };
  if (auto it = aliases.find(s); it != aliases.end()) return it->second;
  int id = -1;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
  if (ec == std::errc{} && p == s.data() + s.size() && is_valid_algorithm(id))
    return static_cast<AlgorithmId>(id);
  return std::nullopt;
}

// "500ms", "2s", or a bare number of milliseconds.
inline std::optional<std::chrono::milliseconds> parse_duration(std::string_view s) {
  s = trim(s);
  double scale = 1.0;
  if (s.size() > 2 && s.substr(s.size() - 2) == "ms") {
    s.remove_suffix(2);
  } else if (s.size() > 1 && s.back() == 's') {
    s.remove_suffix(1);
    scale = 1000.0;
  }
  auto x = parse_real(s);
  if (!x || *x < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<std::int64_t>(*x * scale));
}

inline std::vector<std::string> split_list(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '[') s.remove_prefix(1);
  if (!s.empty() && s.back() == ']') s.remove_suffix(1);
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ---------------------------------------------------------------------------
// Config file: key = value per line, '#' starts a comment
// ---------------------------------------------------------------------------

inline constexpr std::string_view kConfigGrammar =
    "Scenario file: one 'key = value' per line, '#' starts a comment.\n"
    "  n = 3                      voters, 1..16\n"
    "  algorithm = majority       name or id 0..6\n"
    "  epsilon = 5e-5\n"
    "  scaling_factor = 1.0\n"
    "  inputs = 7, 7, 7           n reals, or 0x-prefixed hex byte strings\n"
    "  fault.2.mode = corrupt     corrupt | silent\n"
    "  fault.2.value = 9.9        replacement input for corrupt\n"
    "  timeout = 2s               per-wait bound; ms, s, or bare milliseconds\n"
    "  seed = 1                   schedule randomization seed\n";

inline std::optional<UsageError> validate(const ScenarioConfig& c) {
  if (c.n < 1 || c.n > kMaxVoters) return UsageError{"n must be in [1,16]"};
  if (static_cast<int>(c.inputs.size()) != c.n)
    return UsageError{"inputs must list exactly n values"};
  std::optional<std::size_t> length;
  bool hex = false;
  auto check = [&](const std::string& v) -> std::optional<UsageError> {
    auto b = encode_value(v);
    if (!b || b->empty() || b->size() > static_cast<std::size_t>(kMaxInputBytes))
      return UsageError{"bad input value '" + v + "'"};
    if (length && *length != b->size()) return UsageError{"inputs differ in size"};
    if (length && hex != is_hex_value(trim(v))) return UsageError{"inputs mix reals and hex"};
    length = b->size();
    hex = is_hex_value(trim(v));
    return std::nullopt;
  };
  for (const auto& v : c.inputs)
    if (auto e = check(v)) return e;
  for (const auto& [i, f] : c.faults) {
    if (i < 0 || i >= c.n) return UsageError{"fault index " + std::to_string(i) + " out of range"};
    if (f.mode == FaultMode::Corrupt)
      if (auto e = check(f.value)) return e;
  }
  return std::nullopt;
}

inline std::variant<ScenarioConfig, UsageError> parse_config(std::istream& in) {
  ScenarioConfig c;
  std::map<int, std::string> modes, values;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    return UsageError{"line " + std::to_string(lineno) + ": " + why};
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string_view::npos) return fail("expected key = value");
    auto key = trim(s.substr(0, eq));
    auto value = trim(s.substr(eq + 1));

    if (key == "n") {
      auto x = parse_real(value);
      if (!x || *x != static_cast<int>(*x)) return fail("n must be an integer");
      c.n = static_cast<int>(*x);
    } else if (key == "algorithm") {
      auto id = parse_algorithm(value);
      if (!id) return fail("unknown algorithm '" + std::string(value) + "'");
      c.algorithm = *id;
    } else if (key == "epsilon") {
      auto x = parse_real(value);
      if (!x) return fail("bad epsilon");
      c.epsilon = *x;
    } else if (key == "scaling_factor") {
      auto x = parse_real(value);
      if (!x) return fail("bad scaling_factor");
      c.scaling_factor = *x;
    } else if (key == "inputs") {
      c.inputs = split_list(value);
    } else if (key == "timeout") {
      auto d = parse_duration(value);
      if (!d) return fail("bad timeout");
      c.timeout = *d;
    } else if (key == "seed") {
      auto x = parse_real(value);
      if (!x || *x < 0) return fail("bad seed");
      c.seed = static_cast<std::uint64_t>(*x);
    } else if (key.substr(0, 6) == "fault.") {
      auto rest = key.substr(6);
      auto dot = rest.find('.');
      int idx = -1;
      if (dot == std::string_view::npos ||
          std::from_chars(rest.data(), rest.data() + dot, idx).ptr != rest.data() + dot)
        return fail("bad fault key '" + std::string(key) + "'");
      auto field = rest.substr(dot + 1);
      if (field == "mode") modes[idx] = std::string(value);
      else if (field == "value") values[idx] = std::string(value);
      else return fail("bad fault key '" + std::string(key) + "'");
    } else {
      return fail("unknown key '" + std::string(key) + "'");
    }
  }
  for (const auto& [i, mode] : modes) {
    Fault f;
    if (mode == "silent") {
      f.mode = FaultMode::Silent;
    } else if (mode == "corrupt") {
      if (!values.count(i)) return UsageError{"fault." + std::to_string(i) + " needs a value"};
      f.value = values[i];
    } else {
      return UsageError{"fault." + std::to_string(i) + ".mode must be corrupt or silent"};
    }
    c.faults[i] = f;
  }
  for (const auto& [i, v] : values)
    if (!modes.count(i)) return UsageError{"fault." + std::to_string(i) + " has a value but no mode"};
  if (auto e = validate(c)) return *e;
  return c;
}

inline std::variant<ScenarioConfig, UsageError> parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// One-shot vote
// ---------------------------------------------------------------------------

struct Report {
  int exit_code = 0;  // 0 success, 1 failure, 2 usage error
  std::string text;
};

inline Report cmd_vote(AlgorithmId algorithm, const std::vector<std::string>& values, double epsilon,
                       double scaling_factor) {
  if (values.empty()) return {2, "error: no values to vote on\n"};
  std::vector<Bytes> items;
  bool hex = is_hex_value(trim(values.front()));
  for (const auto& v : values) {
    auto b = encode_value(v);
    if (!b || b->empty() || is_hex_value(trim(v)) != hex)
      return {2, "error: bad value '" + v + "'\n"};
    items.push_back(std::move(*b));
  }
  Metric metric = hex ? Metric(byte_distance) : Metric(absolute_difference);
  auto r = dispatch(algorithm, VoteInputs{items, metric, epsilon, scaling_factor});
  if (!r) return {2, "error: " + std::string(describe_error(r.error())) + "\n"};
  if (!r->success()) return {1, "FAILURE\n"};
  return {0, "SUCCESS " + format_value(r->vote, !hex) + "\n"};
}

// ---------------------------------------------------------------------------
// Farm simulation
// ---------------------------------------------------------------------------

struct VoterReport {
  int voter = 0;
  bool silent = false;
  bool done = false;
  ErrorCode error = ErrorCode::None;  // set when vf_get or the setup failed
  VoteResult result;
  MessageCode close_reply = MessageCode::Nop;
};

struct SimulationReport {
  std::vector<VoterReport> voters;
  std::shared_ptr<EventLog> log;
  bool as_real = true;

  // True when every non-silent voter reported the same successful vote.
  bool agreed() const {
    const VoteResult* first = nullptr;
    for (const auto& v : voters) {
      if (v.silent) continue;
      if (!v.done || !v.result.success()) return false;
      if (first && !(*first == v.result)) return false;
      first = &v.result;
    }
    return first != nullptr;
  }

  int exit_code() const { return agreed() ? 0 : 1; }
};

struct SimulationOptions {
  int farm_id = 1;
  // Upper bound of the random pause each user module takes before its input.
  std::chrono::microseconds max_jitter{2000};
};

inline SimulationReport run_simulation(const ScenarioConfig& cfg, SimulationOptions opt = {}) {
  SimulationReport report;
  report.log = std::make_shared<EventLog>();
  report.as_real = cfg.inputs.empty() || !is_hex_value(trim(cfg.inputs.front()));
  report.voters.resize(static_cast<std::size_t>(cfg.n));

  auto registry = std::make_shared<transport::Registry>();
  Metric metric = report.as_real ? Metric(absolute_difference) : Metric(byte_distance);
  std::vector<FarmHandle> farms(static_cast<std::size_t>(cfg.n));
  std::vector<std::thread> users;

  for (int i = 0; i < cfg.n; ++i) {
    users.emplace_back([&, i] {
      auto& rep = report.voters[static_cast<std::size_t>(i)];
      rep.voter = i;
      std::mt19937_64 rng(cfg.seed * 1000003u + static_cast<std::uint64_t>(i));
      std::uniform_int_distribution<std::int64_t> jitter(0, opt.max_jitter.count());

      FarmConfig fc;
      fc.local_node = i + 1;
      fc.registry = registry;
      fc.event_timeout = cfg.timeout;
      fc.connect_timeout = cfg.timeout;
      fc.log = report.log;
      auto farm = vf_open(opt.farm_id, metric, fc);
      if (!farm) {
        rep.error = last_error();
        return;
      }
      for (int k = 0; k < cfg.n; ++k) vf_add(farm, k + 1, k);
      std::this_thread::sleep_for(std::chrono::microseconds(jitter(rng)));
      if (auto e = vf_run(farm); e != ErrorCode::None) {
        rep.error = e;
        farms[static_cast<std::size_t>(i)] = std::move(farm);
        return;
      }

      std::string value = cfg.inputs[static_cast<std::size_t>(i)];
      auto fault = cfg.faults.find(i);
      if (fault != cfg.faults.end()) {
        if (fault->second.mode == FaultMode::Silent) rep.silent = true;
        else value = fault->second.value;
      }
      Bytes input = encode_value(value).value_or(Bytes{});

      std::vector<ControlMessage> batch = {
          build_algorithm_message(cfg.algorithm),
          build_epsilon_message(cfg.epsilon),
          build_scaling_factor_message(cfg.scaling_factor),
      };
      std::this_thread::sleep_for(std::chrono::microseconds(jitter(rng)));
      if (!rep.silent) {
        auto m = build_input_message(input);
        if (m) batch.push_back(*m);
      }
      if (auto e = vf_control_list(farm, batch); e != ErrorCode::None) {
        rep.error = e;
      } else {
        auto reply = vf_get(farm);
        if (reply.code == MessageCode::Done) {
          rep.done = true;
          rep.result = VoteResult{static_cast<Outcome>(reply.length),
                                  Bytes(reply.bytes().begin(), reply.bytes().end())};
        } else if (reply.code == MessageCode::Error) {
          rep.error = static_cast<ErrorCode>(reply.length);
        }
      }
      farms[static_cast<std::size_t>(i)] = std::move(farm);
    });
  }
  for (auto& t : users) t.join();

  // Close every farm only after all users have their answer, so no voter
  // leaves while a fellow still needs it.
  for (std::size_t i = 0; i < farms.size(); ++i) {
    if (!farms[i] || farms[i]->user_thread == Activation::Unset) continue;
    if (vf_close(farms[i]) == ErrorCode::None) {
      auto reply = vf_get(farms[i]);
      report.voters[i].close_reply = reply.code;
    }
  }
  farms.clear();
  return report;
}

inline std::string format_report(const SimulationReport& r, bool trace) {
  std::ostringstream os;
  os << std::left << std::setw(7) << "voter" << std::setw(10) << "status" << std::setw(9)
     << "outcome"
     << "value\n";
  for (const auto& v : r.voters) {
    std::string status = v.done ? "DONE" : v.error == ErrorCode::EventTimeout ? "timeout" : "error";
    std::string outcome = v.done ? (v.result.success() ? "SUCCESS" : "FAILURE") : "-";
    std::string value = v.done && v.result.success() ? format_value(v.result.vote, r.as_real) : "-";
    os << std::setw(7) << v.voter << std::setw(10) << status << std::setw(9) << outcome << value;
    if (v.silent) os << "  (silent)";
    if (!v.done && v.error != ErrorCode::None && v.error != ErrorCode::EventTimeout)
      os << "  " << describe_error(v.error);
    os << '\n';
  }
  os << (r.agreed() ? "agreement: all active voters report the same value\n"
                    : "agreement: NOT reached\n");
  if (trace) {
    os << "\nevent log:\n";
    r.log->print(os);
  }
  return os.str();
}

inline Report cmd_simulate(const ScenarioConfig& cfg, bool trace = false) {
  auto r = run_simulation(cfg);
  return {r.exit_code(), format_report(r, trace)};
}

}  // namespace vf::scenario
