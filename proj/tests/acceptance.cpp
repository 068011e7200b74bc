// Acceptance checks, one line per criterion. Exit status is the number of
// failed criteria.

#include <chrono>
#include <cmath>
#include <dirent.h>
#include <exception>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "golden.hpp"
#include "oracles.hpp"
#include "rig.hpp"
#include "votingfarm/scenario.hpp"

using namespace vf;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;
using testing_rig::as_real;
using testing_rig::Rig;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream why;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) why << what;
    ok = ok && cond;
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<Bytes> reals(const std::vector<double>& xs) {
  std::vector<Bytes> out;
  for (double x : xs) out.push_back(encode_double(x));
  return out;
}

int thread_count() {
  int n = 0;
  if (DIR* d = opendir("/proc/self/task")) {
    while (dirent* e = readdir(d))
      if (e->d_name[0] != '.') ++n;
    closedir(d);
  }
  return n;
}

// 1. Seven algorithms against the reference voters.
void oracle_equivalence(Check& c) {
  const double eps = kDefaultEpsilon;
  const int per_algorithm = 1500;
  auto t0 = Clock::now();
  int compared = 0, successes = 0;
  for (int a = 0; a < kAlgorithmCount; ++a) {
    std::mt19937_64 rng(20260 + a);
    for (int t = 0; t < per_algorithm; ++t) {
      auto x = oracle::random_instance(rng, eps);
      auto items = reals(x);
      auto got = dispatch(a, VoteInputs{items, absolute_difference, eps, 1.0});
      std::optional<double> want;
      switch (static_cast<AlgorithmId>(a)) {
        case AlgorithmId::ExactConsensus: want = oracle::exact(x); break;
        case AlgorithmId::Majority: want = oracle::majority(x, eps); break;
        case AlgorithmId::Median: want = oracle::median(x); break;
        case AlgorithmId::Plurality: want = oracle::plurality(x, eps); break;
        case AlgorithmId::WeightedAverage: want = oracle::weighted_average(x, 1.0); break;
        case AlgorithmId::SimpleMajority: want = oracle::simple_majority(x, eps); break;
        case AlgorithmId::SimpleAverage: want = oracle::simple_average(x); break;
      }
      std::string where = " (algorithm " + std::to_string(a) + ", trial " + std::to_string(t) + ")";
      c.expect(got.ok(), "error result" + where);
      if (!got.ok()) return;
      c.expect(got->success() == want.has_value(), "outcome mismatch" + where);
      if (want && got->success()) {
        ++successes;
        if (a == 4 || a == 6) {
          double v = *decode_double(got->vote);
          c.expect(std::fabs(v - *want) <= 1e-9 * std::max(1.0, std::fabs(*want)), "average off" + where);
        } else {
          c.expect(got->vote == encode_double(*want), "vote bytes differ" + where);
        }
      }
      ++compared;
    }
  }
  double s = seconds_since(t0);
  c.expect(s < 10.0, "took " + std::to_string(s) + " s");
  c.why << compared << " instances, " << successes << " successes, " << s << " s";
}

// 2. Worked examples.
void worked_examples(Check& c) {
  auto vote = [](AlgorithmId a, std::vector<double> xs, double eps = kDefaultEpsilon) {
    auto items = reals(xs);
    auto r = dispatch(a, VoteInputs{items, absolute_difference, eps, 1.0});
    return r.ok() && r->success() ? decode_double(r->vote) : std::nullopt;
  };
  c.expect(vote(AlgorithmId::Median, {1, 5, 2, 100}) == 5.0, "median [1,5,2,100] ");
  c.expect(vote(AlgorithmId::Median, {1, 2, 3, 4, 5}) == 3.0, "median [1..5] ");
  c.expect(vote(AlgorithmId::WeightedAverage, {0, 1}) == 0.5, "weighted {0,1} ");
  c.expect(vote(AlgorithmId::SimpleMajority, {1.0, 1.0, 7.0}) == 1.0, "simple majority ");
  if (c.ok) c.why << "median 5.0 and 3.0, weighted 0.5, simple-majority 1.0";
}

// 3. TMR masking end to end.
void tmr_masking(Check& c) {
  scenario::ScenarioConfig cfg;
  cfg.n = 3;
  cfg.algorithm = AlgorithmId::Majority;
  cfg.inputs = {"7", "7", "7"};
  cfg.faults[2] = scenario::Fault{scenario::FaultMode::Corrupt, "9.9"};
  auto t0 = Clock::now();
  auto r = scenario::run_simulation(cfg);
  double s = seconds_since(t0);
  for (const auto& v : r.voters) {
    c.expect(v.done, "voter " + std::to_string(v.voter) + " not DONE ");
    c.expect(v.result.success() && v.result.vote == encode_double(7.0),
             "voter " + std::to_string(v.voter) + " wrong value ");
  }
  c.expect(s < 5.0, "took " + std::to_string(s) + " s");
  if (c.ok) c.why << "3/3 DONE with 7.0 in " << s << " s";
}

// 4. Sixteen voters.
void full_width(Check& c) {
  std::set<int> ids;
  int pairs = 0;
  for (int vfn = 0; vfn < 64; ++vfn)
    for (int v = 0; v < 16; ++v)
      for (int w = v + 1; w < 16; ++w) {
        c.expect(request_id(vfn, v, w) == request_id(vfn, w, v), "asymmetric id ");
        ids.insert(request_id(vfn, v, w));
        ++pairs;
      }
  c.expect(static_cast<int>(ids.size()) == pairs, "request ids collide ");

  Rig rig(16, 4);
  c.expect(rig.run_all(), "vf_run failed ");
  for (int i = 0; i < 16; ++i) rig.input(i, i < 5 ? 2.0 + i : 1.5);
  auto replies = rig.get_all();
  std::set<std::string> rids;
  for (const auto& e : rig.log->of_kind(EventKind::Connect)) rids.insert(e.detail);
  c.expect(rids.size() == 120, std::to_string(rids.size()) + " rendezvous ids ");
  for (const auto& m : replies) {
    c.expect(m.code == MessageCode::Done, "a voter did not reach DONE ");
    c.expect(m.length == replies[0].length && m.bytes().size() == replies[0].bytes().size() &&
                 std::equal(m.bytes().begin(), m.bytes().end(), replies[0].bytes().begin()),
             "outcomes differ ");
  }
  c.expect(as_real(replies[0]) == 1.5, "wrong vote ");
  if (c.ok) c.why << "120 rendezvous ids, " << pairs << " ids injective for vfn < 64, 16/16 DONE";
}

// 5. Ordered broadcast under randomized schedules.
void ordered_broadcast(Check& c) {
  const int sizes[] = {3, 5, 8};
  int runs = 0;
  double worst = 0;
  std::mt19937_64 rng(77);
  for (int k = 0; k < 100 && c.ok; ++k) {
    int n = sizes[k % 3];
    scenario::ScenarioConfig cfg;
    cfg.n = n;
    cfg.seed = static_cast<std::uint64_t>(k + 1);
    cfg.timeout = 5s;
    std::uniform_real_distribution<double> val(-10, 10);
    double good = val(rng);
    for (int i = 0; i < n; ++i) cfg.inputs.push_back(scenario::format_real(i == 0 ? val(rng) : good));
    auto t0 = Clock::now();
    auto r = scenario::run_simulation(cfg);
    double s = seconds_since(t0);
    worst = std::max(worst, s);
    std::vector<int> order;
    for (const auto& e : r.log->of_kind(EventKind::Broadcast)) order.push_back(e.voter);
    bool ascending = static_cast<int>(order.size()) == n;
    for (std::size_t i = 0; ascending && i < order.size(); ++i) ascending = order[i] == static_cast<int>(i);
    std::string tag = " (run " + std::to_string(k) + ", n=" + std::to_string(n) + ")";
    c.expect(ascending, "broadcast order broken" + tag);
    c.expect(r.agreed(), "not every voter reached DONE" + tag);
    c.expect(s < 5.0, "run exceeded 5 s" + tag);
    ++runs;
  }
  if (c.ok) c.why << runs << " runs, broadcasts ascending, no deadlock, slowest " << worst << " s";
}

// 6. Golden protocol tables.
void protocol_tables(Check& c) {
  int codes = 0;
  for (const auto& g : kGoldenUserCodes) {
    auto m = code_from_name(std::string("VF_") + g.name);
    c.expect(m && to_int(*m) == g.value, std::string(g.name) + " ");
    ++codes;
  }
  for (const auto& g : kGoldenVoterCodes) {
    auto m = code_from_name(std::string("VF_") + g.name);
    c.expect(m && to_int(*m) == g.value, std::string(g.name) + " ");
    ++codes;
  }
  c.expect(kUserCodes.size() == 12 && kVoterCodes.size() == 5, "code table sizes ");
  c.expect(std::size(kGoldenErrorStrings) == 28 && kErrorTableSize == 28, "error table size ");
  int strings = 0;
  for (int e = 0; e < kErrorTableSize; ++e, ++strings)
    c.expect(describe_error(-e) == kGoldenErrorStrings[e], "error string " + std::to_string(-e) + " ");
  c.expect(to_int(ErrorCode::Overflow) == -1 && to_int(ErrorCode::TooMany) == -27, "error range ");
  if (c.ok) c.why << "12 + 5 message codes, " << strings << " error strings";
}

// 7. Lifecycle error paths.
void lifecycle_errors(Check& c) {
  auto reg = std::make_shared<transport::Registry>();
  auto config = [&](int node, std::chrono::milliseconds t = 2s) {
    FarmConfig fc;
    fc.local_node = node;
    fc.registry = reg;
    fc.event_timeout = t;
    fc.connect_timeout = t;
    return fc;
  };
  int checked = 0;
  auto code = [&](ErrorCode got, ErrorCode want, const char* what) {
    ++checked;
    c.expect(got == want, std::string(what) + " gave " + std::to_string(to_int(got)) + " ");
    c.expect(describe_error(got) == kGoldenErrorStrings[-to_int(want)], std::string(what) + " text ");
  };

  code(vf_open(0, absolute_difference) ? ErrorCode::None : last_error(), ErrorCode::WrongVfId,
       "WRONG_VFID");

  auto two_local = vf_open(11, absolute_difference, config(1));
  vf_add(two_local, 1, 0);
  code(vf_add(two_local, 1, 1), ErrorCode::TooManyLocalVoters, "TOO_MANY_LVOTERS");

  auto full = vf_open(12, absolute_difference, config(1));
  bool sixteen = true;
  for (int i = 0; i < 16; ++i) sixteen = sixteen && vf_add(full, i + 1, i) == ErrorCode::None;
  c.expect(sixteen, "first 16 adds ");
  code(vf_add(full, 17, 16), ErrorCode::Overflow, "OVERFLOW");

  auto empty = vf_open(13, absolute_difference, config(1));
  code(vf_run(empty), ErrorCode::Undescribed, "UNDESCRIBED");

  auto remote = vf_open(14, absolute_difference, config(1));
  vf_add(remote, 2, 0);
  code(vf_run(remote), ErrorCode::NoLocalVoter, "NO_LVOTER");

  auto idle = vf_open(15, absolute_difference, config(1, 100ms));
  vf_add(idle, 1, 0);
  code(vf_control(idle, make_code_message(MessageCode::Nop)), ErrorCode::Inactive, "INACTIVE");
  vf_run(idle);
  std::vector<ControlMessage> msgs(11, make_code_message(MessageCode::Nop));
  code(vf_control_list(idle, std::span(msgs).first(0)), ErrorCode::WrongMsgNb, "WRONG_MSG_NB(0)");
  code(vf_control_list(idle, msgs), ErrorCode::WrongMsgNb, "WRONG_MSG_NB(11)");
  auto timeout = vf_get(idle);
  code(static_cast<ErrorCode>(timeout.length), ErrorCode::EventTimeout, "EVENT_TIMEOUT");
  c.expect(timeout.code == MessageCode::Error && idle->last_error == ErrorCode::EventTimeout,
           "timeout message ");

  Rig alg(2, 16);
  alg.run_all();
  for (int i = 0; i < 2; ++i) {
    vf_control(alg[i], build_algorithm_message(9));
    alg.input(i, 1.0);
  }
  code(static_cast<ErrorCode>(vf_get(alg[1]).length), ErrorCode::WrongAlgId, "WRONG_ALGID");

  Bytes big(513);
  code(build_input_message(big.data(), 513).error(), ErrorCode::InputSize, "INPUT_SIZE(build)");
  Rig size(2, 17, 300ms);
  size.run_all();
  size.input(0, 1.0);
  size.input(1, Bytes(4));
  code(static_cast<ErrorCode>(vf_get(size[1]).length), ErrorCode::InputSize, "INPUT_SIZE(voter)");
  if (c.ok) c.why << checked << " error paths with matching codes and descriptions";
}

// 8. RESET round trip.
void reset_round_trip(Check& c) {
  Rig rig(3, 18);
  c.expect(rig.run_all(), "vf_run ");
  const double round1[] = {1.0, 1.0, 4.0};
  const double round2[] = {-3.5, 8.0, -3.5};
  for (int i = 0; i < 3; ++i) rig.input(i, round1[i]);
  for (const auto& m : rig.get_all())
    c.expect(m.code == MessageCode::Done && as_real(m) == 1.0, "round 1 ");
  for (int i = 0; i < 3; ++i) vf_control(rig[i], make_code_message(MessageCode::Reset));
  for (int i = 2; i >= 0; --i) rig.input(i, round2[i]);
  for (const auto& m : rig.get_all())
    c.expect(m.code == MessageCode::Done && as_real(m) == -3.5, "round 2 ");
  if (c.ok) c.why << "round 1 -> 1.0, RESET x3, round 2 -> -3.5";
}

// 9. DESTROY semantics.
void destroy_semantics(Check& c) {
  int baseline = thread_count();
  {
    Rig rig(3, 19);
    c.expect(rig.run_all(), "vf_run ");
    vf_close(rig[0]);
    c.expect(vf_get(rig[0]).code == MessageCode::Refused, "early DESTROY not refused ");
    for (int i = 0; i < 3; ++i) rig.input(i, 2.0);
    for (const auto& m : rig.get_all()) c.expect(m.code == MessageCode::Done, "farm unusable after REFUSED ");
    for (const auto& m : rig.close_all()) c.expect(m.code == MessageCode::Quit, "late DESTROY not QUIT ");
    for (int i = 0; i < 3; ++i) {
      c.expect(rig[i]->join_voter() == ErrorCode::None, "voter exit status ");
      c.expect(rig[i]->user_thread == Activation::Terminated, "voter not terminated ");
    }
  }
  int after = thread_count();
  c.expect(after == baseline, "threads " + std::to_string(baseline) + " -> " + std::to_string(after));
  if (c.ok) c.why << "REFUSED then DONE, QUIT x3, thread count back to " << after;
}

// 10. Output delivery.
void delivery(Check& c) {
  auto run = [&](int farm_id, AlgorithmId alg, const double* xs) -> std::optional<Bytes> {
    Rig rig(3, farm_id);
    rig.run_all();
    auto [reader, writer] = transport::local_link_pair();
    auto token = rig.registry->register_endpoint(std::move(writer));
    vf_control(rig[1], build_output_link_message(token));
    for (int i = 0; i < 3; ++i) {
      rig.select(i, alg);
      rig.input(i, xs[i]);
    }
    rig.get_all();
    return transport::recv(reader, 1024);
  };
  const double agree[] = {6.25, 6.25, 1.0};
  auto ok = run(20, AlgorithmId::Majority, agree);
  c.expect(ok && *ok == encode_double(6.25), "SUCCESS delivery ");
  const double differ[] = {1.0, 2.0, 3.0};
  auto bad = run(21, AlgorithmId::ExactConsensus, differ);
  c.expect(bad && *bad == Bytes{std::byte{0}}, "FAILURE delivery ");
  if (c.ok) c.why << "SUCCESS delivered 8 bytes = vote, FAILURE delivered one zero byte";
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    std::function<void(Check&)> run;
  };
  const Criterion criteria[] = {
      {1, "algorithm oracle equivalence", oracle_equivalence},
      {2, "worked examples", worked_examples},
      {3, "end-to-end TMR masking", tmr_masking},
      {4, "full-width clique", full_width},
      {5, "ordered-broadcast invariant", ordered_broadcast},
      {6, "protocol conformance", protocol_tables},
      {7, "lifecycle errors", lifecycle_errors},
      {8, "reset round-trip", reset_round_trip},
      {9, "destroy semantics", destroy_semantics},
      {10, "delivery", delivery},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.why << "exception: " << e.what();
    }
    std::cout << (c.ok ? "PASS" : "FAIL") << "  criterion " << cr.id << ": " << cr.title << " - "
              << c.why.str() << std::endl;
    failed += c.ok ? 0 : 1;
  }
  return failed;
}
