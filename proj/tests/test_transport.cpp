#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "votingfarm/transport.hpp"

using namespace vf;
using namespace vf::transport;
using namespace std::chrono_literals;

namespace {

Bytes bytes_of(std::initializer_list<int> v) {
  Bytes b;
  for (int x : v) b.push_back(static_cast<std::byte>(x));
  return b;
}

}  // namespace

TEST(Link, PairDeliversBothWaysInOrder) {
  auto [a, b] = local_link_pair();
  EXPECT_EQ(send(a, bytes_of({1, 2})), 2);
  EXPECT_EQ(send(a, bytes_of({3})), 1);
  EXPECT_EQ(send(b, bytes_of({9})), 1);
  EXPECT_EQ(recv(b, 16), bytes_of({1, 2}));
  EXPECT_EQ(recv(b, 16), bytes_of({3}));
  EXPECT_EQ(recv(a, 16), bytes_of({9}));
  EXPECT_EQ(a.peer_id(), b.id());
}

TEST(Link, RecvAfterPeerCloseDrainsThenEnds) {
  auto [a, b] = local_link_pair();
  send(a, bytes_of({7}));
  a.close();
  EXPECT_EQ(recv(b, 16), bytes_of({7}));
  EXPECT_FALSE(recv(b, 16).has_value());
  EXPECT_EQ(send(b, bytes_of({1})), -1);
}

TEST(Link, SendOnClosedEndpointFails) {
  auto [a, b] = local_link_pair();
  a.close();
  EXPECT_EQ(send(a, bytes_of({1})), -1);
  EXPECT_FALSE(recv(a, 16).has_value());
}

TEST(Link, OversizeMessageIsRefused) {
  auto [a, b] = local_link_pair();
  send(a, Bytes(10));
  EXPECT_FALSE(recv(b, 4).has_value());
}

TEST(Link, RecvBlocksUntilData) {
  auto [a, b] = local_link_pair();
  auto fut = std::async(std::launch::async, [&b] { return recv(b, 16); });
  std::this_thread::sleep_for(20ms);
  send(a, bytes_of({5}));
  EXPECT_EQ(fut.get(), bytes_of({5}));
}

TEST(Link, MoveTransfersOwnership) {
  auto [a, b] = local_link_pair();
  Link c = std::move(a);
  EXPECT_FALSE(a.is_open());
  EXPECT_EQ(send(c, bytes_of({4})), 1);
  EXPECT_EQ(recv(b, 16), bytes_of({4}));
}

TEST(Select, ReturnsLowestReadyIndex) {
  auto [a1, b1] = local_link_pair();
  auto [a2, b2] = local_link_pair();
  send(a2, bytes_of({2}));
  send(a1, bytes_of({1}));
  SelectOption opts[] = {SelectOption::receive(b1), SelectOption::receive(b2)};
  EXPECT_EQ(select(opts), 0);
  recv(b1, 16);
  EXPECT_EQ(select(opts), 1);
}

TEST(Select, DeadlineFires) {
  auto [a, b] = local_link_pair();
  SelectOption opts[] = {SelectOption::receive(b), SelectOption::timeout(30ms)};
  auto t0 = Clock::now();
  EXPECT_EQ(select(opts), 1);
  EXPECT_GE(Clock::now() - t0, 25ms);
}

TEST(Select, WakesOnLateData) {
  auto [a, b] = local_link_pair();
  std::thread writer([&a] {
    std::this_thread::sleep_for(20ms);
    send(a, bytes_of({1}));
  });
  SelectOption opts[] = {SelectOption::receive(b), SelectOption::timeout(5s)};
  EXPECT_EQ(select(opts), 0);
  writer.join();
}

TEST(Select, PeerCloseCountsAsReady) {
  auto [a, b] = local_link_pair();
  a.close();
  SelectOption opts[] = {SelectOption::receive(b), SelectOption::timeout(5s)};
  EXPECT_EQ(select(opts), 0);
}

TEST(Select, EmptyListIsAnError) { EXPECT_EQ(select({}), -1); }

TEST(Registry, SymmetricRendezvous) {
  Registry reg;
  auto fut = std::async(std::launch::async, [&] { return reg.connect(2, 1, 300, 2s); });
  auto mine = reg.connect(1, 2, 300, 2s);
  auto theirs = fut.get();
  ASSERT_TRUE(std::holds_alternative<Link>(mine));
  ASSERT_TRUE(std::holds_alternative<Link>(theirs));
  auto& x = std::get<Link>(mine);
  auto& y = std::get<Link>(theirs);
  send(x, bytes_of({42}));
  EXPECT_EQ(recv(y, 16), bytes_of({42}));
  EXPECT_EQ(reg.pending_count(), 0u);
}

TEST(Registry, DistinctRequestIdsDoNotCross) {
  Registry reg;
  auto f1 = std::async(std::launch::async, [&] { return reg.connect(1, 2, 257, 2s); });
  auto f2 = std::async(std::launch::async, [&] { return reg.connect(1, 2, 258, 2s); });
  auto b2 = reg.connect(2, 1, 258, 2s);
  auto b1 = reg.connect(2, 1, 257, 2s);
  auto a1 = f1.get();
  auto a2 = f2.get();
  send(std::get<Link>(a1), bytes_of({1}));
  send(std::get<Link>(a2), bytes_of({2}));
  EXPECT_EQ(recv(std::get<Link>(b1), 16), bytes_of({1}));
  EXPECT_EQ(recv(std::get<Link>(b2), 16), bytes_of({2}));
}

TEST(Registry, TimesOutWithoutPeer) {
  Registry reg;
  auto r = reg.connect(1, 2, 300, 30ms);
  ASSERT_TRUE(std::holds_alternative<Registry::ConnectError>(r));
  EXPECT_EQ(std::get<Registry::ConnectError>(r), Registry::ConnectError::Timeout);
  EXPECT_EQ(reg.pending_count(), 0u);
}

TEST(Registry, StopTokenCancelsWait) {
  Registry reg;
  std::stop_source src;
  auto fut = std::async(std::launch::async, [&] { return reg.connect(1, 2, 300, 10s, src.get_token()); });
  std::this_thread::sleep_for(20ms);
  src.request_stop();
  auto r = fut.get();
  ASSERT_TRUE(std::holds_alternative<Registry::ConnectError>(r));
  EXPECT_EQ(std::get<Registry::ConnectError>(r), Registry::ConnectError::Stopped);
}

TEST(Registry, LiveIdCannotBeReused) {
  Registry reg;
  auto fut = std::async(std::launch::async, [&] { return reg.connect(1, 2, 300, 2s); });
  auto b = reg.connect(2, 1, 300, 2s);
  auto a = fut.get();
  auto third = reg.connect(1, 2, 300, 30ms);
  ASSERT_TRUE(std::holds_alternative<Registry::ConnectError>(third));
  EXPECT_EQ(std::get<Registry::ConnectError>(third), Registry::ConnectError::InUse);
}

TEST(Registry, RejectsNonPositiveRequestId) {
  Registry reg;
  auto r = reg.connect(1, 2, 0, 30ms);
  EXPECT_EQ(std::get<Registry::ConnectError>(r), Registry::ConnectError::BadRequest);
}

TEST(Registry, EndpointTokensAreClaimedOnce) {
  Registry reg;
  auto [a, b] = local_link_pair();
  auto token = reg.register_endpoint(std::move(b));
  auto claimed = reg.claim(token);
  ASSERT_TRUE(claimed.has_value());
  send(a, bytes_of({3}));
  EXPECT_EQ(recv(*claimed, 16), bytes_of({3}));
  EXPECT_FALSE(reg.claim(token).has_value());
  EXPECT_FALSE(reg.claim(token + 1000).has_value());
}

TEST(Registry, FarmDeclarationsMustAgree) {
  Registry reg;
  EXPECT_TRUE(reg.declare_farm(5, {1, 2, 3}));
  EXPECT_TRUE(reg.declare_farm(5, {1, 2, 3}));
  EXPECT_FALSE(reg.declare_farm(5, {1, 3, 2}));
  EXPECT_TRUE(reg.declare_farm(6, {1, 3, 2}));
  reg.release_farm(5);
  reg.release_farm(5);
  EXPECT_TRUE(reg.declare_farm(5, {4}));
}
