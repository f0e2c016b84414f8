#include <gtest/gtest.h>

#include <thread>

#include "handadapt/core/random.hpp"
#include "handadapt/msgbus/bus.hpp"

using namespace handadapt;
using namespace handadapt::bus;

namespace {

enum class Pose { OpenHand, CloseHand };

TEST(MessageBus, PublishReturnsSeqAndSubscriberReceives) {
    MessageBus b;
    auto pose = b.register_channel<Pose>("pose", 8, "pose.v1");
    auto sub = b.subscribe(pose);
    EXPECT_EQ(b.publish(pose, Pose::CloseHand), 1u);
    auto e = sub.try_receive();
    ASSERT_TRUE(e);
    EXPECT_EQ(e->seq, 1u);
    EXPECT_EQ(e->payload, Pose::CloseHand);
}

TEST(MessageBus, FifoForSinglePublisher) {
    MessageBus b;
    auto ch = b.register_channel<int>("ints", 8, "int");
    auto sub = b.subscribe(ch);
    b.publish(ch, 10);
    b.publish(ch, 20);
    EXPECT_EQ(sub.try_receive()->payload, 10);
    EXPECT_EQ(sub.try_receive()->payload, 20);
}

TEST(MessageBus, FullQueueDropsOldest) {
    // capacity 2, publish 1,2,3 -> queue [2,3], one drop
    MessageBus b;
    auto ch = b.register_channel<int>("ints", 2, "int");
    auto sub = b.subscribe(ch);
    b.publish(ch, 1);
    b.publish(ch, 2);
    b.publish(ch, 3);
    EXPECT_EQ(ch.dropped(), 1u);
    EXPECT_EQ(sub.drops(), 1u);
    auto a = sub.try_receive();
    auto c = sub.try_receive();
    EXPECT_EQ(a->payload, 2);
    EXPECT_EQ(a->seq, 2u);
    EXPECT_EQ(c->payload, 3);
    EXPECT_FALSE(sub.try_receive());
}

TEST(MessageBus, NonBlockingReceiveOnEmptyChannel) {
    MessageBus b;
    auto pose = b.register_channel<Pose>("pose", 8, "pose.v1");
    auto sub = b.subscribe(pose);
    EXPECT_FALSE(sub.try_receive().has_value());
    EXPECT_FALSE(sub.receive(std::chrono::milliseconds(1)).has_value());
}

TEST(MessageBus, FanOutDeliversSameSeqToAll) {
    MessageBus b;
    auto ch = b.register_channel<int>("x", 4, "int");
    auto s1 = b.subscribe(ch);
    auto s2 = b.subscribe(ch);
    b.publish(ch, 7);
    auto e1 = s1.try_receive();
    auto e2 = s2.try_receive();
    ASSERT_TRUE(e1 && e2);
    EXPECT_EQ(e1->seq, e2->seq);
    EXPECT_EQ(e1->payload, e2->payload);
}

TEST(MessageBus, UnsubscribeStopsDeliveryWithoutLeak) {
    MessageBus b;
    auto ch = b.register_channel<int>("x", 4, "int");
    const auto before = b.live_subscriptions();
    {
        auto s = b.subscribe(ch);
        EXPECT_EQ(b.live_subscriptions(), before + 1);
        s.unsubscribe();
        b.publish(ch, 1);
        EXPECT_FALSE(s.try_receive());
    }
    EXPECT_EQ(b.live_subscriptions(), before);
    {
        auto s = b.subscribe(ch);
    }
    EXPECT_EQ(b.live_subscriptions(), before);
}

TEST(MessageBus, UnknownChannelIsAnError) {
    MessageBus b;
    EXPECT_THROW(b.publish<int>("nope", 1), UnknownChannel);
    EXPECT_THROW(b.subscribe<int>("nope"), UnknownChannel);
    b.register_channel<int>("ints", 2, "int");
    EXPECT_THROW(b.channel<double>("ints"), ChannelTypeMismatch);
}

TEST(MessageBus, FanOutCompletenessProperty) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = make_rng(seed);
        const auto subs_n = 1 + uniform_index(rng, 6);
        const auto pubs_n = uniform_index(rng, 40);
        MessageBus b;
        auto ch = b.register_channel<int>("x", 64, "int");
        std::vector<Subscription<int>> subs;
        for (std::uint64_t i = 0; i < subs_n; ++i) subs.push_back(b.subscribe(ch));
        for (std::uint64_t i = 0; i < pubs_n; ++i) b.publish(ch, static_cast<int>(i));
        std::uint64_t deliveries = 0;
        for (auto& s : subs) deliveries += s.drain().size();
        EXPECT_EQ(deliveries, subs_n * pubs_n);
        EXPECT_EQ(ch.dropped(), 0u);
    }
}

TEST(MessageBus, SeqGapIffDrop) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto rng = make_rng(seed);
        MessageBus b;
        const auto cap = 1 + uniform_index(rng, 5);
        auto ch = b.register_channel<int>("x", cap, "int");
        auto sub = b.subscribe(ch);
        std::uint64_t last_seq = 0;
        std::uint64_t seen_drops = 0;
        for (int step = 0; step < 100; ++step) {
            if (uniform01(rng) < 0.6) {
                b.publish(ch, step);
            } else if (auto e = sub.try_receive()) {
                const bool gap = e->seq != last_seq + 1;
                const bool dropped = sub.drops() > seen_drops;
                EXPECT_EQ(gap, dropped) << "seed " << seed << " step " << step;
                if (gap) {
                    EXPECT_EQ(e->seq - last_seq - 1, sub.drops() - seen_drops);
                }
                seen_drops = sub.drops();
                last_seq = e->seq;
            }
        }
    }
}

TEST(MessageBus, TimestampsFollowSimClock) {
    SimClock clock;
    MessageBus b(&clock);
    auto ch = b.register_channel<int>("x", 8, "int");
    auto sub = b.subscribe(ch);
    clock.set(5);
    b.publish(ch, 1);
    clock.advance(3);
    b.publish(ch, 2);
    EXPECT_EQ(sub.try_receive()->timestamp, 5);
    EXPECT_EQ(sub.try_receive()->timestamp, 8);
}

std::string pumped_run() {
    SimClock clock;
    MessageBus b(&clock);
    b.enable_delivery_log();
    auto a = b.register_channel<int>("a", 4, "int");
    auto c = b.register_channel<int>("c", 2, "int");
    auto sa = b.subscribe(a);
    auto sc1 = b.subscribe(c);
    auto sc2 = b.subscribe(c);
    Scheduler sched(clock);
    sched.add_task("producer", 3, [&](Tick t) { b.publish(a, static_cast<int>(t)); });
    sched.add_task("relay", 5, [&](Tick) {
        for (auto& e : sa.drain()) b.publish(c, e.payload * 2);
    });
    sched.add_task("consumer", 7, [&](Tick) { sc1.drain(); });
    sched.run_for(200);
    return b.delivery_log();
}

TEST(Scheduler, DeterministicDeliveryLog) {
    const auto first = pumped_run();
    const auto second = pumped_run();
    EXPECT_FALSE(first.empty());
    EXPECT_EQ(first, second);
}

TEST(Scheduler, TasksRunAtTheirPeriod) {
    SimClock clock;
    Scheduler s(clock);
    std::vector<Tick> hits;
    s.add_task("t", 10, [&](Tick t) { hits.push_back(t); }, 3);
    s.run_for(35);
    EXPECT_EQ(hits, (std::vector<Tick>{3, 13, 23, 33}));
    EXPECT_EQ(clock.now(), 35);
}

TEST(MessageBus, ConcurrentPublishersKeepPerPublisherOrder) {
    MessageBus b;
    auto ch = b.register_channel<std::pair<int, int>>("x", 10000, "pair");
    auto sub = b.subscribe(ch);
    constexpr int kPerThread = 2000;
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            for (int i = 0; i < kPerThread; ++i) b.publish(ch, std::pair{t, i});
        });
    for (auto& th : threads) th.join();
    std::vector<int> next(4, 0);
    std::uint64_t last_seq = 0;
    for (auto& e : sub.drain()) {
        EXPECT_GT(e.seq, last_seq);
        last_seq = e.seq;
        EXPECT_EQ(e.payload.second, next[e.payload.first]++);
    }
    for (int n : next) EXPECT_EQ(n, kPerThread);
}

TEST(MessageBus, BlockingReceiveWakesOnPublish) {
    MessageBus b;
    auto ch = b.register_channel<int>("x", 4, "int");
    auto sub = b.subscribe(ch);
    std::thread producer([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        b.publish(ch, 42);
    });
    auto e = sub.receive(std::chrono::seconds(5));
    producer.join();
    ASSERT_TRUE(e);
    EXPECT_EQ(e->payload, 42);
}

TEST(MessageBus, ManifestListsChannels) {
    MessageBus b;
    b.register_channel<int>("setpoints", 64, "setpoints.v1");
    b.register_channel<int>("image", 2, "image.v1");
    EXPECT_EQ(b.manifest(), "# channel\tschema\tcapacity\nimage\timage.v1\t2\nsetpoints\tsetpoints.v1\t64\n");
}

} // namespace
