#pragma once

// In-process typed publish/subscribe.
//
// Every channel keeps one bounded queue per subscriber. A full queue drops its
// oldest envelope, so a subscriber sees a seq gap exactly when it lost a
// message. Publishing is thread-safe; a Scheduler drives the deterministic
// single-threaded mode used by tests and experiments.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <typeindex>
#include <vector>

#include "handadapt/core/types.hpp"

namespace handadapt::bus {

class UnknownChannel : public Error {
public:
    explicit UnknownChannel(const std::string& name) : Error("unknown channel '" + name + "'") {}
};

class ChannelTypeMismatch : public Error {
public:
    explicit ChannelTypeMismatch(const std::string& name)
        : Error("channel '" + name + "' carries a different payload type") {}
};

template <class T>
struct Envelope {
    std::uint64_t seq = 0;
    Tick timestamp = 0;
    T payload{};
};

/// Simulation clock in 1 ms ticks.
class SimClock {
public:
    Tick now() const { return now_.load(std::memory_order_acquire); }
    void advance(Tick dt = 1) { now_.fetch_add(dt, std::memory_order_acq_rel); }
    void set(Tick t) { now_.store(t, std::memory_order_release); }

private:
    std::atomic<Tick> now_{0};
};

/// Records every enqueue so two runs can be compared byte for byte.
class DeliveryLog {
public:
    void record(Tick t, const std::string& channel, std::uint64_t seq, std::uint64_t subscriber) {
        std::lock_guard lock(mutex_);
        text_ += std::to_string(t) + '\t' + channel + '\t' + std::to_string(seq) + '\t' +
                 std::to_string(subscriber) + '\n';
    }
    std::string text() const {
        std::lock_guard lock(mutex_);
        return text_;
    }

private:
    mutable std::mutex mutex_;
    std::string text_;
};

namespace detail {

struct ChannelBase {
    std::string name;
    std::string schema;
    std::size_t capacity = 1;
    std::type_index type;

    ChannelBase(std::string n, std::string s, std::size_t cap, std::type_index t)
        : name(std::move(n)), schema(std::move(s)), capacity(cap), type(t) {}
    virtual ~ChannelBase() = default;
    virtual std::uint64_t dropped() const = 0;
    virtual std::uint64_t published() const = 0;
    virtual std::size_t subscriber_count() const = 0;
};

template <class T>
struct SubscriberQueue {
    std::uint64_t id = 0;
    std::deque<Envelope<T>> items;
    std::uint64_t drops = 0;
    std::condition_variable ready;
};

template <class T>
struct ChannelState final : ChannelBase {
    ChannelState(std::string n, std::string s, std::size_t cap)
        : ChannelBase(std::move(n), std::move(s), cap, std::type_index(typeid(T))) {}

    mutable std::mutex mutex;
    std::uint64_t next_seq = 1;
    std::uint64_t drop_count = 0;
    std::vector<std::shared_ptr<SubscriberQueue<T>>> subscribers;

    std::uint64_t dropped() const override {
        std::lock_guard lock(mutex);
        return drop_count;
    }
    std::uint64_t published() const override {
        std::lock_guard lock(mutex);
        return next_seq - 1;
    }
    std::size_t subscriber_count() const override {
        std::lock_guard lock(mutex);
        return subscribers.size();
    }
};

} // namespace detail

/// Typed handle to a registered channel.
template <class T>
class Channel {
public:
    Channel() = default;

    const std::string& name() const { return state_->name; }
    std::size_t capacity() const { return state_->capacity; }
    std::uint64_t dropped() const { return state_->dropped(); }
    std::uint64_t published() const { return state_->published(); }
    bool valid() const { return state_ != nullptr; }

private:
    friend class MessageBus;
    explicit Channel(std::shared_ptr<detail::ChannelState<T>> s) : state_(std::move(s)) {}
    std::shared_ptr<detail::ChannelState<T>> state_;
};

/// Receiving end of a channel. Unsubscribes on destruction.
template <class T>
class Subscription {
public:
    Subscription() = default;
    Subscription(const Subscription&) = delete;
    Subscription& operator=(const Subscription&) = delete;
    Subscription(Subscription&& o) noexcept { *this = std::move(o); }
    Subscription& operator=(Subscription&& o) noexcept {
        if (this != &o) {
            unsubscribe();
            channel_ = std::move(o.channel_);
            queue_ = std::move(o.queue_);
        }
        return *this;
    }
    ~Subscription() { unsubscribe(); }

    bool active() const { return queue_ != nullptr; }
    std::uint64_t id() const { return queue_ ? queue_->id : 0; }

    std::optional<Envelope<T>> try_receive() {
        if (!queue_) return std::nullopt;
        std::lock_guard lock(channel_->mutex);
        return pop_locked();
    }

    /// Blocks until an envelope arrives or the timeout expires.
    template <class Rep, class Period>
    std::optional<Envelope<T>> receive(std::chrono::duration<Rep, Period> timeout) {
        if (!queue_) return std::nullopt;
        std::unique_lock lock(channel_->mutex);
        queue_->ready.wait_for(lock, timeout, [&] { return !queue_->items.empty(); });
        return pop_locked();
    }

    /// Drains everything currently queued.
    std::vector<Envelope<T>> drain() {
        std::vector<Envelope<T>> out;
        if (!queue_) return out;
        std::lock_guard lock(channel_->mutex);
        while (auto e = pop_locked()) out.push_back(std::move(*e));
        return out;
    }

    std::size_t pending() const {
        if (!queue_) return 0;
        std::lock_guard lock(channel_->mutex);
        return queue_->items.size();
    }

    std::uint64_t drops() const {
        if (!queue_) return 0;
        std::lock_guard lock(channel_->mutex);
        return queue_->drops;
    }

    void unsubscribe() {
        if (!queue_) return;
        {
            std::lock_guard lock(channel_->mutex);
            auto& subs = channel_->subscribers;
            subs.erase(std::remove(subs.begin(), subs.end(), queue_), subs.end());
        }
        queue_.reset();
        channel_.reset();
    }

private:
    friend class MessageBus;
    Subscription(std::shared_ptr<detail::ChannelState<T>> c, std::shared_ptr<detail::SubscriberQueue<T>> q)
        : channel_(std::move(c)), queue_(std::move(q)) {}

    std::optional<Envelope<T>> pop_locked() {
        if (queue_->items.empty()) return std::nullopt;
        Envelope<T> e = std::move(queue_->items.front());
        queue_->items.pop_front();
        return e;
    }

    std::shared_ptr<detail::ChannelState<T>> channel_;
    std::shared_ptr<detail::SubscriberQueue<T>> queue_;
};

class MessageBus {
public:
    explicit MessageBus(SimClock* clock = nullptr) : clock_(clock ? clock : &own_clock_) {}

    MessageBus(const MessageBus&) = delete;
    MessageBus& operator=(const MessageBus&) = delete;

    SimClock& clock() { return *clock_; }

    void enable_delivery_log() { log_ = std::make_shared<DeliveryLog>(); }
    std::string delivery_log() const { return log_ ? log_->text() : std::string{}; }

    template <class T>
    Channel<T> register_channel(const std::string& name, std::size_t capacity, const std::string& schema) {
        if (capacity == 0) throw Error("channel '" + name + "' needs a positive capacity");
        std::lock_guard lock(mutex_);
        if (auto it = channels_.find(name); it != channels_.end()) {
            auto typed = std::dynamic_pointer_cast<detail::ChannelState<T>>(it->second);
            if (!typed) throw ChannelTypeMismatch(name);
            return Channel<T>(typed);
        }
        auto state = std::make_shared<detail::ChannelState<T>>(name, schema, capacity);
        channels_.emplace(name, state);
        return Channel<T>(state);
    }

    template <class T>
    Channel<T> channel(const std::string& name) const {
        std::lock_guard lock(mutex_);
        auto it = channels_.find(name);
        if (it == channels_.end()) throw UnknownChannel(name);
        auto typed = std::dynamic_pointer_cast<detail::ChannelState<T>>(it->second);
        if (!typed) throw ChannelTypeMismatch(name);
        return Channel<T>(typed);
    }

    bool has_channel(const std::string& name) const {
        std::lock_guard lock(mutex_);
        return channels_.count(name) != 0;
    }

    template <class T>
    std::uint64_t publish(const Channel<T>& ch, T payload) {
        if (!ch.valid()) throw UnknownChannel("<unregistered>");
        auto& st = *ch.state_;
        const Tick now = clock_->now();
        std::lock_guard lock(st.mutex);
        const std::uint64_t seq = st.next_seq++;
        for (auto& sub : st.subscribers) {
            if (sub->items.size() >= st.capacity) {
                sub->items.pop_front();
                ++sub->drops;
                ++st.drop_count;
            }
            sub->items.push_back(Envelope<T>{seq, now, payload});
            if (log_) log_->record(now, st.name, seq, sub->id);
            sub->ready.notify_all();
        }
        return seq;
    }

    template <class T>
    std::uint64_t publish(const std::string& name, T payload) {
        return publish(channel<T>(name), std::move(payload));
    }

    template <class T>
    Subscription<T> subscribe(const Channel<T>& ch) {
        if (!ch.valid()) throw UnknownChannel("<unregistered>");
        auto q = std::make_shared<detail::SubscriberQueue<T>>();
        q->id = next_subscriber_.fetch_add(1);
        {
            std::lock_guard lock(ch.state_->mutex);
            ch.state_->subscribers.push_back(q);
        }
        return Subscription<T>(ch.state_, std::move(q));
    }

    template <class T>
    Subscription<T> subscribe(const std::string& name) {
        return subscribe(channel<T>(name));
    }

    /// Number of live subscriber queues across all channels.
    std::size_t live_subscriptions() const {
        std::lock_guard lock(mutex_);
        std::size_t n = 0;
        for (const auto& [name, ch] : channels_) n += ch->subscriber_count();
        return n;
    }

    /// `name<TAB>schema<TAB>capacity` per channel, sorted by name.
    std::string manifest() const {
        std::lock_guard lock(mutex_);
        std::ostringstream out;
        out << "# channel\tschema\tcapacity\n";
        for (const auto& [name, ch] : channels_) out << name << '\t' << ch->schema << '\t' << ch->capacity << '\n';
        return out.str();
    }

private:
    SimClock own_clock_;
    SimClock* clock_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<detail::ChannelBase>> channels_;
    std::atomic<std::uint64_t> next_subscriber_{1};
    std::shared_ptr<DeliveryLog> log_;
};

/// Fixed-tick round-robin pump. Tasks run in registration order on every tick
/// where `tick % period == phase`.
class Scheduler {
public:
    using Task = std::function<void(Tick)>;

    explicit Scheduler(SimClock& clock) : clock_(clock) {}

    void add_task(std::string name, Tick period, Task fn, Tick phase = 0) {
        if (period <= 0) throw Error("task '" + name + "' needs a positive period");
        tasks_.push_back({std::move(name), period, phase % period, std::move(fn)});
    }

    /// Runs the tasks due at the current tick, then advances the clock by one.
    void step() {
        const Tick now = clock_.now();
        for (auto& t : tasks_)
            if (now % t.period == t.phase) t.fn(now);
        clock_.advance(1);
    }

    void run_for(Tick ticks) {
        for (Tick i = 0; i < ticks; ++i) step();
    }

    template <class Pred>
    bool run_until(Pred done, Tick max_ticks) {
        for (Tick i = 0; i < max_ticks; ++i) {
            if (done()) return true;
            step();
        }
        return done();
    }

    Tick now() const { return clock_.now(); }

private:
    struct Entry {
        std::string name;
        Tick period;
        Tick phase;
        Task fn;
    };
    SimClock& clock_;
    std::vector<Entry> tasks_;
};

} // namespace handadapt::bus
