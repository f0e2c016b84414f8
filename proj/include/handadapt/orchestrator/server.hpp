#pragma once

// WebSocket transport for ServiceHub. One io thread owns every socket;
// sessions queue their writes so broadcast() is safe from the pump thread.
// A new session gets the hub snapshot before any live traffic, which is all
// a reconnecting client needs to redraw.

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "handadapt/orchestrator/protocol.hpp"
#include "handadapt/orchestrator/system.hpp"

namespace handadapt::orchestrator {

namespace detail {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = net::ip::tcp;

class Session : public std::enable_shared_from_this<Session> {
public:
    // A client this far behind is dropped rather than buffered without bound.
    static constexpr std::size_t kMaxQueued = 512;

    Session(tcp::socket socket, ServiceHub& hub, std::function<void(const std::shared_ptr<Session>&)> forget)
        : ws_(std::move(socket)), hub_(hub), forget_(std::move(forget)) {}

    void run() {
        net::dispatch(ws_.get_executor(), [self = shared_from_this()] {
            self->ws_.set_option(ws::stream_base::timeout::suggested(beast::role_type::server));
            self->ws_.async_accept([self](beast::error_code ec) { self->on_accept(ec); });
        });
    }

    void send(std::shared_ptr<const std::string> msg) {
        net::post(ws_.get_executor(), [self = shared_from_this(), msg = std::move(msg)] {
            if (self->closed_) return;
            if (self->queue_.size() >= kMaxQueued) {
                self->close();
                return;
            }
            self->queue_.push_back(msg);
            if (self->ready_ && self->queue_.size() == 1) self->write_next();
        });
    }

    void close() {
        net::post(ws_.get_executor(), [self = shared_from_this()] {
            if (self->closed_) return;
            self->closed_ = true;
            beast::error_code ec;
            self->ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
            self->ws_.next_layer().close(ec);
        });
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) {
            closed_ = true;
            forget_(shared_from_this());
            return;
        }
        // Snapshot goes ahead of anything broadcast during the handshake.
        auto snap = hub_.snapshot();
        for (auto it = snap.rbegin(); it != snap.rend(); ++it)
            queue_.push_front(std::make_shared<const std::string>(std::move(*it)));
        ready_ = true;
        if (!queue_.empty()) write_next();
        read_next();
    }

    void read_next() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->closed_ = true;
                self->forget_(self);
                return;
            }
            self->hub_.handle_inbound(beast::buffers_to_string(self->buffer_.data()));
            self->buffer_.consume(self->buffer_.size());
            self->read_next();
        });
    }

    void write_next() {
        ws_.text(true);
        ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->queue_.clear();
                return;
            }
            self->queue_.pop_front();
            if (!self->queue_.empty()) self->write_next();
        });
    }

    ws::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    ServiceHub& hub_;
    std::function<void(const std::shared_ptr<Session>&)> forget_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    bool ready_ = false;
    bool closed_ = false;
};

} // namespace detail

class WebSocketServer {
public:
    /// port 0 picks an ephemeral port; see port().
    explicit WebSocketServer(ServiceHub& hub, const std::string& address = "127.0.0.1", unsigned short port = 0)
        : hub_(hub), acceptor_(io_) {
        namespace net = boost::asio;
        const detail::tcp::endpoint ep(net::ip::make_address(address), port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(net::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen();
        port_ = acceptor_.local_endpoint().port();
        accept_next();
        thread_ = std::thread([this] { io_.run(); });
    }

    WebSocketServer(const WebSocketServer&) = delete;
    WebSocketServer& operator=(const WebSocketServer&) = delete;
    ~WebSocketServer() { stop(); }

    unsigned short port() const { return port_; }

    /// Connected clients, including ones still in the handshake.
    std::size_t sessions() const {
        std::lock_guard lock(mutex_);
        return sessions_.size();
    }

    void broadcast(const std::vector<std::string>& msgs) {
        if (msgs.empty()) return;
        std::lock_guard lock(mutex_);
        for (const auto& m : msgs) {
            auto shared = std::make_shared<const std::string>(m);
            for (auto& s : sessions_) s->send(shared);
        }
    }

    void stop() {
        if (stopped_.exchange(true)) return;
        boost::asio::post(io_, [this] {
            boost::system::error_code ec;
            acceptor_.close(ec);
            std::lock_guard lock(mutex_);
            for (auto& s : sessions_) s->close();
        });
        // Closed sockets fail their pending operations, so run() runs dry.
        if (thread_.joinable()) thread_.join();
        std::lock_guard lock(mutex_);
        sessions_.clear();
    }

private:
    void accept_next() {
        acceptor_.async_accept(boost::asio::make_strand(io_), [this](boost::system::error_code ec, detail::tcp::socket s) {
            if (ec) return;
            auto session = std::make_shared<detail::Session>(std::move(s), hub_, [this](const std::shared_ptr<detail::Session>& p) {
                std::lock_guard lock(mutex_);
                sessions_.remove(p);
            });
            {
                std::lock_guard lock(mutex_);
                sessions_.push_back(session);
            }
            session->run();
            accept_next();
        });
    }

    ServiceHub& hub_;
    boost::asio::io_context io_;
    detail::tcp::acceptor acceptor_;
    unsigned short port_ = 0;
    mutable std::mutex mutex_;
    std::list<std::shared_ptr<detail::Session>> sessions_;
    std::atomic<bool> stopped_{false};
    std::thread thread_;
};

/// Interactive loop: advances the simulation at wall-clock pace and ships
/// hub output to every client. speed > 1 runs faster than real time.
inline void serve(System& sys, ServiceHub& hub, WebSocketServer& server, std::stop_token stop, double speed = 1.0,
                  Tick max_ms = -1) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const Tick t0 = sys.now();
    while (!stop.stop_requested() && (max_ms < 0 || sys.now() - t0 < max_ms)) {
        sys.step();
        server.broadcast(hub.poll());
        const auto due = start + std::chrono::duration_cast<clock::duration>(
                                     std::chrono::duration<double, std::milli>((sys.now() - t0) / speed));
        std::this_thread::sleep_until(due);
    }
}

} // namespace handadapt::orchestrator
