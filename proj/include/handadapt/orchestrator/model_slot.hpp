#pragma once

// The live grasp model and the background retrain job that replaces it.
//
// Readers take a shared_ptr snapshot under a short lock and run the whole
// forward pass on it, so a request is served by exactly one model version
// even while a swap happens. A swap is a pointer exchange; the old model is
// freed when its last reader lets go.

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "handadapt/classifier/model.hpp"
#include "handadapt/classifier/trainer.hpp"
#include "handadapt/orchestrator/messages.hpp"
#include "handadapt/vision/dataset.hpp"

namespace handadapt::orchestrator {

struct VersionedModel {
    std::uint64_t version = 0;
    classifier::GraspModel model;
};

class ModelSlot {
public:
    ModelSlot() = default;
    explicit ModelSlot(classifier::GraspModel initial) { install(std::move(initial)); }

    std::shared_ptr<const VersionedModel> snapshot() const {
        std::lock_guard lock(mutex_);
        return live_;
    }

    /// Makes `m` the live model and returns its version (1 for the first).
    std::uint64_t install(classifier::GraspModel m) {
        auto next = std::make_shared<VersionedModel>();
        next->model = std::move(m);
        std::lock_guard lock(mutex_);
        next->version = (live_ ? live_->version : 0) + 1;
        live_ = std::move(next);
        return live_->version;
    }

    std::uint64_t version() const {
        std::lock_guard lock(mutex_);
        return live_ ? live_->version : 0;
    }

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const VersionedModel> live_;
};

class NoModel : public Error {
public:
    NoModel() : Error("no grasp model loaded") {}
};

/// One forward pass on one model snapshot.
inline bus::PredictedGrasp predict(const ModelSlot& slot, const vision::Image& img) {
    const auto m = slot.snapshot();
    if (!m) throw NoModel();
    bus::PredictedGrasp p;
    p.posterior = m->model.posterior(img);
    p.grasp = kAllGrasps[static_cast<std::size_t>(std::max_element(p.posterior.begin(), p.posterior.end()) -
                                                  p.posterior.begin())];
    p.model_version = m->version;
    return p;
}

struct RetrainJob {
    vision::DatasetStore base;
    vision::DatasetStore captures;
    classifier::TrainOptions options;
    std::filesystem::path model_path; ///< empty: keep the model in memory only
};

/// Runs retrain_with on a worker thread. On success the new model goes live
/// and a ModelUpdate plus a feedback line are published; on failure or
/// cancellation the old model stays live and the feedback says why.
class Retrainer {
public:
    Retrainer(ModelSlot& slot, bus::MessageBus& b) : slot_(slot), bus_(b) {}
    Retrainer(const Retrainer&) = delete;
    Retrainer& operator=(const Retrainer&) = delete;
    ~Retrainer() { cancel(); }

    /// False, and nothing started, while a job is still running.
    bool start(RetrainJob job) {
        if (running_.exchange(true)) return false;
        worker_ = std::jthread([this, job = std::move(job)](std::stop_token stop) { run(job, stop); });
        return true;
    }

    bool running() const { return running_.load(); }

    void cancel() {
        worker_.request_stop();
        wait();
    }

    void wait() {
        if (worker_.joinable()) worker_.join();
    }

    std::optional<classifier::TrainReport> last_report() const {
        std::lock_guard lock(mutex_);
        return last_;
    }

private:
    void run(const RetrainJob& job, std::stop_token stop) {
        const std::string fb(channels::kFeedback);
        try {
            auto [model, report] = classifier::retrain_with(job.base, job.captures, job.options, job.model_path, stop);
            const auto v = slot_.install(std::move(model));
            {
                std::lock_guard lock(mutex_);
                last_ = report;
            }
            const auto n = job.base.size() + job.captures.size();
            bus_.publish(std::string(channels::kUpdatedModel), ModelUpdate{v, report.best().val_accuracy, n});
            std::ostringstream s;
            s << "model v" << v << " live, validation accuracy " << std::fixed << std::setprecision(3)
              << report.best().val_accuracy << " on " << n << " examples";
            bus_.publish(fb, bus::Feedback{bus::FeedbackLevel::Info, "trainer", s.str()});
        } catch (const classifier::TrainingCancelled&) {
            bus_.publish(fb, bus::Feedback{bus::FeedbackLevel::Warning, "trainer",
                                           "retrain cancelled; model v" + std::to_string(slot_.version()) + " still live"});
        } catch (const std::exception& e) {
            bus_.publish(fb, bus::Feedback{bus::FeedbackLevel::Error, "trainer",
                                           std::string("retrain failed: ") + e.what() + "; model v" +
                                               std::to_string(slot_.version()) + " still live"});
        }
        running_.store(false);
    }

    ModelSlot& slot_;
    bus::MessageBus& bus_;
    std::atomic<bool> running_{false};
    mutable std::mutex mutex_;
    std::optional<classifier::TrainReport> last_;
    std::jthread worker_; // last member: joined before the rest is destroyed
};

} // namespace handadapt::orchestrator
