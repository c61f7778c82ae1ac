#include "offgrid/clock.hpp"

#include <chrono>
#include <condition_variable>

namespace offgrid {

namespace {

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

class RealCondVar : public CondVar {
 public:
  explicit RealCondVar(double base) : base_(base) {}

  bool wait_until(std::unique_lock<std::mutex>& lk, double deadline) override {
    double now = steady_seconds() - base_;
    if (now >= deadline) return false;
    cv_.wait_for(lk, std::chrono::duration<double>(deadline - now));
    return steady_seconds() - base_ < deadline;
  }

  void notify_all() override { cv_.notify_all(); }

 private:
  double base_;
  std::condition_variable_any cv_;
};

}  // namespace

RealClock::RealClock() : base_(steady_seconds()) {}

double RealClock::now() const { return steady_seconds() - base_; }

std::unique_ptr<CondVar> RealClock::make_condvar() {
  return std::make_unique<RealCondVar>(base_);
}

}  // namespace offgrid
