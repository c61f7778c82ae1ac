#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <thread>

namespace offgrid {

// Condition usable under either time source. Callers hold `lk` around their
// predicate and loop on it; spurious wakeups are allowed.
class CondVar {
 public:
  virtual ~CondVar() = default;
  // Returns false once `deadline` (clock seconds) has been reached.
  virtual bool wait_until(std::unique_lock<std::mutex>& lk, double deadline) = 0;
  virtual void notify_all() = 0;
};

// Time source for a runtime. charge() models compute cost: it advances a
// virtual clock and is a no-op under real time, where the computation itself
// is the cost. spawn() starts a thread that participates in this time domain
// (virtual time registers it as a scheduled actor).
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  virtual void charge(double seconds) = 0;
  virtual std::unique_ptr<CondVar> make_condvar() = 0;
  virtual std::thread spawn(std::function<void()> fn) = 0;
};

// Wall time, anchored at construction.
class RealClock : public Clock {
 public:
  RealClock();
  double now() const override;
  void charge(double) override {}
  std::unique_ptr<CondVar> make_condvar() override;
  std::thread spawn(std::function<void()> fn) override { return std::thread(std::move(fn)); }

 private:
  double base_;
};

}  // namespace offgrid
