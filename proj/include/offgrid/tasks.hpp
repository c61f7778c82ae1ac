#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "offgrid/guid.hpp"
#include "offgrid/object_model.hpp"

namespace offgrid {

// Execution-side services a task implementation runs against. Node access
// goes through the context so that, on the server, touching a proxy blocks
// the task until the object is available; locally it is a plain lookup.
class TaskContext {
 public:
  virtual ~TaskContext() = default;
  virtual ObjectNode& access(const Guid& g) = 0;
  virtual ObjectNode& create(ObjectNode node) = 0;
  // Abstract work units; the runtime converts to time at its own speed.
  virtual void charge(double units) = 0;
};

struct TaskResult {
  std::vector<uint8_t> return_payload;
  std::vector<Guid> modified;  // nodes the task changed or created
};

using TaskFn = std::function<TaskResult(TaskContext&, const Guid& target,
                                        std::span<const Guid> params)>;

// Estimators evaluated against the concrete invocation; scale lives in the
// graph, not the descriptor.
using ComputeHintFn = std::function<double(const ObjectGraph&, const Guid& target,
                                           std::span<const Guid> params)>;
using AccessOrderFn = std::function<std::vector<Guid>(const ObjectGraph&, const Guid& target,
                                                      std::span<const Guid> params)>;

// One offloadable unit: the registry entry is the interception point that
// replaces method annotation.
struct TaskDescriptor {
  uint32_t task_id = 0;
  bool offloadable = true;
  TaskFn impl;
  // Server-side substitute with the same state contract, possibly higher
  // fidelity.
  std::optional<uint32_t> alternative_impl_id;
  // Expected access order of proxyable nodes, for pipelined pushes.
  AccessOrderFn access_order_hint;
  ComputeHintFn compute_hint;
};

class TaskRegistry {
 public:
  // Throws ConflictError on a duplicate task id.
  void register_task(TaskDescriptor d);
  const TaskDescriptor* find(uint32_t task_id) const;
  // Throws UnknownObjectError when absent.
  const TaskDescriptor& at(uint32_t task_id) const;
  const std::map<uint32_t, TaskDescriptor>& all() const { return tasks_; }

 private:
  std::map<uint32_t, TaskDescriptor> tasks_;
};

}  // namespace offgrid
