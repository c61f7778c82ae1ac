#include "offgrid/tasks.hpp"

#include "offgrid/errors.hpp"

namespace offgrid {

void TaskRegistry::register_task(TaskDescriptor d) {
  if (tasks_.count(d.task_id))
    throw ConflictError("task id already registered: " + std::to_string(d.task_id));
  tasks_.emplace(d.task_id, std::move(d));
}

const TaskDescriptor* TaskRegistry::find(uint32_t task_id) const {
  auto it = tasks_.find(task_id);
  return it == tasks_.end() ? nullptr : &it->second;
}

const TaskDescriptor& TaskRegistry::at(uint32_t task_id) const {
  if (const TaskDescriptor* d = find(task_id)) return *d;
  throw UnknownObjectError("unknown task id: " + std::to_string(task_id));
}

}  // namespace offgrid
