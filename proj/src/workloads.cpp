#include "offgrid/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "offgrid/bytes.hpp"
#include "offgrid/errors.hpp"
#include "offgrid/splitmix.hpp"

namespace offgrid::workloads {

namespace {

constexpr uint32_t kRootClass = 1;
constexpr uint32_t kBlobClass = 2;
constexpr uint32_t kParamClass = 3;
constexpr uint32_t kGameClass = 4;
constexpr uint32_t kLinClass = 5;
constexpr uint32_t kPiClass = 6;

constexpr uint32_t kSelectAll = 0xFFFFFFFFu;
constexpr uint64_t kGuidSalt = 0x6F66666772696421ULL;

Guid derive_guid(uint64_t seed, uint64_t index) {
  return Guid::from_u64(splitmix64_at(seed ^ kGuidSalt, 2 * index),
                        splitmix64_at(seed ^ kGuidSalt, 2 * index + 1));
}

std::vector<uint8_t> blob_payload(uint64_t seed, uint32_t index, uint32_t bytes) {
  std::vector<uint8_t> p(bytes);
  SplitMix64 rng(splitmix64_at(seed, 0x0B10B000ULL + index));
  for (uint32_t i = 0; i < bytes; i += 8) {
    uint64_t word = rng.next();
    for (uint32_t j = 0; j < 8 && i + j < bytes; ++j)
      p[i + j] = static_cast<uint8_t>(word >> (56 - 8 * j));
  }
  return p;
}

}  // namespace

Kind kind_from_name(const std::string& name) {
  if (name == "game_tree") return Kind::kGameTree;
  if (name == "linsolve") return Kind::kLinSolve;
  if (name == "blob_detect") return Kind::kBlobDetect;
  if (name == "blob_detect_1ofN" || name == "blob_detect_1ofn")
    return Kind::kBlobDetect1ofN;
  if (name == "pi_machin") return Kind::kPiMachin;
  throw ConfigError("unknown workload: " + name);
}

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::kGameTree: return "game_tree";
    case Kind::kLinSolve: return "linsolve";
    case Kind::kBlobDetect: return "blob_detect";
    case Kind::kBlobDetect1ofN: return "blob_detect_1ofN";
    case Kind::kPiMachin: return "pi_machin";
  }
  return "?";
}

uint32_t task_id_for(Kind k) {
  switch (k) {
    case Kind::kGameTree: return kGameTreeTask;
    case Kind::kLinSolve: return kLinSolveTask;
    case Kind::kBlobDetect:
    case Kind::kBlobDetect1ofN: return kBlobDetectTask;
    case Kind::kPiMachin: return kPiTask;
  }
  return 0;
}

BuiltGraph build_graph(const WorkloadSpec& spec) {
  BuiltGraph out;
  switch (spec.kind) {
    case Kind::kGameTree: {
      if (spec.depth < 1 || spec.depth > 8)
        throw ConfigError("game_tree depth must be 1..8");
      ObjectNode n;
      n.guid = derive_guid(spec.seed, 0);
      n.class_id = kGameClass;
      ByteWriter w;
      w.u64(spec.seed);
      w.u32(spec.depth);
      n.payload = w.take();
      out.target = n.guid;
      out.graph.insert(std::move(n));
      break;
    }
    case Kind::kLinSolve: {
      if (spec.size < 2 || spec.size > 512)
        throw ConfigError("linsolve size must be 2..512");
      if (spec.iterations < 1) throw ConfigError("linsolve iterations must be >= 1");
      ObjectNode n;
      n.guid = derive_guid(spec.seed, 0);
      n.class_id = kLinClass;
      ByteWriter w;
      w.u64(spec.seed);
      w.u32(spec.size);
      w.u32(spec.iterations);
      n.payload = w.take();
      out.target = n.guid;
      out.graph.insert(std::move(n));
      break;
    }
    case Kind::kBlobDetect:
    case Kind::kBlobDetect1ofN: {
      if (spec.blob_count < 1 || spec.blob_count > 4096)
        throw ConfigError("blob count must be 1..4096");
      if (spec.blob_bytes < 16) throw ConfigError("blob bytes must be >= 16");
      if (spec.rounds < 1) throw ConfigError("rounds must be >= 1");
      ObjectNode root;
      root.guid = derive_guid(spec.seed, 0);
      root.class_id = kRootClass;
      ByteWriter w;
      w.u64(spec.seed);
      w.u32(spec.blob_count);
      w.u32(spec.blob_bytes);
      w.u32(spec.rounds);
      root.payload = w.take();
      for (uint32_t i = 0; i < spec.blob_count; ++i) {
        ObjectNode blob;
        blob.guid = derive_guid(spec.seed, 2 + i);
        blob.class_id = kBlobClass;
        blob.proxyable = true;
        blob.payload = blob_payload(spec.seed, i, spec.blob_bytes);
        root.refs.push_back(blob.guid);
        out.graph.insert(std::move(blob));
      }
      out.target = root.guid;
      out.graph.insert(std::move(root));

      ObjectNode param;
      param.guid = derive_guid(spec.seed, 1);
      param.class_id = kParamClass;
      ByteWriter pw;
      pw.u32(spec.kind == Kind::kBlobDetect1ofN ? spec.blob_count - 1 : kSelectAll);
      param.payload = pw.take();
      out.params.push_back(param.guid);
      out.graph.insert(std::move(param));
      break;
    }
    case Kind::kPiMachin: {
      if (spec.digits < 1 || spec.digits > 20000)
        throw ConfigError("pi digits must be 1..20000");
      ObjectNode n;
      n.guid = derive_guid(spec.seed, 0);
      n.class_id = kPiClass;
      ByteWriter w;
      w.u32(spec.digits);
      n.payload = w.take();
      out.target = n.guid;
      out.graph.insert(std::move(n));
      break;
    }
  }
  return out;
}

// --- game tree ---------------------------------------------------------------

namespace {

constexpr uint32_t kBranching = 8;

int32_t leaf_score(uint64_t key) {
  return static_cast<int32_t>(key % 2001) - 1000;
}

int32_t negamax(uint64_t key, uint32_t depth, uint64_t& visited) {
  ++visited;
  if (depth == 0) return leaf_score(key);
  int32_t best = INT32_MIN;
  for (uint32_t m = 0; m < kBranching; ++m) {
    int32_t v = -negamax(splitmix64_at(key, m + 1), depth - 1, visited);
    best = std::max(best, v);
  }
  return best;
}

}  // namespace

int32_t game_tree_search(uint64_t seed, uint32_t depth, uint64_t* visited) {
  uint64_t count = 0;
  int32_t score = negamax(seed, depth, count);
  if (visited) *visited = count;
  return score;
}

// --- linsolve ----------------------------------------------------------------

void linsolve_system(uint64_t seed, uint32_t n, std::vector<double>& a,
                     std::vector<double>& b) {
  SplitMix64 rng(seed ^ 0x11AB5EEDULL);
  a.assign(static_cast<std::size_t>(n) * n, 0.0);
  b.assign(n, 0.0);
  for (uint32_t i = 0; i < n; ++i) {
    double row_abs = 0.0;
    for (uint32_t j = 0; j < n; ++j) {
      double v = rng.next_unit() * 2.0 - 1.0;
      a[static_cast<std::size_t>(i) * n + j] = v;
      if (j != i) row_abs += std::fabs(v);
    }
    // Strict diagonal dominance guarantees a well-conditioned pivot.
    a[static_cast<std::size_t>(i) * n + i] = row_abs + 1.0;
  }
  for (uint32_t i = 0; i < n; ++i) b[i] = rng.next_unit() * 2.0 - 1.0;
}

std::vector<double> linsolve_solution(uint64_t seed, uint32_t n) {
  std::vector<double> a, b;
  linsolve_system(seed, n, a, b);
  // Gaussian elimination with partial pivoting.
  std::vector<double> m = a;
  std::vector<double> x = b;
  for (uint32_t col = 0; col < n; ++col) {
    uint32_t pivot = col;
    for (uint32_t r = col + 1; r < n; ++r)
      if (std::fabs(m[static_cast<std::size_t>(r) * n + col]) >
          std::fabs(m[static_cast<std::size_t>(pivot) * n + col]))
        pivot = r;
    if (pivot != col) {
      for (uint32_t j = 0; j < n; ++j)
        std::swap(m[static_cast<std::size_t>(col) * n + j],
                  m[static_cast<std::size_t>(pivot) * n + j]);
      std::swap(x[col], x[pivot]);
    }
    double d = m[static_cast<std::size_t>(col) * n + col];
    for (uint32_t r = col + 1; r < n; ++r) {
      double f = m[static_cast<std::size_t>(r) * n + col] / d;
      if (f == 0.0) continue;
      for (uint32_t j = col; j < n; ++j)
        m[static_cast<std::size_t>(r) * n + j] -=
            f * m[static_cast<std::size_t>(col) * n + j];
      x[r] -= f * x[col];
    }
  }
  for (uint32_t ri = n; ri-- > 0;) {
    double s = x[ri];
    for (uint32_t j = ri + 1; j < n; ++j)
      s -= m[static_cast<std::size_t>(ri) * n + j] * x[j];
    x[ri] = s / m[static_cast<std::size_t>(ri) * n + ri];
  }
  return x;
}

namespace {

double linsolve_residual(uint64_t seed, uint32_t n) {
  std::vector<double> a, b;
  linsolve_system(seed, n, a, b);
  std::vector<double> x = linsolve_solution(seed, n);
  double worst = 0.0;
  for (uint32_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (uint32_t j = 0; j < n; ++j) s += a[static_cast<std::size_t>(i) * n + j] * x[j];
    worst = std::max(worst, std::fabs(s - b[i]));
  }
  return worst;
}

double linsolve_flops(uint32_t n, uint32_t k) {
  double nn = n;
  return k * (2.0 * nn * nn * nn / 3.0 + 2.0 * nn * nn);
}

}  // namespace

// --- pi (Machin) ---------------------------------------------------------------

namespace {

// Fixed-point decimal: limbs base 1e9, limb 0 is the integer part.
using Big = std::vector<uint64_t>;
constexpr uint64_t kBase = 1000000000ULL;

bool big_is_zero(const Big& x) {
  for (uint64_t limb : x)
    if (limb) return false;
  return true;
}

void big_div_small(Big& x, uint64_t d) {
  uint64_t rem = 0;
  for (uint64_t& limb : x) {
    uint64_t cur = rem * kBase + limb;
    limb = cur / d;
    rem = cur % d;
  }
}

void big_mul_small(Big& x, uint64_t m) {
  uint64_t carry = 0;
  for (std::size_t i = x.size(); i-- > 0;) {
    uint64_t cur = x[i] * m + carry;
    x[i] = cur % kBase;
    carry = cur / kBase;
  }
}

void big_add(Big& x, const Big& y) {
  uint64_t carry = 0;
  for (std::size_t i = x.size(); i-- > 0;) {
    uint64_t cur = x[i] + y[i] + carry;
    x[i] = cur % kBase;
    carry = cur / kBase;
  }
}

void big_sub(Big& x, const Big& y) {
  int64_t borrow = 0;
  for (std::size_t i = x.size(); i-- > 0;) {
    int64_t cur = static_cast<int64_t>(x[i]) - static_cast<int64_t>(y[i]) - borrow;
    if (cur < 0) {
      cur += static_cast<int64_t>(kBase);
      borrow = 1;
    } else {
      borrow = 0;
    }
    x[i] = static_cast<uint64_t>(cur);
  }
}

// arctan(1/x) as an alternating integer series over the fixed-point value.
Big big_arctan_inv(uint64_t x, std::size_t limbs) {
  Big term(limbs, 0);
  term[0] = 1;
  big_div_small(term, x);
  Big sum(limbs, 0);
  Big tmp;
  uint64_t x2 = x * x;
  uint64_t k = 0;
  bool add = true;
  while (!big_is_zero(term)) {
    tmp = term;
    big_div_small(tmp, 2 * k + 1);
    if (add)
      big_add(sum, tmp);
    else
      big_sub(sum, tmp);
    big_div_small(term, x2);
    add = !add;
    ++k;
  }
  return sum;
}

}  // namespace

std::string pi_digits(uint32_t digits) {
  if (digits < 1) throw ConfigError("pi digits must be >= 1");
  std::size_t frac_digits = digits + 10;  // guard digits absorb truncation
  std::size_t limbs = 1 + (frac_digits + 8) / 9;
  // pi = 16 arctan(1/5) - 4 arctan(1/239)
  Big pi = big_arctan_inv(5, limbs);
  big_mul_small(pi, 16);
  Big a239 = big_arctan_inv(239, limbs);
  big_mul_small(a239, 4);
  big_sub(pi, a239);

  std::string out = std::to_string(pi[0]);
  out.push_back('.');
  for (std::size_t i = 1; i < pi.size() && out.size() < 2 + digits + 9; ++i) {
    char buf[10];
    std::snprintf(buf, sizeof buf, "%09llu", static_cast<unsigned long long>(pi[i]));
    out.append(buf, 9);
  }
  out.resize(2 + digits);
  return out;
}

// --- task implementations ------------------------------------------------------

namespace {

struct RootScale {
  uint64_t seed;
  uint32_t count;
  uint32_t bytes;
  uint32_t rounds;
};

RootScale parse_root(const ObjectNode& root) {
  ByteReader r(root.payload);
  RootScale s{};
  s.seed = r.u64();
  s.count = r.u32();
  s.bytes = r.u32();
  s.rounds = r.u32();
  return s;
}

uint32_t parse_selection(const ObjectNode& param) {
  ByteReader r(param.payload);
  return r.u32();
}

TaskResult game_tree_task(TaskContext& ctx, const Guid& target, std::span<const Guid>) {
  const ObjectNode& node = ctx.access(target);
  ByteReader r(node.payload);
  uint64_t seed = r.u64();
  uint32_t depth = r.u32();
  uint64_t visited = 0;
  int32_t score = game_tree_search(seed, depth, &visited);
  ctx.charge(static_cast<double>(visited));
  ByteWriter w;
  w.u32(static_cast<uint32_t>(score));
  return {w.take(), {}};
}

TaskResult linsolve_task(TaskContext& ctx, const Guid& target, std::span<const Guid>) {
  const ObjectNode& node = ctx.access(target);
  ByteReader r(node.payload);
  uint64_t seed = r.u64();
  uint32_t n = r.u32();
  uint32_t k = r.u32();
  double residual = 0.0;
  for (uint32_t rep = 0; rep < k; ++rep) residual = linsolve_residual(seed, n);
  ctx.charge(linsolve_flops(n, k));
  ByteWriter w;
  w.f64(residual);
  w.u64(static_cast<uint64_t>(linsolve_flops(n, k)));
  return {w.take(), {}};
}

Md5Digest detection_digest(std::span<const uint8_t> payload, uint32_t rounds) {
  Md5Digest d = md5(payload);
  if (rounds > 1) {
    std::vector<uint8_t> buf(16 + payload.size());
    std::copy(payload.begin(), payload.end(), buf.begin() + 16);
    for (uint32_t r = 1; r < rounds; ++r) {
      std::copy(d.begin(), d.end(), buf.begin());
      d = md5(buf);
    }
  }
  return d;
}

TaskResult blob_detect_task(TaskContext& ctx, const Guid& target,
                            std::span<const Guid> params) {
  const ObjectNode& root = ctx.access(target);
  RootScale scale = parse_root(root);
  if (params.empty()) throw ConfigError("blob_detect expects a selection parameter");
  uint32_t selected = parse_selection(ctx.access(params[0]));
  std::vector<Guid> blobs = root.refs;

  TaskResult out;
  uint32_t processed = 0;
  for (uint32_t i = 0; i < blobs.size(); ++i) {
    if (selected != kSelectAll && i != selected) continue;
    ObjectNode& blob = ctx.access(blobs[i]);
    Md5Digest d = detection_digest(blob.payload, scale.rounds);
    std::copy(d.begin(), d.end(), blob.payload.begin());
    ctx.charge(static_cast<double>(scale.bytes) * scale.rounds);
    out.modified.push_back(blob.guid);
    ++processed;
  }
  ByteWriter w;
  w.u32(processed);
  out.return_payload = w.take();
  return out;
}

TaskResult pi_task_impl(TaskContext& ctx, const Guid& target, uint32_t multiplier) {
  const ObjectNode& node = ctx.access(target);
  ByteReader r(node.payload);
  uint32_t digits = r.u32() * multiplier;
  std::string s = pi_digits(digits);
  ctx.charge(static_cast<double>(digits) * digits / 100.0);
  return {std::vector<uint8_t>(s.begin(), s.end()), {}};
}

double blob_hint(const ObjectGraph& g, const Guid& target, std::span<const Guid> params) {
  RootScale scale = parse_root(g.at(target));
  uint32_t selected = params.empty() ? kSelectAll : parse_selection(g.at(params[0]));
  uint32_t touched = selected == kSelectAll ? scale.count : 1;
  return static_cast<double>(touched) * scale.bytes * scale.rounds;
}

std::shared_ptr<TaskRegistry> build_registry(bool pi_alternative) {
  auto reg = std::make_shared<TaskRegistry>();

  TaskDescriptor game;
  game.task_id = kGameTreeTask;
  game.impl = game_tree_task;
  game.compute_hint = [](const ObjectGraph& g, const Guid& t, std::span<const Guid>) {
    ByteReader r(g.at(t).payload);
    r.u64();
    uint32_t depth = r.u32();
    double nodes = 1, level = 1;
    for (uint32_t i = 0; i < depth; ++i) {
      level *= kBranching;
      nodes += level;
    }
    return nodes;
  };
  reg->register_task(std::move(game));

  TaskDescriptor lin;
  lin.task_id = kLinSolveTask;
  lin.impl = linsolve_task;
  lin.compute_hint = [](const ObjectGraph& g, const Guid& t, std::span<const Guid>) {
    ByteReader r(g.at(t).payload);
    r.u64();
    uint32_t n = r.u32();
    uint32_t k = r.u32();
    return linsolve_flops(n, k);
  };
  reg->register_task(std::move(lin));

  TaskDescriptor blob;
  blob.task_id = kBlobDetectTask;
  blob.impl = blob_detect_task;
  blob.compute_hint = blob_hint;
  blob.access_order_hint = [](const ObjectGraph& g, const Guid& t, std::span<const Guid>) {
    return g.at(t).refs;  // natural array order
  };
  reg->register_task(std::move(blob));

  TaskDescriptor pi;
  pi.task_id = kPiTask;
  pi.impl = [](TaskContext& ctx, const Guid& t, std::span<const Guid>) {
    return pi_task_impl(ctx, t, 1);
  };
  if (pi_alternative) pi.alternative_impl_id = kPiAltTask;
  pi.compute_hint = [](const ObjectGraph& g, const Guid& t, std::span<const Guid>) {
    ByteReader r(g.at(t).payload);
    double d = r.u32();
    return d * d / 100.0;
  };
  reg->register_task(std::move(pi));

  TaskDescriptor pi_alt;
  pi_alt.task_id = kPiAltTask;
  pi_alt.impl = [](TaskContext& ctx, const Guid& t, std::span<const Guid>) {
    return pi_task_impl(ctx, t, 2);
  };
  reg->register_task(std::move(pi_alt));

  return reg;
}

}  // namespace

void register_tasks(TaskRegistry& registry, bool pi_alternative) {
  auto built = build_registry(pi_alternative);
  registry.register_task(*built->find(kGameTreeTask));
  registry.register_task(*built->find(kLinSolveTask));
  registry.register_task(*built->find(kBlobDetectTask));
  registry.register_task(*built->find(kPiTask));
  registry.register_task(*built->find(kPiAltTask));
}

std::vector<uint8_t> bundle_bytes() {
  static const char kManifest[] =
      "offgrid.workloads.v1\n"
      "tasks=game_tree,linsolve,blob_detect,pi,pi_alt\n";
  return std::vector<uint8_t>(kManifest, kManifest + sizeof(kManifest) - 1);
}

std::shared_ptr<const TaskRegistry> resolve_bundle(std::span<const uint8_t> bundle) {
  std::vector<uint8_t> expected = bundle_bytes();
  if (bundle.size() != expected.size() ||
      !std::equal(bundle.begin(), bundle.end(), expected.begin()))
    return nullptr;
  // The server registry carries every implementation, alternatives included;
  // whether the substitute runs is the client's call, carried per EXECUTE.
  static std::shared_ptr<const TaskRegistry> registry = build_registry(true);
  return registry;
}

}  // namespace offgrid::workloads
