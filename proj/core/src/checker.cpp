#include "basics/checker.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <functional>
#include <set>

namespace basics {

const char* to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Holds: return "holds";
    case VerdictStatus::Violated: return "violated";
    case VerdictStatus::Inconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

const char* op_name(LabelKind k) {
  switch (k) {
    case LabelKind::Fa: return "Fa";
    case LabelKind::Push: return "Push";
    case LabelKind::Pop: return "Pop";
    case LabelKind::Write: return "Write";
    case LabelKind::Fe: return "Fe";
    case LabelKind::Call: return "Call";
    case LabelKind::Loop: return "Loop";
    case LabelKind::BufferRegister: return "BufferRegister";
    case LabelKind::Ret: return "Ret";
  }
  return "?";
}

char state_char(const std::optional<ByteState>& s) { return s ? short_name(*s) : '_'; }

std::string render_runs(const std::vector<ByteDelta>& ds) {
  std::string out;
  std::size_t i = 0;
  while (i < ds.size()) {
    std::size_t j = i;
    while (j + 1 < ds.size() && ds[j + 1].index == ds[j].index + 1 && ds[j + 1].before == ds[i].before &&
           ds[j + 1].after == ds[i].after)
      ++j;
    if (!out.empty()) out += ",";
    out += std::to_string(ds[i].index);
    if (j > i) out += ".." + std::to_string(ds[j].index);
    out += ":";
    out += state_char(ds[i].before);
    out += "->";
    out += state_char(ds[i].after);
    i = j + 1;
  }
  return out;
}

std::string frame_label(const MemStaCe& space, const Transition& t, std::size_t frame) {
  const auto& dst = space.states[t.dst].frames;
  if (frame < dst.size()) return dst[frame].label;
  const auto& src = space.states[t.src].frames;
  return frame < src.size() ? src[frame].label : "?";
}

/// Preorder over the body: each implication's antecedent closed under
/// existential versions of its enclosing quantifiers.
void collect_antecedents(const FormulaPtr& f, std::vector<const Formula*>& quants, std::vector<FormulaPtr>& out) {
  using K = Formula::Kind;
  switch (f->kind) {
    case K::ForallStack:
    case K::ExistsStack:
    case K::ForallBuffer:
    case K::ExistsBuffer:
    case K::AllRange:
    case K::AnyRange:
      quants.push_back(f.get());
      collect_antecedents(f->children[0], quants, out);
      quants.pop_back();
      return;
    case K::Implies: {
      FormulaPtr a = f->children[0];
      for (auto it = quants.rbegin(); it != quants.rend(); ++it) {
        Formula w = **it;
        if (w.kind == K::ForallStack) w.kind = K::ExistsStack;
        if (w.kind == K::ForallBuffer) w.kind = K::ExistsBuffer;
        if (w.kind == K::AllRange) w.kind = K::AnyRange;
        w.children = {a};
        a = make_formula(std::move(w));
      }
      out.push_back(a);
      break;
    }
    default:
      break;
  }
  for (const auto& c : f->children) collect_antecedents(c, quants, out);
}

void add_unique(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

}  // namespace

std::string render_step(const Transition& t, const MemStaCe& space) {
  char addr[32];
  std::snprintf(addr, sizeof addr, "0x%llx", static_cast<unsigned long long>(t.label.address));
  std::string out = std::string(addr) + ": " + t.label.text + " -> " + op_name(t.label.kind);
  std::vector<std::size_t> frames;
  for (const auto& d : t.deltas)
    if (std::find(frames.begin(), frames.end(), d.frame) == frames.end()) frames.push_back(d.frame);
  if (frames.empty()) {
    std::size_t top = space.states[t.dst].frames.empty() ? 0 : space.states[t.dst].frames.size() - 1;
    if (t.label.kind == LabelKind::BufferRegister) top = t.memop.frame;
    return out + "[" + frame_label(space, t, top) + "]()";
  }
  for (std::size_t f : frames) {
    std::vector<ByteDelta> ds;
    for (const auto& d : t.deltas)
      if (d.frame == f) ds.push_back(d);
    std::sort(ds.begin(), ds.end(), [](const ByteDelta& a, const ByteDelta& b) { return a.index < b.index; });
    out += "[" + frame_label(space, t, f) + "](" + render_runs(ds) + ")";
  }
  return out;
}

std::string Trace::render() const {
  std::string out;
  for (const auto& s : steps) out += s.rendered + "\n";
  return out;
}

Trace build_counterexample(const std::vector<std::size_t>& path, const MemStaCe& space) {
  Trace tr;
  tr.states.push_back(path.empty() ? space.initial : space.transitions[path.front()].src);
  for (std::size_t ti : path) {
    const Transition& t = space.transitions[ti];
    TraceStep s;
    s.transition = ti;
    s.address = t.label.address;
    s.text = t.label.text;
    s.label = t.label;
    s.op = t.op;
    s.memop = t.memop;
    s.deltas = t.deltas;
    s.rendered = render_step(t, space);
    tr.steps.push_back(std::move(s));
    tr.states.push_back(t.dst);
  }
  return tr;
}

Verdict check(const MemStaCe& space, const Monitor& monitor, const CheckOptions& opts) {
  Verdict v;
  v.property = monitor.property;
  v.cwes = monitor.cwes;
  if (space.states.empty()) {
    v.status = space.truncated ? VerdictStatus::Inconclusive : VerdictStatus::Holds;
    return v;
  }
  std::vector<std::string> notes;

  struct Node {
    std::size_t state, mon, depth;
    std::optional<std::size_t> parent;  // index into nodes
    std::optional<std::size_t> via;     // transition
  };
  std::vector<Node> nodes;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::deque<std::size_t> queue;

  auto finish = [&](std::size_t n) {
    std::vector<std::size_t> path;
    for (std::optional<std::size_t> cur = n; cur && nodes[*cur].via; cur = nodes[*cur].parent)
      path.push_back(*nodes[*cur].via);
    std::reverse(path.begin(), path.end());
    v.status = VerdictStatus::Violated;
    v.trace = build_counterexample(path, space);
  };

  std::size_t q0 = monitor.step(monitor.initial, space.states[space.initial], &notes);
  nodes.push_back({space.initial, q0, 0, std::nullopt, std::nullopt});
  seen.insert({space.initial, q0});
  queue.push_back(0);
  if (monitor.is_accepting(q0)) finish(0);

  while (!queue.empty() && v.status != VerdictStatus::Violated) {
    std::size_t ni = queue.front();
    queue.pop_front();
    const Node cur = nodes[ni];
    if (opts.max_depth && cur.depth >= opts.max_depth) continue;
    for (std::size_t ti : space.outgoing(cur.state)) {
      const Transition& t = space.transitions[ti];
      std::size_t q = monitor.step(cur.mon, space.states[t.dst], &notes);
      if (!seen.insert({t.dst, q}).second) continue;
      nodes.push_back({t.dst, q, cur.depth + 1, ni, ti});
      if (monitor.is_accepting(q)) {
        finish(nodes.size() - 1);
        break;
      }
      queue.push_back(nodes.size() - 1);
    }
  }
  v.explored = nodes.size();
  if (v.status != VerdictStatus::Violated && space.truncated) v.status = VerdictStatus::Inconclusive;

  if (v.status == VerdictStatus::Holds) {
    std::vector<const Formula*> quants;
    std::vector<FormulaPtr> antecedents;
    collect_antecedents(monitor.body, quants, antecedents);
    for (const auto& a : antecedents) {
      bool ever = std::any_of(space.states.begin(), space.states.end(),
                              [&](const MemoryState& m) { return evaluate(*a, m) == Tri::True; });
      if (!ever) add_unique(v.vacuity, "holds vacuously: " + a->str() + " is never true");
    }
  }
  for (const auto& n : notes) {
    if (v.vacuity.size() >= 16) break;
    add_unique(v.vacuity, "unknown atom treated as satisfied: " + n);
  }
  return v;
}

BruteForceResult brute_force_check(const MemStaCe& space, const Monitor& monitor, std::size_t depth,
                                   std::size_t path_limit) {
  BruteForceResult r;
  if (space.states.empty()) return r;
  // Index outgoing transitions independently of MemStaCe::outgoing.
  std::vector<std::vector<std::size_t>> out(space.states.size());
  for (std::size_t i = 0; i < space.transitions.size(); ++i) out[space.transitions[i].src].push_back(i);

  auto violates = [&](std::size_t s) { return evaluate(*monitor.body, space.states[s]) == Tri::False; };
  std::optional<std::size_t> best;
  std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t s, std::size_t d) {
    if (!r.complete) return;
    if (violates(s)) {
      if (!best || d < *best) best = d;
      ++r.paths;
      return;
    }
    if (d == depth || out[s].empty()) {
      if (++r.paths >= path_limit) r.complete = false;
      return;
    }
    for (std::size_t ti : out[s]) walk(space.transitions[ti].dst, d + 1);
  };
  walk(space.initial, 0);
  if (best) {
    r.status = VerdictStatus::Violated;
    r.violation_depth = *best;
  } else if (space.truncated) {
    r.status = VerdictStatus::Inconclusive;
  }
  return r;
}

std::vector<std::string> map_cwe(const std::string& property, const std::vector<PropertyAst>& catalog,
                                 std::vector<std::string>* warnings) {
  for (const auto& p : catalog) {
    if (p.name != property) continue;
    if (p.cwes.empty() && warnings) warnings->push_back("property '" + property + "' has no CWE mapping");
    return p.cwes;
  }
  if (warnings) warnings->push_back("property '" + property + "' has no CWE mapping");
  return {};
}

std::vector<std::string> map_cwe(const std::string& property, std::vector<std::string>* warnings) {
  static const std::vector<PropertyAst> catalog = bundled_properties();
  return map_cwe(property, catalog, warnings);
}

}  // namespace basics
