#include "coseg/maxflow.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace coseg {

namespace {
constexpr double kEps = 1e-12;
}

MaxFlow::MaxFlow(int nodes)
    : source_(nodes), sink_(nodes + 1), adj_(static_cast<std::size_t>(nodes) + 2) {}

void MaxFlow::add_arc(int u, int v, double cap_uv, double cap_vu) {
    auto& au = adj_[static_cast<std::size_t>(u)];
    auto& av = adj_[static_cast<std::size_t>(v)];
    au.push_back({v, static_cast<int>(av.size()), cap_uv});
    av.push_back({u, static_cast<int>(au.size()) - 1, cap_vu});
}

void MaxFlow::add_terminal(int node, double source_cap, double sink_cap) {
    // Flow that would pass source -> node -> sink is pushed immediately.
    const double common = std::min(source_cap, sink_cap);
    source_cap -= common;
    sink_cap -= common;
    preflow_ += common;
    if (source_cap > 0.0) add_arc(source_, node, source_cap, 0.0);
    if (sink_cap > 0.0) add_arc(node, sink_, sink_cap, 0.0);
}

void MaxFlow::add_edge(int u, int v, double cap_uv, double cap_vu) {
    if (cap_uv <= 0.0 && cap_vu <= 0.0) return;
    add_arc(u, v, std::max(0.0, cap_uv), std::max(0.0, cap_vu));
}

bool MaxFlow::build_levels() {
    level_.assign(adj_.size(), -1);
    std::queue<int> q;
    level_[static_cast<std::size_t>(source_)] = 0;
    q.push(source_);
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (const Arc& a : adj_[static_cast<std::size_t>(u)]) {
            if (a.cap > kEps && level_[static_cast<std::size_t>(a.to)] < 0) {
                level_[static_cast<std::size_t>(a.to)] = level_[static_cast<std::size_t>(u)] + 1;
                q.push(a.to);
            }
        }
    }
    return level_[static_cast<std::size_t>(sink_)] >= 0;
}

double MaxFlow::push(int u, double limit) {
    if (u == sink_) return limit;
    auto& arcs = adj_[static_cast<std::size_t>(u)];
    for (std::size_t& i = next_[static_cast<std::size_t>(u)]; i < arcs.size(); ++i) {
        Arc& a = arcs[i];
        if (a.cap <= kEps || level_[static_cast<std::size_t>(a.to)] != level_[static_cast<std::size_t>(u)] + 1) continue;
        const double got = push(a.to, std::min(limit, a.cap));
        if (got > 0.0) {
            a.cap -= got;
            adj_[static_cast<std::size_t>(a.to)][static_cast<std::size_t>(a.rev)].cap += got;
            return got;
        }
    }
    return 0.0;
}

double MaxFlow::solve() {
    double flow = preflow_;
    while (build_levels()) {
        next_.assign(adj_.size(), 0);
        while (true) {
            const double f = push(source_, std::numeric_limits<double>::infinity());
            if (f <= 0.0) break;
            flow += f;
        }
    }
    reachable_.assign(adj_.size(), 0);
    std::queue<int> q;
    reachable_[static_cast<std::size_t>(source_)] = 1;
    q.push(source_);
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (const Arc& a : adj_[static_cast<std::size_t>(u)]) {
            if (a.cap > kEps && !reachable_[static_cast<std::size_t>(a.to)]) {
                reachable_[static_cast<std::size_t>(a.to)] = 1;
                q.push(a.to);
            }
        }
    }
    return flow;
}

bool MaxFlow::sink_side(int node) const { return !reachable_[static_cast<std::size_t>(node)]; }

}  // namespace coseg
