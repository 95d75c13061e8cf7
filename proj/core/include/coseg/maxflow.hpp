#pragma once

#include <cstddef>
#include <vector>

namespace coseg {

// Dinic's maximum-flow on a graph with implicit source and sink terminals,
// sized for the binary subproblems of expansion moves.
class MaxFlow {
public:
    explicit MaxFlow(int nodes);

    // Adds capacity from the source to `node` and from `node` to the sink.
    void add_terminal(int node, double source_cap, double sink_cap);
    void add_edge(int u, int v, double cap_uv, double cap_vu);

    double solve();

    // After solve(): true when `node` is not reachable from the source in the
    // residual graph, i.e. it lies on the sink side of the minimum cut.
    bool sink_side(int node) const;

private:
    struct Arc {
        int to;
        int rev;
        double cap;
    };

    bool build_levels();
    double push(int u, double limit);
    void add_arc(int u, int v, double cap_uv, double cap_vu);

    double preflow_ = 0.0;
    int source_;
    int sink_;
    std::vector<std::vector<Arc>> adj_;
    std::vector<int> level_;
    std::vector<std::size_t> next_;
    std::vector<char> reachable_;
};

}  // namespace coseg
