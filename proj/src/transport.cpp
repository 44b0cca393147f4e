#include "revgan/transport.hpp"

#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace revgan {

namespace {

struct Edge {
    std::size_t to;
    std::int64_t cap;
    double cost;
};

class FlowGraph {
public:
    explicit FlowGraph(std::size_t n) : adj_(n) {}

    void add(std::size_t from, std::size_t to, std::int64_t cap, double cost) {
        adj_[from].push_back(edges_.size());
        edges_.push_back({to, cap, cost});
        adj_[to].push_back(edges_.size());
        edges_.push_back({from, 0, -cost});
    }

    /// Pushes `amount` units from s to t at minimum cost.
    double run(std::size_t s, std::size_t t, std::int64_t amount) {
        const std::size_t n = adj_.size();
        constexpr double inf = std::numeric_limits<double>::infinity();
        constexpr double tol = 1e-12;
        double total = 0.0;
        std::vector<double> dist(n);
        std::vector<std::size_t> via(n);
        std::vector<bool> queued(n);
        while (amount > 0) {
            std::fill(dist.begin(), dist.end(), inf);
            std::fill(queued.begin(), queued.end(), false);
            dist[s] = 0.0;
            std::deque<std::size_t> q{s};
            queued[s] = true;
            while (!q.empty()) {
                const std::size_t u = q.front();
                q.pop_front();
                queued[u] = false;
                for (std::size_t e : adj_[u]) {
                    const Edge& ed = edges_[e];
                    if (ed.cap <= 0) continue;
                    const double nd = dist[u] + ed.cost;
                    if (nd < dist[ed.to] - tol) {
                        dist[ed.to] = nd;
                        via[ed.to] = e;
                        if (!queued[ed.to]) {
                            queued[ed.to] = true;
                            q.push_back(ed.to);
                        }
                    }
                }
            }
            if (dist[t] == inf) throw std::logic_error("min_cost_transport: demand cannot be met");
            std::int64_t push = amount;
            for (std::size_t v = t; v != s; v = edges_[via[v] ^ 1].to) push = std::min(push, edges_[via[v]].cap);
            for (std::size_t v = t; v != s; v = edges_[via[v] ^ 1].to) {
                edges_[via[v]].cap -= push;
                edges_[via[v] ^ 1].cap += push;
            }
            amount -= push;
            total += static_cast<double>(push) * dist[t];
        }
        return total;
    }

private:
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<Edge> edges_;
};

}  // namespace

double min_cost_transport(const std::vector<std::int64_t>& supply, const std::vector<std::int64_t>& demand,
                          const Matrix& cost) {
    require_shape(cost, supply.size(), demand.size(), "transport cost");
    const std::int64_t total = std::accumulate(supply.begin(), supply.end(), std::int64_t{0});
    if (total != std::accumulate(demand.begin(), demand.end(), std::int64_t{0})) {
        throw std::invalid_argument("min_cost_transport: supply and demand totals differ");
    }
    const std::size_t n = supply.size(), m = demand.size();
    const std::size_t s = n + m, t = n + m + 1;
    FlowGraph g(n + m + 2);
    for (std::size_t i = 0; i < n; ++i) {
        if (supply[i] < 0) throw std::invalid_argument("min_cost_transport: negative supply");
        g.add(s, i, supply[i], 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            if (cost(i, j) < 0.0) throw std::invalid_argument("min_cost_transport: negative cost");
            g.add(i, n + j, total, cost(i, j));
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        if (demand[j] < 0) throw std::invalid_argument("min_cost_transport: negative demand");
        g.add(n + j, t, demand[j], 0.0);
    }
    return g.run(s, t, total);
}

}  // namespace revgan
