#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "placer/geometry.hpp"
#include "placer/params.hpp"
#include "placer/tensor.hpp"
#include "placer/topology.hpp"

namespace placer {

enum class Act { Linear, LeakyRelu, Tanh };

constexpr double LRELU_SLOPE = 0.01;

// Flattened (u,z) → index of the chosen next hop within 𝒩_u (sorted); -1 on
// the diagonal. The action encoding consumed by the policy log-prob op.
inline std::vector<int> action_indices(const RoutingTables& tables, const Topology& topo) {
    const int V = topo.num_nodes();
    std::vector<int> idx(static_cast<std::size_t>(V) * V, -1);
    for (int u = 0; u < V; ++u) {
        const std::vector<int>& nb = topo.neighbors(u);
        for (int z = 0; z < V; ++z) {
            if (u == z) continue;
            const int v = tables.at(u, z);
            int k = -1;
            for (std::size_t i = 0; i < nb.size(); ++i)
                if (nb[i] == v) {
                    k = static_cast<int>(i);
                    break;
                }
            if (k < 0) throw std::invalid_argument("action_indices: next hop not a neighbor");
            idx[static_cast<std::size_t>(u) * V + z] = k;
        }
    }
    return idx;
}

// Reverse-mode tape, rebuilt per forward pass. Node values are checked finite
// after every op. backward() zeroes the bound store's gradients first, so
// parameters unreachable from the loss end with zero gradient.
class Tape {
public:
    explicit Tape(ParamStore* store = nullptr) : store_(store) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int input(Tensor v) {
        check_finite(v, "tape input");
        Node n(OpKind::Input);
        n.val = std::move(v);
        return push(std::move(n));
    }

    int param(const std::string& name) {
        if (!store_) throw std::logic_error("tape: no parameter store bound");
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        Node n(OpKind::Param);
        n.val = store_->value(name);
        n.pname = name;
        const int id = push(std::move(n));
        bound_.emplace(name, id);
        return id;
    }

    // y = act(x W + b); x [n×a], W [a×b], b [1×b]
    int dense(int x, int w, int b, Act act) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        const Tensor& bv = val(b);
        if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
            throw std::invalid_argument("dense: shape mismatch");
        Node n(OpKind::Dense, {x, w, b});
        n.act = act;
        Tensor z = matmul(xv, wv);
        for (int i = 0; i < z.rows(); ++i)
            for (int j = 0; j < z.cols(); ++j) z.at(i, j) += bv.at(0, j);
        switch (act) {
            case Act::Linear:
                n.val = std::move(z);
                break;
            case Act::LeakyRelu:
                n.val = z;
                for (double& v : n.val.v) v = v > 0.0 ? v : LRELU_SLOPE * v;
                n.pre = std::move(z);
                break;
            case Act::Tanh:
                n.val = std::move(z);
                for (double& v : n.val.v) v = std::tanh(v);
                break;
        }
        return push(std::move(n));
    }

    int gather_rows(int x, std::vector<int> rows) {
        const Tensor& xv = val(x);
        Node n(OpKind::GatherRows, {x});
        n.val = Tensor::zeros({static_cast<int>(rows.size()), xv.cols()});
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (rows[k] < 0 || rows[k] >= xv.rows()) throw std::invalid_argument("gather_rows: index out of range");
            for (int j = 0; j < xv.cols(); ++j) n.val.at(static_cast<int>(k), j) = xv.at(rows[k], j);
        }
        n.idx = std::move(rows);
        return push(std::move(n));
    }

    int concat_cols(const std::vector<int>& xs) {
        if (xs.empty()) throw std::invalid_argument("concat_cols: no inputs");
        const int rows = val(xs[0]).rows();
        int cols = 0;
        for (int x : xs) {
            if (val(x).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
            cols += val(x).cols();
        }
        Node n(OpKind::ConcatCols, xs);
        n.val = Tensor::zeros({rows, cols});
        int off = 0;
        for (int x : xs) {
            const Tensor& xv = val(x);
            n.split.push_back(xv.cols());
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < xv.cols(); ++j) n.val.at(i, off + j) = xv.at(i, j);
            off += xv.cols();
        }
        return push(std::move(n));
    }

    // Mean of rows of x grouped by dst; groups with no members stay zero.
    int scatter_mean(int x, std::vector<int> dst, int num_rows) {
        const Tensor& xv = val(x);
        if (static_cast<int>(dst.size()) != xv.rows()) throw std::invalid_argument("scatter_mean: index size mismatch");
        Node n(OpKind::ScatterMean, {x});
        n.val = Tensor::zeros({num_rows, xv.cols()});
        n.counts.assign(num_rows, 0);
        for (int r : dst) {
            if (r < 0 || r >= num_rows) throw std::invalid_argument("scatter_mean: index out of range");
            ++n.counts[r];
        }
        for (int e = 0; e < xv.rows(); ++e)
            for (int j = 0; j < xv.cols(); ++j) n.val.at(dst[e], j) += xv.at(e, j) / n.counts[dst[e]];
        n.idx = std::move(dst);
        return push(std::move(n));
    }

    int add(int a, int b) {
        if (!val(a).same_shape(val(b))) throw std::invalid_argument("add: shape mismatch");
        Node n(OpKind::Add, {a, b});
        n.val = val(a);
        for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] += val(b).v[i];
        return push(std::move(n));
    }

    int mul(int a, int b) {
        if (!val(a).same_shape(val(b))) throw std::invalid_argument("mul: shape mismatch");
        Node n(OpKind::Mul, {a, b});
        n.val = val(a);
        for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] *= val(b).v[i];
        return push(std::move(n));
    }

    int mean_rows(int x) {
        const Tensor& xv = val(x);
        Node n(OpKind::MeanRows, {x});
        n.val = Tensor::zeros({1, xv.cols()});
        for (int i = 0; i < xv.rows(); ++i)
            for (int j = 0; j < xv.cols(); ++j) n.val.at(0, j) += xv.at(i, j) / xv.rows();
        return push(std::move(n));
    }

    int mean_all(int x) {
        const Tensor& xv = val(x);
        Node n(OpKind::MeanAll, {x});
        double s = 0.0;
        for (double v : xv.v) s += v;
        n.val = Tensor::scalar(s / static_cast<double>(xv.numel()));
        return push(std::move(n));
    }

    int square(int x) {
        Node n(OpKind::Square, {x});
        n.val = val(x);
        for (double& v : n.val.v) v *= v;
        return push(std::move(n));
    }

    int exp_op(int x) {
        Node n(OpKind::Exp, {x});
        n.val = val(x);
        for (double& v : n.val.v) v = std::exp(v);
        return push(std::move(n));
    }

    int clamp_op(int x, double lo, double hi) {
        Node n(OpKind::Clamp, {x});
        n.c0 = lo;
        n.c1 = hi;
        n.val = val(x);
        for (double& v : n.val.v) v = std::clamp(v, lo, hi);
        return push(std::move(n));
    }

    int mul_const(int x, double c) {
        Node n(OpKind::MulConst, {x});
        n.c0 = c;
        n.val = val(x);
        for (double& v : n.val.v) v *= c;
        return push(std::move(n));
    }

    int add_const(int x, double c) {
        Node n(OpKind::AddConst, {x});
        n.val = val(x);
        for (double& v : n.val.v) v += c;
        return push(std::move(n));
    }

    // [1×1] scalars stacked into a [T×1] column
    int stack_scalars(const std::vector<int>& xs) {
        if (xs.empty()) throw std::invalid_argument("stack_scalars: no inputs");
        Node n(OpKind::StackScalars, xs);
        n.val = Tensor::zeros({static_cast<int>(xs.size()), 1});
        for (std::size_t t = 0; t < xs.size(); ++t) {
            if (val(xs[t]).numel() != 1) throw std::invalid_argument("stack_scalars: input not scalar");
            n.val.v[t] = val(xs[t]).v[0];
        }
        return push(std::move(n));
    }

    // element-wise min; gradient follows the selected side (ties: first)
    int minimum(int a, int b) {
        if (!val(a).same_shape(val(b))) throw std::invalid_argument("minimum: shape mismatch");
        Node n(OpKind::Minimum, {a, b});
        n.val = val(a);
        for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = std::min(n.val.v[i], val(b).v[i]);
        return push(std::move(n));
    }

    // x [V×d] → Δ² [V×V]: polar decomposition and squared chord, fused.
    int embed_distances(int x) {
        const Tensor& xv = val(x);
        const int V = xv.rows();
        const int d = xv.cols();
        Node n(OpKind::EmbedDistances, {x});
        n.rad.resize(V);
        n.rho.resize(V);
        n.dirs = Tensor::zeros({V, d});
        for (int i = 0; i < V; ++i)
            polar_row(&xv.v[static_cast<std::size_t>(i) * d], d, n.rad[i], n.rho[i],
                      &n.dirs.v[static_cast<std::size_t>(i) * d]);
        n.val = Tensor::zeros({V, V});
        for (int i = 0; i < V; ++i)
            for (int j = i + 1; j < V; ++j) {
                const double v = sq_dist_entry(n.rho[i], &n.dirs.v[static_cast<std::size_t>(i) * d], n.rho[j],
                                               &n.dirs.v[static_cast<std::size_t>(j) * d], d);
                n.val.at(i, j) = v;
                n.val.at(j, i) = v;
            }
        return push(std::move(n));
    }

    // Joint log-probability of the chosen next hops under softmax(−Δ²/τ).
    int policy_log_prob(int dist, const Topology* topo, std::vector<int> actions, double tau) {
        if (!(tau > 0.0)) throw std::invalid_argument("policy_log_prob: temperature must be > 0");
        Node n(OpKind::PolicyLogProb, {dist});
        n.topo = topo;
        n.c0 = tau;
        n.actions = std::move(actions);
        n.val = Tensor::scalar(policy_forward(val(dist), *topo, &n.actions, tau));
        return push(std::move(n));
    }

    // Sum of per-pair entropies of the same distributions.
    int policy_entropy(int dist, const Topology* topo, double tau) {
        if (!(tau > 0.0)) throw std::invalid_argument("policy_entropy: temperature must be > 0");
        Node n(OpKind::PolicyEntropy, {dist});
        n.topo = topo;
        n.c0 = tau;
        n.val = Tensor::scalar(policy_forward(val(dist), *topo, nullptr, tau));
        return push(std::move(n));
    }

    const Tensor& val(int id) const { return nodes_[check_id(id)].val; }
    const Tensor& grad(int id) const { return nodes_[check_id(id)].grad; }

    void backward(int loss) {
        if (backward_done_) throw std::logic_error("tape: backward already ran");
        backward_done_ = true;
        Node& ln = nodes_[check_id(loss)];
        if (ln.val.numel() != 1) throw std::invalid_argument("backward: loss is not a scalar");
        if (store_) store_->zero_grads();
        for (Node& n : nodes_) n.grad = Tensor::zeros(n.val.shape);
        ln.grad.v[0] = 1.0;
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) backprop(id);
        if (store_) {
            for (const auto& [name, id] : bound_) {
                check_finite(nodes_[id].grad, "gradient of '" + name + "'");
                store_->grad(name) = nodes_[id].grad;
            }
            store_->mark_grads_ready();
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    enum class OpKind {
        Input,
        Param,
        Dense,
        GatherRows,
        ConcatCols,
        ScatterMean,
        Add,
        Mul,
        MeanRows,
        MeanAll,
        Square,
        Exp,
        Clamp,
        MulConst,
        AddConst,
        StackScalars,
        Minimum,
        EmbedDistances,
        PolicyLogProb,
        PolicyEntropy,
    };

    struct Node {
        explicit Node(OpKind k, std::vector<int> inputs = {}) : kind(k), in(std::move(inputs)) {}
        OpKind kind;
        std::vector<int> in;
        Tensor val;
        Tensor grad;
        Act act = Act::Linear;
        Tensor pre;               // dense leaky-relu pre-activation
        std::vector<int> idx;     // gather rows / scatter destinations
        std::vector<int> counts;  // scatter group sizes
        std::vector<int> split;   // concat column widths
        double c0 = 0.0;          // clamp lo / constant / temperature
        double c1 = 0.0;          // clamp hi
        std::string pname;
        const Topology* topo = nullptr;
        std::vector<int> actions;
        std::vector<double> rad, rho;  // embed_distances decomposition
        Tensor dirs;
    };

    int push(Node n) {
        check_finite(n.val, "tape op output");
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int check_id(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("tape: bad node id");
        return id;
    }

    // actions == nullptr computes summed entropy instead of summed log-prob
    static double policy_forward(const Tensor& dist, const Topology& topo, const std::vector<int>* actions, double tau) {
        const int V = topo.num_nodes();
        if (dist.rows() != V || dist.cols() != V) throw std::invalid_argument("policy op: distance matrix mismatch");
        if (actions && static_cast<int>(actions->size()) != V * V)
            throw std::invalid_argument("policy op: action vector mismatch");
        double total = 0.0;
        std::vector<double> dz, logp;
        for (int u = 0; u < V; ++u) {
            const std::vector<int>& nb = topo.neighbors(u);
            dz.resize(nb.size());
            logp.resize(nb.size());
            for (int z = 0; z < V; ++z) {
                if (u == z) continue;
                for (std::size_t k = 0; k < nb.size(); ++k) dz[k] = dist.at(nb[k], z);
                pair_log_probs(dz.data(), static_cast<int>(nb.size()), tau, logp.data());
                if (actions) {
                    const int a = (*actions)[static_cast<std::size_t>(u) * V + z];
                    if (a < 0 || a >= static_cast<int>(nb.size()))
                        throw std::invalid_argument("policy op: invalid action index");
                    total += logp[a];
                } else {
                    total += entropy_from_log_probs(logp.data(), static_cast<int>(nb.size()));
                }
            }
        }
        return total;
    }

    void backprop(int id) {
        Node& n = nodes_[id];
        bool any = false;
        for (double g : n.grad.v)
            if (g != 0.0) {
                any = true;
                break;
            }
        if (!any) return;
        switch (n.kind) {
            case OpKind::Input:
            case OpKind::Param:
                break;
            case OpKind::Dense: {
                const Tensor& xv = nodes_[n.in[0]].val;
                const Tensor& wv = nodes_[n.in[1]].val;
                Tensor gz = n.grad;
                if (n.act == Act::LeakyRelu) {
                    for (std::size_t i = 0; i < gz.v.size(); ++i) gz.v[i] *= n.pre.v[i] > 0.0 ? 1.0 : LRELU_SLOPE;
                } else if (n.act == Act::Tanh) {
                    for (std::size_t i = 0; i < gz.v.size(); ++i) gz.v[i] *= 1.0 - n.val.v[i] * n.val.v[i];
                }
                matmul_a_bt_acc(gz, wv, nodes_[n.in[0]].grad);
                matmul_at_b_acc(xv, gz, nodes_[n.in[1]].grad);
                Tensor& gb = nodes_[n.in[2]].grad;
                for (int i = 0; i < gz.rows(); ++i)
                    for (int j = 0; j < gz.cols(); ++j) gb.at(0, j) += gz.at(i, j);
                break;
            }
            case OpKind::GatherRows: {
                Tensor& gx = nodes_[n.in[0]].grad;
                for (std::size_t k = 0; k < n.idx.size(); ++k)
                    for (int j = 0; j < n.val.cols(); ++j) gx.at(n.idx[k], j) += n.grad.at(static_cast<int>(k), j);
                break;
            }
            case OpKind::ConcatCols: {
                int off = 0;
                for (std::size_t s = 0; s < n.in.size(); ++s) {
                    Tensor& gx = nodes_[n.in[s]].grad;
                    for (int i = 0; i < gx.rows(); ++i)
                        for (int j = 0; j < n.split[s]; ++j) gx.at(i, j) += n.grad.at(i, off + j);
                    off += n.split[s];
                }
                break;
            }
            case OpKind::ScatterMean: {
                Tensor& gx = nodes_[n.in[0]].grad;
                for (std::size_t e = 0; e < n.idx.size(); ++e) {
                    const int r = n.idx[e];
                    for (int j = 0; j < gx.cols(); ++j)
                        gx.at(static_cast<int>(e), j) += n.grad.at(r, j) / n.counts[r];
                }
                break;
            }
            case OpKind::Add:
                for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
                    nodes_[n.in[0]].grad.v[i] += n.grad.v[i];
                    nodes_[n.in[1]].grad.v[i] += n.grad.v[i];
                }
                break;
            case OpKind::Mul:
                for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
                    nodes_[n.in[0]].grad.v[i] += n.grad.v[i] * nodes_[n.in[1]].val.v[i];
                    nodes_[n.in[1]].grad.v[i] += n.grad.v[i] * nodes_[n.in[0]].val.v[i];
                }
                break;
            case OpKind::MeanRows: {
                Tensor& gx = nodes_[n.in[0]].grad;
                for (int i = 0; i < gx.rows(); ++i)
                    for (int j = 0; j < gx.cols(); ++j) gx.at(i, j) += n.grad.at(0, j) / gx.rows();
                break;
            }
            case OpKind::MeanAll: {
                Tensor& gx = nodes_[n.in[0]].grad;
                const double g = n.grad.v[0] / static_cast<double>(gx.numel());
                for (double& v : gx.v) v += g;
                break;
            }
            case OpKind::Square:
                for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                    nodes_[n.in[0]].grad.v[i] += 2.0 * nodes_[n.in[0]].val.v[i] * n.grad.v[i];
                break;
            case OpKind::Exp:
                for (std::size_t i = 0; i < n.grad.v.size(); ++i)
                    nodes_[n.in[0]].grad.v[i] += n.val.v[i] * n.grad.v[i];
                break;
            case OpKind::Clamp:
                for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
                    const double x = nodes_[n.in[0]].val.v[i];
                    if (x > n.c0 && x < n.c1) nodes_[n.in[0]].grad.v[i] += n.grad.v[i];
                }
                break;
            case OpKind::MulConst:
                for (std::size_t i = 0; i < n.grad.v.size(); ++i) nodes_[n.in[0]].grad.v[i] += n.c0 * n.grad.v[i];
                break;
            case OpKind::AddConst:
                for (std::size_t i = 0; i < n.grad.v.size(); ++i) nodes_[n.in[0]].grad.v[i] += n.grad.v[i];
                break;
            case OpKind::StackScalars:
                for (std::size_t t = 0; t < n.in.size(); ++t) nodes_[n.in[t]].grad.v[0] += n.grad.v[t];
                break;
            case OpKind::Minimum:
                for (std::size_t i = 0; i < n.grad.v.size(); ++i) {
                    if (nodes_[n.in[0]].val.v[i] <= nodes_[n.in[1]].val.v[i])
                        nodes_[n.in[0]].grad.v[i] += n.grad.v[i];
                    else
                        nodes_[n.in[1]].grad.v[i] += n.grad.v[i];
                }
                break;
            case OpKind::EmbedDistances:
                backprop_embed_distances(n);
                break;
            case OpKind::PolicyLogProb:
            case OpKind::PolicyEntropy:
                backprop_policy(n);
                break;
        }
    }

    void backprop_embed_distances(Node& n) {
        const int V = static_cast<int>(n.rho.size());
        const int d = n.dirs.cols();
        Tensor& gx = nodes_[n.in[0]].grad;
        for (int i = 0; i < V; ++i) {
            const double* ui = &n.dirs.v[static_cast<std::size_t>(i) * d];
            for (int j = i + 1; j < V; ++j) {
                const double g = n.grad.at(i, j) + n.grad.at(j, i);
                if (g == 0.0 || n.val.at(i, j) <= 0.0) continue;  // clamped-at-0 entries have zero slope
                const double* uj = &n.dirs.v[static_cast<std::size_t>(j) * d];
                double c = 0.0;
                for (int k = 0; k < d; ++k) c += ui[k] * uj[k];
                const double ri = std::max(n.rad[i], 1e-12);
                const double rj = std::max(n.rad[j], 1e-12);
                const double drho_i = (2.0 * n.rho[i] - 2.0 * n.rho[j] * c) * (1.0 - n.rho[i] * n.rho[i]);
                const double drho_j = (2.0 * n.rho[j] - 2.0 * n.rho[i] * c) * (1.0 - n.rho[j] * n.rho[j]);
                const double cross = -2.0 * n.rho[i] * n.rho[j];
                for (int k = 0; k < d; ++k) {
                    gx.at(i, k) += g * (drho_i * ui[k] + cross * (uj[k] - c * ui[k]) / ri);
                    gx.at(j, k) += g * (drho_j * uj[k] + cross * (ui[k] - c * uj[k]) / rj);
                }
            }
        }
    }

    void backprop_policy(Node& n) {
        const double g = n.grad.v[0];
        const Topology& topo = *n.topo;
        const Tensor& dist = nodes_[n.in[0]].val;
        Tensor& gd = nodes_[n.in[0]].grad;
        const int V = topo.num_nodes();
        const double tau = n.c0;
        std::vector<double> dz, logp;
        for (int u = 0; u < V; ++u) {
            const std::vector<int>& nb = topo.neighbors(u);
            dz.resize(nb.size());
            logp.resize(nb.size());
            for (int z = 0; z < V; ++z) {
                if (u == z) continue;
                for (std::size_t k = 0; k < nb.size(); ++k) dz[k] = dist.at(nb[k], z);
                pair_log_probs(dz.data(), static_cast<int>(nb.size()), tau, logp.data());
                if (n.kind == OpKind::PolicyLogProb) {
                    const int a = n.actions[static_cast<std::size_t>(u) * V + z];
                    for (std::size_t k = 0; k < nb.size(); ++k) {
                        const double p = std::exp(logp[k]);
                        const double dl = (static_cast<int>(k) == a ? 1.0 : 0.0) - p;
                        gd.at(nb[k], z) += g * dl * (-1.0 / tau);
                    }
                } else {
                    const double h = entropy_from_log_probs(logp.data(), static_cast<int>(nb.size()));
                    for (std::size_t k = 0; k < nb.size(); ++k) {
                        const double p = std::exp(logp[k]);
                        if (p <= 0.0) continue;
                        const double dl = -p * (logp[k] + h);
                        gd.at(nb[k], z) += g * dl * (-1.0 / tau);
                    }
                }
            }
        }
    }

    ParamStore* store_ = nullptr;
    std::vector<Node> nodes_;
    std::map<std::string, int> bound_;
    bool backward_done_ = false;
};

}  // namespace placer
