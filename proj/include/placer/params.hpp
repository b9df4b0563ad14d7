#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "placer/rng.hpp"
#include "placer/tensor.hpp"

namespace placer {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

// Named parameter tensors with Adam moments. Map-ordered, so iteration (and
// the checkpoint layout) is deterministic.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor m;
        Tensor v;
    };

    void add(const std::string& name, Tensor init) {
        if (entries_.count(name)) throw std::invalid_argument("param store: duplicate parameter '" + name + "'");
        check_finite(init, "parameter '" + name + "'");
        Entry e;
        e.grad = Tensor::zeros(init.shape);
        e.m = Tensor::zeros(init.shape);
        e.v = Tensor::zeros(init.shape);
        e.value = std::move(init);
        entries_.emplace(name, std::move(e));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor& value(const std::string& name) { return find(name).value; }
    const Tensor& value(const std::string& name) const { return find(name).value; }
    Tensor& grad(const std::string& name) { return find(name).grad; }
    const Tensor& grad(const std::string& name) const { return find(name).grad; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, v] : entries_) out.push_back(k);
        return out;
    }

    std::size_t size() const { return entries_.size(); }
    std::int64_t step() const { return step_; }
    bool grads_ready() const { return grads_ready_; }
    void mark_grads_ready() { grads_ready_ = true; }

    void zero_grads() {
        for (auto& [k, e] : entries_) e.grad.fill(0.0);
        grads_ready_ = false;
    }

    // Bias-corrected Adam; clears gradients afterwards.
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        if (!grads_ready_) throw std::logic_error("adam_step: gradients not populated");
        ++step_;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (auto& [k, e] : entries_) {
            for (std::size_t i = 0; i < e.value.v.size(); ++i) {
                const double g = e.grad.v[i];
                e.m.v[i] = beta1 * e.m.v[i] + (1.0 - beta1) * g;
                e.v.v[i] = beta2 * e.v.v[i] + (1.0 - beta2) * g * g;
                const double mhat = e.m.v[i] / c1;
                const double vhat = e.v.v[i] / c2;
                e.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
            check_finite(e.value, "parameter '" + k + "' after adam step");
        }
        zero_grads();
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
        out.write("PLCR1", 5);
        write_u64(out, static_cast<std::uint64_t>(step_));
        write_u32(out, static_cast<std::uint32_t>(entries_.size()));
        for (const auto& [name, e] : entries_) {
            write_u32(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u32(out, static_cast<std::uint32_t>(e.value.shape.size()));
            for (int dim : e.value.shape) write_u64(out, static_cast<std::uint64_t>(dim));
            write_doubles(out, e.value.v);
            write_doubles(out, e.m.v);
            write_doubles(out, e.v.v);
        }
        if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
    }

    static ParamStore load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
        char magic[5];
        in.read(magic, 5);
        if (!in || std::memcmp(magic, "PLCR1", 5) != 0)
            throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
        ParamStore store;
        store.step_ = static_cast<std::int64_t>(read_u64(in));
        const std::uint32_t count = read_u32(in);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint32_t name_len = read_u32(in);
            std::string name(name_len, '\0');
            in.read(name.data(), name_len);
            const std::uint32_t ndim = read_u32(in);
            std::vector<int> shape(ndim);
            for (std::uint32_t k = 0; k < ndim; ++k) shape[k] = static_cast<int>(read_u64(in));
            Entry e;
            e.value = Tensor::zeros(shape);
            e.grad = Tensor::zeros(shape);
            e.m = Tensor::zeros(shape);
            e.v = Tensor::zeros(shape);
            read_doubles(in, e.value.v);
            read_doubles(in, e.m.v);
            read_doubles(in, e.v.v);
            if (!in) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
            store.entries_.emplace(std::move(name), std::move(e));
        }
        return store;
    }

private:
    Entry& find(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::invalid_argument("param store: unknown parameter '" + name + "'");
        return it->second;
    }
    const Entry& find(const std::string& name) const { return const_cast<ParamStore*>(this)->find(name); }

    static void write_u32(std::ostream& out, std::uint32_t x) { out.write(reinterpret_cast<const char*>(&x), 4); }
    static void write_u64(std::ostream& out, std::uint64_t x) { out.write(reinterpret_cast<const char*>(&x), 8); }
    static void write_doubles(std::ostream& out, const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
    }
    static std::uint32_t read_u32(std::istream& in) {
        std::uint32_t x = 0;
        in.read(reinterpret_cast<char*>(&x), 4);
        return x;
    }
    static std::uint64_t read_u64(std::istream& in) {
        std::uint64_t x = 0;
        in.read(reinterpret_cast<char*>(&x), 8);
        return x;
    }
    static void read_doubles(std::istream& in, std::vector<double>& v) {
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
    }

    std::map<std::string, Entry> entries_;
    std::int64_t step_ = 0;
    bool grads_ready_ = false;
};

// weights ~ uniform(±√(6/(fan_in+fan_out)))
inline Tensor glorot_uniform(int fan_in, int fan_out, Rng& rng) {
    Tensor w = Tensor::zeros({fan_in, fan_out});
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w.v) x = rng.uniform(-bound, bound);
    return w;
}

}  // namespace placer
