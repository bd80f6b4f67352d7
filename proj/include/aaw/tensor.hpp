// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace aaw {

// Forward-pass FLOP accounting. Ops add their cost (2*MACs convention for
// convolutions and attention aggregation) when counting is enabled.
inline bool& flop_counting() {
    static thread_local bool enabled = false;
    return enabled;
}

inline std::uint64_t& flop_count() {
    static thread_local std::uint64_t count = 0;
    return count;
}

inline void add_flops(std::uint64_t f) {
    if (flop_counting()) flop_count() += f;
}

// RAII scope that enables the counter and resets it on entry.
struct FlopScope {
    FlopScope() {
        flop_count() = 0;
        flop_counting() = true;
    }
    ~FlopScope() { flop_counting() = false; }
    std::uint64_t total() const { return flop_count(); }
};

class Tensor4;
using TensorPtr = std::shared_ptr<Tensor4>;

/// Rank-4 tensor (n, c, h, w), row-major with n outermost. Doubles as a
/// node in the reverse-mode graph: ops fill `parents` and `backward_fn`.
class Tensor4 {
public:
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;
    std::vector<double> grad;  // allocated during backward()
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    // Reads this->grad and accumulates into parents' grad.
    std::function<void(Tensor4&)> backward_fn;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_) {
        if (n <= 0 || c <= 0 || h <= 0 || w <= 0)
            throw std::invalid_argument("Tensor4: all dims must be positive, got (" +
                                        std::to_string(n_) + "," + std::to_string(c_) + "," +
                                        std::to_string(h_) + "," + std::to_string(w_) + ")");
        data.assign(numel(), fill);
    }

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }

    std::size_t index(int i, int j, int y, int x) const {
        return ((static_cast<std::size_t>(i) * c + j) * h + y) * w + x;
    }

    double& at(int i, int j, int y, int x) { return data[index(i, j, y, x)]; }
    double at(int i, int j, int y, int x) const { return data[index(i, j, y, x)]; }

    bool is_scalar() const { return n == 1 && c == 1 && h == 1 && w == 1; }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        std::ostringstream s;
        s << n << "x" << c << "x" << h << "x" << w;
        return s.str();
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() {
        std::fill(grad.begin(), grad.end(), 0.0);
    }
};

inline TensorPtr tensor(int n, int c, int h, int w, double fill = 0.0) {
    return std::make_shared<Tensor4>(n, c, h, w, fill);
}

inline TensorPtr tensor_like(const Tensor4& x, double fill = 0.0) {
    return tensor(x.n, x.c, x.h, x.w, fill);
}

namespace detail {

inline void topo_visit(Tensor4* node, std::unordered_set<Tensor4*>& seen,
                       std::vector<Tensor4*>& order) {
    // Iterative DFS; graphs can be deep (stacked blocks, long training chains).
    struct Frame {
        Tensor4* t;
        std::size_t next;
    };
    std::vector<Frame> stack;
    if (seen.count(node)) return;
    stack.push_back({node, 0});
    seen.insert(node);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.t->parents.size()) {
            Tensor4* p = f.t->parents[f.next++].get();
            if (!seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.t);
            stack.pop_back();
        }
    }
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Fills `grad` on every node that
/// requires grad and is reachable from `loss`.
inline void backward(const TensorPtr& loss) {
    if (!loss) throw std::invalid_argument("backward: null loss tensor");
    if (!loss->is_scalar())
        throw std::invalid_argument("backward: loss must be scalar (1x1x1x1), got " +
                                    loss->shape_str());
    std::unordered_set<Tensor4*> seen;
    std::vector<Tensor4*> order;  // parents before children
    detail::topo_visit(loss.get(), seen, order);
    for (Tensor4* t : order)
        if (t->requires_grad) t->ensure_grad();
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor4* t = *it;
        if (t->backward_fn && t->requires_grad) t->backward_fn(*t);
    }
}

/// Drops graph edges so a tensor can be reused as a leaf (e.g. after an
/// optimizer step). Data is kept, history is released.
inline void detach(const TensorPtr& t) {
    t->parents.clear();
    t->backward_fn = nullptr;
}

/// Named, optionally trainable tensor. Models hand lists of these to the
/// optimizer and the checkpoint writer.
struct Param {
    std::string id;
    TensorPtr value;
    bool trainable = true;
};
using ParamPtr = std::shared_ptr<Param>;

// --- serialization: "T4 n c h w\n" header, then little-endian float32 ---

inline void write_tensor(std::ostream& os, const Tensor4& t) {
    os << "T4 " << t.n << " " << t.c << " " << t.h << " " << t.w << "\n";
    std::vector<float> buf(t.data.begin(), t.data.end());
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * 4));
}

inline TensorPtr read_tensor(std::istream& is) {
    std::string magic;
    int n, c, h, w;
    if (!(is >> magic >> n >> c >> h >> w) || magic != "T4")
        throw std::runtime_error("read_tensor: bad header (expected 'T4 n c h w')");
    is.get();  // newline
    auto t = tensor(n, c, h, w);
    std::vector<float> buf(t->numel());
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * 4));
    if (!is) throw std::runtime_error("read_tensor: truncated payload");
    for (std::size_t i = 0; i < buf.size(); ++i) t->data[i] = buf[i];
    return t;
}

}  // namespace aaw
