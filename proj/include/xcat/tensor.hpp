#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace xcat {

struct Shape {
    int n = 0;
    int h = 0;
    int w = 0;
    int c = 0;

    bool operator==(const Shape&) const = default;

    std::int64_t elems() const {
        return static_cast<std::int64_t>(n) * h * w * c;
    }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(h) + "," +
               std::to_string(w) + "," + std::to_string(c) + ")";
    }
};

// Rank-4 NHWC tensor. Channel-last layout: index = ((n*H + h)*W + w)*C + c,
// so per-pixel channel fibers are contiguous.
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    Tensor(int n, int h, int w, int c) : shape_{n, h, w, c} {
        if (n < 1 || h < 1 || w < 1 || c < 1)
            throw std::invalid_argument("Tensor: all shape components must be >= 1, got " +
                                        shape_.str());
        data_.assign(static_cast<std::size_t>(shape_.elems()), Scalar(0));
    }

    explicit Tensor(Shape s) : Tensor(s.n, s.h, s.w, s.c) {}

    static Tensor constant(Shape s, Scalar v) {
        Tensor t(s);
        for (auto& x : t.data_) x = v;
        return t;
    }

    const Shape& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    int c() const { return shape_.c; }
    std::int64_t size() const { return shape_.elems(); }

    Scalar operator()(int n, int h, int w, int c) const {
        return data_[idx(n, h, w, c)];
    }
    Scalar& operator()(int n, int h, int w, int c) {
        return data_[idx(n, h, w, c)];
    }

    const std::vector<Scalar>& data() const { return data_; }
    std::vector<Scalar>& data() { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape_);
        for (std::int64_t i = 0; i < size(); ++i)
            out.data()[static_cast<std::size_t>(i)] =
                static_cast<Other>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    std::size_t idx(int n, int h, int w, int c) const {
        return static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape_.h + h) *
                                             shape_.w + w) * shape_.c + c);
    }

    Shape shape_{};
    std::vector<Scalar> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TensorU8 = Tensor<std::uint8_t>;
using TensorI32 = Tensor<std::int32_t>;

// Circular shift along the channel axis. Positive k moves channel i to
// position (i+k) mod C, i.e. out[c] = in[(c - k) mod C].
template <typename Scalar>
Tensor<Scalar> channel_rotate(const Tensor<Scalar>& t, int k) {
    const int C = t.c();
    int r = k % C;
    if (r < 0) r += C;
    if (r == 0) return t;

    Tensor<Scalar> out(t.shape());
    const std::int64_t fibers = t.size() / C;
    const Scalar* src = t.data().data();
    Scalar* dst = out.data().data();
    for (std::int64_t f = 0; f < fibers; ++f) {
        const Scalar* s = src + f * C;
        Scalar* d = dst + f * C;
        for (int c = 0; c < C; ++c)
            d[(c + r) % C] = s[c];
    }
    return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> channel_split(const Tensor<Scalar>& t,
                                          const std::vector<int>& sizes) {
    int total = 0;
    for (int s : sizes) {
        if (s < 1)
            throw std::invalid_argument("channel_split: sizes must be >= 1");
        total += s;
    }
    if (total != t.c())
        throw std::invalid_argument("channel_split: sizes sum to " + std::to_string(total) +
                                    ", tensor has " + std::to_string(t.c()) + " channels");

    std::vector<Tensor<Scalar>> parts;
    parts.reserve(sizes.size());
    const std::int64_t fibers = t.size() / t.c();
    int offset = 0;
    for (int s : sizes) {
        Tensor<Scalar> p(t.n(), t.h(), t.w(), s);
        const Scalar* src = t.data().data();
        Scalar* dst = p.data().data();
        for (std::int64_t f = 0; f < fibers; ++f)
            for (int c = 0; c < s; ++c)
                dst[f * s + c] = src[f * t.c() + offset + c];
        parts.push_back(std::move(p));
        offset += s;
    }
    return parts;
}

template <typename Scalar>
Tensor<Scalar> channel_concat(const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty())
        throw std::invalid_argument("channel_concat: no parts");
    int C = 0;
    for (const auto& p : parts) {
        if (p.n() != parts[0].n() || p.h() != parts[0].h() || p.w() != parts[0].w())
            throw std::invalid_argument("channel_concat: spatial/batch shape mismatch");
        C += p.c();
    }

    Tensor<Scalar> out(parts[0].n(), parts[0].h(), parts[0].w(), C);
    const std::int64_t fibers = out.size() / C;
    Scalar* dst = out.data().data();
    int offset = 0;
    for (const auto& p : parts) {
        const Scalar* src = p.data().data();
        for (std::int64_t f = 0; f < fibers; ++f)
            for (int c = 0; c < p.c(); ++c)
                dst[f * C + offset + c] = src[f * p.c() + c];
        offset += p.c();
    }
    return out;
}

// Counter-clockwise 90 degree spatial rotation: out(h',w') = in(w', H-1-h')
// with the output shaped (n, w, h, c).
template <typename Scalar>
Tensor<Scalar> rotate90(const Tensor<Scalar>& t) {
    Tensor<Scalar> out(t.n(), t.w(), t.h(), t.c());
    for (int n = 0; n < t.n(); ++n)
        for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x)
                for (int c = 0; c < t.c(); ++c)
                    out(n, y, x, c) = t(n, x, t.w() - 1 - y, c);
    return out;
}

template <typename Scalar>
Tensor<Scalar> flip_horizontal(const Tensor<Scalar>& t) {
    Tensor<Scalar> out(t.shape());
    for (int n = 0; n < t.n(); ++n)
        for (int y = 0; y < t.h(); ++y)
            for (int x = 0; x < t.w(); ++x)
                for (int c = 0; c < t.c(); ++c)
                    out(n, y, x, c) = t(n, y, t.w() - 1 - x, c);
    return out;
}

template <typename Scalar>
Tensor<Scalar> flip_vertical(const Tensor<Scalar>& t) {
    Tensor<Scalar> out(t.shape());
    for (int n = 0; n < t.n(); ++n)
        for (int y = 0; y < t.h(); ++y)
            for (int x = 0; x < t.w(); ++x)
                for (int c = 0; c < t.c(); ++c)
                    out(n, y, x, c) = t(n, t.h() - 1 - y, x, c);
    return out;
}

// Spatial crop, bounds-checked.
template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& t, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > t.h() || x0 + w > t.w())
        throw std::invalid_argument("crop: window out of bounds");
    Tensor<Scalar> out(t.n(), h, w, t.c());
    for (int n = 0; n < t.n(); ++n)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < t.c(); ++c)
                    out(n, y, x, c) = t(n, y0 + y, x0 + x, c);
    return out;
}

}  // namespace xcat
