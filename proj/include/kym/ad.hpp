#pragma once

// Scalar types used to differentiate the discrete residual.
//
// SparseDual carries a value and a sparse gradient with respect to the grid
// unknowns; pushing it through the residual pipeline yields exact Jacobian
// rows.  Jet2 carries value, gradient and Hessian in the two moment
// coordinates and is used for the closed-form reference fields.

#include <algorithm>
#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

namespace kym {

class SparseDual {
 public:
  struct Entry {
    int index;
    double value;
  };

  SparseDual() = default;
  SparseDual(double v) : v_(v) {}  // NOLINT: implicit on purpose, constants mix freely

  static SparseDual variable(double v, int index) {
    SparseDual r(v);
    r.d_.push_back({index, 1.0});
    return r;
  }

  double value() const { return v_; }
  const std::vector<Entry>& derivative() const { return d_; }

  // r = a*x + b*y on the derivative parts, value supplied by caller
  static SparseDual combine(double v, double a, const SparseDual& x, double b, const SparseDual& y) {
    SparseDual r(v);
    const auto& dx = x.d_;
    const auto& dy = y.d_;
    r.d_.reserve(dx.size() + dy.size());
    std::size_t i = 0, j = 0;
    while (i < dx.size() && j < dy.size()) {
      if (dx[i].index < dy[j].index) {
        r.d_.push_back({dx[i].index, a * dx[i].value});
        ++i;
      } else if (dy[j].index < dx[i].index) {
        r.d_.push_back({dy[j].index, b * dy[j].value});
        ++j;
      } else {
        r.d_.push_back({dx[i].index, a * dx[i].value + b * dy[j].value});
        ++i;
        ++j;
      }
    }
    for (; i < dx.size(); ++i) r.d_.push_back({dx[i].index, a * dx[i].value});
    for (; j < dy.size(); ++j) r.d_.push_back({dy[j].index, b * dy[j].value});
    return r;
  }

  SparseDual scaled(double s) const {
    SparseDual r(v_ * s);
    r.d_ = d_;
    for (auto& e : r.d_) e.value *= s;
    return r;
  }

  SparseDual operator-() const { return scaled(-1.0); }

  SparseDual& operator+=(const SparseDual& o) { return *this = combine(v_ + o.v_, 1.0, *this, 1.0, o); }
  SparseDual& operator-=(const SparseDual& o) { return *this = combine(v_ - o.v_, 1.0, *this, -1.0, o); }
  SparseDual& operator*=(const SparseDual& o) { return *this = *this * o; }
  SparseDual& operator/=(const SparseDual& o) { return *this = *this / o; }
  SparseDual& operator+=(double c) {
    v_ += c;
    return *this;
  }
  SparseDual& operator-=(double c) {
    v_ -= c;
    return *this;
  }
  SparseDual& operator*=(double c) { return *this = scaled(c); }

  friend SparseDual operator+(const SparseDual& a, const SparseDual& b) { return combine(a.v_ + b.v_, 1.0, a, 1.0, b); }
  friend SparseDual operator-(const SparseDual& a, const SparseDual& b) { return combine(a.v_ - b.v_, 1.0, a, -1.0, b); }
  friend SparseDual operator*(const SparseDual& a, const SparseDual& b) {
    return combine(a.v_ * b.v_, b.v_, a, a.v_, b);
  }
  friend SparseDual operator/(const SparseDual& a, const SparseDual& b) {
    const double q = a.v_ / b.v_;
    return combine(q, 1.0 / b.v_, a, -q / b.v_, b);
  }

  friend SparseDual operator+(SparseDual a, double c) { return a += c; }
  friend SparseDual operator+(double c, SparseDual a) { return a += c; }
  friend SparseDual operator-(SparseDual a, double c) { return a -= c; }
  friend SparseDual operator-(double c, const SparseDual& a) {
    SparseDual r = -a;
    r.v_ += c;
    return r;
  }
  friend SparseDual operator*(const SparseDual& a, double c) { return a.scaled(c); }
  friend SparseDual operator*(double c, const SparseDual& a) { return a.scaled(c); }
  friend SparseDual operator/(const SparseDual& a, double c) { return a.scaled(1.0 / c); }
  friend SparseDual operator/(double c, const SparseDual& b) {
    const double q = c / b.v_;
    return combine(q, 0.0, SparseDual{}, -q / b.v_, b);
  }

  // sum_k w[k] * terms[k]; one sort instead of a chain of merges
  template <class Get>
  static SparseDual weighted_sum(std::span<const double> w, Get get) {
    SparseDual r;
    std::size_t total = 0;
    for (std::size_t k = 0; k < w.size(); ++k) total += get(k).d_.size();
    std::vector<Entry> buf;
    buf.reserve(total);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const SparseDual& t = get(k);
      r.v_ += w[k] * t.v_;
      for (const auto& e : t.d_) buf.push_back({e.index, w[k] * e.value});
    }
    std::sort(buf.begin(), buf.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
    for (const auto& e : buf) {
      if (!r.d_.empty() && r.d_.back().index == e.index)
        r.d_.back().value += e.value;
      else
        r.d_.push_back(e);
    }
    return r;
  }

 private:
  double v_ = 0.0;
  std::vector<Entry> d_;
};

inline double value_of(double x) { return x; }
inline double value_of(const SparseDual& x) { return x.value(); }

// sum_k w[k] * get(k) for either scalar type
template <class T, class Get>
T weighted_sum(std::span<const double> w, Get get) {
  if constexpr (std::is_same_v<T, SparseDual>) {
    return SparseDual::weighted_sum(w, get);
  } else {
    T s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * get(k);
    return s;
  }
}

// Second order jet in two variables: value, gradient, Hessian (xx, xy, yy).
struct Jet2 {
  double v = 0, gx = 0, gy = 0, hxx = 0, hxy = 0, hyy = 0;

  Jet2() = default;
  Jet2(double c) : v(c) {}  // NOLINT
  Jet2(double v_, double gx_, double gy_, double hxx_, double hxy_, double hyy_)
      : v(v_), gx(gx_), gy(gy_), hxx(hxx_), hxy(hxy_), hyy(hyy_) {}
  static Jet2 linear(double c, double ax, double ay) {
    Jet2 j(c);
    j.gx = ax;
    j.gy = ay;
    return j;
  }

  friend Jet2 operator+(const Jet2& a, const Jet2& b) {
    return {a.v + b.v, a.gx + b.gx, a.gy + b.gy, a.hxx + b.hxx, a.hxy + b.hxy, a.hyy + b.hyy};
  }
  friend Jet2 operator-(const Jet2& a, const Jet2& b) {
    return {a.v - b.v, a.gx - b.gx, a.gy - b.gy, a.hxx - b.hxx, a.hxy - b.hxy, a.hyy - b.hyy};
  }
  friend Jet2 operator*(const Jet2& a, const Jet2& b) {
    return {a.v * b.v,
            a.gx * b.v + a.v * b.gx,
            a.gy * b.v + a.v * b.gy,
            a.hxx * b.v + 2 * a.gx * b.gx + a.v * b.hxx,
            a.hxy * b.v + a.gx * b.gy + a.gy * b.gx + a.v * b.hxy,
            a.hyy * b.v + 2 * a.gy * b.gy + a.v * b.hyy};
  }
  friend Jet2 operator/(const Jet2& a, const Jet2& b) {
    // q = a/b, then a = q b gives derivatives of q recursively
    Jet2 q;
    q.v = a.v / b.v;
    q.gx = (a.gx - q.v * b.gx) / b.v;
    q.gy = (a.gy - q.v * b.gy) / b.v;
    q.hxx = (a.hxx - 2 * q.gx * b.gx - q.v * b.hxx) / b.v;
    q.hxy = (a.hxy - q.gx * b.gy - q.gy * b.gx - q.v * b.hxy) / b.v;
    q.hyy = (a.hyy - 2 * q.gy * b.gy - q.v * b.hyy) / b.v;
    return q;
  }
  Jet2 operator-() const { return {-v, -gx, -gy, -hxx, -hxy, -hyy}; }
  Jet2& operator+=(const Jet2& o) { return *this = *this + o; }
  Jet2& operator-=(const Jet2& o) { return *this = *this - o; }
  Jet2& operator*=(const Jet2& o) { return *this = *this * o; }
};

}  // namespace kym
