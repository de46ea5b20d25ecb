#pragma once

// 2-vectors and 2x2 matrices over an arbitrary scalar (double or SparseDual).

#include <array>

namespace kym {

template <class T>
struct Vec2 {
  T x{}, y{};
  T& operator[](int i) { return i == 0 ? x : y; }
  const T& operator[](int i) const { return i == 0 ? x : y; }
};

template <class T>
struct Sym2 {
  T xx{}, xy{}, yy{};
  const T& operator()(int i, int j) const { return i + j == 0 ? xx : (i + j == 1 ? xy : yy); }
};

// general 2x2, a(r, c)
template <class T>
struct Mat2 {
  std::array<T, 4> a{};
  T& operator()(int r, int c) { return a[2 * r + c]; }
  const T& operator()(int r, int c) const { return a[2 * r + c]; }
};

using Vec2d = Vec2<double>;
using Sym2d = Sym2<double>;
using Mat2d = Mat2<double>;

template <class T>
T trace(const Mat2<T>& m) {
  return m(0, 0) + m(1, 1);
}

template <class T>
T det(const Mat2<T>& m) {
  return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
}

template <class T>
T trace(const Sym2<T>& s) {
  return s.xx + s.yy;
}

template <class T>
T det(const Sym2<T>& s) {
  return s.xx * s.yy - s.xy * s.xy;
}

template <class T>
Mat2<T> to_mat(const Sym2<T>& s) {
  Mat2<T> m;
  m(0, 0) = s.xx;
  m(0, 1) = s.xy;
  m(1, 0) = s.xy;
  m(1, 1) = s.yy;
  return m;
}

template <class T>
Mat2<T> operator*(const Mat2<T>& p, const Mat2<T>& q) {
  Mat2<T> r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r(i, j) = p(i, 0) * q(0, j) + p(i, 1) * q(1, j);
  return r;
}

template <class T>
Mat2<T> transpose(const Mat2<T>& m) {
  Mat2<T> r;
  r(0, 0) = m(0, 0);
  r(0, 1) = m(1, 0);
  r(1, 0) = m(0, 1);
  r(1, 1) = m(1, 1);
  return r;
}

}  // namespace kym
