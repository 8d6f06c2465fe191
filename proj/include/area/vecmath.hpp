#ifndef AREA_VECMATH_HPP
#define AREA_VECMATH_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace area {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double nrm2(const Vec& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

inline double sq_nrm2(const Vec& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return s;
}

// Cosine similarity; 0 when either operand has (near-)zero norm.
inline double cosine(const Vec& a, const Vec& b) {
    double na = nrm2(a), nb = nrm2(b);
    if (na < 1e-300 || nb < 1e-300) return 0.0;
    return dot(a, b) / (na * nb);
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vec& a, double c) {
    for (double& x : a) x *= c;
}

inline bool all_finite(const Vec& a) {
    for (double x : a) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline double sq_dist(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sq_dist: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace area

#endif
