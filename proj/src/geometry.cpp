#include "ampls/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace ampls {

Rot6d rotmat_to_6d(const Mat3& r) {
  Rot6d out;
  out.head<3>() = r.col(0);
  out.tail<3>() = r.col(1);
  return out;
}

Mat3 sixd_to_rotmat(const Rot6d& r) {
  const Vec3 v1 = r.head<3>();
  const Vec3 v2 = r.tail<3>();
  const double n1 = v1.norm();
  if (n1 <= kGramSchmidtEps) throw DegenerateInput("sixd_to_rotmat: first column near zero");
  const Vec3 b1 = v1 / n1;
  const Vec3 v2p = v2 - v2.dot(b1) * b1;
  const double n2 = v2p.norm();
  if (n2 <= kGramSchmidtEps) throw DegenerateInput("sixd_to_rotmat: columns nearly parallel");
  const Vec3 b2 = v2p / n2;
  Mat3 out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b1.cross(b2);
  return out;
}

double geodesic_angle(const Mat3& r1, const Mat3& r2) {
  const double c = ((r1.transpose() * r2).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

double point_segment_distance(const Vec3& c, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double dd = d.squaredNorm();
  if (dd <= 0.0) return (c - a).norm();
  const double t = std::clamp((c - a).dot(d) / dd, 0.0, 1.0);
  return (c - (a + t * d)).norm();
}

// Closest-point formulation from Ericson, Real-Time Collision Detection 5.1.9.
double segment_segment_distance(const Vec3& p0, const Vec3& p1,
                                const Vec3& q0, const Vec3& q1) {
  constexpr double eps = 1e-14;
  const Vec3 d1 = p1 - p0;
  const Vec3 d2 = q1 - q0;
  const Vec3 r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);

  double s = 0.0, t = 0.0;
  if (a <= eps && e <= eps) {
    return r.norm();
  }
  if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > eps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return (p0 + s * d1 - (q0 + t * d2)).norm();
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
       -v.y(), v.x(), 0;
  return m;
}

Mat3 axis_angle(const Vec3& unit_axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const Mat3 k = skew(unit_axis);
  return Mat3::Identity() + s * k + (1.0 - c) * (k * k);
}

Mat3 rpy_to_rotmat(double roll, double pitch, double yaw) {
  return axis_angle(Vec3::UnitZ(), yaw) * axis_angle(Vec3::UnitY(), pitch) *
         axis_angle(Vec3::UnitX(), roll);
}

Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = gauss(rng);
  } while (q.squaredNorm() < 1e-12);
  q.normalize();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

bool is_rotation(const Mat3& r, double tol) {
  if ((r.transpose() * r - Mat3::Identity()).norm() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace ampls
