// Rotation representations, rigid transforms, and segment distance kernels.
#pragma once

#include "ampls/common.hpp"

namespace ampls {

// First two columns of a rotation matrix, column-major:
// (R11, R21, R31, R12, R22, R32).
using Rot6d = Eigen::Matrix<double, 6, 1>;

// Gram-Schmidt degeneracy threshold for sixd_to_rotmat.
inline constexpr double kGramSchmidtEps = 1e-8;

struct Pose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();

  Pose() = default;
  Pose(const Vec3& p, const Mat3& r) : position(p), rotation(r) {}

  // Composition: this applied first in the chain, i.e. world = this * local.
  Pose operator*(const Pose& local) const {
    return Pose(position + rotation * local.position, rotation * local.rotation);
  }
  Vec3 operator*(const Vec3& p) const { return position + rotation * p; }

  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return Pose(-(rt * position), rt);
  }
};

Rot6d rotmat_to_6d(const Mat3& r);

// Gram-Schmidt map of the 6D representation back to SO(3).
// Throws DegenerateInput when either direction collapses below kGramSchmidtEps.
Mat3 sixd_to_rotmat(const Rot6d& r);

// arccos((trace(R1^T R2) - 1) / 2) with the argument clamped to [-1, 1].
double geodesic_angle(const Mat3& r1, const Mat3& r2);

// Minimum Euclidean distance between the closed segments [p0,p1] and [q0,q1].
double segment_segment_distance(const Vec3& p0, const Vec3& p1,
                                const Vec3& q0, const Vec3& q1);

// Distance from point c to the closed segment [a,b].
double point_segment_distance(const Vec3& c, const Vec3& a, const Vec3& b);

Mat3 skew(const Vec3& v);
Mat3 axis_angle(const Vec3& unit_axis, double angle);
Mat3 rpy_to_rotmat(double roll, double pitch, double yaw);

// Uniform random rotation (quaternion method); quaternions stay internal.
Mat3 random_rotation(Rng& rng);

bool is_rotation(const Mat3& r, double tol = 1e-6);

}  // namespace ampls
