// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace xvs {

/// Rigid transform x' = rotation * x + translation.
///
/// Camera poses are stored camera-to-world throughout the library.
struct Rigid3 {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static Rigid3 identity() { return {}; }

    Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return rotation * x + translation; }

    Rigid3 inverse() const {
        Rigid3 inv;
        inv.rotation = rotation.transpose();
        inv.translation = -(inv.rotation * translation);
        return inv;
    }

    Rigid3 operator*(const Rigid3& rhs) const {
        Rigid3 out;
        out.rotation = rotation * rhs.rotation;
        out.translation = rotation * rhs.translation + translation;
        return out;
    }
};

/// Quaternion for the rotation vector `omega` (axis * angle).
inline Eigen::Quaterniond quat_exp(const Eigen::Vector3d& omega) {
    const double angle = omega.norm();
    if (angle < 1e-12) {
        Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
        return q.normalized();
    }
    return Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
}

/// Right-perturbs `q` by the body-frame tangent `delta`: R(q') = R(q) * exp([delta]x).
inline Eigen::Quaterniond apply_tangent(const Eigen::Quaterniond& q, const Eigen::Vector3d& delta) {
    return (q * quat_exp(delta)).normalized();
}

inline Rigid3 interpolate(const Rigid3& a, const Rigid3& b, double t) {
    const Eigen::Quaterniond qa(a.rotation);
    const Eigen::Quaterniond qb(b.rotation);
    Rigid3 out;
    out.rotation = qa.slerp(t, qb).normalized().toRotationMatrix();
    out.translation = (1.0 - t) * a.translation + t * b.translation;
    return out;
}

} // namespace xvs
