#include "csplat/vecmath.hpp"

namespace csplat {

Mat3 quat_to_rotation(const Quaternion& q_raw) {
    Quaternion q = q_raw.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
           2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
           2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
    return r;
}

Quaternion quat_rotation_backward(const Quaternion& q_raw, const Mat3& g) {
    Quaternion n = q_raw.normalized();
    const double w = n.w, x = n.x, y = n.y, z = n.z;

    // dL/d(normalized q) from the entrywise rotation derivatives.
    double dw = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) -
                     y * g(2, 0) + x * g(2, 1));
    double dx = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) -
                     w * g(1, 2) + z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    double dy = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) +
                     z * g(1, 2) - w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    double dz = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                     2 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));

    // Through normalization: dq_raw = (I - n n^T) / |q_raw| * dn.
    double qn = q_raw.norm();
    double proj = w * dw + x * dx + y * dy + z * dz;
    return {(dw - w * proj) / qn, (dx - x * proj) / qn, (dy - y * proj) / qn,
            (dz - z * proj) / qn};
}

}  // namespace csplat
