#include "gsa/camera.hpp"

namespace gsa {

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                       int width, int height) {
    // +z forward (into the scene), +x right, +y down: image y grows downward.
    Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up).normalized();
    Vec3 down = fwd.cross(right).normalized();
    Mat3 r_cw;  // rows are the camera axes in world coordinates
    r_cw.row(0) = right.transpose();
    r_cw.row(1) = down.transpose();
    r_cw.row(2) = fwd.transpose();
    Camera cam;
    cam.fx = cam.fy = focal;
    cam.width = width;
    cam.height = height;
    cam.cx = width * 0.5;
    cam.cy = height * 0.5;
    cam.world_to_camera = Transform{r_cw, -(r_cw * eye)};
    return cam;
}

}  // namespace gsa
