#pragma once

#include "gsa/common.hpp"
#include "gsa/transform.hpp"

namespace gsa {

// Pinhole camera. Pixel (row, col) covers [col, col+1) x [row, row+1);
// centers sit at half-integer coordinates.
struct Camera {
    double fx = 100.0, fy = 100.0, cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    Transform world_to_camera;
    double near = 0.05, far = 100.0;

    Vec3 center() const {  // camera origin in world space
        return -(world_to_camera.R.transpose() * world_to_camera.t);
    }

    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                          int width, int height);

    void validate() const {
        require(fx > 0 && fy > 0, "Camera: focal lengths must be positive");
        require(near < far, "Camera: near must be < far");
        require(width >= 1 && height >= 1, "Camera: degenerate resolution");
    }
};

}  // namespace gsa
