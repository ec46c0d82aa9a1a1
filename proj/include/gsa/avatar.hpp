#pragma once

#include "gsa/binding.hpp"
#include "gsa/checkpoint.hpp"
#include "gsa/cloud.hpp"
#include "gsa/deform.hpp"
#include "gsa/render.hpp"

namespace gsa {

// Bundled posable avatar: body + canonical cloud + non-rigid field + binding.
// The one forward path shared by dataset generation, eval and the CLI, so a
// checkpoint renders bit-identically wherever it is loaded.
struct AvatarModel {
    BodyModel body;
    CanonicalBody canon;
    GaussianCloud cloud;
    NonRigidMlp mlp;
    bool use_mlp = true;
    Binding binding;
    VecX beta;

    static AvatarModel from_checkpoint(const Checkpoint& ckpt);

    // Builds binding and canonical transforms from the current body/cloud.
    void prepare(int binding_k = 3);

    DeformResult pose(const MatX3& theta, const Vec3& translation, DeformCache* cache = nullptr) const;

    Image render_pose(const MatX3& theta, const Vec3& translation, const Camera& camera,
                      const Vec3& background) const;
};

}  // namespace gsa
