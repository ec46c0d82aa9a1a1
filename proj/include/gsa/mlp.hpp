#pragma once

#include <vector>

#include "gsa/common.hpp"
#include "gsa/rng.hpp"

namespace gsa {

// Positional encoding: [p, sin(2^l p), cos(2^l p)] for l = 0..n_freq-1.
int posenc_dim(int n_freq);
void posenc(const Vec3& p, int n_freq, double* out);
// Accumulates d(enc)/dp^T * d_out into d_p.
void posenc_backward(const Vec3& p, int n_freq, const double* d_out, Vec3& d_p);

// Non-rigid deformation field: encoded Gaussian position and encoded agent
// vertex position in, (dx, dr, ds) out. ReLU hidden stack with the raw input
// concatenated again at `skip_layer`; per-head output layers are
// zero-initialized so the field starts as the identity.
struct NonRigidMlp {
    int width = 256;
    int depth = 8;
    int skip_layer = 4;
    int n_freq = 6;

    std::vector<MatXr> weights;   // depth hidden layers
    std::vector<VecX> biases;
    MatXr head_dx_w, head_dr_w, head_ds_w;  // 3/4/3 x width
    VecX head_dx_b, head_dr_b, head_ds_b;

    int input_dim() const { return 2 * posenc_dim(n_freq); }

    void init(Rng& rng);

    struct Cache {
        MatXr input;                 // N x in_dim
        std::vector<MatXr> hidden;   // depth activations, N x width
    };

    struct Output {
        MatX3 dx;  // N x 3
        MatX4 dr;  // N x 4
        MatX3 ds;  // N x 3
    };

    // Rows of `input` are independent samples.
    Output forward(const MatXr& input, Cache* cache) const;

    struct Grads {
        std::vector<MatXr> weights;
        std::vector<VecX> biases;
        MatXr head_dx_w, head_dr_w, head_ds_w;
        VecX head_dx_b, head_dr_b, head_ds_b;

        void setZero(const NonRigidMlp& mlp);
        void accumulate(const Grads& other);
    };

    // Returns dL/d(input); accumulates parameter gradients into `grads`.
    MatXr backward(const Cache& cache, const MatX3& d_dx, const MatX4& d_dr, const MatX3& d_ds,
                   Grads& grads) const;

    // Flat parameter views for the optimizer / checkpoint.
    Eigen::Index parameter_count() const;
    void to_flat(VecX& out) const;
    void from_flat(const VecX& in);
    static void grads_to_flat(const Grads& g, VecX& out);
};

}  // namespace gsa
